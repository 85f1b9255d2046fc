"""Macro expansion and else-next elimination."""

from __future__ import annotations

import logging
from functools import singledispatch

from stratal.core import (
    UNIT,
    App,
    AppArg,
    AppFun,
    Arrow,
    ElseNext,
    ElseNextFrame,
    EvalContext,
    FixMacro,
    Frame,
    Get,
    GetFrame,
    IfZero,
    IfZeroFrame,
    IntLit,
    Lam,
    Par,
    PrimFrame,
    PrimOp,
    Program,
    RefMacro,
    RegionConst,
    RegionName,
    Set,
    SetTarget,
    SetValue,
    Star,
    Store,
    Term,
    Thread,
    Var,
    children,
    fresh_name,
    rebuild,
    subterms,
    substitute,
)

logger = logging.getLogger(__name__)


class Expander:
    """One expansion pass.

    Fresh binder names come from a counter that skips every name already used
    in the input, so expanding the same input twice gives identical terms.
    """

    def __init__(self, *sources: Term):
        self.used: set[str] = set()
        for source in sources:
            self.reserve(source)

    def reserve(self, t: Term) -> None:
        for node in subterms(t):
            match node:
                case Var(name):
                    self.used.add(name)
                case Lam(var, _, _):
                    self.used.add(var)
                case FixMacro(_, fun, _, _):
                    self.used.add(fun)

    def fresh(self, base: str) -> str:
        name = fresh_name(base, self.used)
        self.used.add(name)
        return name

    def ref(self, region: RegionName, m: Term) -> Term:
        """ref_r M = (fun u:Unit -> #r)(set(#r, M))"""
        return App(Lam(self.fresh("u"), UNIT, RegionConst(region)), Set(RegionConst(region), m))

    def fix(self, region: RegionName, f: str, annotation: Arrow, m: Term) -> Term:
        """fix_r f.M = fun x:A -> (get (ref_r (fun y:A -> ([fun z:A -> (get #r) z / f] M) y))) x"""
        a = annotation.domain
        x, y, z = self.fresh("x"), self.fresh("y"), self.fresh("z")
        recursive_call = Lam(z, a, App(Get(RegionConst(region)), Var(z)))
        unrolled = Lam(y, a, App(substitute(m, f, recursive_call), Var(y)))
        return Lam(x, a, App(Get(self.ref(region, unrolled)), Var(x)))

    def expand(self, t: Term) -> Term:
        match t:
            case RefMacro(region, body):
                return self.ref(region, self.expand(body))
            case FixMacro(region, fun, annotation, body):
                return self.fix(region, fun, annotation, self.expand(body))
            case _:
                kids = children(t)
                return rebuild(t, tuple(self.expand(c) for c in kids)) if kids else t


def expand_ref(r: RegionName, m: Term) -> Term:
    return Expander(m).ref(r, m)


def expand_fix(r: RegionName, f: str, ann: Arrow, m: Term) -> Term:
    return Expander(m, Var(f)).fix(r, f, ann, m)


def expand(t: Term) -> Term:
    """Replace every ref and fix macro by its definition."""
    return Expander(t).expand(t)


def expand_program(p: Program) -> Program:
    expander = Expander(*p.terms, *(v for _, v in p.store))
    threads = tuple(Thread(th.tid, expander.expand(th.term)) for th in p.threads)
    store = Store.of((r, expander.expand(v)) for r, v in p.store)
    return Program(threads, store)


def has_else_next(t: Term) -> bool:
    return any(isinstance(node, ElseNext) for node in subterms(t))


@singledispatch
def translate(x: object) -> object:
    """Remove every else-next, keeping the branch for the current instant."""
    raise TypeError(f"cannot translate {type(x).__name__}")


def _translate_term(t: Term) -> Term:
    if isinstance(t, ElseNext):
        return _translate_term(t.now)
    kids = children(t)
    return rebuild(t, tuple(_translate_term(c) for c in kids)) if kids else t


for _node in (Var, RegionConst, Star, Lam, App, Get, Set, ElseNext, Par, IntLit, PrimOp, IfZero, RefMacro, FixMacro):
    translate.register(_node, _translate_term)


@translate.register
def _(s: Store) -> Store:
    return Store.of((r, _translate_term(v)) for r, v in s)


@translate.register
def _(p: Program) -> Program:
    return Program(tuple(Thread(th.tid, _translate_term(th.term)) for th in p.threads), translate(p.store))


def _translate_frame(frame: Frame) -> Frame:
    match frame:
        case AppFun(arg):
            return AppFun(_translate_term(arg))
        case AppArg(fun):
            return AppArg(_translate_term(fun))
        case SetTarget(rhs):
            return SetTarget(_translate_term(rhs))
        case SetValue(target):
            return SetValue(_translate_term(target))
        case PrimFrame(op, done, rest):
            return PrimFrame(op, tuple(map(_translate_term, done)), tuple(map(_translate_term, rest)))
        case IfZeroFrame(then, orelse):
            return IfZeroFrame(_translate_term(then), _translate_term(orelse))
        case GetFrame() | ElseNextFrame():
            return frame


@translate.register
def _(ctx: EvalContext) -> EvalContext:
    return EvalContext(tuple(_translate_frame(f) for f in ctx.frames if not isinstance(f, ElseNextFrame)))
