"""Concrete syntax: the lark grammar, the tree transformer and the printer.

A source file declares regions, definitions, initial store contents and the
threads of the main program:

    //! prelude: int
    region r : Int -{r}> Int;
    def one = 1;
    store r <= {fun (x:Int) -> x};
    main = (get #r) one | unit;

Definitions are inlined into later definitions, the store and the main
threads. `Reg[r]` without a content type stands for `Reg[r](A)` where
`region r : A` is declared; the printer always writes the explicit form.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import singledispatch

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken, VisitError

from stratal.checker import RegionContext
from stratal.core import (
    BEH,
    INT,
    UNIT,
    App,
    Arrow,
    BehaviourType,
    ElseNext,
    FixMacro,
    Get,
    IfZero,
    IntLit,
    IntType,
    Lam,
    Par,
    PrimOp,
    Program,
    RefMacro,
    RegionConst,
    RegionName,
    RegType,
    Set,
    Star,
    Store,
    Term,
    Type,
    TypeOrBehaviour,
    UnitType,
    Var,
    annotations,
    format_effect,
    is_value,
    map_annotations,
    substitute,
    subterms,
    uses_int,
)
from stratal.errors import ParseError, Span

logger = logging.getLogger(__name__)

GRAMMAR = r"""
start: decl*

?decl: "region" NAME ":" type ";"                               -> region_decl
     | "def" NAME "=" term ";"                                  -> def_decl
     | "store" NAME "<=" "{" (term ("," term)*)? "}" ";"        -> store_decl
     | "main" "=" term ("|" term)* ";"                          -> main_decl

?type: btype
     | btype "-{" effect "}>" type                              -> arrow

effect: (NAME ("," NAME)*)?

?btype: "Unit"                                                  -> unit_type
      | "Int"                                                   -> int_type
      | "Beh"                                                   -> beh_type
      | "Reg" "[" NAME "]"                                      -> reg_declared
      | "Reg" "[" NAME "]" "(" type ")"                         -> reg_type
      | "(" type ")"

?term: "fun" "(" NAME ":" type ")" "->" term                    -> lam
     | "fix" "[" NAME "]" "(" NAME ":" type ")" "->" term       -> fix
     | sum "elsenext" term                                      -> else_next
     | sum

?sum: sum "+" product                                           -> add
    | sum "-" product                                           -> sub
    | product

?product: product "*" app                                       -> mul
        | app

?app: app prefix                                                -> apply
    | prefix

?prefix: "get" prefix                                           -> get
       | atom

?atom: NAME                                                     -> var
     | "#" NAME                                                 -> region
     | "unit"                                                   -> star
     | INT                                                      -> int
     | "(" "-" INT ")"                                          -> neg_int
     | "set" "(" term "," term ")"                              -> set_
     | "par" "{" term ("," term)+ "}"                           -> par
     | "ref" "[" NAME "]" "(" term ")"                          -> ref
     | "ifz" "(" term ")" "{" term "}" "{" term "}"             -> ifz
     | "iszero" "(" term ")"                                    -> iszero
     | "(" term ")"

NAME: /[a-z_][A-Za-z0-9_']*/
COMMENT: /\/\/[^\n]*/

%import common.INT
%import common.WS
%ignore WS
%ignore COMMENT
"""

PRELUDE_HEADER = re.compile(r"^//!\s*prelude:\s*(\S+)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class _Declared:
    """Placeholder content of `Reg[r]` until region declarations are known."""

    def __str__(self) -> str:
        return "?"


_DECLARED = _Declared()


def _span(meta) -> Span | None:
    if getattr(meta, "empty", True):
        return None
    return Span(meta.line, meta.column, meta.end_line, meta.end_column)


@v_args(meta=True)
class _ToAst(Transformer):
    def start(self, meta, decls):
        return decls

    def region_decl(self, meta, children):
        name, a = children
        return ("region", str(name), a, _span(meta))

    def def_decl(self, meta, children):
        name, body = children
        return ("def", str(name), body, _span(meta))

    def store_decl(self, meta, children):
        name, *values = children
        return ("store", str(name), values, _span(meta))

    def main_decl(self, meta, children):
        return ("main", None, list(children), _span(meta))

    def effect(self, meta, names):
        return frozenset(str(n) for n in names)

    def arrow(self, meta, children):
        domain, e, codomain = children
        return Arrow(domain, e, codomain)

    def unit_type(self, meta, _):
        return UNIT

    def int_type(self, meta, _):
        return INT

    def beh_type(self, meta, _):
        return BEH

    def reg_declared(self, meta, children):
        return RegType(str(children[0]), _DECLARED)  # type: ignore[arg-type]

    def reg_type(self, meta, children):
        name, content = children
        return RegType(str(name), content)

    def lam(self, meta, children):
        name, a, body = children
        return Lam(str(name), a, body, span=_span(meta))

    def fix(self, meta, children):
        region, name, a, body = children
        if not isinstance(a, Arrow):
            raise ParseError(f"fix[{region}] needs an arrow annotation, got {a}", meta.line, meta.column)
        return FixMacro(str(region), str(name), a, body, span=_span(meta))

    def else_next(self, meta, children):
        now, later = children
        return ElseNext(now, later, span=_span(meta))

    def add(self, meta, children):
        return PrimOp("+", tuple(children), span=_span(meta))

    def sub(self, meta, children):
        return PrimOp("-", tuple(children), span=_span(meta))

    def mul(self, meta, children):
        return PrimOp("*", tuple(children), span=_span(meta))

    def iszero(self, meta, children):
        return PrimOp("iszero", tuple(children), span=_span(meta))

    def apply(self, meta, children):
        fun, arg = children
        return App(fun, arg, span=_span(meta))

    def get(self, meta, children):
        return Get(children[0], span=_span(meta))

    def var(self, meta, children):
        return Var(str(children[0]), span=_span(meta))

    def region(self, meta, children):
        return RegionConst(str(children[0]), span=_span(meta))

    def star(self, meta, _):
        return Star(span=_span(meta))

    def int(self, meta, children):
        return IntLit(int(children[0]), span=_span(meta))

    def neg_int(self, meta, children):
        return IntLit(-int(children[0]), span=_span(meta))

    def set_(self, meta, children):
        target, value = children
        return Set(target, value, span=_span(meta))

    def par(self, meta, children):
        return Par(tuple(children), span=_span(meta))

    def ref(self, meta, children):
        region, body = children
        return RefMacro(str(region), body, span=_span(meta))

    def ifz(self, meta, children):
        cond, then, orelse = children
        return IfZero(cond, then, orelse, span=_span(meta))


_PARSER = Lark(GRAMMAR, parser="lalr", propagate_positions=True, maybe_placeholders=False)


@dataclass(frozen=True)
class SourceFile:
    """A parsed program file: region context, definitions, initial store and threads."""

    regions: RegionContext
    definitions: tuple[tuple[str, Term], ...] = ()
    store: tuple[tuple[RegionName, Term], ...] = ()
    main: tuple[Term, ...] = ()
    prelude: str | None = None
    region_spans: tuple[tuple[RegionName, Span | None], ...] = ()

    @staticmethod
    def from_program(regions: RegionContext, p: Program, prelude: str | None = None) -> SourceFile:
        return SourceFile(regions, (), tuple(p.store), p.terms, prelude)

    def inline(self, t: Term) -> Term:
        for name, body in reversed(self.definitions):
            t = substitute(t, name, body)
        return t

    def program(self) -> Program:
        """The main program with every definition inlined."""
        store = Store.of((r, self.inline(v)) for r, v in self.store)
        return Program.of((self.inline(t) for t in self.main), store)

    def terms(self) -> list[Term]:
        return [*(body for _, body in self.definitions), *(v for _, v in self.store), *self.main]


def detect_prelude(source: str) -> str | None:
    match = PRELUDE_HEADER.search(source)
    return match.group(1) if match else None


def _syntax_error(e: UnexpectedInput) -> ParseError:
    expected: frozenset[str] = frozenset()
    match e:
        case UnexpectedToken():
            expected = frozenset(e.expected)
            message = f"unexpected token {e.token!r}"
        case UnexpectedCharacters():
            expected = frozenset(e.allowed or ())
            message = f"unexpected character {e.char!r}"
        case UnexpectedEOF():
            expected = frozenset(e.expected)
            message = "unexpected end of input"
        case _:
            message = "syntax error"
    return ParseError(message, getattr(e, "line", 0) or 0, getattr(e, "column", 0) or 0, expected)


def _elaborate(a: TypeOrBehaviour, declared: dict[RegionName, Type], span: Span | None, seen: frozenset[str]) -> Type:
    match a:
        case RegType(region, content) if isinstance(content, _Declared):
            if region not in declared:
                raise ParseError(f"Reg[{region}] refers to an undeclared region", *_position(span))
            if region in seen:
                raise ParseError(f"Reg[{region}] is defined in terms of itself", *_position(span))
            return RegType(region, _elaborate(declared[region], declared, span, seen | {region}))
        case RegType(region, content):
            return RegType(region, _elaborate(content, declared, span, seen))
        case Arrow(domain, e, codomain):
            return Arrow(_elaborate(domain, declared, span, seen), e, _elaborate(codomain, declared, span, seen))
        case _:
            return a  # type: ignore[return-value]


def _position(span: Span | None) -> tuple[int, int]:
    return (span.line, span.column) if span else (0, 0)


def _check_prelude(file: SourceFile, spans: dict[str, Span | None]) -> None:
    if file.prelude == "int":
        return
    for region, a in file.regions.entries:
        if uses_int(a):
            raise ParseError(f"region {region} uses Int; enable the integer prelude", *_position(spans.get(region)))
    for t in file.terms():
        for node in subterms(t):
            if isinstance(node, IntLit | PrimOp | IfZero):
                raise ParseError("integer syntax needs the integer prelude", *_position(node.span))
        for a in annotations(t):
            if uses_int(a):
                raise ParseError("Int annotation needs the integer prelude", *_position(t.span))


def parse(source: str, prelude: str | None = None) -> SourceFile:
    """Parse a source file; raise ParseError with a position on failure."""
    prelude = prelude or detect_prelude(source)
    try:
        decls = _ToAst().transform(_PARSER.parse(source))
    except UnexpectedInput as e:
        raise _syntax_error(e) from e
    except VisitError as e:
        if isinstance(e.orig_exc, ParseError):
            raise e.orig_exc from e
        raise ParseError(str(e.orig_exc)) from e

    declared: dict[RegionName, Type] = {}
    spans: dict[str, Span | None] = {}
    for kind, name, payload, span in decls:
        if kind == "region":
            if name in declared:
                raise ParseError(f"region {name} is declared twice", *_position(span))
            declared[name] = payload
            spans[name] = span

    def elaborate(a: Type) -> Type:
        return _elaborate(a, declared, None, frozenset())

    regions = RegionContext(tuple((r, _elaborate(a, declared, spans[r], frozenset({r}))) for r, a in declared.items()))
    definitions: list[tuple[str, Term]] = []
    store: list[tuple[RegionName, Term]] = []
    main: list[Term] | None = None
    for kind, name, payload, span in decls:
        match kind:
            case "def":
                definitions.append((name, map_annotations(payload, elaborate)))
            case "store":
                for value in payload:
                    if not is_value(value) or isinstance(value, FixMacro):
                        raise ParseError(f"store {name} holds a non-value", *_position(value.span or span))
                    store.append((name, map_annotations(value, elaborate)))
            case "main":
                if main is not None:
                    raise ParseError("main is declared twice", *_position(span))
                main = [map_annotations(t, elaborate) for t in payload]
    if main is None:
        raise ParseError("missing main declaration")
    file = SourceFile(regions, tuple(definitions), tuple(store), tuple(main), prelude, tuple(spans.items()))
    _check_prelude(file, spans)
    logger.debug(f"Parsed {len(regions)} regions, {len(definitions)} definitions, {len(main)} threads")
    return file


def parse_term(source: str, prelude: str | None = "int") -> Term:
    """Parse a single term (the main program of a one-thread file)."""
    file = parse(f"main = {source};", prelude)
    if len(file.main) != 1:
        raise ParseError("expected a single term")
    return file.main[0]


def parse_type(source: str, regions: RegionContext | None = None) -> Type:
    decls = "".join(f"region {r} : {pretty(a)};" for r, a in (regions.entries if regions else ()))
    file = parse(f"{decls} main = fun (x : {source}) -> x;", "int")
    lam = file.main[0]
    assert isinstance(lam, Lam)
    return lam.annotation


# Printing

_LAM, _SUM, _PRODUCT, _APP, _PREFIX, _ATOM = range(6)


def _level(t: Term) -> int:
    match t:
        case Lam() | FixMacro() | ElseNext():
            return _LAM
        case PrimOp("+" | "-", _):
            return _SUM
        case PrimOp("*", _):
            return _PRODUCT
        case App():
            return _APP
        case Get():
            return _PREFIX
        case _:
            return _ATOM


def _show(t: Term, needed: int) -> str:
    text = _term(t)
    return f"({text})" if _level(t) < needed else text


def _term(t: Term) -> str:
    match t:
        case Var(name):
            return name
        case RegionConst(region):
            return f"#{region}"
        case Star():
            return "unit"
        case IntLit(value):
            return str(value) if value >= 0 else f"(-{-value})"
        case Lam(var, a, body):
            return f"fun ({var} : {pretty(a)}) -> {_show(body, _LAM)}"
        case FixMacro(region, fun, a, body):
            return f"fix[{region}]({fun} : {pretty(a)}) -> {_show(body, _LAM)}"
        case ElseNext(now, later):
            return f"{_show(now, _SUM)} elsenext {_show(later, _LAM)}"
        case PrimOp("iszero", (arg,)):
            return f"iszero({_show(arg, _LAM)})"
        case PrimOp("*", (left, right)):
            return f"{_show(left, _PRODUCT)} * {_show(right, _APP)}"
        case PrimOp(op, (left, right)):
            return f"{_show(left, _SUM)} {op} {_show(right, _PRODUCT)}"
        case App(fun, arg):
            return f"{_show(fun, _APP)} {_show(arg, _PREFIX)}"
        case Get(target):
            return f"get {_show(target, _PREFIX)}"
        case Set(target, value):
            return f"set({_show(target, _LAM)}, {_show(value, _LAM)})"
        case Par(threads):
            return "par{" + ", ".join(_show(th, _LAM) for th in threads) + "}"
        case RefMacro(region, body):
            return f"ref[{region}]({_show(body, _LAM)})"
        case IfZero(cond, then, orelse):
            return f"ifz({_show(cond, _LAM)}){{{_show(then, _LAM)}}}{{{_show(orelse, _LAM)}}}"
        case _:
            raise TypeError(f"cannot print {t!r}")


@singledispatch
def pretty(x: object) -> str:
    """Render a type, term, store, program or source file in concrete syntax."""
    raise TypeError(f"cannot print {type(x).__name__}")


for _type in (UnitType, IntType, BehaviourType, RegType, Arrow):
    pretty.register(_type, str)

for _node in (Var, RegionConst, Star, Lam, App, Get, Set, ElseNext, Par, IntLit, PrimOp, IfZero, RefMacro, FixMacro):
    pretty.register(_node, _term)


@pretty.register
def _(s: Store) -> str:
    regions = sorted(s.dom())
    return "; ".join(f"{r} <= {{{', '.join(_term(v) for v in s.values(r))}}}" for r in regions)


@pretty.register
def _(p: Program) -> str:
    threads = " | ".join(_term(t) for t in p.terms)
    return f"{threads} || {pretty(p.store)}" if p.store.dom() else threads


@pretty.register
def _(f: SourceFile) -> str:
    lines = []
    if f.prelude:
        lines.append(f"//! prelude: {f.prelude}")
    lines += [f"region {r} : {a};" for r, a in f.regions.entries]
    lines += [f"def {name} = {_term(body)};" for name, body in f.definitions]
    by_region: dict[RegionName, list[Term]] = {}
    for r, v in f.store:
        by_region.setdefault(r, []).append(v)
    lines += [f"store {r} <= {{{', '.join(_term(v) for v in vs)}}};" for r, vs in by_region.items()]
    lines.append("main = " + " | ".join(_term(t) for t in f.main) + ";")
    return "\n".join(lines) + "\n"


def format_judgement(a: TypeOrBehaviour, e: frozenset[str]) -> str:
    return f"({pretty(a)}, {format_effect(e)})"

