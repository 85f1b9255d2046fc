"""Abstract syntax of the region calculus.

Types, terms, stores, programs and evaluation contexts, together with the
syntactic operations every other module relies on: free variables and regions,
capture-avoiding substitution, alpha-equivalence and plugging a term into a
context.

All nodes are frozen dataclasses. Source spans are carried for diagnostics but
never take part in equality or hashing.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

from stratal.errors import Span

type RegionName = str
type Effect = frozenset[RegionName]

EMPTY: Effect = frozenset()


def effect(*regions: RegionName) -> Effect:
    """Build an effect from region names."""
    return frozenset(regions)


def format_effect(e: Iterable[RegionName]) -> str:
    return "{" + ", ".join(sorted(e)) + "}"


# Types and the behaviour type


@dataclass(frozen=True)
class UnitType:
    def __str__(self) -> str:
        return "Unit"


@dataclass(frozen=True)
class IntType:
    def __str__(self) -> str:
        return "Int"


@dataclass(frozen=True)
class BehaviourType:
    def __str__(self) -> str:
        return "Beh"


@dataclass(frozen=True)
class RegType:
    region: RegionName
    content: Type

    def __str__(self) -> str:
        return f"Reg[{self.region}]({self.content})"


@dataclass(frozen=True)
class Arrow:
    domain: Type
    effect: Effect
    codomain: TypeOrBehaviour

    def __str__(self) -> str:
        dom = f"({self.domain})" if isinstance(self.domain, Arrow) else str(self.domain)
        return f"{dom} -{format_effect(self.effect)}> {self.codomain}"


type Type = UnitType | IntType | RegType | Arrow
type TypeOrBehaviour = Type | BehaviourType

UNIT = UnitType()
INT = IntType()
BEH = BehaviourType()


def type_regions(a: TypeOrBehaviour) -> Effect:
    """All region names occurring in a type, in Reg types and in arrow effects."""
    match a:
        case RegType(region, content):
            return frozenset({region}) | type_regions(content)
        case Arrow(domain, e, codomain):
            return type_regions(domain) | e | type_regions(codomain)
        case _:
            return EMPTY


def erase(a: TypeOrBehaviour) -> TypeOrBehaviour:
    """Drop every effect annotation from a type."""
    match a:
        case RegType(region, content):
            return RegType(region, erase(content))  # type: ignore[arg-type]
        case Arrow(domain, _, codomain):
            return Arrow(erase(domain), EMPTY, erase(codomain))  # type: ignore[arg-type]
        case _:
            return a


def uses_int(a: TypeOrBehaviour) -> bool:
    match a:
        case IntType():
            return True
        case RegType(_, content):
            return uses_int(content)
        case Arrow(domain, _, codomain):
            return uses_int(domain) or uses_int(codomain)
        case _:
            return False


# Terms

_SPAN = field(default=None, compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span | None = _SPAN


@dataclass(frozen=True)
class RegionConst:
    region: RegionName
    span: Span | None = _SPAN


@dataclass(frozen=True)
class Star:
    span: Span | None = _SPAN


@dataclass(frozen=True)
class Lam:
    var: str
    annotation: Type
    body: Term
    span: Span | None = _SPAN


@dataclass(frozen=True)
class App:
    fun: Term
    arg: Term
    span: Span | None = _SPAN


@dataclass(frozen=True)
class Get:
    target: Term
    span: Span | None = _SPAN


@dataclass(frozen=True)
class Set:
    target: Term
    value: Term
    span: Span | None = _SPAN


@dataclass(frozen=True)
class ElseNext:
    now: Term
    later: Term
    span: Span | None = _SPAN


@dataclass(frozen=True)
class Par:
    threads: tuple[Term, ...]
    span: Span | None = _SPAN

    def __post_init__(self) -> None:
        if len(self.threads) < 2:
            raise ValueError("a parallel composition needs at least two threads")


@dataclass(frozen=True)
class IntLit:
    value: int
    span: Span | None = _SPAN


PRIM_ARITY = {"+": 2, "-": 2, "*": 2, "iszero": 1}


@dataclass(frozen=True)
class PrimOp:
    op: str
    args: tuple[Term, ...]
    span: Span | None = _SPAN

    def __post_init__(self) -> None:
        if PRIM_ARITY.get(self.op) != len(self.args):
            raise ValueError(f"bad primitive application: {self.op}/{len(self.args)}")


@dataclass(frozen=True)
class IfZero:
    cond: Term
    then: Term
    orelse: Term
    span: Span | None = _SPAN


# Macro nodes of the surface language. Expansion (module transform) removes them
# before a term reaches the checker or the evaluator.


@dataclass(frozen=True)
class RefMacro:
    region: RegionName
    body: Term
    span: Span | None = _SPAN


@dataclass(frozen=True)
class FixMacro:
    region: RegionName
    fun: str
    annotation: Arrow
    body: Term
    span: Span | None = _SPAN


type Term = (
    Var
    | RegionConst
    | Star
    | Lam
    | App
    | Get
    | Set
    | ElseNext
    | Par
    | IntLit
    | PrimOp
    | IfZero
    | RefMacro
    | FixMacro
)


def is_value(t: Term) -> bool:
    return isinstance(t, RegionConst | Star | Lam | IntLit)


def children(t: Term) -> tuple[Term, ...]:
    match t:
        case Lam(_, _, body) | RefMacro(_, body) | FixMacro(_, _, _, body):
            return (body,)
        case App(fun, arg):
            return (fun, arg)
        case Get(target):
            return (target,)
        case Set(target, value):
            return (target, value)
        case ElseNext(now, later):
            return (now, later)
        case Par(threads):
            return threads
        case PrimOp(_, args):
            return args
        case IfZero(cond, then, orelse):
            return (cond, then, orelse)
        case _:
            return ()


def rebuild(t: Term, new: tuple[Term, ...]) -> Term:
    """Rebuild a node with new children (same arity and order as `children`)."""
    match t:
        case Lam(var, ann, _):
            return Lam(var, ann, new[0], span=t.span)
        case RefMacro(region, _):
            return RefMacro(region, new[0], span=t.span)
        case FixMacro(region, fun, ann, _):
            return FixMacro(region, fun, ann, new[0], span=t.span)
        case App():
            return App(new[0], new[1], span=t.span)
        case Get():
            return Get(new[0], span=t.span)
        case Set():
            return Set(new[0], new[1], span=t.span)
        case ElseNext():
            return ElseNext(new[0], new[1], span=t.span)
        case Par():
            return Par(new, span=t.span)
        case PrimOp(op, _):
            return PrimOp(op, new, span=t.span)
        case IfZero():
            return IfZero(new[0], new[1], new[2], span=t.span)
        case _:
            return t


def subterms(t: Term) -> Iterator[Term]:
    """Pre-order walk over a term."""
    yield t
    for child in children(t):
        yield from subterms(child)


def binder(t: Term) -> str | None:
    match t:
        case Lam(var, _, _):
            return var
        case FixMacro(_, fun, _, _):
            return fun
        case _:
            return None


def free_vars(t: Term) -> frozenset[str]:
    match t:
        case Var(name):
            return frozenset({name})
        case _:
            bound = binder(t)
            found = frozenset().union(*(free_vars(c) for c in children(t)))
            return found - {bound} if bound is not None else found


def annotations(t: Term) -> Iterator[TypeOrBehaviour]:
    for node in subterms(t):
        match node:
            case Lam(_, ann, _) | FixMacro(_, _, ann, _):
                yield ann


def free_regions(t: Term) -> Effect:
    """Every region name occurring in a term, including those in annotations."""
    found: set[RegionName] = set()
    for node in subterms(t):
        match node:
            case RegionConst(region) | RefMacro(region, _):
                found.add(region)
            case FixMacro(region, _, _, _):
                found.add(region)
    for ann in annotations(t):
        found |= type_regions(ann)
    return frozenset(found)


def map_annotations(t: Term, f: Callable[[Type], Type]) -> Term:
    """Rewrite every type annotation in a term."""
    new = tuple(map_annotations(c, f) for c in children(t))
    match t:
        case Lam(var, ann, _):
            return Lam(var, f(ann), new[0], span=t.span)
        case FixMacro(region, fun, ann, _):
            mapped = f(ann)
            if not isinstance(mapped, Arrow):
                raise ValueError("a fixed point must be annotated with an arrow type")
            return FixMacro(region, fun, mapped, new[0], span=t.span)
        case _:
            return rebuild(t, new)


def fresh_name(base: str, avoid: Iterable[str]) -> str:
    """First name of the form base'N that does not occur in `avoid`."""
    taken = set(avoid)
    stem = base.split("'")[0] or "x"
    n = 1
    while f"{stem}'{n}" in taken:
        n += 1
    return f"{stem}'{n}"


def substitute(body: Term, var: str, replacement: Term) -> Term:
    """Capture-avoiding substitution [replacement/var]body."""
    return _subst(body, var, replacement, free_vars(replacement))


def _subst(t: Term, x: str, n: Term, fv_n: frozenset[str]) -> Term:
    if isinstance(t, Var):
        return n if t.name == x else t
    bound = binder(t)
    if bound is None:
        return rebuild(t, tuple(_subst(c, x, n, fv_n) for c in children(t)))
    if bound == x:
        return t
    (inner,) = children(t)
    if x not in free_vars(inner):
        return t
    if bound in fv_n:
        renamed = fresh_name(bound, fv_n | free_vars(inner) | {x})
        inner = _subst(inner, bound, Var(renamed), frozenset({renamed}))
        t = _rename_binder(t, renamed)
    return rebuild(t, (_subst(inner, x, n, fv_n),))


def _rename_binder(t: Term, name: str) -> Term:
    match t:
        case Lam(_, ann, body):
            return Lam(name, ann, body, span=t.span)
        case FixMacro(region, _, ann, body):
            return FixMacro(region, name, ann, body, span=t.span)
        case _:
            return t


def canonical(t: Term, env: tuple[str, ...] = ()) -> str:
    """Nameless rendering: bound variables become binder depths.

    Two terms are alpha-equivalent exactly when their canonical forms agree.
    """
    match t:
        case Var(name):
            for depth, bound in enumerate(reversed(env)):
                if bound == name:
                    return f"@{depth}"
            return f"${name}"
        case RegionConst(region):
            return f"#{region}"
        case Star():
            return "*"
        case IntLit(value):
            return str(value)
        case Lam(var, ann, body):
            return f"(L:{ann}.{canonical(body, (*env, var))})"
        case FixMacro(region, fun, ann, body):
            return f"(fix[{region}]:{ann}.{canonical(body, (*env, fun))})"
        case RefMacro(region, body):
            return f"(ref[{region}] {canonical(body, env)})"
        case PrimOp(op, args):
            return f"({op} {' '.join(canonical(a, env) for a in args)})"
        case _:
            inner = " ".join(canonical(c, env) for c in children(t))
            return f"({type(t).__name__} {inner})"


def alpha_eq(a: Term, b: Term) -> bool:
    return canonical(a) == canonical(b)


# Stores and programs


@dataclass(frozen=True)
class Store:
    """Region -> set of closed values, deduplicated up to alpha-equivalence.

    Stores are never mutated: `add` and `merge` return new stores. Values keep
    their insertion order so that a seeded scheduler replays deterministically.
    """

    bindings: Mapping[RegionName, tuple[Term, ...]] = field(default_factory=lambda: MappingProxyType({}))

    @staticmethod
    def of(pairs: Iterable[tuple[RegionName, Term]]) -> Store:
        store = Store()
        for region, value in pairs:
            store = store.add(region, value)
        return store

    def __iter__(self) -> Iterator[tuple[RegionName, Term]]:
        for region, values in self.bindings.items():
            for value in values:
                yield region, value

    def dom(self) -> frozenset[RegionName]:
        return frozenset(r for r, values in self.bindings.items() if values)

    def values(self, region: RegionName) -> tuple[Term, ...]:
        return self.bindings.get(region, ())

    def contains(self, region: RegionName, value: Term) -> bool:
        key = canonical(value)
        return any(canonical(v) == key for v in self.values(region))

    def add(self, region: RegionName, value: Term) -> Store:
        if not is_value(value):
            raise ValueError(f"only values can be stored, got {type(value).__name__}")
        if self.contains(region, value):
            return self
        bindings = dict(self.bindings)
        bindings[region] = (*self.values(region), value)
        return Store(MappingProxyType(bindings))

    def merge(self, other: Store) -> Store:
        merged = self
        for region, value in other:
            merged = merged.add(region, value)
        return merged

    def restrict(self, regions: Iterable[RegionName]) -> Store:
        keep = set(regions)
        return Store(MappingProxyType({r: vs for r, vs in self.bindings.items() if r in keep}))

    def includes(self, other: Store) -> bool:
        """True when every binding of `other` is in this store (up to alpha)."""
        return all(self.contains(region, value) for region, value in other)

    def canonical(self) -> str:
        parts = []
        for region in sorted(self.dom()):
            vals = sorted({canonical(v) for v in self.values(region)})
            parts.append(f"{region}<={{{','.join(vals)}}}")
        return ";".join(parts)

    def alpha_eq(self, other: Store) -> bool:
        return self.canonical() == other.canonical()


@dataclass(frozen=True)
class Thread:
    tid: str
    term: Term


def spawn(tid: str, term: Term) -> list[Thread]:
    """Split a top-level parallel composition into threads with derived ids."""
    if isinstance(term, Par):
        threads: list[Thread] = []
        for k, sub in enumerate(term.threads):
            threads.extend(spawn(f"{tid}.{k}", sub))
        return threads
    return [Thread(tid, term)]


@dataclass(frozen=True)
class Program:
    """A multiset of threads plus a store.

    Thread order is only kept for reporting; `canonical` treats threads as a
    multiset and ignores thread ids.
    """

    threads: tuple[Thread, ...]
    store: Store = field(default_factory=Store)

    def __post_init__(self) -> None:
        if not self.threads:
            raise ValueError("a program needs at least one thread")

    @staticmethod
    def of(terms: Iterable[Term], store: Store | None = None) -> Program:
        threads: list[Thread] = []
        for k, term in enumerate(terms):
            threads.extend(spawn(f"t{k}", term))
        return Program(tuple(threads), store or Store())

    @property
    def terms(self) -> tuple[Term, ...]:
        return tuple(t.term for t in self.threads)

    def replace(self, index: int, term: Term, store: Store) -> Program:
        tid = self.threads[index].tid
        threads = (*self.threads[:index], *spawn(tid, term), *self.threads[index + 1 :])
        return Program(threads, store)

    def canonical(self) -> str:
        threads = sorted(canonical(t) for t in self.terms)
        return " | ".join(threads) + " || " + self.store.canonical()

    def alpha_eq(self, other: Program) -> bool:
        return self.canonical() == other.canonical()


# Evaluation contexts


@dataclass(frozen=True)
class AppFun:
    """[] M"""

    arg: Term

    def fill(self, hole: Term) -> Term:
        return App(hole, self.arg)


@dataclass(frozen=True)
class AppArg:
    """V []"""

    fun: Term

    def fill(self, hole: Term) -> Term:
        return App(self.fun, hole)


@dataclass(frozen=True)
class GetFrame:
    def fill(self, hole: Term) -> Term:
        return Get(hole)


@dataclass(frozen=True)
class SetTarget:
    rhs: Term

    def fill(self, hole: Term) -> Term:
        return Set(hole, self.rhs)


@dataclass(frozen=True)
class SetValue:
    target: Term

    def fill(self, hole: Term) -> Term:
        return Set(self.target, hole)


@dataclass(frozen=True)
class ElseNextFrame:
    later: Term

    def fill(self, hole: Term) -> Term:
        return ElseNext(hole, self.later)


@dataclass(frozen=True)
class PrimFrame:
    op: str
    done: tuple[Term, ...]
    rest: tuple[Term, ...]

    def fill(self, hole: Term) -> Term:
        return PrimOp(self.op, (*self.done, hole, *self.rest))


@dataclass(frozen=True)
class IfZeroFrame:
    then: Term
    orelse: Term

    def fill(self, hole: Term) -> Term:
        return IfZero(hole, self.then, self.orelse)


type Frame = AppFun | AppArg | GetFrame | SetTarget | SetValue | ElseNextFrame | PrimFrame | IfZeroFrame


@dataclass(frozen=True)
class EvalContext:
    """A stack of elementary frames, outermost first."""

    frames: tuple[Frame, ...] = ()

    def __add__(self, other: EvalContext) -> EvalContext:
        return EvalContext(self.frames + other.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def is_time_insensitive(self) -> bool:
        return not any(isinstance(f, ElseNextFrame) for f in self.frames)


HOLE = EvalContext()


def plug(ctx: EvalContext, t: Term) -> Term:
    for frame in reversed(ctx.frames):
        t = frame.fill(t)
    return t
