"""Type and effect checking.

The declarative rules with a free-floating subsumption rule are implemented
bidirectionally: every term synthesizes its minimal type-and-effect pair and
subtyping is consulted only where a type flows into a position fixed by
something else (application arguments, set payloads, the later branch of an
else-next, the branches of an if-zero, stored values and an expected pair
supplied by the caller).
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from types import MappingProxyType

from stratal.config import SystemMode
from stratal.core import (
    BEH,
    EMPTY,
    INT,
    UNIT,
    App,
    Arrow,
    BehaviourType,
    Effect,
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
    Var,
    erase,
    format_effect,
    type_regions,
)
from stratal.errors import ErrorKind, ExpansionError, Span, TypingError

logger = logging.getLogger(__name__)

type Pair = tuple[TypeOrBehaviour, Effect]
type TypingContext = Mapping[str, Type]

EMPTY_GAMMA: TypingContext = MappingProxyType({})


def format_pair(pair: Pair) -> str:
    a, e = pair
    return f"({a}, {format_effect(e)})"


@dataclass(frozen=True)
class RegionContext:
    """Ordered assignment of content types to regions.

    Order only matters to the stratified system, where every type may mention
    strictly earlier regions only.
    """

    entries: tuple[tuple[RegionName, Type], ...] = ()

    def __post_init__(self) -> None:
        names = [r for r, _ in self.entries]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate region in context: {names}")

    @staticmethod
    def of(*entries: tuple[RegionName, Type]) -> RegionContext:
        return RegionContext(tuple(entries))

    def dom(self) -> frozenset[RegionName]:
        return frozenset(r for r, _ in self.entries)

    def __contains__(self, region: object) -> bool:
        return any(r == region for r, _ in self.entries)

    def __getitem__(self, region: RegionName) -> Type:
        for r, a in self.entries:
            if r == region:
                return a
        raise KeyError(region)

    def __len__(self) -> int:
        return len(self.entries)

    def prefix(self, n: int) -> RegionContext:
        return RegionContext(self.entries[:n])

    def restrict(self, regions: frozenset[RegionName]) -> RegionContext:
        return RegionContext(tuple((r, a) for r, a in self.entries if r in regions))

    def extend(self, other: RegionContext) -> RegionContext:
        return RegionContext(self.entries + other.entries)

    def erased(self) -> RegionContext:
        return RegionContext(tuple((r, erase(a)) for r, a in self.entries))  # type: ignore[misc]

    def __str__(self) -> str:
        return ", ".join(f"{r} : {a}" for r, a in self.entries) or "(empty)"


# Well-formedness


def _compatible(
    scope: RegionContext, a: TypeOrBehaviour, mode: SystemMode, full: RegionContext, owner: RegionName | None = None
) -> None:
    """Check that every region occurrence in `a` is declared in `scope` consistently."""
    match a:
        case RegType(region, content):
            _scoped(scope, region, full, owner, rule="wf-reg")
            if isinstance(content, BehaviourType):
                raise TypingError(ErrorKind.ILL_FORMED, "wf-reg", f"region {region} cannot hold a behaviour")
            expected = scope[region]
            if _types_differ(expected, content, mode):
                raise TypingError(
                    ErrorKind.ILL_FORMED,
                    "wf-reg",
                    f"region {region} holds {expected}, not {content}",
                    expected=expected,
                    actual=content,
                )
            _compatible(scope, content, mode, full, owner)
        case Arrow(domain, e, codomain):
            if isinstance(domain, BehaviourType):
                raise TypingError(ErrorKind.BEHAVIOUR_IN_DOMAIN, "wf-arrow", f"behaviour type in the domain of {a}")
            _compatible(scope, domain, mode, full, owner)
            if mode is not SystemMode.EFFECT_FREE:
                for region in sorted(e):
                    _scoped(scope, region, full, owner, rule="wf-arrow", as_effect=True)
            _compatible(scope, codomain, mode, full, owner)
        case _:
            return


def _scoped(
    scope: RegionContext,
    region: RegionName,
    full: RegionContext,
    owner: RegionName | None,
    *,
    rule: str,
    as_effect: bool = False,
) -> None:
    if region in scope:
        return
    if owner is not None and region in full:
        raise TypingError(
            ErrorKind.STRATIFICATION_VIOLATION,
            rule,
            f"the type of region {owner} mentions region {region}, which is not declared before it",
        )
    if as_effect:
        raise TypingError(ErrorKind.EFFECT_NOT_IN_SCOPE, rule, f"effect region {region} is not declared")
    raise TypingError(ErrorKind.UNBOUND_REGION, rule, f"region {region} is not declared")


def _types_differ(a: TypeOrBehaviour, b: TypeOrBehaviour, mode: SystemMode) -> bool:
    if mode is SystemMode.EFFECT_FREE:
        return erase(a) != erase(b)
    return a != b


def wf_region_context(
    r: RegionContext, mode: SystemMode, spans: Mapping[RegionName, Span | None] | None = None
) -> None:
    """Raise a TypingError unless the region context is well formed in `mode`.

    `spans` locates region declarations so that errors point at the offending one.
    """
    for i, (region, a) in enumerate(r.entries):
        try:
            if isinstance(a, BehaviourType):
                raise TypingError(ErrorKind.ILL_FORMED, "wf-region", f"region {region} cannot hold a behaviour")
            if mode is SystemMode.STRATIFIED:
                _compatible(r.prefix(i), a, mode, r, owner=region)
            else:
                _compatible(r, a, mode, r)
        except TypingError as e:
            span = (spans or {}).get(region)
            if span is None or e.span is not None:
                raise
            raise TypingError(e.kind, e.rule, f"region {region}: {e.detail}", span, e.expected, e.actual) from e


def wf_type(r: RegionContext, a: TypeOrBehaviour, mode: SystemMode) -> None:
    _compatible(r, a, mode, r)


def wf_type_effect(r: RegionContext, a: TypeOrBehaviour, e: Effect, mode: SystemMode) -> None:
    wf_type(r, a, mode)
    if mode is SystemMode.EFFECT_FREE:
        return
    missing = e - r.dom()
    if missing:
        raise TypingError(
            ErrorKind.EFFECT_NOT_IN_SCOPE, "wf-pair", f"effect regions {format_effect(missing)} not declared"
        )


# Subtyping


def subtype_type(a: TypeOrBehaviour, b: TypeOrBehaviour) -> bool:
    if a == b:
        return True
    match a, b:
        case Arrow(d1, e1, c1), Arrow(d2, e2, c2):
            return e1 <= e2 and subtype_type(d2, d1) and subtype_type(c1, c2)
        case _:
            return False


def subtype(r: RegionContext, left: Pair, right: Pair) -> bool:
    """(a, e) <= (a', e'): a <= a' and e included in e' (itself within dom(R))."""
    (a, e), (b, f) = left, right
    return e <= f and f <= r.dom() and subtype_type(a, b)


# Checking


class Checker:
    """Checks terms, stores and programs against one region context.

    Args:
        regions: The region context; it is validated on construction.
        mode: Which typing system to use.
        subsumption: When False, every use of subtyping becomes type equality.
        spans: Optional source spans of the region declarations, for diagnostics.
    """

    def __init__(
        self,
        regions: RegionContext,
        mode: SystemMode,
        *,
        subsumption: bool = True,
        spans: Mapping[RegionName, Span | None] | None = None,
    ):
        self.mode = mode
        self.subsumption = subsumption and mode is not SystemMode.EFFECT_FREE
        wf_region_context(regions, mode, spans)
        logger.debug(f"Checking against {len(regions)} regions in {mode} mode")
        self.regions = regions.erased() if mode is SystemMode.EFFECT_FREE else regions

    @property
    def effect_free(self) -> bool:
        return self.mode is SystemMode.EFFECT_FREE

    def leq(self, a: TypeOrBehaviour, b: TypeOrBehaviour) -> bool:
        if self.effect_free:
            return erase(a) == erase(b)
        return subtype_type(a, b) if self.subsumption else a == b

    def leq_pair(self, left: Pair, right: Pair) -> bool:
        if self.effect_free:
            return erase(left[0]) == erase(right[0])
        if not self.subsumption:
            return left == right
        return subtype(self.regions, left, right)

    def _effect(self, *regions: RegionName) -> Effect:
        return EMPTY if self.effect_free else frozenset(regions)

    def _type(self, a: TypeOrBehaviour) -> TypeOrBehaviour:
        return erase(a) if self.effect_free else a

    def check(self, gamma: TypingContext, t: Term, expected: Pair | None = None) -> Pair:
        pair = self.synth(gamma, t)
        if expected is not None and not self.leq_pair(pair, expected):
            raise TypingError(
                ErrorKind.TYPE_MISMATCH,
                "sub",
                f"{format_pair(pair)} is not a subtype of {format_pair(expected)}",
                span=t.span,
                expected=format_pair(expected),
                actual=format_pair(pair),
            )
        return pair

    def synth(self, gamma: TypingContext, t: Term) -> Pair:
        match t:
            case Var(name):
                if name not in gamma:
                    raise TypingError(ErrorKind.UNBOUND_VARIABLE, "var", f"variable {name} is not bound", span=t.span)
                return self._type(gamma[name]), EMPTY
            case RegionConst(region):
                if region not in self.regions:
                    raise TypingError(
                        ErrorKind.UNBOUND_REGION, "region", f"region {region} is not declared", span=t.span
                    )
                return RegType(region, self.regions[region]), EMPTY
            case Star():
                return UNIT, EMPTY
            case IntLit():
                return INT, EMPTY
            case Lam(var, annotation, body):
                self._wf_annotation(annotation, t)
                domain = self._type(annotation)
                codomain, e = self.synth({**gamma, var: domain}, body)  # type: ignore[dict-item]
                return Arrow(domain, e, codomain), EMPTY  # type: ignore[arg-type]
            case App(fun, arg):
                return self._app(gamma, t, fun, arg)
            case Get(target):
                region, content, e = self._region_of(gamma, target, "get")
                return content, e | self._effect(region)
            case Set(target, value):
                region, content, e1 = self._region_of(gamma, target, "set")
                a, e2 = self.synth(gamma, value)
                if not self.leq(a, content):
                    raise TypingError(
                        ErrorKind.TYPE_MISMATCH,
                        "set",
                        f"cannot store a value of type {a} in region {region} of type {content}",
                        span=value.span or t.span,
                        expected=content,
                        actual=a,
                    )
                return UNIT, e1 | e2 | self._effect(region)
            case ElseNext(now, later):
                a, e = self.synth(gamma, now)
                if isinstance(a, BehaviourType):
                    raise TypingError(
                        ErrorKind.TYPE_MISMATCH, "else-next", "a behaviour cannot be suspended", span=t.span
                    )
                b, _ = self.synth(gamma, later)
                if not self.leq(b, a):
                    raise TypingError(
                        ErrorKind.TYPE_MISMATCH,
                        "else-next",
                        f"the later branch has type {b}, expected a subtype of {a}",
                        span=later.span or t.span,
                        expected=a,
                        actual=b,
                    )
                return a, e
            case Par(threads):
                e = EMPTY
                for thread in threads:
                    e |= self.synth(gamma, thread)[1]
                return BEH, e
            case PrimOp(op, args):
                e = EMPTY
                for arg in args:
                    a, e_arg = self.synth(gamma, arg)
                    self._expect_int(a, arg, op)
                    e |= e_arg
                return INT, e
            case IfZero(cond, then, orelse):
                return self._if_zero(gamma, t, cond, then, orelse)
            case RefMacro() | FixMacro():
                raise ExpansionError(f"macro {type(t).__name__} must be expanded before checking")
            case _:
                raise TypeError(f"not a term: {t!r}")

    def _wf_annotation(self, annotation: TypeOrBehaviour, t: Term) -> None:
        if isinstance(annotation, BehaviourType):
            raise TypingError(ErrorKind.BEHAVIOUR_IN_DOMAIN, "lam", "a lambda cannot take a behaviour", span=t.span)
        try:
            wf_type(self.regions, annotation, self.mode)
        except TypingError as e:
            raise TypingError(e.kind, e.rule, e.detail, span=t.span, expected=e.expected, actual=e.actual) from e

    def _app(self, gamma: TypingContext, t: Term, fun: Term, arg: Term) -> Pair:
        f, e1 = self.synth(gamma, fun)
        if not isinstance(f, Arrow):
            raise TypingError(ErrorKind.NOT_A_FUNCTION, "app", f"applying a term of type {f}", span=fun.span or t.span)
        a, e2 = self.synth(gamma, arg)
        if not self.leq(a, f.domain):
            raise TypingError(
                ErrorKind.DOMAIN_MISMATCH,
                "app",
                f"argument of type {a} does not fit domain {f.domain}",
                span=arg.span or t.span,
                expected=f.domain,
                actual=a,
            )
        return f.codomain, e1 | e2 | self._effect(*f.effect)

    def _region_of(self, gamma: TypingContext, target: Term, rule: str) -> tuple[RegionName, Type, Effect]:
        a, e = self.synth(gamma, target)
        if not isinstance(a, RegType):
            raise TypingError(ErrorKind.TYPE_MISMATCH, rule, f"expected a region, got {a}", span=target.span)
        return a.region, a.content, e

    def _expect_int(self, a: TypeOrBehaviour, arg: Term, op: str) -> None:
        if not isinstance(a, IntType):
            raise TypingError(
                ErrorKind.TYPE_MISMATCH, "prim", f"operand of {op} has type {a}", span=arg.span, expected=INT, actual=a
            )

    def _if_zero(self, gamma: TypingContext, t: Term, cond: Term, then: Term, orelse: Term) -> Pair:
        a, e1 = self.synth(gamma, cond)
        self._expect_int(a, cond, "ifz")
        b, e2 = self.synth(gamma, then)
        c, e3 = self.synth(gamma, orelse)
        if self.leq(b, c):
            joined = c
        elif self.leq(c, b):
            joined = b
        else:
            raise TypingError(
                ErrorKind.TYPE_MISMATCH,
                "ifz",
                f"branches have unrelated types {b} and {c}",
                span=t.span,
                expected=b,
                actual=c,
            )
        return joined, e1 | e2 | e3

    def check_store(self, gamma: TypingContext, store: Store) -> None:
        for region, value in store:
            if region not in self.regions:
                raise TypingError(ErrorKind.UNBOUND_REGION, "store", f"store binds undeclared region {region}")
            content = self.regions[region]
            try:
                a, _ = self.synth(gamma, value)
            except TypingError as e:
                raise TypingError(
                    ErrorKind.STORE_VALUE_ILL_TYPED, "store", f"value stored in {region}: {e.detail}", span=e.span
                ) from e
            if not self.leq(a, content):
                raise TypingError(
                    ErrorKind.STORE_VALUE_ILL_TYPED,
                    "store",
                    f"region {region} holds {content}, but a stored value has type {a}",
                    span=value.span,
                    expected=content,
                    actual=a,
                )

    def check_program(self, gamma: TypingContext, program: Program) -> Pair:
        self.check_store(gamma, program.store)
        e = EMPTY
        for thread in program.threads:
            e |= self.synth(gamma, thread.term)[1]
        return BEH, e


# Module-level entry points


def check_term(
    r: RegionContext,
    gamma: TypingContext,
    t: Term,
    expected: Pair | None = None,
    mode: SystemMode = SystemMode.STRATIFIED,
    *,
    subsumption: bool = True,
) -> Pair:
    return Checker(r, mode, subsumption=subsumption).check(gamma, t, expected)


def check_store(r: RegionContext, gamma: TypingContext, store: Store, mode: SystemMode) -> None:
    Checker(r, mode).check_store(gamma, store)


def check_program(r: RegionContext, gamma: TypingContext, program: Program, mode: SystemMode) -> Pair:
    return Checker(r, mode).check_program(gamma, program)


def erase_effects(r: RegionContext, gamma: TypingContext, t: Term) -> TypeOrBehaviour:
    """Type `t` in the effect-erased system and return the erased type."""
    return Checker(r, SystemMode.EFFECT_FREE).check(gamma, t)[0]


def is_effect_free_typable(r: RegionContext, program: Program) -> bool:
    try:
        Checker(r, SystemMode.EFFECT_FREE).check_program(EMPTY_GAMMA, program)
    except TypingError:
        return False
    return True


# Derived rules


def ref_rule_type(r: RegionContext, region: RegionName, body_effect: Effect) -> Pair:
    """The pair of ref_r M when M has effect `body_effect` and fits R(r)."""
    return RegType(region, r[region]), body_effect | {region}


def fix_rule_type(r: RegionContext, region: RegionName, annotation: Arrow, mode: SystemMode) -> Pair:
    """The pair the derived fixed-point rule gives fix_r f.M annotated with A -e> B.

    The unstratified rule needs r : A -e> B in R with r in e and keeps the
    arrow as is; the stratified rule only needs r : A -e> B in R and adds r to
    the arrow's effect.
    """
    if region not in r or r[region] != annotation:
        raise TypingError(ErrorKind.ILL_FORMED, "fix", f"region {region} must hold {annotation}")
    if mode is SystemMode.STRATIFIED:
        return Arrow(annotation.domain, annotation.effect | {region}, annotation.codomain), EMPTY
    if region not in annotation.effect:
        raise TypingError(ErrorKind.ILL_FORMED, "fix", f"region {region} must occur in the effect of {annotation}")
    return annotation, EMPTY


def mention_closure(r: RegionContext, regions: Effect) -> Effect:
    """Smallest set containing `regions` and closed under the regions their types mention."""
    closed = set(regions)
    pending = list(regions)
    while pending:
        region = pending.pop()
        if region not in r:
            continue
        for mentioned in type_regions(r[region]):
            if mentioned not in closed:
                closed.add(mentioned)
                pending.append(mentioned)
    return frozenset(closed)


def split_context(r: RegionContext, e: Effect) -> tuple[RegionContext, RegionContext]:
    """Split R into (R0, R') with R0 well formed, e within dom(R0) and R0, R' ordered as in R."""
    keep = mention_closure(r, e)
    return r.restrict(keep), r.restrict(r.dom() - keep)
