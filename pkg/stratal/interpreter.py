"""Small-step evaluation, the end-of-instant tick and the run loop."""

from __future__ import annotations

import hashlib
import logging
import random
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace

from stratal.core import (
    App,
    AppArg,
    AppFun,
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
    Var,
    is_value,
    plug,
    spawn,
    substitute,
)
from stratal.errors import DecompositionFailure, ExpansionError, NotQuiescent, TickUndefined
from stratal.models import ExhaustiveSchedule, RunConfig, SeededSchedule

logger = logging.getLogger(__name__)


# Redexes


@dataclass(frozen=True)
class Beta:
    fun: Lam
    arg: Term


@dataclass(frozen=True)
class GetRegion:
    region: RegionName


@dataclass(frozen=True)
class SetRegion:
    region: RegionName
    value: Term


@dataclass(frozen=True)
class Prim:
    """A primitive operation or an if-zero whose operands are all values."""

    term: PrimOp | IfZero


type Reduction = Beta | GetRegion | SetRegion | Prim


def redex_term(r: Reduction) -> Term:
    match r:
        case Beta(fun, arg):
            return App(fun, arg)
        case GetRegion(region):
            return Get(RegionConst(region))
        case SetRegion(region, value):
            return Set(RegionConst(region), value)
        case Prim(term):
            return term


# Decompositions


@dataclass(frozen=True)
class IsValue:
    value: Term


@dataclass(frozen=True)
class Redex:
    ctx: EvalContext
    redex: Reduction


@dataclass(frozen=True)
class UnderElseNext:
    """E[(E'[delta]) else-next N] with E time-insensitive.

    `delta` is either a value (the thread is suspended until the next instant)
    or a redex that may still fire in the current instant.
    """

    outer: EvalContext
    inner: EvalContext
    delta: Term | Reduction
    later: Term

    def context(self) -> EvalContext:
        return self.outer + EvalContext((ElseNextFrame(self.later),)) + self.inner


type Decomposition = IsValue | Redex | UnderElseNext


def _value(t: Term) -> bool:
    return is_value(t)


def _focus(t: Term) -> tuple[list[Frame], Term | Reduction]:
    """Frames (outermost first) down to the next redex, or to a value under else-next."""
    frames: list[Frame] = []
    while True:
        match t:
            case _ if _value(t):
                return frames, t
            case App(fun, arg):
                if not _value(fun):
                    frames.append(AppFun(arg))
                    t = fun
                elif not _value(arg):
                    frames.append(AppArg(fun))
                    t = arg
                elif isinstance(fun, Lam):
                    return frames, Beta(fun, arg)
                else:
                    raise DecompositionFailure(f"applying a non-function value {type(fun).__name__}")
            case Get(target):
                if not _value(target):
                    frames.append(GetFrame())
                    t = target
                elif isinstance(target, RegionConst):
                    return frames, GetRegion(target.region)
                else:
                    raise DecompositionFailure("get of a value that is not a region")
            case Set(target, value):
                if not _value(target):
                    frames.append(SetTarget(value))
                    t = target
                elif not _value(value):
                    frames.append(SetValue(target))
                    t = value
                elif isinstance(target, RegionConst):
                    return frames, SetRegion(target.region, value)
                else:
                    raise DecompositionFailure("set of a value that is not a region")
            case ElseNext(now, later):
                frames.append(ElseNextFrame(later))
                t = now
            case PrimOp(op, args):
                pending = next((i for i, a in enumerate(args) if not _value(a)), None)
                if pending is None:
                    if not all(isinstance(a, IntLit) for a in args):
                        raise DecompositionFailure(f"non-integer operand of {op}")
                    return frames, Prim(t)
                frames.append(PrimFrame(op, args[:pending], args[pending + 1 :]))
                t = args[pending]
            case IfZero(cond, then, orelse):
                if not _value(cond):
                    frames.append(IfZeroFrame(then, orelse))
                    t = cond
                elif isinstance(cond, IntLit):
                    return frames, Prim(t)
                else:
                    raise DecompositionFailure("if-zero on a non-integer")
            case Var(name):
                raise DecompositionFailure(f"open term: free variable {name}")
            case Par():
                raise DecompositionFailure("parallel composition below an evaluation context")
            case RefMacro() | FixMacro():
                raise ExpansionError(f"macro {type(t).__name__} reached the evaluator")
            case _:
                raise DecompositionFailure(f"not a term: {t!r}")


def decompose(t: Term) -> Decomposition:
    frames, delta = _focus(t)
    split = next((i for i, f in enumerate(frames) if isinstance(f, ElseNextFrame)), None)
    if split is None:
        if isinstance(delta, Beta | GetRegion | SetRegion | Prim):
            return Redex(EvalContext(tuple(frames)), delta)
        return IsValue(delta)
    later = frames[split]
    assert isinstance(later, ElseNextFrame)
    return UnderElseNext(
        EvalContext(tuple(frames[:split])),
        EvalContext(tuple(frames[split + 1 :])),
        delta,
        later.later,
    )


def red(ctx: EvalContext) -> EvalContext:
    """Drop every else-next frame from a context."""
    return EvalContext(tuple(f for f in ctx.frames if not isinstance(f, ElseNextFrame)))


def ready_region(d: Decomposition) -> RegionName | None:
    """The region a term is about to read or write, if any."""
    match d:
        case Redex(_, GetRegion(region) | SetRegion(region, _)):
            return region
        case UnderElseNext(_, _, GetRegion(region) | SetRegion(region, _), _):
            return region
        case _:
            return None


# Steps


@dataclass(frozen=True)
class StepEvent:
    thread: str
    rule: str
    redex: Term
    region: RegionName | None = None
    value: Term | None = None
    stored: bool = False


def contract(r: Reduction, store: Store) -> Iterator[tuple[Term, Store, StepEvent]]:
    redex = redex_term(r)
    match r:
        case Beta(fun, arg):
            yield substitute(fun.body, fun.var, arg), store, StepEvent("", "beta", redex)
        case GetRegion(region):
            for value in store.values(region):
                yield value, store, StepEvent("", "get", redex, region, value)
        case SetRegion(region, value):
            updated = store.add(region, value)
            yield Star(), updated, StepEvent("", "set", redex, region, value, stored=updated is not store)
        case Prim(term):
            yield _primitive(term), store, StepEvent("", "prim", redex)


def _primitive(t: PrimOp | IfZero) -> Term:
    match t:
        case IfZero(IntLit(n), then, orelse):
            return then if n == 0 else orelse
        case PrimOp("iszero", (IntLit(n),)):
            return IntLit(1 if n == 0 else 0)
        case PrimOp("+", (IntLit(a), IntLit(b))):
            return IntLit(a + b)
        case PrimOp("-", (IntLit(a), IntLit(b))):
            return IntLit(a - b)
        case PrimOp("*", (IntLit(a), IntLit(b))):
            return IntLit(a * b)
        case _:
            raise DecompositionFailure(f"cannot evaluate primitive {t!r}")


def next_redex(t: Term) -> tuple[EvalContext, Reduction] | None:
    """The redex a thread reduces next, with the context it is plugged back into."""
    match decompose(t):
        case Redex(ctx, r):
            return red(ctx), r
        case UnderElseNext(_, _, Beta() | GetRegion() | SetRegion() | Prim() as r) as d:
            return red(d.context()), r
        case _:
            return None


def step_thread(t: Term, s: Store, *, tid: str = "") -> list[tuple[Term, Store, StepEvent]]:
    """All one-step successors of a single thread; empty when it is stuck."""
    found = next_redex(t)
    if found is None:
        return []
    frames, r = found
    return [(plug(frames, m), s2, replace(event, thread=tid)) for m, s2, event in contract(r, s)]


def successors(p: Program) -> list[tuple[Program, StepEvent]]:
    found: list[tuple[Program, StepEvent]] = []
    for i, thread in enumerate(p.threads):
        for term, store, event in step_thread(thread.term, p.store, tid=thread.tid):
            found.append((p.replace(i, term, store), event))
    return found


class SeededScheduler:
    """Picks one successor uniformly at random; the seed makes runs replayable."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)

    def choose[T](self, options: Sequence[T]) -> list[T]:
        if not options:
            return []
        return [options[self.rng.randrange(len(options))]]


class ExhaustiveScheduler:
    def choose[T](self, options: Sequence[T]) -> list[T]:
        return list(options)


type Scheduler = SeededScheduler | ExhaustiveScheduler


@dataclass(frozen=True)
class StepResult:
    successors: list[tuple[Program, StepEvent]]

    def __bool__(self) -> bool:
        return bool(self.successors)


def step_program(p: Program, scheduler: Scheduler) -> StepResult:
    return StepResult(scheduler.choose(successors(p)))


# Tick


def tick_term(t: Term) -> Term:
    match decompose(t):
        case IsValue():
            return t
        case Redex(_, GetRegion()):
            return t
        case UnderElseNext(outer, _, GetRegion(), later):
            return plug(outer, later)
        case UnderElseNext(outer, _, delta, later) if not isinstance(delta, Beta | GetRegion | SetRegion | Prim):
            return plug(outer, later)
        case d:
            raise TickUndefined(f"no tick rule for a thread decomposing as {type(d).__name__}")


def tick(p: Program) -> Program:
    """End the current instant: fire else-next branches, keep stuck reads and values."""
    if successors(p):
        raise NotQuiescent("the program can still reduce in this instant")
    threads = []
    for thread in p.threads:
        threads.extend(spawn(thread.tid, tick_term(thread.term)))
    return Program(tuple(threads), p.store)


# Run loop


def state_key(p: Program, ticks: int = 0) -> str:
    return f"{ticks}/{p.canonical()}"


def state_hash(p: Program) -> str:
    return hashlib.sha256(p.canonical().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Transition:
    """One recorded event: a reduction (with its event) or a tick (event None)."""

    instant: int
    program: Program
    event: StepEvent | None = None


@dataclass(frozen=True)
class Terminated:
    final: Program
    steps: int
    instants: int
    stable: bool
    finals: tuple[Program, ...] = ()


@dataclass(frozen=True)
class FuelExhausted:
    program: Program
    steps: int
    instants: int


@dataclass(frozen=True)
class StateBudgetExhausted:
    states: int
    instants: int


@dataclass(frozen=True)
class CycleDetected:
    state: Program
    steps: int
    instants: int


type Outcome = Terminated | FuelExhausted | StateBudgetExhausted | CycleDetected


@dataclass(frozen=True)
class RunResult:
    outcome: Outcome
    trace: tuple[Transition, ...] = ()
    states: int = 0

    @property
    def label(self) -> str:
        return type(self.outcome).__name__


def run(p: Program, cfg: RunConfig) -> RunResult:
    match cfg.schedule:
        case SeededSchedule(seed=seed):
            return _run_seeded(p, cfg, SeededScheduler(seed))
        case ExhaustiveSchedule(state_budget=budget):
            return _run_exhaustive(p, cfg, budget)
        case other:
            raise ValueError(f"unknown schedule: {other!r}")


def _run_seeded(p: Program, cfg: RunConfig, scheduler: SeededScheduler) -> RunResult:
    trace: list[Transition] = []
    steps = instant = 0
    while True:
        chosen = step_program(p, scheduler).successors
        if chosen:
            if steps >= cfg.fuel:
                logger.warning(f"Fuel exhausted after {steps} steps in instant {instant}")
                return RunResult(FuelExhausted(p, steps, instant), tuple(trace), len(trace) + 1)
            p, event = chosen[0]
            steps += 1
            trace.append(Transition(instant, p, event))
            continue
        if instant >= cfg.instants:
            return RunResult(Terminated(p, steps, instant, stable=False, finals=(p,)), tuple(trace), len(trace) + 1)
        logger.debug(f"Instant {instant} ends after {steps} steps")
        ticked = tick(p)
        if ticked.alpha_eq(p):
            return RunResult(Terminated(p, steps, instant, stable=True, finals=(p,)), tuple(trace), len(trace) + 1)
        instant += 1
        p = ticked
        trace.append(Transition(instant, p))


@dataclass
class _Node:
    program: Program
    ticks: int
    steps: int
    key: str
    children: Iterator[tuple[Program, int, StepEvent | None]] = field(default_factory=lambda: iter(()))


def _run_exhaustive(p: Program, cfg: RunConfig, budget: int) -> RunResult:
    """Depth-first exploration of every interleaving with memoised states.

    A state is the alpha-canonical program together with the number of ticks
    that led to it, so a recurrence on the current path is a cycle within one
    instant.
    """
    finals: dict[str, Terminated] = {}
    path: list[Transition] = []
    first_final_path: tuple[Transition, ...] | None = None
    max_ticks = 0

    def expand(node: _Node) -> None:
        nonlocal first_final_path
        moves = successors(node.program)
        if moves:
            node.children = ((q, node.ticks, event) for q, event in moves)
            return
        stable = False
        if node.ticks < cfg.instants:
            ticked = tick(node.program)
            if not ticked.alpha_eq(node.program):
                node.children = iter([(ticked, node.ticks + 1, None)])
                return
            stable = True
        done = Terminated(node.program, node.steps, node.ticks, stable)
        finals.setdefault(node.program.canonical(), done)
        if first_final_path is None:
            first_final_path = tuple(path)

    root = _Node(p, 0, 0, state_key(p))
    visited = {root.key}
    on_path = {root.key}
    stack = [root]
    expand(root)
    while stack:
        node = stack[-1]
        nxt = next(node.children, None)
        if nxt is None:
            stack.pop()
            on_path.discard(node.key)
            if path:
                path.pop()
            continue
        child, ticks, event = nxt
        steps = node.steps + (event is not None)
        transition = Transition(ticks, child, event)
        key = state_key(child, ticks)
        if key in on_path:
            logger.info(f"Cycle detected after {steps} steps in instant {ticks}")
            return RunResult(CycleDetected(child, steps, ticks), (*path, transition), len(visited))
        if key in visited:
            continue
        if steps > cfg.fuel:
            logger.warning(f"Fuel exhausted along a path of {steps} steps")
            return RunResult(FuelExhausted(child, steps, ticks), (*path, transition), len(visited))
        visited.add(key)
        if len(visited) > budget:
            logger.warning(f"State budget of {budget} exhausted")
            return RunResult(StateBudgetExhausted(len(visited), max_ticks), tuple(path), len(visited))
        max_ticks = max(max_ticks, ticks)
        path.append(transition)
        on_path.add(key)
        child_node = _Node(child, ticks, steps, key)
        stack.append(child_node)
        expand(child_node)

    results = list(finals.values())
    first = results[0]
    summary = Terminated(
        first.final,
        steps=max(r.steps for r in results),
        instants=max(r.instants for r in results),
        stable=all(r.stable for r in results),
        finals=tuple(r.final for r in results),
    )
    return RunResult(summary, first_final_path or (), len(visited))
