"""Concrete store disciplines and their simulation by regions.

References keep the last written value, channels consume what they deliver
and signals keep every emitted value until the end of the instant. Terms are
the core terms; only the store semantics differ. `check_simulation` explores a
surface program and matches each surface step with core steps on the
region abstraction.
"""

from __future__ import annotations

import logging
from collections import Counter, deque
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum
from types import MappingProxyType

from stratal.checker import EMPTY_GAMMA, Pair, RegionContext, check_program
from stratal.config import SystemMode
from stratal.core import Program, RegionName, Star, Store, Term, Thread, canonical, plug, spawn
from stratal.errors import NotQuiescent, SimulationCounterexample
from stratal.interpreter import (
    GetRegion,
    SetRegion,
    StepEvent,
    contract,
    next_redex,
    redex_term,
    successors,
    tick_term,
)
from stratal.models import SimulationReport

logger = logging.getLogger(__name__)


class Discipline(StrEnum):
    REFERENCE = "ref"
    CHANNEL = "chan"
    SIGNAL = "sig"


@dataclass(frozen=True)
class SurfaceStore:
    """Per-region contents under one discipline.

    Channel contents are a multiset; reference and signal contents never hold
    two alpha-equivalent values.
    """

    discipline: Discipline
    bindings: Mapping[RegionName, tuple[Term, ...]] = field(default_factory=lambda: MappingProxyType({}))

    @staticmethod
    def from_store(store: Store, discipline: Discipline) -> SurfaceStore:
        surface = SurfaceStore(discipline)
        for region in sorted(store.dom()):
            values = store.values(region)
            if discipline is Discipline.REFERENCE and len(values) > 1:
                raise SimulationCounterexample(f"initial store: reference {region} holds {len(values)} values")
            for value in values:
                surface = surface.write(region, value)
        return surface

    def _with(self, region: RegionName, values: tuple[Term, ...]) -> SurfaceStore:
        bindings = dict(self.bindings)
        if values:
            bindings[region] = values
        else:
            bindings.pop(region, None)
        return replace(self, bindings=MappingProxyType(bindings))

    def values(self, region: RegionName) -> tuple[Term, ...]:
        return self.bindings.get(region, ())

    def readable(self, region: RegionName) -> list[Term]:
        """Alpha-distinct values a get may return."""
        seen: dict[str, Term] = {}
        for value in self.values(region):
            seen.setdefault(canonical(value), value)
        return list(seen.values())

    def write(self, region: RegionName, value: Term) -> SurfaceStore:
        match self.discipline:
            case Discipline.REFERENCE:
                return self._with(region, (value,))
            case Discipline.CHANNEL:
                return self._with(region, (*self.values(region), value))
            case Discipline.SIGNAL:
                key = canonical(value)
                if any(canonical(v) == key for v in self.values(region)):
                    return self
                return self._with(region, (*self.values(region), value))

    def read(self, region: RegionName, value: Term) -> SurfaceStore:
        if self.discipline is not Discipline.CHANNEL:
            return self
        key = canonical(value)
        values = list(self.values(region))
        index = next(i for i, v in enumerate(values) if canonical(v) == key)
        del values[index]
        return self._with(region, tuple(values))

    def tick(self) -> SurfaceStore:
        if self.discipline is Discipline.SIGNAL:
            return SurfaceStore(self.discipline)
        return self

    def count(self, region: RegionName, value: Term) -> int:
        key = canonical(value)
        return sum(canonical(v) == key for v in self.values(region))

    def image(self) -> Store:
        """The region store this surface store is abstracted to."""
        return Store.of((r, v) for r, values in self.bindings.items() for v in values)

    def canonical(self) -> str:
        parts = []
        for region in sorted(self.bindings):
            vals = sorted(canonical(v) for v in self.values(region))
            parts.append(f"{region}<=[{','.join(vals)}]")
        return ";".join(parts)


@dataclass(frozen=True)
class SurfaceProgram:
    threads: tuple[Thread, ...]
    store: SurfaceStore

    @staticmethod
    def from_program(p: Program, discipline: Discipline) -> SurfaceProgram:
        return SurfaceProgram(p.threads, SurfaceStore.from_store(p.store, discipline))

    @property
    def discipline(self) -> Discipline:
        return self.store.discipline

    def replace(self, index: int, term: Term, store: SurfaceStore) -> SurfaceProgram:
        tid = self.threads[index].tid
        threads = (*self.threads[:index], *spawn(tid, term), *self.threads[index + 1 :])
        return SurfaceProgram(threads, store)

    def thread_key(self) -> str:
        return " | ".join(sorted(canonical(t.term) for t in self.threads))

    def canonical(self) -> str:
        return f"{self.thread_key()} || {self.store.canonical()}"


def surface_step(t: Term, s: SurfaceStore, d: Discipline) -> list[tuple[Term, SurfaceStore, StepEvent]]:
    if s.discipline is not d:
        s = SurfaceStore(d, s.bindings)
    found = next_redex(t)
    if found is None:
        return []
    frames, r = found
    match r:
        case GetRegion(region):
            return [
                (plug(frames, v), s.read(region, v), StepEvent("", "get", redex_term(r), region, v))
                for v in s.readable(region)
            ]
        case SetRegion(region, value):
            event = StepEvent("", "set", redex_term(r), region, value, stored=True)
            return [(plug(frames, Star()), s.write(region, value), event)]
        case _:
            return [(plug(frames, m), s, event) for m, _, event in contract(r, Store())]


def surface_successors(p: SurfaceProgram) -> list[tuple[SurfaceProgram, StepEvent]]:
    found = []
    for i, thread in enumerate(p.threads):
        for term, store, event in surface_step(thread.term, p.store, p.discipline):
            found.append((p.replace(i, term, store), replace(event, thread=thread.tid)))
    return found


def surface_tick(p: SurfaceProgram) -> SurfaceProgram:
    """End an instant: threads tick as in the core calculus, signals are cleared."""
    if surface_successors(p):
        raise NotQuiescent("the surface program can still reduce in this instant")
    threads: list[Thread] = []
    for thread in p.threads:
        threads.extend(spawn(thread.tid, tick_term(thread.term)))
    return SurfaceProgram(tuple(threads), p.store.tick())


def abstract_to_regions(p: SurfaceProgram) -> Program:
    return Program(p.threads, p.store.image())


def check_surface_program(r: RegionContext, p: SurfaceProgram, mode: SystemMode) -> Pair:
    """Type a surface program through its region abstraction."""
    return check_program(r, EMPTY_GAMMA, abstract_to_regions(p), mode)


def _related(surface: SurfaceProgram, core: Program) -> bool:
    core_threads = " | ".join(sorted(canonical(t) for t in core.terms))
    return core_threads == surface.thread_key() and core.store.includes(surface.store.image())


def _match(surface: SurfaceProgram, core: Program, max_steps: int) -> tuple[Program, int] | None:
    """Breadth-first search for a core state within `max_steps` steps related to `surface`."""
    frontier: deque[tuple[Program, int]] = deque([(core, 0)])
    seen = {core.canonical()}
    while frontier:
        state, depth = frontier.popleft()
        if depth >= max_steps:
            continue
        for nxt, _ in successors(state):
            key = nxt.canonical()
            if key in seen:
                continue
            if _related(surface, nxt):
                return nxt, depth + 1
            seen.add(key)
            frontier.append((nxt, depth + 1))
    return None


def _check_invariants(before: SurfaceProgram, after: SurfaceProgram, event: StepEvent) -> str | None:
    store = after.store
    if store.discipline is Discipline.REFERENCE:
        for region, values in store.bindings.items():
            if len(values) > 1:
                return f"reference {region} holds {len(values)} values"
    if store.discipline is Discipline.CHANNEL and event.rule == "get" and event.region and event.value:
        was, now = before.store.count(event.region, event.value), store.count(event.region, event.value)
        if now != was - 1:
            return f"channel {event.region} delivered a value without consuming it"
    if store.discipline is Discipline.SIGNAL and not store.image().includes(before.store.image()):
        return "signal store shrank within an instant"
    return None


def _describe(event: StepEvent) -> str:
    detail = f" on {event.region}" if event.region else ""
    return f"thread {event.thread}: {event.rule}{detail}"


def check_simulation(
    p: SurfaceProgram | Program, d: Discipline, budget: int = 200, max_core_steps: int = 4
) -> SimulationReport:
    """Check that every explored surface step is matched by 1..max_core_steps core steps.

    Exploration stays within the current instant. Raises SimulationCounterexample
    with the partial report at the first unmatched step or broken invariant.
    """
    surface = p if isinstance(p, SurfaceProgram) else SurfaceProgram.from_program(p, d)
    report = SimulationReport(discipline=d.value)
    histogram: Counter[int] = Counter()
    queue: deque[tuple[SurfaceProgram, Program]] = deque([(surface, abstract_to_regions(surface))])
    seen = {surface.canonical()}

    def fail(step: str) -> SimulationCounterexample:
        report.ok = False
        report.core_steps_histogram = dict(histogram)
        report.max_core_steps = max(histogram, default=0)
        return SimulationCounterexample(step, report)

    while queue:
        if report.surface_states >= budget:
            report.truncated = True
            break
        state, core = queue.popleft()
        report.surface_states += 1
        moves = surface_successors(state)
        if not moves:
            _check_tick(state)
        for nxt, event in moves:
            report.surface_steps += 1
            broken = _check_invariants(state, nxt, event)
            if broken:
                raise fail(f"{_describe(event)}: {broken}")
            matched = _match(nxt, core, max_core_steps)
            if matched is None:
                raise fail(f"{_describe(event)}: no core step within {max_core_steps} steps")
            related, k = matched
            histogram[k] += 1
            key = nxt.canonical()
            if key not in seen:
                seen.add(key)
                queue.append((nxt, related))

    report.core_steps_histogram = dict(histogram)
    report.max_core_steps = max(histogram, default=0)
    logger.info(f"Simulated {report.surface_steps} {d.value} steps over {report.surface_states} states")
    return report


def _check_tick(state: SurfaceProgram) -> None:
    ticked = surface_tick(state)
    if state.discipline is Discipline.SIGNAL and ticked.store.bindings:
        raise SimulationCounterexample("tick: signal store not cleared")
    if state.discipline is not Discipline.SIGNAL and ticked.store != state.store:
        raise SimulationCounterexample("tick: store changed at the end of an instant")
