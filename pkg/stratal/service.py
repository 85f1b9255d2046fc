import logging
from pathlib import Path

from stratal.checker import EMPTY_GAMMA, Checker, Pair
from stratal.config import StratalSettings, SystemMode
from stratal.core import Program, Store
from stratal.errors import TypingError
from stratal.interpreter import (
    CycleDetected,
    FuelExhausted,
    RunResult,
    StateBudgetExhausted,
    Terminated,
    Transition,
    run,
    state_hash,
)
from stratal.models import ExhaustiveSchedule, RunConfig, SeededSchedule, SimulationReport, TraceRecord
from stratal.surface import Discipline, SurfaceProgram, check_simulation
from stratal.syntax import SourceFile, format_judgement, parse, pretty
from stratal.transform import expand_program, translate

logger = logging.getLogger(__name__)


class StratalService:
    """Loads, checks, runs and transforms programs."""

    def __init__(self, settings: StratalSettings | None = None):
        """Initialize the service.

        Args:
            settings: Defaults for fuel, instants, budgets and the prelude
        """
        self.settings = settings or StratalSettings()

    def load(self, path: str | Path, prelude: str | None = None) -> SourceFile:
        """Read and parse a source file."""
        try:
            logger.info(f"Loading {path}")
            text = Path(path).read_text(encoding="utf-8")
            return parse(text, prelude or self.settings.prelude)
        except Exception as e:
            logger.error(f"Error loading {path}: {str(e)}")
            raise

    def load_source(self, text: str, prelude: str | None = None) -> SourceFile:
        return parse(text, prelude or self.settings.prelude)

    def expanded(self, source: SourceFile) -> Program:
        """The main program with definitions inlined and macros expanded."""
        return expand_program(source.program())

    def checker(self, source: SourceFile, mode: SystemMode, *, subsumption: bool = True) -> Checker:
        return Checker(source.regions, mode, subsumption=subsumption, spans=dict(source.region_spans))

    def check(self, source: SourceFile, mode: SystemMode | None = None, *, subsumption: bool = True) -> Pair:
        """Type the main program.

        A single thread with an empty store is typed as a term; anything else
        is typed as a program, with the behaviour type.
        """
        mode = mode or self.settings.system
        try:
            logger.info(f"Checking in {mode} mode")
            checker = self.checker(source, mode, subsumption=subsumption)
            program = self.expanded(source)
            if len(program.threads) == 1 and not program.store.dom() and len(source.main) == 1:
                pair = checker.check(EMPTY_GAMMA, program.threads[0].term)
            else:
                pair = checker.check_program(EMPTY_GAMMA, program)
            logger.info(f"Judgement: {format_judgement(*pair)}")
            return pair
        except TypingError as e:
            logger.info(f"Typing failed: {e}")
            raise

    def run(self, source: SourceFile, cfg: RunConfig) -> RunResult:
        """Run the main program; it must be typable once effects are erased."""
        program = self.expanded(source)
        Checker(source.regions, SystemMode.EFFECT_FREE).check_program(EMPTY_GAMMA, program)
        try:
            logger.info(f"Running with {cfg.schedule.kind} schedule, fuel {cfg.fuel}, instants {cfg.instants}")
            result = run(program, cfg)
            logger.info(f"Run finished: {result.label} after exploring {result.states} states")
            return result
        except Exception as e:
            logger.error(f"Error running program: {str(e)}")
            raise

    def run_config(
        self,
        *,
        fuel: int | None = None,
        instants: int | None = None,
        seed: int | None = None,
        exhaustive: bool = False,
        budget: int | None = None,
    ) -> RunConfig:
        """Build a run configuration, falling back to the settings for missing values."""
        schedule = (
            ExhaustiveSchedule(state_budget=budget or self.settings.state_budget)
            if exhaustive
            else SeededSchedule(seed=self.settings.seed if seed is None else seed)
        )
        return RunConfig(
            fuel=fuel or self.settings.fuel,
            instants=self.settings.instants if instants is None else instants,
            schedule=schedule,
        )

    def translate(self, source: SourceFile) -> SourceFile:
        translated = translate(self.expanded(source))
        assert isinstance(translated, Program)
        return SourceFile.from_program(source.regions, translated, source.prelude)

    def expand(self, source: SourceFile) -> SourceFile:
        return SourceFile.from_program(source.regions, self.expanded(source), source.prelude)

    def simulate(self, source: SourceFile, discipline: Discipline, budget: int | None = None) -> SimulationReport:
        program = self.expanded(source)
        try:
            logger.info(f"Simulating the {discipline.value} discipline")
            return check_simulation(
                SurfaceProgram.from_program(program, discipline),
                discipline,
                budget or self.settings.simulation_budget,
                self.settings.max_core_steps,
            )
        except Exception as e:
            logger.error(f"Simulation failed: {str(e)}")
            raise


def trace_records(result: RunResult) -> list[TraceRecord]:
    """Render the transitions of a run as trace records."""
    records = []
    for step, transition in enumerate(result.trace, start=1):
        records.append(_record(step, transition))
    return records


def _record(step: int, transition: Transition) -> TraceRecord:
    event = transition.event
    if event is None:
        return TraceRecord(
            step=step,
            instant=transition.instant,
            rule="tick",
            redex=pretty(transition.program),
            state_hash=state_hash(transition.program),
        )
    delta = {}
    if event.stored and event.region is not None and event.value is not None:
        delta = {event.region: [pretty(event.value)]}
    return TraceRecord(
        step=step,
        instant=transition.instant,
        thread=event.thread,
        rule=event.rule,
        redex=pretty(event.redex),
        store_delta=delta,
        state_hash=state_hash(transition.program),
    )


def trace_lines(result: RunResult) -> str:
    return "".join(r.model_dump_json() + "\n" for r in trace_records(result))


def _store_lines(store: Store) -> list[str]:
    return [f"  {r} <= {{{', '.join(pretty(v) for v in store.values(r))}}}" for r in sorted(store.dom())]


def _program_lines(p: Program) -> list[str]:
    lines = ["threads:"]
    lines += [f"  {t.tid}: {pretty(t.term)}" for t in p.threads]
    lines.append("store:")
    lines += _store_lines(p.store) or ["  (empty)"]
    return lines


def format_outcome(result: RunResult) -> str:
    """Human-readable run report."""
    outcome = result.outcome
    lines = [f"outcome: {result.label}"]
    match outcome:
        case Terminated(final, steps, instants, stable, finals):
            lines += [f"steps: {steps}", f"instants: {instants}", f"stable: {str(stable).lower()}"]
            if len(finals) > 1:
                lines.append(f"final states: {len(finals)}")
            lines += _program_lines(final)
        case FuelExhausted(program, steps, instants):
            lines += [f"steps: {steps}", f"instants: {instants}", *_program_lines(program)]
        case StateBudgetExhausted(states, instants):
            lines += [f"states: {states}", f"instants: {instants}"]
        case CycleDetected(state, steps, instants):
            lines += [f"steps: {steps}", f"instants: {instants}", "recurring state:", *_program_lines(state)]
    return "\n".join(lines)
