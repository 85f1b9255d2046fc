from typing import Annotated, Literal

from pydantic import BaseModel, Field


class Diagnostic(BaseModel):
    """Machine-readable rendering of a failed typing judgement."""

    kind: str = Field(..., description="Error kind, e.g. StratificationViolation")
    rule: str = Field(..., description="Name of the typing rule that failed")
    detail: str = Field(..., description="Human-readable message")
    line: int | None = Field(None, description="1-based source line, when known")
    column: int | None = Field(None, description="1-based source column, when known")
    expected: str | None = Field(None, description="Expected type or pair, rendered")
    actual: str | None = Field(None, description="Synthesized type or pair, rendered")


class TraceRecord(BaseModel):
    """One reduction or tick event of a run."""

    step: int = Field(..., description="Index of the event in the run, starting at 1")
    instant: int = Field(..., description="Instant in which the event happened, starting at 0")
    thread: str | None = Field(None, description="Id of the reducing thread; None for a tick")
    rule: str = Field(..., description="Rule tag: beta, get, set, prim or tick")
    redex: str = Field(..., description="Pretty-printed redex (or the program for a tick)")
    store_delta: dict[str, list[str]] = Field(
        default_factory=dict, description="Values added to the store by this event, per region"
    )
    state_hash: str = Field(..., description="Hash of the alpha-canonical program after the event")


class SeededSchedule(BaseModel):
    """Pick one successor uniformly with a seeded generator."""

    kind: Literal["seeded"] = "seeded"
    seed: int = Field(0, description="Seed of the pseudo-random scheduler")


class ExhaustiveSchedule(BaseModel):
    """Explore every interleaving and every stored value a get may read."""

    kind: Literal["exhaustive"] = "exhaustive"
    state_budget: int = Field(100_000, gt=0, description="Maximum number of distinct states explored")


Schedule = Annotated[SeededSchedule | ExhaustiveSchedule, Field(discriminator="kind")]


class RunConfig(BaseModel):
    fuel: int = Field(10_000, gt=0, description="Maximum number of reduction steps along one path")
    instants: int = Field(0, ge=0, description="Maximum number of ticks")
    schedule: Schedule = Field(default_factory=SeededSchedule, description="Scheduler selection")


class SimulationReport(BaseModel):
    """Result of checking a surface discipline against the region store."""

    discipline: str = Field(..., description="ref, chan or sig")
    surface_states: int = Field(0, description="Distinct surface states explored")
    surface_steps: int = Field(0, description="Surface transitions checked")
    max_core_steps: int = Field(0, description="Largest number of core steps needed to match one surface step")
    core_steps_histogram: dict[int, int] = Field(
        default_factory=dict, description="Number of surface steps matched with k core steps"
    )
    truncated: bool = Field(False, description="Whether exploration stopped at the budget")
    ok: bool = Field(True, description="Whether every explored step was simulated")


class CorpusResult(BaseModel):
    file: str = Field(..., description="Path of the corpus program")
    expectation: str = Field(..., description="The expectation header being checked")
    passed: bool = Field(..., description="Whether the expectation held")
    detail: str = Field("", description="Judgement, outcome or diagnostic backing the verdict")
