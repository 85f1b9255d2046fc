from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING, Any

from stratal.models import Diagnostic

if TYPE_CHECKING:
    from stratal.models import SimulationReport


@dataclass(frozen=True)
class Span:
    """Source position of a syntax node (1-based lines and columns)."""

    line: int
    column: int
    end_line: int | None = None
    end_column: int | None = None

    def __str__(self) -> str:
        return f"line {self.line}, col {self.column}"


class StratalError(Exception):
    """Base class for all errors raised by the package."""


class ParseError(StratalError):
    """Raised when a source file does not match the concrete grammar."""

    def __init__(self, message: str, line: int = 0, column: int = 0, expected: frozenset[str] = frozenset()):
        self.line = line
        self.column = column
        self.expected = expected
        super().__init__(f"{message} (line {line}, col {column})" if line else message)


class ErrorKind(StrEnum):
    UNBOUND_VARIABLE = "UnboundVariable"
    UNBOUND_REGION = "UnboundRegion"
    ILL_FORMED = "IllFormed"
    STRATIFICATION_VIOLATION = "StratificationViolation"
    EFFECT_NOT_IN_SCOPE = "EffectNotInScope"
    DOMAIN_MISMATCH = "DomainMismatch"
    NOT_A_FUNCTION = "NotAFunction"
    BEHAVIOUR_IN_DOMAIN = "BehaviourInDomain"
    STORE_VALUE_ILL_TYPED = "StoreValueIllTyped"
    TYPE_MISMATCH = "TypeMismatch"


class TypingError(StratalError):
    """A failed typing judgement.

    Exactly one is raised per failed check: the first failure met along a
    leftmost-innermost traversal.
    """

    def __init__(
        self,
        kind: ErrorKind,
        rule: str,
        detail: str,
        span: Span | None = None,
        expected: Any = None,
        actual: Any = None,
    ):
        self.kind = kind
        self.rule = rule
        self.detail = detail
        self.span = span
        self.expected = expected
        self.actual = actual
        location = f" at {self.span}" if self.span else ""
        super().__init__(f"{kind.value} [{rule}]{location}: {detail}")

    def to_record(self) -> Diagnostic:
        """Render the error as a machine-readable record."""
        return Diagnostic(
            kind=self.kind.value,
            rule=self.rule,
            detail=self.detail,
            line=self.span.line if self.span else None,
            column=self.span.column if self.span else None,
            expected=None if self.expected is None else str(self.expected),
            actual=None if self.actual is None else str(self.actual),
        )


class ExpansionError(StratalError):
    """Raised when a macro node reaches a consumer of core terms."""


class DecompositionFailure(StratalError):
    """Raised when a term is open or not typable in the effect-free system."""


class NotQuiescent(StratalError):
    """Raised by tick when some thread can still reduce."""


class TickUndefined(StratalError):
    """Raised when a quiescent thread matches no tick rule."""


class SimulationCounterexample(StratalError):
    """Raised when a surface step has no matching core step or an invariant breaks."""

    def __init__(self, step: str, report: SimulationReport | None = None):
        self.step = step
        self.report = report
        super().__init__(f"simulation counterexample: {step}")
