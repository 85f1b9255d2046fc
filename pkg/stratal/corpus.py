"""Expectation headers and the corpus runner.

A corpus program states what should happen to it in `//! expect:` lines:

    //! expect: check-ok unstratified
    //! expect: check-fail stratified StratificationViolation
    //! expect: judgement unstratified (Unit, {r})
    //! expect: terminates instants<=3
    //! expect: diverges
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from stratal.config import SystemMode
from stratal.errors import StratalError, TypingError
from stratal.interpreter import CycleDetected, FuelExhausted, Terminated
from stratal.models import CorpusResult
from stratal.service import StratalService
from stratal.syntax import SourceFile, format_judgement

logger = logging.getLogger(__name__)

EXPECT_HEADER = re.compile(r"^//!\s*expect:\s*(.+?)\s*$", re.MULTILINE)
_INSTANTS = re.compile(r"^instants<=(\d+)$")


@dataclass(frozen=True)
class Expectation:
    verb: str
    mode: SystemMode | None = None
    argument: str | None = None

    def __str__(self) -> str:
        parts = [self.verb, self.mode.value if self.mode else None, self.argument]
        return " ".join(p for p in parts if p)


def parse_expectation(text: str) -> Expectation:
    verb, _, rest = text.strip().partition(" ")
    rest = rest.strip()
    match verb:
        case "check-ok" | "check-fail" | "judgement":
            mode_name, _, argument = rest.partition(" ")
            try:
                mode = SystemMode(mode_name)
            except ValueError as e:
                raise ValueError(f"unknown system in expectation: {text}") from e
            return Expectation(verb, mode, argument.strip() or None)
        case "terminates":
            if rest and not _INSTANTS.match(rest):
                raise ValueError(f"bad terminates expectation: {text}")
            return Expectation(verb, None, rest or None)
        case "diverges":
            return Expectation(verb)
        case _:
            raise ValueError(f"unknown expectation: {text}")


def expectations(text: str) -> list[Expectation]:
    return [parse_expectation(m.group(1)) for m in EXPECT_HEADER.finditer(text)]


def _squash(text: str) -> str:
    return re.sub(r"\s+", "", text)


class CorpusRunner:
    """Checks every corpus file against its expectation headers.

    Args:
        service: The service used to parse, check and run programs.
    """

    def __init__(self, service: StratalService):
        self.service = service

    def run_file(self, path: Path) -> list[CorpusResult]:
        text = path.read_text(encoding="utf-8")
        try:
            expected = expectations(text)
        except ValueError as e:
            return [CorpusResult(file=str(path), expectation="(header)", passed=False, detail=str(e))]
        if not expected:
            return [CorpusResult(file=str(path), expectation="(none)", passed=False, detail="no expectation header")]
        try:
            source = self.service.load_source(text)
        except StratalError as e:
            return [CorpusResult(file=str(path), expectation=str(x), passed=False, detail=str(e)) for x in expected]
        return [self._verify(path, source, x) for x in expected]

    def _verify(self, path: Path, source: SourceFile, x: Expectation) -> CorpusResult:
        def result(passed: bool, detail: str) -> CorpusResult:
            return CorpusResult(file=str(path), expectation=str(x), passed=passed, detail=detail)

        match x.verb:
            case "check-ok" | "check-fail" | "judgement":
                try:
                    pair = self.service.check(source, x.mode)
                except TypingError as e:
                    if x.verb != "check-fail":
                        return result(False, str(e))
                    return result(x.argument in (None, e.kind.value), str(e))
                judgement = format_judgement(*pair)
                if x.verb == "check-fail":
                    return result(False, f"unexpectedly typable: {judgement}")
                if x.verb == "judgement":
                    return result(_squash(judgement) == _squash(x.argument or ""), judgement)
                return result(True, judgement)
            case "terminates":
                bound = _INSTANTS.match(x.argument or "")
                cfg = self.service.run_config(
                    exhaustive=True, instants=int(bound.group(1)) if bound else self.service.settings.instants
                )
                outcome = self.service.run(source, cfg).outcome
                return result(isinstance(outcome, Terminated), type(outcome).__name__)
            case "diverges":
                outcome = self.service.run(source, self.service.run_config(exhaustive=True)).outcome
                return result(isinstance(outcome, CycleDetected | FuelExhausted), type(outcome).__name__)
            case _:
                return result(False, f"unknown expectation {x.verb}")

    def run_dir(self, directory: str | Path) -> list[CorpusResult]:
        files = sorted(Path(directory).glob("*.str"))
        logger.info(f"Running {len(files)} corpus files from {directory}")
        results: list[CorpusResult] = []
        for path in files:
            try:
                results.extend(self.run_file(path))
            except StratalError as e:
                logger.error(f"Error in {path}: {str(e)}")
                results.append(CorpusResult(file=str(path), expectation="(run)", passed=False, detail=str(e)))
        failed = sum(not r.passed for r in results)
        logger.info(f"Corpus finished: {len(results) - failed} passed, {failed} failed")
        return results
