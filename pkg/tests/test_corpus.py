"""Tests for the corpus runner and its expectation headers."""

from pathlib import Path

import pytest

from stratal.config import StratalSettings, SystemMode
from stratal.corpus import CorpusRunner, Expectation, expectations, parse_expectation
from stratal.errors import TypingError
from stratal.interpreter import Terminated
from stratal.service import StratalService

CORPUS = Path(__file__).parent.parent / "corpus"
FILES = sorted(CORPUS.glob("*.str"))


@pytest.fixture
def service():
    return StratalService(StratalSettings(_env_file=None, prelude=None, instants=0, seed=0, state_budget=100_000))


@pytest.fixture
def runner(service):
    return CorpusRunner(service)


@pytest.mark.parametrize("path", FILES, ids=lambda p: p.stem)
def test_corpus_program_meets_its_expectations(runner, path):
    """Test that every header of a corpus program holds."""
    results = runner.run_file(path)
    assert results
    failures = [f"{r.expectation}: {r.detail}" for r in results if not r.passed]
    assert not failures


def test_every_corpus_program_has_an_expectation():
    """Test that no corpus program is left without a header."""
    for path in FILES:
        assert expectations(path.read_text(encoding="utf-8")), path.name


def test_stratified_programs_terminate(service):
    """Test that at least twenty stratified programs terminate under exhaustive exploration."""
    terminated = []
    for path in FILES:
        source = service.load(path)
        try:
            service.check(source, SystemMode.STRATIFIED)
        except TypingError:
            continue
        outcome = service.run(source, service.run_config(exhaustive=True, instants=3)).outcome
        assert isinstance(outcome, Terminated), f"{path.name}: {type(outcome).__name__}"
        terminated.append(path.stem)
    assert len(terminated) >= 20


@pytest.mark.parametrize(
    "text, expected",
    [
        ("check-ok stratified", Expectation("check-ok", SystemMode.STRATIFIED)),
        (
            "check-fail unstratified StoreValueIllTyped",
            Expectation("check-fail", SystemMode.UNSTRATIFIED, "StoreValueIllTyped"),
        ),
        ("judgement effect-free (Unit, {})", Expectation("judgement", SystemMode.EFFECT_FREE, "(Unit, {})")),
        ("terminates", Expectation("terminates")),
        ("terminates instants<=3", Expectation("terminates", None, "instants<=3")),
        ("diverges", Expectation("diverges")),
    ],
)
def test_parse_expectation(text, expected):
    """Test parsing expectation headers and printing them back."""
    assert parse_expectation(text) == expected
    assert str(expected) == text


@pytest.mark.parametrize("text", ["check-ok linear", "terminates soon", "explodes", "judgement"])
def test_parse_expectation_rejects(text):
    """Test that malformed expectations are rejected."""
    with pytest.raises(ValueError):
        parse_expectation(text)


def test_headers_are_read_from_comment_lines():
    """Test that only `//! expect:` lines count as headers."""
    text = "//! expect: diverges\n// expect: terminates\nmain = unit;\n//!expect: check-ok stratified\n"
    assert expectations(text) == [Expectation("diverges"), Expectation("check-ok", SystemMode.STRATIFIED)]


def test_judgement_ignores_whitespace(runner, tmp_path):
    """Test that judgement headers are compared without whitespace."""
    path = tmp_path / "spaced.str"
    path.write_text("//! expect: judgement stratified ( Unit ,{ } )\nmain = unit;\n", encoding="utf-8")
    (result,) = runner.run_file(path)
    assert result.passed
    assert result.detail == "(Unit, {})"


def test_check_fail_with_the_wrong_kind(runner, tmp_path):
    """Test that a failure of another kind does not satisfy check-fail."""
    path = tmp_path / "kind.str"
    path.write_text("//! expect: check-fail stratified NotAFunction\nmain = get #r;\n", encoding="utf-8")
    (result,) = runner.run_file(path)
    assert not result.passed
    assert "UnboundRegion" in result.detail


def test_unparsable_program_fails_every_expectation(runner, tmp_path):
    """Test that a parse error fails each header of the file."""
    path = tmp_path / "broken.str"
    path.write_text("//! expect: diverges\n//! expect: terminates\nmain = (;\n", encoding="utf-8")
    results = runner.run_file(path)
    assert len(results) == 2
    assert not any(r.passed for r in results)


def test_bad_header_is_reported(runner, tmp_path):
    """Test that an unknown header verb is reported as a header failure."""
    path = tmp_path / "header.str"
    path.write_text("//! expect: sometimes\nmain = unit;\n", encoding="utf-8")
    (result,) = runner.run_file(path)
    assert result.expectation == "(header)"
    assert not result.passed


def test_missing_header_is_reported(runner, tmp_path):
    """Test that a file without headers fails."""
    path = tmp_path / "bare.str"
    path.write_text("main = unit;\n", encoding="utf-8")
    (result,) = runner.run_file(path)
    assert result.detail == "no expectation header"


def test_run_dir_reports_run_errors(runner, tmp_path):
    """Test that a program failing to run is reported and the directory run continues."""
    (tmp_path / "a.str").write_text("//! expect: terminates\nmain = unit unit;\n", encoding="utf-8")
    (tmp_path / "b.str").write_text("//! expect: terminates\nmain = unit;\n", encoding="utf-8")
    results = runner.run_dir(tmp_path)
    assert [(Path(r.file).name, r.passed) for r in results] == [("a.str", False), ("b.str", True)]
    assert results[0].expectation == "(run)"
