"""Tests for the command line interface."""

import json
import os
from pathlib import Path
from unittest import mock

import pytest

from stratal.main import EXIT_FAILED, EXIT_OK, EXIT_USAGE, build_parser, cli

CORPUS = Path(__file__).parent.parent / "corpus"


@pytest.fixture(autouse=True)
def clean_env(tmp_path, monkeypatch):
    """Run every command without STRATAL_ variables or a stray .env file."""
    monkeypatch.chdir(tmp_path)
    with mock.patch.dict(os.environ, {}, clear=True):
        yield


def corpus(name: str) -> str:
    return str(CORPUS / name)


def test_check_prints_the_judgement(capsys):
    """Test that check prints the judgement of a typable file."""
    assert cli(["check", corpus("clock.str")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "(Unit, {r, r'})"


def test_check_failure_exit_code(capsys):
    """Test that a typing failure exits with the failure code."""
    assert cli(["check", corpus("diverge.str")]) == EXIT_FAILED
    assert "StratificationViolation" in capsys.readouterr().out


def test_check_other_system(capsys):
    """Test checking in the unstratified system."""
    assert cli(["check", corpus("diverge.str"), "--system", "unstratified"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "(Unit, {r})"


def test_check_json_diagnostic(capsys):
    """Test that --json prints the diagnostic record."""
    assert cli(["check", corpus("ill_typed_store.str"), "--json"]) == EXIT_FAILED
    record = json.loads(capsys.readouterr().out)
    assert record["kind"] == "StoreValueIllTyped"
    assert "rule" in record


def test_check_no_subsumption(capsys):
    """Test that --no-subsumption turns subtyping into equality."""
    assert cli(["check", corpus("boudol_knot.str"), "--system", "unstratified", "--no-subsumption"]) == EXIT_FAILED
    assert "TypeMismatch" in capsys.readouterr().out


def test_parse_error_is_a_usage_error(tmp_path, capsys):
    """Test that a parse error is a usage error with a position."""
    path = tmp_path / "broken.str"
    path.write_text("main = fun ;", encoding="utf-8")
    assert cli(["check", str(path)]) == EXIT_USAGE
    assert "line 1" in capsys.readouterr().err


def test_missing_file_is_a_usage_error(capsys):
    """Test that a missing file is a usage error."""
    assert cli(["check", "nowhere.str"]) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_unknown_command_is_a_usage_error():
    """Test that an unknown command is a usage error."""
    assert cli(["frobnicate"]) == EXIT_USAGE


@pytest.mark.parametrize("env", [{"STRATAL_FUEL": "-1"}, {"STRATAL_LOG_LEVEL": "chatty"}])
def test_bad_settings_are_a_usage_error(env, capsys):
    """Test that invalid STRATAL_ settings are a usage error."""
    with mock.patch.dict(os.environ, env):
        assert cli(["check", corpus("clock.str")]) == EXIT_USAGE
    assert "STRATAL_" in capsys.readouterr().err


def test_prelude_flag(tmp_path, capsys):
    """Test that --prelude enables the integer prelude."""
    path = tmp_path / "one.str"
    path.write_text("main = 1 + 2;", encoding="utf-8")
    assert cli(["check", str(path)]) == EXIT_USAGE
    assert cli(["check", str(path), "--prelude", "int"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "(Int, {})"


def test_run_terminating_program(capsys):
    """Test running a terminating program under every schedule."""
    assert cli(["run", corpus("factorial.str"), "--all-schedules"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("outcome: Terminated")
    assert "t0: 6" in out


def test_run_diverging_program(capsys):
    """Test that a diverging program runs out of fuel."""
    assert cli(["run", corpus("diverge.str"), "--fuel", "50", "--seed", "1"]) == EXIT_FAILED
    assert "outcome: FuelExhausted" in capsys.readouterr().out


def test_run_warns_when_not_typable_in_the_requested_system(capsys):
    """Test that run warns when the requested system rejects the program."""
    assert cli(["run", corpus("diverge.str"), "--all-schedules", "--system", "stratified"]) == EXIT_FAILED
    captured = capsys.readouterr()
    assert "warning" in captured.err
    assert "outcome: CycleDetected" in captured.out


def test_run_schedule_flags_are_exclusive():
    """Test that --seed and --all-schedules exclude each other."""
    assert cli(["run", corpus("clock.str"), "--seed", "1", "--all-schedules"]) == EXIT_USAGE


def test_trace_to_stdout(capsys):
    """Test that trace writes JSON lines to stdout and the report to stderr."""
    assert cli(["trace", corpus("clock.str"), "--instants", "2"]) == EXIT_OK
    captured = capsys.readouterr()
    records = [json.loads(line) for line in captured.out.splitlines()]
    assert sum(r["rule"] == "tick" for r in records) == 2
    assert "outcome: Terminated" in captured.err


def test_trace_to_file(tmp_path, capsys):
    """Test that trace writes JSON lines to the --out file."""
    out = tmp_path / "trace.jsonl"
    assert cli(["trace", corpus("diverge.str"), "--fuel", "12", "--out", str(out)]) == EXIT_FAILED
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 12
    assert {"step", "instant", "thread", "rule", "redex", "store_delta", "state_hash"} == set(json.loads(lines[0]))
    assert "outcome: FuelExhausted" in capsys.readouterr().out


def test_expand_prints_a_macro_free_program(capsys):
    """Test that expand prints a program without macros."""
    assert cli(["expand", corpus("diverge.str")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ref[" not in out
    assert "set(#r" in out


def test_translate_removes_else_next(capsys):
    """Test that translate prints a program without else-next."""
    assert cli(["translate", corpus("clock.str")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "elsenext" not in out
    assert out.startswith("//! prelude: int")


def test_simulate_prints_a_report(capsys):
    """Test that simulate prints the report as JSON."""
    assert cli(["simulate", corpus("channel_race.str"), "--discipline", "chan"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["ok"]
    assert report["discipline"] == "chan"


def test_simulate_counterexample(mocker, capsys):
    """Test that an unmatched surface step fails the simulation."""
    mocker.patch("stratal.surface._match", return_value=None)
    assert cli(["simulate", corpus("ref_replace.str"), "--discipline", "ref"]) == EXIT_FAILED
    assert "simulation counterexample" in capsys.readouterr().out


def test_corpus_command(capsys):
    """Test that the bundled corpus passes."""
    assert cli(["corpus", str(CORPUS)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.strip().endswith("0 failed")


def test_corpus_command_reports_failures(tmp_path, capsys):
    """Test that a failed expectation fails the corpus command."""
    (tmp_path / "wrong.str").write_text("//! expect: check-fail stratified\nmain = unit;\n", encoding="utf-8")
    assert cli(["corpus", str(tmp_path)]) == EXIT_FAILED
    assert "FAIL" in capsys.readouterr().out


def test_corpus_needs_a_directory(capsys):
    """Test that the corpus command needs a directory."""
    assert cli(["corpus", corpus("clock.str")]) == EXIT_USAGE
    assert "not a directory" in capsys.readouterr().err


def test_parser_defaults():
    """Test the argument parser's defaults."""
    args = build_parser().parse_args(["run", "x.str"])
    assert args.seed is None
    assert not args.all_schedules
    assert args.prelude is None
