"""Tests for macro expansion and else-next elimination."""

from pathlib import Path

import pytest

from stratal.checker import EMPTY_GAMMA, Checker
from stratal.config import SystemMode
from stratal.core import (
    INT,
    UNIT,
    App,
    AppArg,
    Arrow,
    ElseNext,
    ElseNextFrame,
    EvalContext,
    FixMacro,
    Get,
    GetFrame,
    Lam,
    Program,
    RefMacro,
    RegionConst,
    Set,
    Star,
    Store,
    Var,
    alpha_eq,
    effect,
    free_vars,
    substitute,
    subterms,
)
from stratal.errors import TypingError
from stratal.interpreter import red
from stratal.syntax import parse
from stratal.transform import expand, expand_fix, expand_program, expand_ref, has_else_next, translate

CORPUS = Path(__file__).parent.parent / "corpus"


def get(region: str = "r") -> Get:
    return Get(RegionConst(region))


def test_expand_ref():
    """Test that ref expands into a write followed by the region constant."""
    expected = App(Lam("u", UNIT, RegionConst("r")), Set(RegionConst("r"), Star()))
    assert alpha_eq(expand_ref("r", Star()), expected)


def test_expand_fix_matches_the_unrolled_definition():
    """Test that fix expands into the unrolled definition stored in its region."""
    ann = Arrow(UNIT, effect("r"), UNIT)
    body = Lam("v", UNIT, App(Var("f"), Var("v")))
    call = Lam("z", UNIT, App(get(), Var("z")))
    unrolled = Lam("y", UNIT, App(substitute(body, "f", call), Var("y")))
    ref = App(Lam("u", UNIT, RegionConst("r")), Set(RegionConst("r"), unrolled))
    expected = Lam("x", UNIT, App(Get(ref), Var("x")))
    assert alpha_eq(expand_fix("r", "f", ann, body), expected)


def test_expansion_does_not_capture_outer_variables():
    """Test that expansion keeps outer variables free in the body."""
    ann = Arrow(INT, effect("r"), INT)
    fix = FixMacro("r", "f", ann, Lam("n", INT, App(Var("f"), Var("x"))))
    expanded = expand(Lam("x", INT, fix))
    assert isinstance(expanded, Lam)
    assert free_vars(expanded) == frozenset()
    assert "x" in free_vars(expanded.body)


def test_expand_removes_every_macro():
    """Test that expansion leaves no macro behind and is idempotent."""
    t = App(Lam("x", UNIT, RefMacro("r", Var("x"))), RefMacro("s", Star()))
    expanded = expand(t)
    assert not any(isinstance(n, RefMacro | FixMacro) for n in subterms(expanded))
    assert expand(t) == expanded


def test_expand_program_covers_the_store():
    """Test that program expansion also rewrites store values."""
    p = Program.of([Star()], Store.of([("s", Lam("x", UNIT, RefMacro("r", Star())))]))
    (value,) = expand_program(p).store.values("s")
    assert not any(isinstance(n, RefMacro) for n in subterms(value))


def test_translate_keeps_the_current_branch():
    """Test that else-next elimination keeps the current-instant branch."""
    assert translate(ElseNext(get(), Var("n"))) == get()


def test_translate_is_homomorphic():
    """Test that translation descends through every other construct."""
    t = Lam("x", UNIT, App(Var("x"), ElseNext(Star(), get())))
    assert translate(t) == Lam("x", UNIT, App(Var("x"), Star()))
    assert translate(Star()) == Star()


def test_translate_store_and_program():
    """Test translating a program with else-next in a thread and the store."""
    store = Store.of([("r", Lam("x", UNIT, ElseNext(Var("x"), Star())))])
    p = Program.of([ElseNext(Star(), get())], store)
    translated = translate(p)
    assert isinstance(translated, Program)
    assert translated.terms == (Star(),)
    assert not any(has_else_next(v) for _, v in translated.store)


def test_translate_context_drops_else_next_frames():
    """Test that translating a context drops its else-next frames."""
    ctx = EvalContext((AppArg(Lam("x", UNIT, ElseNext(Var("x"), Star()))), ElseNextFrame(Star()), GetFrame()))
    translated = translate(ctx)
    assert translated == EvalContext((AppArg(Lam("x", UNIT, Var("x"))), GetFrame()))
    assert translate(red(ctx)) == translated


def test_translate_commutes_with_substitution():
    """Test that translation commutes with substitution."""
    body = App(Var("x"), ElseNext(Var("x"), Star()))
    value = Lam("y", UNIT, ElseNext(Var("y"), Star()))
    assert alpha_eq(translate(substitute(body, "x", value)), substitute(translate(body), "x", translate(value)))


def test_translate_rejects_unknown_objects():
    """Test that translation refuses objects outside the calculus."""
    with pytest.raises(TypeError):
        translate(42)


def else_next_programs():
    for path in sorted(CORPUS.glob("*.str")):
        file = parse(path.read_text(encoding="utf-8"))
        program = expand_program(file.program())
        if any(has_else_next(t) for t in program.terms):
            yield pytest.param(file, program, id=path.stem)


@pytest.mark.parametrize("mode", [SystemMode.STRATIFIED, SystemMode.UNSTRATIFIED])
@pytest.mark.parametrize("file, program", else_next_programs())
def test_translation_preserves_typing(file, program, mode):
    """Test that a translated program has the judgement of the original, thread by thread."""
    try:
        checker = Checker(file.regions, mode)
        judgement = checker.check_program(EMPTY_GAMMA, program)
    except TypingError:
        pytest.skip(f"not typable in the {mode} system")
    translated = translate(program)
    assert isinstance(translated, Program)
    assert checker.check_program(EMPTY_GAMMA, translated) == judgement
    for before, after in zip(program.terms, translated.terms, strict=True):
        assert checker.check(EMPTY_GAMMA, after) == checker.check(EMPTY_GAMMA, before)


def test_corpus_has_else_next_programs():
    """Test that the corpus exercises else-next elimination."""
    assert len(list(else_next_programs())) >= 5

