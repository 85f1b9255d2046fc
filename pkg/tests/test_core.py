"""Tests for the abstract syntax and its syntactic operations."""

import pytest

from stratal.core import (
    HOLE,
    UNIT,
    App,
    AppArg,
    AppFun,
    Arrow,
    ElseNext,
    ElseNextFrame,
    EvalContext,
    Get,
    GetFrame,
    IntLit,
    Lam,
    Par,
    PrimOp,
    Program,
    RegionConst,
    RegType,
    Set,
    Star,
    Store,
    Var,
    alpha_eq,
    canonical,
    effect,
    erase,
    format_effect,
    free_regions,
    free_vars,
    fresh_name,
    is_value,
    plug,
    spawn,
    substitute,
    type_regions,
)
from stratal.errors import Span


def ident(var: str = "x") -> Lam:
    return Lam(var, UNIT, Var(var))


def test_type_rendering():
    """Test that types print in the concrete syntax of the parser."""
    a = Arrow(UNIT, effect("r", "q"), UNIT)
    assert str(a) == "Unit -{q, r}> Unit"
    assert str(Arrow(a, effect(), UNIT)) == "(Unit -{q, r}> Unit) -{}> Unit"
    assert str(RegType("r", a)) == "Reg[r](Unit -{q, r}> Unit)"
    assert format_effect([]) == "{}"


def test_type_regions_and_erase():
    """Test the regions of a type and its erasure."""
    a = RegType("s", Arrow(UNIT, effect("r"), UNIT))
    assert type_regions(a) == {"r", "s"}
    assert erase(a) == RegType("s", Arrow(UNIT, effect(), UNIT))


@pytest.mark.parametrize(
    "term, expected",
    [
        (ident(), True),
        (Star(), True),
        (RegionConst("r"), True),
        (IntLit(3), True),
        (Get(RegionConst("r")), False),
        (App(ident(), Star()), False),
    ],
)
def test_is_value(term, expected):
    """Test which terms are values."""
    assert is_value(term) is expected


def test_spans_do_not_affect_equality():
    """Test that source spans are ignored by equality and hashing."""
    assert Var("x", span=Span(1, 1)) == Var("x")
    assert hash(Star(span=Span(2, 3))) == hash(Star())


def test_par_needs_two_threads():
    """Test that a parallel composition needs at least two threads."""
    with pytest.raises(ValueError):
        Par((Star(),))


def test_prim_arity_is_checked():
    """Test that a primitive checks its arity."""
    with pytest.raises(ValueError):
        PrimOp("+", (IntLit(1),))


def test_substitute_variable_hit():
    """Test substituting for the variable itself."""
    assert substitute(Var("x"), "x", Star()) == Star()


def test_substitute_stops_at_shadowing_binder():
    """Test that substitution stops at a binder of the same name."""
    t = Lam("x", UNIT, Var("x"))
    assert substitute(t, "x", Star()) == t


def test_substitute_avoids_capture():
    """Test that [y/x](fun y -> x y) renames the binder first."""
    t = Lam("y", UNIT, App(Var("x"), Var("y")))
    result = substitute(t, "x", Var("y"))
    assert isinstance(result, Lam)
    assert result.var != "y"
    assert free_vars(result) == {"y"}
    assert alpha_eq(result, Lam("z", UNIT, App(Var("y"), Var("z"))))


def test_substitute_recursive_call_inside_lambda():
    """Test that [fun x -> (get #r) x / f](fun x -> f x) keeps both binders apart."""
    call = Lam("x", UNIT, App(Get(RegionConst("r")), Var("x")))
    result = substitute(Lam("x", UNIT, App(Var("f"), Var("x"))), "f", call)
    assert alpha_eq(result, Lam("a", UNIT, App(call, Var("a"))))


def test_fresh_name_skips_taken():
    """Test that fresh names skip the taken ones."""
    assert fresh_name("x", {"x", "x'1"}) == "x'2"
    assert fresh_name("x'3", set()) == "x'1"


def test_alpha_eq():
    """Test alpha-equivalence of terms."""
    assert alpha_eq(ident("x"), ident("y"))
    assert not alpha_eq(ident("x"), Lam("x", UNIT, Star()))
    assert alpha_eq(Get(RegionConst("r")), Get(RegionConst("r")))
    assert not alpha_eq(Lam("x", UNIT, Var("y")), Lam("y", UNIT, Var("y")))


def test_alpha_eq_distinguishes_annotations():
    """Test that binder annotations matter for alpha-equivalence."""
    assert canonical(Lam("x", UNIT, Var("x"))) != canonical(Lam("x", RegType("r", UNIT), Var("x")))


def test_free_vars_and_regions():
    """Test free variables and free regions, including those in annotations."""
    assert free_vars(Lam("x", UNIT, App(Var("x"), Var("y")))) == {"y"}
    assert free_regions(Set(RegionConst("r"), Star())) == {"r"}
    assert free_regions(Lam("x", Arrow(UNIT, effect("q"), UNIT), Star())) == {"q"}


def test_store_add_deduplicates_up_to_alpha():
    """Test that adding an alpha-equivalent value leaves the store unchanged."""
    store = Store().add("r", ident("x"))
    assert store.add("r", ident("y")) is store
    assert store.values("r") == (ident("x"),)


def test_store_rejects_non_values():
    """Test that a store only holds values."""
    with pytest.raises(ValueError):
        Store().add("r", Get(RegionConst("r")))


def test_store_merge_is_idempotent_and_commutative():
    """Test that store merge is idempotent and commutative."""
    a = Store.of([("r", Star()), ("s", ident())])
    b = Store.of([("r", ident("y")), ("s", ident("z"))])
    assert a.merge(a).alpha_eq(a)
    assert a.merge(b).alpha_eq(b.merge(a))
    assert a.merge(b).includes(a)
    assert not a.includes(b)


def test_store_restrict():
    """Test restricting a store to some regions."""
    s = Store.of([("r", Star()), ("s", Star())])
    assert s.restrict({"r"}).dom() == {"r"}


def test_spawn_splits_nested_par():
    """Test that nested parallel compositions spawn threads with derived ids."""
    threads = spawn("t0", Par((Star(), Par((Star(), ident())))))
    assert [t.tid for t in threads] == ["t0.0", "t0.1.0", "t0.1.1"]


def test_program_canonical_is_a_multiset():
    """Test that program equivalence ignores thread order."""
    p = Program.of([Star(), ident("x")])
    q = Program.of([ident("y"), Star()])
    assert p.alpha_eq(q)


def test_program_needs_a_thread():
    """Test that a program needs at least one thread."""
    with pytest.raises(ValueError):
        Program(())


def test_plug_single_frame():
    """Test plugging a term into a single frame."""
    assert plug(EvalContext((AppFun(Star()),)), ident()) == App(ident(), Star())


def test_plug_nested_frames_outermost_first():
    """Test that frames are plugged outermost first."""
    ctx = EvalContext((ElseNextFrame(Star()), GetFrame(), AppArg(ident())))
    assert plug(ctx, Var("h")) == ElseNext(Get(App(ident(), Var("h"))), Star())
    assert plug(HOLE, Star()) == Star()


def test_time_insensitive_contexts():
    """Test which contexts are free of else-next frames."""
    assert EvalContext((GetFrame(),)).is_time_insensitive()
    assert not EvalContext((GetFrame(), ElseNextFrame(Star()))).is_time_insensitive()
