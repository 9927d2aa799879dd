import pytest

from mmv.simple import (
    DIVERGES, SimpleTypeError, generate_welltyped, simple_check_seq,
)
from mmv.syntax import (
    ADDRESS, INT, OPERATION,
    Add, Cons, Dup, Exec, Failwith, If, IfCons, Iter, Lambda, Loop, Nil, Not,
    Pair, Push, Swap, TArrow, TList, TPair, VInt,
)


def test_add_rule():
    assert simple_check_seq((INT, INT), (Add(),)) == (INT,)


def test_loop_rule():
    # the body must restore an int on top of the loop stack
    assert simple_check_seq((INT,), (Loop((Push(INT, VInt(0)),)),)) == ()
    with pytest.raises(SimpleTypeError):
        simple_check_seq((INT,), (Loop((Nil(INT),)),))


def test_add_on_pair_is_an_error():
    with pytest.raises(SimpleTypeError):
        simple_check_seq((TPair(INT, INT),), (Add(),))


def test_branch_disagreement():
    with pytest.raises(SimpleTypeError) as exc:
        simple_check_seq((INT,), (If((Nil(INT),), (Push(INT, VInt(0)),)),))
    assert "disagree" in str(exc.value)


def test_error_carries_path():
    with pytest.raises(SimpleTypeError) as exc:
        simple_check_seq((INT, INT), (If((Not(), Add()), (Not(), Add())),))
    assert "0/t/1" in str(exc.value)


def test_failwith_diverges_and_joins():
    assert simple_check_seq((INT,), (Failwith(),)) is DIVERGES
    # a diverging branch unifies with its sibling
    out = simple_check_seq((INT, INT), (If((Failwith(),), (Not(),)),))
    assert out == (INT,)


def test_diverging_tail_absorbs():
    out = simple_check_seq((INT,), (Failwith(), Add(), Pair()))
    assert out is DIVERGES


def test_lambda_and_exec():
    seq = (Lambda(INT, INT, (Not(),)), Push(INT, VInt(5)), Swap())
    # wrong order: EXEC needs the argument above the function
    assert simple_check_seq((), seq) == (TArrow(INT, INT), INT)
    seq2 = (Lambda(INT, INT, (Not(),)), Push(INT, VInt(5)), Exec())
    assert simple_check_seq((), seq2) == (INT,)


def test_iter_body_shape():
    assert simple_check_seq((TList(INT), INT),
                            (Iter((Add(),)),)) == (INT,)
    with pytest.raises(SimpleTypeError):
        simple_check_seq((TList(INT), INT), (Iter((Dup(),)),))


def test_push_payload_checked():
    with pytest.raises(SimpleTypeError):
        simple_check_seq((), (Push(TList(INT), VInt(1)),))


def test_generator_empty_at_size_zero():
    assert generate_welltyped((INT,), 0, 1) == ()


def test_generator_output_typechecks():
    for seed in range(400):
        seq = generate_welltyped((INT, TList(INT)), 7, seed)
        simple_check_seq((INT, TList(INT)), seq)  # must not raise


def test_generator_deterministic():
    a = generate_welltyped((INT,), 9, 123)
    b = generate_welltyped((INT,), 9, 123)
    assert a == b


def test_generator_coverage():
    # every instruction constructor appears across a large sample
    seen = set()

    def visit(seq):
        for instr in seq:
            seen.add(type(instr).__name__)
            for attr in ("body", "then_branch", "else_branch"):
                sub = getattr(instr, attr, None)
                if isinstance(sub, tuple):
                    visit(sub)

    for seed in range(10000):
        visit(generate_welltyped((INT, TList(INT), ADDRESS), 6, seed))
    assert "Lambda" in seen and "Iter" in seen
    expected = {"Drop", "Dup", "Swap", "Push", "Not", "Add", "If", "Loop",
                "Pair", "Car", "Cdr", "Nil", "Cons", "IfCons", "Iter",
                "Lambda", "Exec", "TransferTokens", "Failwith", "Pack",
                "Sha256", "Dip"}
    missing = expected - seen
    assert not missing, f"constructors never generated: {missing}"
