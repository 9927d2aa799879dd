import pytest

from mmv.syntax import (
    ADDRESS, INT, NAT, NIL, OPERATION,
    Not, Push, StructuralError, TArrow, TList, TPair,
    VAddress, VCode, VCons, VInt, VPair, VTransfer,
    binding_env, erase, iter_list_value, list_value, value_has_type,
)


def test_value_typing_examples():
    # direct rule applications from the judgment
    assert value_has_type(VPair(VInt(1), NIL), TPair(INT, TList(INT)))
    assert value_has_type(VTransfer(VInt(1), 2, "a"), OPERATION)
    assert value_has_type(VCode(()), TArrow(INT, INT))


def test_value_typing_negative():
    assert not value_has_type(VInt(1), TPair(INT, INT))
    assert not value_has_type(VPair(VInt(1), VInt(2)), TPair(INT, TList(INT)))
    assert not value_has_type(VCode((Not(),)), TArrow(TList(INT), TList(INT)))


def test_nat_is_refined_int():
    assert value_has_type(VInt(0), NAT)
    assert value_has_type(VInt(3), NAT)
    assert not value_has_type(VInt(-1), NAT)
    assert value_has_type(VInt(-1), INT)


def test_nil_polymorphism_and_first_order_uniqueness():
    # nil inhabits every list sort
    assert value_has_type(NIL, TList(INT))
    assert value_has_type(NIL, TList(ADDRESS))

    # for non-nil, non-code first-order values the inhabited base sorts are
    # unique up to list-element sorts of nil sub-leaves
    universe = [INT, ADDRESS, OPERATION, TList(INT), TList(ADDRESS),
                TPair(INT, INT), TPair(INT, TList(INT))]
    samples = [VInt(2), VAddress("a"), VPair(VInt(1), VInt(2)),
               VCons(VInt(1), NIL), VTransfer(VInt(0), 1, "a"),
               VPair(VInt(1), VCons(VInt(2), NIL))]
    for v in samples:
        inhabited = [t for t in universe if value_has_type(v, t)]
        assert len(inhabited) == 1, (v, inhabited)


def test_code_equality_is_intensional():
    assert VCode((Not(),)) == VCode((Not(),))
    assert VCode((Not(),)) != VCode((Not(), Not()))
    assert VCode(()) != VCode((Push(INT, VInt(0)),))


def test_erase_and_binding_env():
    binders = (("x", INT), ("y", TList(INT)))
    assert erase(binders) == (INT, TList(INT))
    assert erase(()) == ()
    assert binding_env(binders) == binders
    assert binding_env(()) == ()
    with pytest.raises(StructuralError):
        binding_env((("x", INT), ("x", INT)))


def test_erase_preserves_depth():
    for depth in range(5):
        binders = tuple((f"v{i}", INT) for i in range(depth))
        assert len(erase(binders)) == depth


def test_list_value_roundtrip():
    items = [VInt(1), VInt(2), VInt(3)]
    lv = list_value(items)
    assert lv == VCons(VInt(1), VCons(VInt(2), VCons(VInt(3), NIL)))
    assert list(iter_list_value(lv)) == items
