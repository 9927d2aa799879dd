"""Abstract syntax for the Mini-Michelson stack language.

Values, simple types, instructions, and the three stack flavors (operand
stacks, type stacks, and named binding stacks) used everywhere else.
Everything here is an immutable dataclass; equality is structural, which
in particular makes equality on code values intensional: two code values
are equal exactly when their instruction sequences are syntactically
identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

# ---------------------------------------------------------------------------
# Simple types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TInt:
    pass


@dataclass(frozen=True)
class TNat:
    """Nonnegative integers.

    Runtime representation is an ordinary integer; nonnegativity lives at
    the logic level as a sort predicate.  TNat is an extension sort: core
    programs use TInt.
    """


@dataclass(frozen=True)
class TBytes:
    pass


@dataclass(frozen=True)
class TAddress:
    pass


@dataclass(frozen=True)
class TOperation:
    pass


@dataclass(frozen=True)
class TPair:
    fst: "SimpleType"
    snd: "SimpleType"


@dataclass(frozen=True)
class TList:
    elem: "SimpleType"


@dataclass(frozen=True)
class TArrow:
    arg: "SimpleType"
    res: "SimpleType"


SimpleType = Union[TInt, TNat, TBytes, TAddress, TOperation, TPair, TList, TArrow]

INT = TInt()
NAT = TNat()
BYTES = TBytes()
ADDRESS = TAddress()
OPERATION = TOperation()


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VInt:
    n: int


@dataclass(frozen=True)
class VAddress:
    token: str


@dataclass(frozen=True)
class VBytes:
    data: bytes


@dataclass(frozen=True)
class VTransfer:
    """Operation object: send `amount` with argument `arg` to `dest`."""

    arg: "Value"
    amount: int
    dest: str


@dataclass(frozen=True)
class VPair:
    fst: "Value"
    snd: "Value"


@dataclass(frozen=True)
class VNil:
    pass


@dataclass(frozen=True)
class VCons:
    head: "Value"
    tail: "Value"


@dataclass(frozen=True)
class VCode:
    body: "InstrSeq"


Value = Union[VInt, VAddress, VBytes, VTransfer, VPair, VNil, VCons, VCode]

NIL = VNil()


# ---------------------------------------------------------------------------
# Instructions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """A nested instruction sequence used in instruction position."""

    body: "InstrSeq"


@dataclass(frozen=True)
class Dip:
    body: "InstrSeq"


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class Dup:
    pass


@dataclass(frozen=True)
class Swap:
    pass


@dataclass(frozen=True)
class Push:
    ty: SimpleType
    value: Value


@dataclass(frozen=True)
class Not:
    pass


@dataclass(frozen=True)
class Add:
    pass


@dataclass(frozen=True)
class If:
    then_branch: "InstrSeq"
    else_branch: "InstrSeq"


@dataclass(frozen=True)
class Loop:
    body: "InstrSeq"


@dataclass(frozen=True)
class Pair:
    pass


@dataclass(frozen=True)
class Car:
    pass


@dataclass(frozen=True)
class Cdr:
    pass


@dataclass(frozen=True)
class Nil:
    elem: SimpleType


@dataclass(frozen=True)
class Cons:
    pass


@dataclass(frozen=True)
class IfCons:
    then_branch: "InstrSeq"
    else_branch: "InstrSeq"


@dataclass(frozen=True)
class Iter:
    body: "InstrSeq"


@dataclass(frozen=True)
class Lambda:
    arg: SimpleType
    res: SimpleType
    body: "InstrSeq"


@dataclass(frozen=True)
class Exec:
    pass


@dataclass(frozen=True)
class TransferTokens:
    arg_ty: SimpleType


@dataclass(frozen=True)
class Failwith:
    pass


@dataclass(frozen=True)
class Pack:
    pass


@dataclass(frozen=True)
class Sha256:
    pass


Instr = Union[
    Block, Dip, Drop, Dup, Swap, Push, Not, Add, If, Loop, Pair, Car, Cdr,
    Nil, Cons, IfCons, Iter, Lambda, Exec, TransferTokens, Failwith, Pack,
    Sha256,
]

# An instruction sequence {I1; ...; In} is a plain tuple; () is the empty
# block.  Operand stacks and type stacks are tuples with the top at index 0.
InstrSeq = tuple  # tuple[Instr, ...]
Stack = tuple  # tuple[Value, ...]
TypeStack = tuple  # tuple[SimpleType, ...]
# Named stack shape: ((name, type), ...), all names pairwise distinct.
BindingStack = tuple  # tuple[tuple[str, SimpleType], ...]


class StructuralError(Exception):
    """Violation of a structural invariant (duplicate binders and the like)."""


# ---------------------------------------------------------------------------
# Value typing
# ---------------------------------------------------------------------------


def value_has_type(value: Value, ty: SimpleType) -> bool:
    """Decide the value typing judgment `|- V : T`.

    Total: returns False rather than raising on mismatches.  Nat holds of
    nonnegative integers only (the runtime carries no separate nat value).
    Code values are checked by running the simple typer on the body from a
    singleton stack.
    """
    match value, ty:
        case VInt(n), TInt():
            return True
        case VInt(n), TNat():
            return n >= 0
        case VBytes(_), TBytes():
            return True
        case VAddress(_), TAddress():
            return True
        case VTransfer(arg, _, _), TOperation():
            return any(value_has_type(arg, t) for t in _payload_candidates(arg))
        case VPair(a, b), TPair(ta, tb):
            return value_has_type(a, ta) and value_has_type(b, tb)
        case VNil(), TList(_):
            return True
        case VCons(h, t), TList(te):
            return value_has_type(h, te) and value_has_type(t, ty)
        case VCode(body), TArrow(t1, t2):
            from .simple import DIVERGES, SimpleTypeError, simple_check_seq

            try:
                out = simple_check_seq((t1,), body)
            except SimpleTypeError:
                return False
            return out is DIVERGES or out == (t2,)
        case _:
            return False


def _payload_candidates(arg: Value) -> list:
    """Candidate simple types of an operation payload.

    The payload of a transfer may be of any type; the judgment only needs
    *some* type to exist for it.
    """
    ty = principal_type(arg)
    return [] if ty is None else [ty]


def principal_type(value: Value):
    """Most natural simple type of a closed first-order value, or None.

    Nil leaves default to `list int` and code values to the arrow the body
    types at from an int stack when that is unambiguous; used by oracles
    and the run CLI, not by the type system itself.
    """
    match value:
        case VInt(_):
            return INT
        case VBytes(_):
            return BYTES
        case VAddress(_):
            return ADDRESS
        case VTransfer(_, _, _):
            return OPERATION
        case VPair(a, b):
            ta, tb = principal_type(a), principal_type(b)
            return None if ta is None or tb is None else TPair(ta, tb)
        case VNil():
            return TList(INT)
        case VCons(h, t):
            th = principal_type(h)
            if th is None:
                return None
            lt = TList(th)
            return lt if value_has_type(t, lt) else None
        case VCode(body):
            from .simple import DIVERGES, SimpleTypeError, simple_check_seq

            try:
                out = simple_check_seq((INT,), body)
            except SimpleTypeError:
                return None
            if out is not DIVERGES and len(out) == 1:
                return TArrow(INT, out[0])
            return None
    return None


# ---------------------------------------------------------------------------
# Stack utilities
# ---------------------------------------------------------------------------


def erase(binders: BindingStack) -> TypeStack:
    """Erase binder names from a named stack shape, keeping the type stack."""
    return tuple(ty for _, ty in binders)


def binding_env(binders: BindingStack) -> tuple:
    """Flatten a binding stack into an ordered environment (name, type) list.

    Raises StructuralError if two positions share a name.
    """
    seen = set()
    for name, _ in binders:
        if name in seen:
            raise StructuralError(f"duplicate stack binder {name!r}")
        seen.add(name)
    return tuple(binders)


def list_value(items) -> Value:
    """Build a cons-chain list value from an iterable."""
    out: Value = NIL
    for item in reversed(list(items)):
        out = VCons(item, out)
    return out


def iter_list_value(value: Value):
    """Yield the elements of a well-formed list value."""
    while isinstance(value, VCons):
        yield value.head
        value = value.tail
    if not isinstance(value, VNil):
        raise StructuralError("improper list value")


def value_is_closed_wellformed(value: Value) -> bool:
    """Check list chains terminate in nil (values carry no variables)."""
    match value:
        case VCons(h, t):
            return value_is_closed_wellformed(h) and value_is_closed_wellformed(t)
        case VPair(a, b):
            return value_is_closed_wellformed(a) and value_is_closed_wellformed(b)
        case VTransfer(arg, _, _):
            return value_is_closed_wellformed(arg)
        case _:
            return True
