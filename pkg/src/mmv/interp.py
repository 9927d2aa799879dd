"""Big-step evaluator for instruction sequences.

Fuel makes the (terminating-run) big-step semantics executable: every rule
application, including sequencing steps and the empty-block rule, costs one
unit, and running out yields the distinct OutOfFuel outcome.  FAILWITH
aborts with the value at the stack top and discards the rest of the stack,
including any DIP-saved context.  A stack shape that matches no rule raises
StuckError, which is only reachable on simply-ill-typed input and is kept
separate from Failed.

`exec_derivation_search` is the reference oracle: it enumerates derivations
rule by rule (with the same unit accounting, so divergence classifies
identically) and is differentially tested against `exec_seq`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    Add, Block, Car, Cdr, Cons, Dip, Drop, Dup, Exec, Failwith, If, IfCons,
    InstrSeq, Iter, Lambda, Loop, Nil, Not, Pack, Pair, Push, Sha256, Stack,
    Swap, TransferTokens,
    NIL, VAddress, VBytes, VCode, VCons, VInt, VNil, VPair, VTransfer, Value,
)


@dataclass(frozen=True)
class Ok:
    stack: Stack


@dataclass(frozen=True)
class Failed:
    value: Value


@dataclass(frozen=True)
class OutOfFuel:
    pass


OUT_OF_FUEL = OutOfFuel()
RunOutcome = object  # Ok | Failed | OutOfFuel


class StuckError(Exception):
    """No evaluation rule applies; distinct from a FAILWITH abort."""


class _FailSignal(Exception):
    def __init__(self, value: Value):
        self.value = value


class _FuelSignal(Exception):
    pass


class _Fuel:
    __slots__ = ("left",)

    def __init__(self, amount: int):
        self.left = amount

    def spend(self):
        if self.left <= 0:
            raise _FuelSignal()
        self.left -= 1


def model_pack(value: Value) -> VBytes:
    """Model-only PACK: injective image of the canonical printed form.

    Not a real serializer; tagged so it can never collide with user bytes
    written in source (which are hex literals).
    """
    from .parser import pretty_value

    return VBytes(b"pack:" + pretty_value(value).encode())


def model_sha256(data: VBytes) -> VBytes:
    """Model-only SHA256 stub: identity-tagged, padded to length 32.

    Matches the logic-level axiom that hashes have length 32; it is not a
    cryptographic hash.
    """
    payload = (b"h32:" + data.data)[:32]
    return VBytes(payload.ljust(32, b"\x00"))


def exec_seq(stack: Stack, seq: InstrSeq, fuel: int) -> RunOutcome:
    """Run `seq` under `stack` with the given fuel budget."""
    cell = _Fuel(fuel)
    try:
        return Ok(_eval_seq(stack, seq, cell))
    except _FailSignal as sig:
        return Failed(sig.value)
    except _FuelSignal:
        return OUT_OF_FUEL


def _eval_seq(stack: Stack, seq: InstrSeq, fuel: _Fuel) -> Stack:
    for instr in seq:
        fuel.spend()  # the sequencing rule
        stack = _eval_instr(stack, instr, fuel)
    fuel.spend()  # the empty-block rule
    return stack


def _eval_instr(stack: Stack, instr, fuel: _Fuel) -> Stack:
    if isinstance(instr, Block):
        # a nested block re-enters the sequence judgment directly
        return _eval_seq(stack, instr.body, fuel)
    fuel.spend()

    def need(n: int):
        if len(stack) < n:
            raise StuckError(f"{type(instr).__name__}: stack has {len(stack)} values, need {n}")

    match instr:
        case Dip(body):
            need(1)
            saved = stack[0]
            rest = _eval_seq(stack[1:], body, fuel)
            return (saved,) + rest
        case Drop():
            need(1)
            return stack[1:]
        case Dup():
            need(1)
            return (stack[0],) + stack
        case Swap():
            need(2)
            return (stack[1], stack[0]) + stack[2:]
        case Push(_, value):
            return (value,) + stack
        case Not():
            need(1)
            match stack[0]:
                case VInt(i):
                    return (VInt(0 if i != 0 else 1),) + stack[1:]
            raise StuckError("NOT on non-integer")
        case Add():
            need(2)
            match stack[0], stack[1]:
                case VInt(a), VInt(b):
                    return (VInt(a + b),) + stack[2:]
            raise StuckError("ADD on non-integers")
        case If(then_branch, else_branch):
            need(1)
            match stack[0]:
                case VInt(i):
                    branch = then_branch if i != 0 else else_branch
                    return _eval_seq(stack[1:], branch, fuel)
            raise StuckError("IF on non-integer")
        case Loop(body):
            while True:
                need(1)
                match stack[0]:
                    case VInt(i):
                        if i == 0:
                            return stack[1:]
                        stack = _eval_seq(stack[1:], body, fuel)
                        fuel.spend()  # the re-entry into LOOP
                    case _:
                        raise StuckError("LOOP on non-integer")
        case Pair():
            need(2)
            return (VPair(stack[0], stack[1]),) + stack[2:]
        case Car():
            need(1)
            match stack[0]:
                case VPair(a, _):
                    return (a,) + stack[1:]
            raise StuckError("CAR on non-pair")
        case Cdr():
            need(1)
            match stack[0]:
                case VPair(_, b):
                    return (b,) + stack[1:]
            raise StuckError("CDR on non-pair")
        case Nil(_):
            return (NIL,) + stack
        case Cons():
            need(2)
            if not isinstance(stack[1], (VNil, VCons)):
                raise StuckError("CONS on non-list")
            return (VCons(stack[0], stack[1]),) + stack[2:]
        case IfCons(then_branch, else_branch):
            need(1)
            match stack[0]:
                case VCons(h, t):
                    return _eval_seq((h, t) + stack[1:], then_branch, fuel)
                case VNil():
                    return _eval_seq(stack[1:], else_branch, fuel)
            raise StuckError("IF_CONS on non-list")
        case Iter(body):
            need(1)
            match stack[0]:
                case VNil():
                    return stack[1:]
                case VCons(h, t):
                    rest = _eval_seq((h,) + stack[1:], body, fuel)
                    # re-entry charges at the head of the recursive call
                    return _eval_instr((t,) + rest, instr, fuel)
            raise StuckError("ITER on non-list")
        case Lambda(_, _, body):
            return (VCode(body),) + stack
        case Exec():
            need(2)
            match stack[1]:
                case VCode(body):
                    # the body shares the caller's remaining fuel budget
                    result = _eval_seq((stack[0],), body, fuel)
                    if len(result) != 1:
                        raise StuckError("EXEC body did not return a singleton stack")
                    return (result[0],) + stack[2:]
            raise StuckError("EXEC on non-code")
        case TransferTokens(_):
            need(3)
            match stack[1], stack[2]:
                case VInt(amount), VAddress(dest):
                    return (VTransfer(stack[0], amount, dest),) + stack[3:]
            raise StuckError("TRANSFER_TOKENS expects value, int, address")
        case Failwith():
            need(1)
            raise _FailSignal(stack[0])
        case Pack():
            need(1)
            return (model_pack(stack[0]),) + stack[1:]
        case Sha256():
            need(1)
            match stack[0]:
                case VBytes(_):
                    return (model_sha256(stack[0]),) + stack[1:]
            raise StuckError("SHA256 on non-bytes")
    raise StuckError(f"unknown instruction {instr!r}")


# ---------------------------------------------------------------------------
# Exhaustive derivation search (reference oracle)
# ---------------------------------------------------------------------------


def exec_derivation_search(stack: Stack, seq: InstrSeq, depth: int) -> frozenset:
    """Enumerate every derivation of the big-step judgment up to `depth`
    rule applications, returning the set of outcomes.  A branch whose
    derivation would exceed the depth contributes OutOfFuel, mirroring
    `exec_seq`'s fuel accounting exactly.  For deterministic semantics the
    result is a singleton."""
    out = set()
    for tag, payload, _rest in _seq_states(stack, seq, depth):
        if tag == "ok":
            out.add(Ok(payload))
        elif tag == "fail":
            out.add(Failed(payload))
        else:
            out.add(OUT_OF_FUEL)
    return frozenset(out)


def _seq_states(stack, seq, depth):
    if depth <= 0:
        return {("fuel", None, 0)}
    if not seq:
        return {("ok", stack, depth - 1)}  # the empty-block rule
    head, tail = seq[0], seq[1:]
    states = set()
    for tag, payload, rest in _instr_states(stack, head, depth - 1):  # sequencing rule
        if tag == "ok":
            states |= _seq_states(payload, tail, rest)
        else:
            states.add((tag, payload, rest))
    return states


def _instr_states(stack, instr, depth):
    if depth <= 0:
        return {("fuel", None, 0)}
    d = depth - 1  # this rule application

    def ok(s, rem=None):
        return {("ok", s, d if rem is None else rem)}

    match instr:
        case Block(body):
            return _seq_states(stack, body, depth)  # same refund as exec_seq
        case Dip(body):
            if len(stack) >= 1:
                out = set()
                for tag, payload, rest in _seq_states(stack[1:], body, d):
                    if tag == "ok":
                        out.add(("ok", (stack[0],) + payload, rest))
                    else:
                        out.add((tag, payload, rest))
                return out
        case Drop():
            if len(stack) >= 1:
                return ok(stack[1:])
        case Dup():
            if len(stack) >= 1:
                return ok((stack[0],) + stack)
        case Swap():
            if len(stack) >= 2:
                return ok((stack[1], stack[0]) + stack[2:])
        case Push(_, value):
            return ok((value,) + stack)
        case Not():
            if stack and isinstance(stack[0], VInt):
                i = stack[0].n
                return ok((VInt(0 if i != 0 else 1),) + stack[1:])
        case Add():
            if len(stack) >= 2 and isinstance(stack[0], VInt) and isinstance(stack[1], VInt):
                return ok((VInt(stack[0].n + stack[1].n),) + stack[2:])
        case If(then_branch, else_branch):
            if stack and isinstance(stack[0], VInt):
                branch = then_branch if stack[0].n != 0 else else_branch
                return _seq_states(stack[1:], branch, d)
        case Loop(body):
            if stack and isinstance(stack[0], VInt):
                if stack[0].n == 0:
                    return ok(stack[1:])
                out = set()
                for tag, payload, rest in _seq_states(stack[1:], body, d):
                    if tag == "ok":
                        out |= _instr_states(payload, instr, rest)
                    else:
                        out.add((tag, payload, rest))
                return out
        case Pair():
            if len(stack) >= 2:
                return ok((VPair(stack[0], stack[1]),) + stack[2:])
        case Car():
            if stack and isinstance(stack[0], VPair):
                return ok((stack[0].fst,) + stack[1:])
        case Cdr():
            if stack and isinstance(stack[0], VPair):
                return ok((stack[0].snd,) + stack[1:])
        case Nil(_):
            return ok((NIL,) + stack)
        case Cons():
            if len(stack) >= 2 and isinstance(stack[1], (VNil, VCons)):
                return ok((VCons(stack[0], stack[1]),) + stack[2:])
        case IfCons(then_branch, else_branch):
            if stack and isinstance(stack[0], VCons):
                return _seq_states((stack[0].head, stack[0].tail) + stack[1:], then_branch, d)
            if stack and isinstance(stack[0], VNil):
                return _seq_states(stack[1:], else_branch, d)
        case Iter(body):
            if stack and isinstance(stack[0], VNil):
                return ok(stack[1:])
            if stack and isinstance(stack[0], VCons):
                h, t = stack[0].head, stack[0].tail
                out = set()
                for tag, payload, rest in _seq_states((h,) + stack[1:], body, d):
                    if tag == "ok":
                        out |= _instr_states((t,) + payload, instr, rest)
                    else:
                        out.add((tag, payload, rest))
                return out
        case Lambda(_, _, body):
            return ok((VCode(body),) + stack)
        case Exec():
            if len(stack) >= 2 and isinstance(stack[1], VCode):
                out = set()
                for tag, payload, rest in _seq_states((stack[0],), stack[1].body, d):
                    if tag == "ok" and len(payload) == 1:
                        out.add(("ok", (payload[0],) + stack[2:], rest))
                    elif tag == "ok":
                        raise StuckError("EXEC body did not return a singleton stack")
                    else:
                        out.add((tag, payload, rest))
                return out
        case TransferTokens(_):
            if (len(stack) >= 3 and isinstance(stack[1], VInt)
                    and isinstance(stack[2], VAddress)):
                return ok((VTransfer(stack[0], stack[1].n, stack[2].token),) + stack[3:])
        case Failwith():
            if len(stack) >= 1:
                return {("fail", stack[0], d)}
        case Pack():
            if len(stack) >= 1:
                return ok((model_pack(stack[0]),) + stack[1:])
        case Sha256():
            if stack and isinstance(stack[0], VBytes):
                return ok((model_sha256(stack[0]),) + stack[1:])
    raise StuckError(f"no rule applies to {type(instr).__name__} on this stack")
