"""Simple (unrefined) typing of instruction sequences, plus a well-typed
program generator for the property suites.

`simple_check_seq` implements the stack-transformer judgment: given the
type stack before a sequence it returns the type stack after it.  A
FAILWITH tail yields the special DIVERGES stack, which unifies with any
demanded shape when branches join; it is an error for it to escape as the
final stack of a checked contract.
"""

from __future__ import annotations

import random
from typing import Optional

from .syntax import (
    ADDRESS, BYTES, INT, OPERATION,
    Add, Block, Car, Cdr, Cons, Dip, Drop, Dup, Exec, Failwith, If, IfCons,
    Instr, InstrSeq, Iter, Lambda, Loop, Nil, Not, Pack, Pair, Push, Sha256,
    Swap, TransferTokens,
    SimpleType, TAddress, TArrow, TBytes, TInt, TList, TNat, TPair, TypeStack,
    VAddress, VInt, VPair, list_value, value_has_type,
)


class _Diverges:
    """Result stack of code that always aborts; unifies with anything."""

    def __repr__(self):
        return "DIVERGES"


DIVERGES = _Diverges()


class SimpleTypeError(Exception):
    def __init__(self, msg: str, path: tuple = ()):
        super().__init__(msg + (f" (at {'/'.join(map(str, path))})" if path else ""))
        self.path = path


def _is_int(ty: SimpleType) -> bool:
    # nat values are integers at runtime; arithmetic instructions accept both
    return isinstance(ty, (TInt, TNat))


def _join(a, b, path):
    if a is DIVERGES:
        return b
    if b is DIVERGES:
        return a
    if a != b:
        raise SimpleTypeError(f"branch stacks disagree: {a} vs {b}", path)
    return a


def simple_check_seq(ts: TypeStack, seq: InstrSeq, path: tuple = (), trace: Optional[dict] = None):
    """Type an instruction sequence from stack `ts`; returns the output
    stack or DIVERGES.  `trace`, when given, records the stack after each
    instruction keyed by its path in the AST."""
    cur = ts
    for i, instr in enumerate(seq):
        cur = simple_check_instr(cur, instr, path + (i,), trace)
        if trace is not None:
            trace[path + (i,)] = cur
    return cur


def simple_check_instr(ts, instr: Instr, path: tuple = (), trace: Optional[dict] = None):
    if ts is DIVERGES:
        return DIVERGES

    def need(n: int):
        if len(ts) < n:
            raise SimpleTypeError(
                f"{type(instr).__name__} needs {n} stack elements, have {len(ts)}", path)

    match instr:
        case Block(body):
            return simple_check_seq(ts, body, path + ("b",), trace)
        case Dip(body):
            need(1)
            rest = simple_check_seq(ts[1:], body, path + ("b",), trace)
            return DIVERGES if rest is DIVERGES else (ts[0],) + rest
        case Drop():
            need(1)
            return ts[1:]
        case Dup():
            need(1)
            return (ts[0],) + ts
        case Swap():
            need(2)
            return (ts[1], ts[0]) + ts[2:]
        case Push(ty, value):
            if not value_has_type(value, ty):
                raise SimpleTypeError(f"PUSH payload is not of type {ty}", path)
            return (ty,) + ts
        case Not():
            need(1)
            if not _is_int(ts[0]):
                raise SimpleTypeError("NOT expects int on top", path)
            return (INT,) + ts[1:]
        case Add():
            need(2)
            if not (_is_int(ts[0]) and _is_int(ts[1])):
                raise SimpleTypeError("ADD expects two ints", path)
            return (INT,) + ts[2:]
        case If(then_branch, else_branch):
            need(1)
            if not _is_int(ts[0]):
                raise SimpleTypeError("IF expects int on top", path)
            t1 = simple_check_seq(ts[1:], then_branch, path + ("t",), trace)
            t2 = simple_check_seq(ts[1:], else_branch, path + ("e",), trace)
            return _join(t1, t2, path)
        case Loop(body):
            need(1)
            if not _is_int(ts[0]):
                raise SimpleTypeError("LOOP expects int on top", path)
            out = simple_check_seq(ts[1:], body, path + ("b",), trace)
            if out is not DIVERGES and out != (INT,) + ts[1:]:
                raise SimpleTypeError("LOOP body must restore int on the loop stack", path)
            return ts[1:]
        case Pair():
            need(2)
            return (TPair(ts[0], ts[1]),) + ts[2:]
        case Car():
            need(1)
            if not isinstance(ts[0], TPair):
                raise SimpleTypeError("CAR expects a pair", path)
            return (ts[0].fst,) + ts[1:]
        case Cdr():
            need(1)
            if not isinstance(ts[0], TPair):
                raise SimpleTypeError("CDR expects a pair", path)
            return (ts[0].snd,) + ts[1:]
        case Nil(elem):
            return (TList(elem),) + ts
        case Cons():
            need(2)
            if not isinstance(ts[1], TList) or ts[1].elem != ts[0]:
                raise SimpleTypeError(
                    f"CONS expects T on top of T list, got {ts[0]} over {ts[1]}", path)
            return ts[1:]
        case IfCons(then_branch, else_branch):
            need(1)
            if not isinstance(ts[0], TList):
                raise SimpleTypeError("IF_CONS expects a list on top", path)
            t1 = simple_check_seq((ts[0].elem, ts[0]) + ts[1:], then_branch, path + ("t",), trace)
            t2 = simple_check_seq(ts[1:], else_branch, path + ("e",), trace)
            return _join(t1, t2, path)
        case Iter(body):
            need(1)
            if not isinstance(ts[0], TList):
                raise SimpleTypeError("ITER expects a list on top", path)
            out = simple_check_seq((ts[0].elem,) + ts[1:], body, path + ("b",), trace)
            if out is not DIVERGES and out != ts[1:]:
                raise SimpleTypeError("ITER body must consume exactly the element", path)
            return ts[1:]
        case Lambda(arg, res, body):
            out = simple_check_seq((arg,), body, path + ("b",), trace)
            if out is not DIVERGES and out != (res,):
                raise SimpleTypeError(f"LAMBDA body has result {out}, expected ({res},)", path)
            return (TArrow(arg, res),) + ts
        case Exec():
            need(2)
            if not isinstance(ts[1], TArrow) or ts[1].arg != ts[0]:
                raise SimpleTypeError(f"EXEC expects T over T->T', got {ts[0]} over {ts[1]}", path)
            return (ts[1].res,) + ts[2:]
        case TransferTokens(arg_ty):
            need(3)
            if ts[0] != arg_ty or not _is_int(ts[1]) or not isinstance(ts[2], TAddress):
                raise SimpleTypeError("TRANSFER_TOKENS expects T, int, address", path)
            return (OPERATION,) + ts[3:]
        case Failwith():
            need(1)
            return DIVERGES
        case Pack():
            need(1)
            return (BYTES,) + ts[1:]
        case Sha256():
            need(1)
            if not isinstance(ts[0], TBytes):
                raise SimpleTypeError("SHA256 expects bytes", path)
            return (BYTES,) + ts[1:]
    raise SimpleTypeError(f"unknown instruction {instr!r}", path)


# ---------------------------------------------------------------------------
# Well-typed program generation
# ---------------------------------------------------------------------------


def generate_welltyped(ts_in: TypeStack, size: int, rng_seed: int) -> InstrSeq:
    """Emit a random instruction sequence that simple-typechecks from
    `ts_in`.  Deterministic for a fixed seed; every instruction constructor
    is reachable with positive probability."""
    rng = random.Random(rng_seed)
    seq, _ = _gen_seq(ts_in, size, rng)
    return seq


def _gen_seq(ts, size: int, rng: random.Random):
    out = []
    cur = ts
    budget = size
    while budget > 0 and cur is not DIVERGES:
        instr, cur, used = _gen_instr(cur, budget, rng)
        if instr is None:
            break
        out.append(instr)
        budget -= max(used, 1)
    return tuple(out), cur


def _gen_block_to(ts_in, ts_out, size: int, rng: random.Random, tries: int = 8):
    """Generate a block mapping ts_in to exactly ts_out, or None."""
    for _ in range(tries):
        seq, got = _gen_seq(ts_in, rng.randint(0, max(size, 0)), rng)
        if got == ts_out:
            return seq
    return None


def _gen_instr(ts, budget: int, rng: random.Random):
    choices = []

    def add(weight, builder):
        choices.extend([builder] * weight)

    add(3, lambda: (Push(INT, _rand_value(INT, rng)), (INT,) + ts, 1))
    add(1, lambda: (Push(TList(INT), _rand_value(TList(INT), rng)), (TList(INT),) + ts, 1))
    add(1, lambda: (Push(TPair(INT, INT), _rand_value(TPair(INT, INT), rng)),
                    (TPair(INT, INT),) + ts, 1))
    add(1, lambda: (Push(ADDRESS, _rand_value(ADDRESS, rng)), (ADDRESS,) + ts, 1))
    add(1, lambda: (Nil(INT), (TList(INT),) + ts, 1))

    if len(ts) >= 1:
        add(2, lambda: (Drop(), ts[1:], 1))
        add(2, lambda: (Dup(), (ts[0],) + ts, 1))
        add(1, lambda: (Pack(), (BYTES,) + ts[1:], 1))
        if budget >= 2:
            def mk_dip():
                body, out = _gen_seq(ts[1:], rng.randint(0, budget - 1), rng)
                if out is DIVERGES:
                    return None
                return Dip(body), (ts[0],) + out, 1 + _seq_size(body)

            add(1, mk_dip)
    if len(ts) >= 2:
        add(2, lambda: (Swap(), (ts[1], ts[0]) + ts[2:], 1))
        add(1, lambda: (Pair(), (TPair(ts[0], ts[1]),) + ts[2:], 1))
    if len(ts) >= 1 and _is_int(ts[0]):
        add(2, lambda: (Not(), (INT,) + ts[1:], 1))
        add(1, lambda: (Failwith(), DIVERGES, 1))
        if budget >= 2:
            def mk_if():
                b1, out1 = _gen_seq(ts[1:], rng.randint(0, budget - 1), rng)
                if out1 is DIVERGES:
                    return None
                b2 = _gen_block_to(ts[1:], out1, budget - 1 - _seq_size(b1), rng)
                if b2 is None:
                    b2 = b1
                return If(b1, b2), out1, 1 + _seq_size(b1) + _seq_size(b2)

            add(2, mk_if)
            # canned terminating loop body: next flag is the constant 0
            add(1, lambda: (Loop((Push(INT, VInt(0)),)), ts[1:], 2))
    if len(ts) >= 2 and _is_int(ts[0]) and _is_int(ts[1]):
        add(2, lambda: (Add(), (INT,) + ts[2:], 1))
    if len(ts) >= 1 and isinstance(ts[0], TPair):
        add(2, lambda: (Car(), (ts[0].fst,) + ts[1:], 1))
        add(2, lambda: (Cdr(), (ts[0].snd,) + ts[1:], 1))
    if len(ts) >= 2 and isinstance(ts[1], TList) and ts[1].elem == ts[0]:
        add(2, lambda: (Cons(), ts[1:], 1))
    if len(ts) >= 1 and isinstance(ts[0], TList):
        def mk_iter():
            body = _gen_block_to((ts[0].elem,) + ts[1:], ts[1:], max(budget - 1, 1), rng)
            if body is None:
                body = (Drop(),)
            return Iter(body), ts[1:], 1 + _seq_size(body)

        add(2, mk_iter)

        def mk_ifcons():
            b1 = _gen_block_to((ts[0].elem, ts[0]) + ts[1:], ts[1:], max(budget - 1, 1), rng)
            if b1 is None:
                b1 = (Drop(), Drop())
            return IfCons(b1, ()), ts[1:], 1 + _seq_size(b1)

        add(1, mk_ifcons)
    if budget >= 2:
        def mk_lambda():
            body = _gen_block_to((INT,), (INT,), budget - 1, rng)
            if body is None:
                body = ()
            return Lambda(INT, INT, body), (TArrow(INT, INT),) + ts, 1 + _seq_size(body)

        add(2, mk_lambda)
    if len(ts) >= 2 and isinstance(ts[1], TArrow) and ts[1].arg == ts[0]:
        add(3, lambda: (Exec(), (ts[1].res,) + ts[2:], 1))
    if len(ts) >= 3 and _is_int(ts[1]) and isinstance(ts[2], TAddress):
        add(3, lambda: (TransferTokens(ts[0]), (OPERATION,) + ts[3:], 1))
    if len(ts) >= 1 and isinstance(ts[0], TBytes):
        add(2, lambda: (Sha256(), (BYTES,) + ts[1:], 1))

    rng.shuffle(choices)
    for builder in choices:
        made = builder()
        if made is not None:
            return made
    return None, ts, 0


def _seq_size(seq) -> int:
    total = 0
    for instr in seq:
        total += 1
        match instr:
            case Block(b) | Dip(b) | Loop(b) | Iter(b) | Lambda(_, _, b):
                total += _seq_size(b)
            case If(b1, b2) | IfCons(b1, b2):
                total += _seq_size(b1) + _seq_size(b2)
            case _:
                pass
    return total


def _rand_value(ty, rng: random.Random):
    match ty:
        case TInt():
            return VInt(rng.randint(-3, 3))
        case TList(elem):
            return list_value(_rand_value(elem, rng) for _ in range(rng.randint(0, 2)))
        case TPair(a, b):
            return VPair(_rand_value(a, rng), _rand_value(b, rng))
        case _:
            return VAddress(f"addr{rng.randint(0, 3)}")
