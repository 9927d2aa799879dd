"""Seeded random generators shared by the property suites."""

from __future__ import annotations

import random

from mmv.logic import (
    FCall, FEq, FNot, FOr, TRUE, TmCons, TmLit, TmPair, TmPlus, TmTransfer,
    TmVar, TypeEnv, f_and,
)
from mmv.syntax import (
    ADDRESS, INT, NAT, NIL, OPERATION,
    Not, Push, TList, TPair, VAddress, VCode, VCons, VInt, VPair, VTransfer,
    list_value,
)

CODE_POOL = (VCode(()), VCode((Not(),)), VCode((Push(INT, VInt(0)), Not())))

FIRST_ORDER_SORTS = (
    INT, NAT, ADDRESS, OPERATION, TList(INT), TPair(INT, INT),
    TPair(INT, TList(INT)), TList(TPair(INT, INT)),
)


def rand_sort(rng: random.Random):
    return rng.choice(FIRST_ORDER_SORTS)


def rand_value(rng: random.Random, sort, bound: int = 5):
    match sort:
        case _ if sort == INT:
            return VInt(rng.randint(-bound, bound))
        case _ if sort == NAT:
            return VInt(rng.randint(0, bound))
        case _ if sort == ADDRESS:
            return VAddress(f"a{rng.randint(0, 3)}")
        case _ if sort == OPERATION:
            return VTransfer(VInt(rng.randint(-2, 2)), rng.randint(0, 3),
                             f"a{rng.randint(0, 3)}")
        case TList(elem):
            return list_value(rand_value(rng, elem, bound)
                              for _ in range(rng.randint(0, 3)))
        case TPair(a, b):
            return VPair(rand_value(rng, a, bound), rand_value(rng, b, bound))
    raise AssertionError(sort)


def rand_env(rng: random.Random, max_vars: int = 3) -> TypeEnv:
    env = TypeEnv()
    for i in range(rng.randint(0, max_vars)):
        env = env.extend(f"g{i}", rand_sort(rng))
    return env


def rand_sigma(rng: random.Random, gamma: TypeEnv) -> dict:
    return {n: rand_value(rng, t) for n, t in gamma.bindings}


def rand_term(rng: random.Random, gamma: TypeEnv, sort, depth: int = 2):
    """A random well-sorted term of `sort` over `gamma`."""
    vars_of_sort = [n for n, t in gamma.bindings if t == sort]
    choices = ["lit"]
    if vars_of_sort:
        choices += ["var", "var"]
    if depth > 0:
        if sort == INT:
            choices.append("plus")
        if isinstance(sort, TPair):
            choices.append("pair")
        if isinstance(sort, TList):
            choices.append("cons")
        if sort == OPERATION:
            choices.append("transfer")
    match rng.choice(choices):
        case "var":
            return TmVar(rng.choice(vars_of_sort))
        case "plus":
            return TmPlus(rand_term(rng, gamma, INT, depth - 1),
                          rand_term(rng, gamma, INT, depth - 1))
        case "pair":
            return TmPair(rand_term(rng, gamma, sort.fst, depth - 1),
                          rand_term(rng, gamma, sort.snd, depth - 1))
        case "cons":
            return TmCons(rand_term(rng, gamma, sort.elem, depth - 1),
                          rand_term(rng, gamma, sort, depth - 1))
        case "transfer":
            return TmTransfer(rand_term(rng, gamma, INT, depth - 1),
                              rand_term(rng, gamma, INT, depth - 1),
                              rand_term(rng, gamma, ADDRESS, depth - 1))
        case _:
            return TmLit(rand_value(rng, sort))


def rand_formula(rng: random.Random, gamma: TypeEnv, depth: int = 2):
    """A random quantifier-free, call-free formula over `gamma`."""
    if depth <= 0 or rng.random() < 0.4:
        sort = rand_sort(rng)
        kind = rng.random()
        atom = FEq(rand_term(rng, gamma, sort), rand_term(rng, gamma, sort))
        if kind < 0.15:
            return TRUE
        return atom
    match rng.randint(0, 2):
        case 0:
            return FNot(rand_formula(rng, gamma, depth - 1))
        case 1:
            return FOr(rand_formula(rng, gamma, depth - 1),
                       rand_formula(rng, gamma, depth - 1))
        case _:
            return f_and(rand_formula(rng, gamma, depth - 1),
                         rand_formula(rng, gamma, depth - 1))
