"""Many-sorted first-order assertion language.

Terms and formulae over stack values, their sorting rules, capture-avoiding
substitution, and a bounded three-valued evaluator.  The `call`/`call_err`
atoms are grounded by actually running the interpreter, so the evaluator
doubles as the semantic oracle for the soundness tests: quantifiers are
enumerated over an explicit budget and anything the budget cannot decide is
Unknown rather than a guess.  Enlarging a budget never flips a decided
verdict.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .interp import Failed, Ok, OutOfFuel, StuckError, exec_seq, model_pack, model_sha256
from .syntax import (
    ADDRESS, BYTES, INT, NAT, NIL, OPERATION,
    BindingStack, SimpleType, Stack, TAddress, TArrow, TBytes, TInt, TList,
    TNat, TOperation, TPair, VAddress, VBytes, VCode, VCons, VInt, VNil,
    VPair, VTransfer, Value, principal_type, value_has_type,
)

# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TmVar:
    name: str


@dataclass(frozen=True)
class TmLit:
    value: Value


@dataclass(frozen=True)
class TmTransfer:
    arg: "Term"
    amount: "Term"
    dest: "Term"


@dataclass(frozen=True)
class TmPair:
    fst: "Term"
    snd: "Term"


@dataclass(frozen=True)
class TmCons:
    head: "Term"
    tail: "Term"


@dataclass(frozen=True)
class TmPlus:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class TmMeasure:
    name: str
    arg: "Term"


@dataclass(frozen=True)
class TmMangled:
    """Overloaded builtin (pack, sha256) at a recorded sort instantiation."""

    name: str
    inst: SimpleType
    arg: "Term"


Term = Union[TmVar, TmLit, TmTransfer, TmPair, TmCons, TmPlus, TmMeasure, TmMangled]


# ---------------------------------------------------------------------------
# Formulae
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FTrue:
    pass


@dataclass(frozen=True)
class FEq:
    left: Term
    right: Term


@dataclass(frozen=True)
class FCall:
    fn: Term
    arg: Term
    result: Term


@dataclass(frozen=True)
class FCallErr:
    fn: Term
    arg: Term
    error: Term


@dataclass(frozen=True)
class FNot:
    body: "Formula"


@dataclass(frozen=True)
class FOr:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class FExists:
    var: str
    sort: SimpleType
    body: "Formula"


Formula = Union[FTrue, FEq, FCall, FCallErr, FNot, FOr, FExists]

TRUE = FTrue()
FALSE = FNot(TRUE)


def f_and(*parts: Formula) -> Formula:
    """Conjunction, desugared to the primitive connectives."""
    parts = tuple(p for p in parts if p != TRUE)
    if not parts:
        return TRUE
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = FNot(FOr(FNot(p), FNot(out)))
    return out


def f_or(*parts: Formula) -> Formula:
    if not parts:
        return FALSE
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = FOr(p, out)
    return out


def f_implies(a: Formula, b: Formula) -> Formula:
    return FOr(FNot(a), b)


def f_neq(t1: Term, t2: Term) -> Formula:
    return FNot(FEq(t1, t2))


def f_exists(binders, body: Formula) -> Formula:
    for name, sort in reversed(list(binders)):
        body = FExists(name, sort, body)
    return body


def f_forall(binders, body: Formula) -> Formula:
    return FNot(f_exists(binders, FNot(body)))


def is_and(phi: Formula) -> Optional[tuple]:
    """Recognize the f_and encoding; returns (left, right) or None."""
    match phi:
        case FNot(FOr(FNot(a), FNot(b))):
            return a, b
    return None


def conjuncts(phi: Formula) -> list:
    pair = is_and(phi)
    if pair is None:
        return [phi]
    return conjuncts(pair[0]) + conjuncts(pair[1])


def term_of_value(value: Value) -> Term:
    """Literal term for a value, with list/pair/operation structure exposed
    as term constructors so measure instantiation can see cons cells."""
    match value:
        case VCons(h, t):
            return TmCons(term_of_value(h), term_of_value(t))
        case VPair(a, b):
            return TmPair(term_of_value(a), term_of_value(b))
        case VTransfer(arg, amount, dest):
            return TmTransfer(term_of_value(arg), TmLit(VInt(amount)), TmLit(VAddress(dest)))
        case _:
            return TmLit(value)


# ---------------------------------------------------------------------------
# Environments, assignments, refinement stack types
# ---------------------------------------------------------------------------


class SortError(Exception):
    def __init__(self, msg: str, crumbs: tuple = ()):
        where = " in " + " > ".join(crumbs) if crumbs else ""
        super().__init__(msg + where)
        self.crumbs = crumbs


@dataclass(frozen=True)
class TypeEnv:
    """Ordered sequence of distinct (name, sort) bindings."""

    bindings: tuple = ()

    def lookup(self, name: str):
        for n, t in self.bindings:
            if n == name:
                return t
        return None

    def __contains__(self, name: str) -> bool:
        return self.lookup(name) is not None

    def names(self):
        return tuple(n for n, _ in self.bindings)

    def extend(self, name: str, sort: SimpleType) -> "TypeEnv":
        if name in self:
            raise SortError(f"duplicate binding {name!r} in environment")
        return TypeEnv(self.bindings + ((name, sort),))

    def concat(self, other: "TypeEnv") -> "TypeEnv":
        env = self
        for n, t in other.bindings:
            env = env.extend(n, t)
        return env


ValueAssignment = dict  # str -> Value


def assignment_typed(sigma: ValueAssignment, gamma: TypeEnv) -> bool:
    """sigma : Gamma, i.e. a well-typed value for every declared name."""
    return all(n in sigma and value_has_type(sigma[n], t) for n, t in gamma.bindings)


@dataclass(frozen=True)
class RefinementStackType:
    """{ x1:T1 |> ... |> xn:Tn | pred }, binders top-first."""

    binders: BindingStack
    pred: Formula

    def binding_env(self) -> TypeEnv:
        env = TypeEnv()
        for name, sort in self.binders:
            env = env.extend(name, sort)
        return env


@dataclass(frozen=True)
class MeasureDef:
    """User measure over lists: `name [] = nil_rhs | h :: t = cons_rhs`."""

    name: str
    arg_sort: TList
    res_sort: SimpleType
    nil_rhs: Term
    cons_rhs: Term  # over pattern variables h, t; recursion via `name t`


class Verdict3(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


V_TRUE, V_FALSE, V_UNKNOWN = Verdict3.TRUE, Verdict3.FALSE, Verdict3.UNKNOWN


def _v_from_bool(b: bool) -> Verdict3:
    return V_TRUE if b else V_FALSE


def v_not(v: Verdict3) -> Verdict3:
    if v is V_TRUE:
        return V_FALSE
    if v is V_FALSE:
        return V_TRUE
    return V_UNKNOWN


def v_or(a: Verdict3, b: Verdict3) -> Verdict3:
    if V_TRUE in (a, b):
        return V_TRUE
    if a is V_FALSE and b is V_FALSE:
        return V_FALSE
    return V_UNKNOWN


@dataclass(frozen=True)
class Budget:
    """Enumeration limits for the bounded evaluator."""

    int_bound: int = 5
    list_len: int = 3
    fuel: int = 10000
    addr_pool: tuple = ("a0", "a1", "a2", "a3")
    code_pool: tuple = ()  # VCode values harvested from the contract
    max_candidates: int = 4000


DEFAULT_BUDGET = Budget()


# ---------------------------------------------------------------------------
# Sorting
# ---------------------------------------------------------------------------


def _intlike(t: SimpleType) -> bool:
    return isinstance(t, (TInt, TNat))


def sorts_compatible(a: SimpleType, b: SimpleType) -> bool:
    return a == b or (_intlike(a) and _intlike(b))


def sort_of_term(gamma: TypeEnv, t: Term, measures=(), crumbs: tuple = ()) -> SimpleType:
    """Infer the sort of `t` under `gamma` per the well-sortedness rules.

    Raises SortError on unbound variables, mismatches, or literals whose
    sort is ambiguous in inference position (a bare nil).
    """
    meas = _measure_map(measures)
    match t:
        case TmVar(name):
            ty = gamma.lookup(name)
            if ty is None:
                raise SortError(f"unbound variable {name!r}", crumbs)
            return ty
        case TmLit(value):
            ty = principal_type(value)
            if ty is None:
                raise SortError("literal with ambiguous sort in inference position", crumbs)
            return ty
        case TmTransfer(arg, amount, dest):
            sort_of_term(gamma, arg, measures, crumbs + ("Transfer.arg",))
            _check_intlike(gamma, amount, measures, crumbs + ("Transfer.amount",))
            _check_sort(gamma, dest, ADDRESS, measures, crumbs + ("Transfer.dest",))
            return OPERATION
        case TmPair(a, b):
            return TPair(sort_of_term(gamma, a, measures, crumbs + ("pair.fst",)),
                         sort_of_term(gamma, b, measures, crumbs + ("pair.snd",)))
        case TmCons(h, tl):
            try:
                elem = sort_of_term(gamma, h, measures, crumbs + ("cons.head",))
            except SortError:
                lt = sort_of_term(gamma, tl, measures, crumbs + ("cons.tail",))
                if not isinstance(lt, TList):
                    raise SortError("cons tail is not a list", crumbs)
                _check_sort(gamma, h, lt.elem, measures, crumbs + ("cons.head",))
                return lt
            lt = TList(elem)
            _check_sort(gamma, tl, lt, measures, crumbs + ("cons.tail",))
            return lt
        case TmPlus(a, b):
            _check_intlike(gamma, a, measures, crumbs + ("plus.left",))
            _check_intlike(gamma, b, measures, crumbs + ("plus.right",))
            return INT
        case TmMeasure(name, arg):
            m = meas.get(name)
            if m is None:
                raise SortError(f"unknown measure {name!r}", crumbs)
            _check_sort(gamma, arg, m.arg_sort, measures, crumbs + (f"{name}.arg",))
            return m.res_sort
        case TmMangled(name, inst, arg):
            if name == "pack":
                _check_sort(gamma, arg, inst, measures, crumbs + ("pack.arg",))
                return BYTES
            if name == "sha256":
                _check_sort(gamma, arg, BYTES, measures, crumbs + ("sha256.arg",))
                return BYTES
            raise SortError(f"unknown builtin {name!r}", crumbs)
    raise SortError(f"not a term: {t!r}", crumbs)


def _check_sort(gamma, t, expected, measures, crumbs):
    """Check `t` against an expected sort (handles ambiguous literals)."""
    match t:
        case TmLit(value):
            if not value_has_type(value, expected):
                raise SortError(f"literal does not have sort {expected}", crumbs)
            return
        case TmCons(h, tl) if isinstance(expected, TList):
            _check_sort(gamma, h, expected.elem, measures, crumbs + ("cons.head",))
            _check_sort(gamma, tl, expected, measures, crumbs + ("cons.tail",))
            return
        case TmPair(a, b) if isinstance(expected, TPair):
            _check_sort(gamma, a, expected.fst, measures, crumbs + ("pair.fst",))
            _check_sort(gamma, b, expected.snd, measures, crumbs + ("pair.snd",))
            return
    got = sort_of_term(gamma, t, measures, crumbs)
    if not sorts_compatible(got, expected):
        raise SortError(f"sort mismatch: expected {expected}, got {got}", crumbs)


def _check_intlike(gamma, t, measures, crumbs):
    got = sort_of_term(gamma, t, measures, crumbs)
    if not _intlike(got):
        raise SortError(f"expected an integer sort, got {got}", crumbs)


def wf_formula(gamma: TypeEnv, phi: Formula, measures=(), crumbs: tuple = ()) -> None:
    """Check `Gamma |- phi : *`; raises SortError with a breadcrumb path."""
    match phi:
        case FTrue():
            return
        case FEq(l, r):
            try:
                ls = sort_of_term(gamma, l, measures, crumbs + ("=.lhs",))
            except SortError:
                rs = sort_of_term(gamma, r, measures, crumbs + ("=.rhs",))
                _check_sort(gamma, l, rs, measures, crumbs + ("=.lhs",))
                return
            _check_sort(gamma, r, ls, measures, crumbs + ("=.rhs",))
            return
        case FCall(f, a, r) | FCallErr(f, a, r):
            kind = "call" if isinstance(phi, FCall) else "call_err"
            try:
                fs = sort_of_term(gamma, f, measures, crumbs + (f"{kind}.fn",))
            except SortError:
                fs = None
            if fs is not None:
                if not isinstance(fs, TArrow):
                    raise SortError(f"{kind} applied to non-function sort {fs}", crumbs)
                _check_sort(gamma, a, fs.arg, measures, crumbs + (f"{kind}.arg",))
                if isinstance(phi, FCall):
                    _check_sort(gamma, r, fs.res, measures, crumbs + (f"{kind}.result",))
                else:
                    sort_of_term(gamma, r, measures, crumbs + (f"{kind}.error",))
                return
            asort = sort_of_term(gamma, a, measures, crumbs + (f"{kind}.arg",))
            rsort = sort_of_term(gamma, r, measures, crumbs + (f"{kind}.result",))
            if isinstance(phi, FCall):
                _check_sort(gamma, f, TArrow(asort, rsort), measures, crumbs + (f"{kind}.fn",))
            else:
                raise SortError(f"cannot determine function sort of {kind}", crumbs)
            return
        case FNot(b):
            wf_formula(gamma, b, measures, crumbs + ("not",))
            return
        case FOr(l, r):
            wf_formula(gamma, l, measures, crumbs + ("or.left",))
            wf_formula(gamma, r, measures, crumbs + ("or.right",))
            return
        case FExists(x, sort, body):
            if x in gamma:
                raise SortError(f"quantifier shadows {x!r}", crumbs)
            wf_formula(gamma.extend(x, sort), body, measures, crumbs + (f"exists {x}",))
            return
    raise SortError(f"not a formula: {phi!r}", crumbs)


# ---------------------------------------------------------------------------
# Free variables and substitution
# ---------------------------------------------------------------------------


def free_vars_term(t: Term) -> frozenset:
    match t:
        case TmVar(name):
            return frozenset((name,))
        case TmLit(_):
            return frozenset()
        case TmTransfer(a, b, c):
            return free_vars_term(a) | free_vars_term(b) | free_vars_term(c)
        case TmPair(a, b) | TmCons(a, b) | TmPlus(a, b):
            return free_vars_term(a) | free_vars_term(b)
        case TmMeasure(_, arg) | TmMangled(_, _, arg):
            return free_vars_term(arg)
    raise TypeError(f"not a term: {t!r}")


def free_vars(phi: Formula) -> frozenset:
    match phi:
        case FTrue():
            return frozenset()
        case FEq(l, r):
            return free_vars_term(l) | free_vars_term(r)
        case FCall(f, a, r) | FCallErr(f, a, r):
            return free_vars_term(f) | free_vars_term(a) | free_vars_term(r)
        case FNot(b):
            return free_vars(b)
        case FOr(l, r):
            return free_vars(l) | free_vars(r)
        case FExists(x, _, body):
            return free_vars(body) - {x}
    raise TypeError(f"not a formula: {phi!r}")


_fresh_counter = itertools.count(1)


def fresh_name(base: str = "v") -> str:
    """Fresh identifier; `#` cannot occur in user identifiers."""
    return f"{base.split('#', 1)[0]}#{next(_fresh_counter)}"


def subst_term_in_term(t: Term, x: str, repl: Term) -> Term:
    match t:
        case TmVar(name):
            return repl if name == x else t
        case TmLit(_):
            return t
        case TmTransfer(a, b, c):
            return TmTransfer(subst_term_in_term(a, x, repl), subst_term_in_term(b, x, repl),
                              subst_term_in_term(c, x, repl))
        case TmPair(a, b):
            return TmPair(subst_term_in_term(a, x, repl), subst_term_in_term(b, x, repl))
        case TmCons(a, b):
            return TmCons(subst_term_in_term(a, x, repl), subst_term_in_term(b, x, repl))
        case TmPlus(a, b):
            return TmPlus(subst_term_in_term(a, x, repl), subst_term_in_term(b, x, repl))
        case TmMeasure(name, arg):
            return TmMeasure(name, subst_term_in_term(arg, x, repl))
        case TmMangled(name, inst, arg):
            return TmMangled(name, inst, subst_term_in_term(arg, x, repl))
    raise TypeError(f"not a term: {t!r}")


def subst_term(phi: Formula, x: str, repl: Term) -> Formula:
    """phi[repl/x], capture-avoiding: colliding binders are freshened."""
    match phi:
        case FTrue():
            return phi
        case FEq(l, r):
            return FEq(subst_term_in_term(l, x, repl), subst_term_in_term(r, x, repl))
        case FCall(f, a, r):
            return FCall(subst_term_in_term(f, x, repl), subst_term_in_term(a, x, repl),
                         subst_term_in_term(r, x, repl))
        case FCallErr(f, a, r):
            return FCallErr(subst_term_in_term(f, x, repl), subst_term_in_term(a, x, repl),
                            subst_term_in_term(r, x, repl))
        case FNot(b):
            return FNot(subst_term(b, x, repl))
        case FOr(l, r):
            return FOr(subst_term(l, x, repl), subst_term(r, x, repl))
        case FExists(y, sort, body):
            if y == x:
                return phi
            if y in free_vars_term(repl):
                y2 = fresh_name(y)
                body = subst_term(body, y, TmVar(y2))
                return FExists(y2, sort, subst_term(body, x, repl))
            return FExists(y, sort, subst_term(body, x, repl))
    raise TypeError(f"not a formula: {phi!r}")


def subst_value(phi: Formula, x: str, value: Value) -> Formula:
    """phi[value/x] for a closed value."""
    return subst_term(phi, x, TmLit(value))


def rename_binders(phi: Formula, mapping: dict) -> Formula:
    """Simultaneous renaming of free variables, used to alpha-align stack
    binders positionally.  Swapped mappings are handled by routing through
    temporary names."""
    live = {old: new for old, new in mapping.items() if old != new}
    temps = {old: fresh_name(old) for old in live}
    out = phi
    for old, tmp in temps.items():
        out = subst_term(out, old, TmVar(tmp))
    for old, tmp in temps.items():
        out = subst_term(out, tmp, TmVar(live[old]))
    return out


def prenex_exists(phi: Formula):
    """Float top-level existentials out of the and/or structure.

    Returns (binders, matrix); sound because engine-introduced binder names
    are unique per branch (duplicates across disjuncts denote the same
    consumed binder and may be merged; collisions elsewhere are freshened).
    Quantifiers under negation (the lambda characterizations) stay in the
    matrix.
    """
    pair = is_and(phi)
    if pair is not None:
        b1, m1 = prenex_exists(pair[0])
        b2, m2 = prenex_exists(pair[1])
        taken = {n for n, _ in b1}
        renamed = []
        for name, sort in b2:
            if name in taken:
                fresh = fresh_name(name)
                m2 = subst_term(m2, name, TmVar(fresh))
                name = fresh
            taken.add(name)
            renamed.append((name, sort))
        return b1 + renamed, f_and(m1, m2)
    match phi:
        case FExists(x, sort, body):
            bs, matrix = prenex_exists(body)
            if any(n == x for n, _ in bs):
                # shadowed by an inner binder, so this one binds nothing
                return [(fresh_name(x), sort)] + bs, matrix
            return [(x, sort)] + bs, matrix
        case FOr(l, r):
            b1, m1 = prenex_exists(l)
            b2, m2 = prenex_exists(r)
            merged = list(b1)
            have = dict(b1)
            for name, sort in b2:
                if name in have:
                    if have[name] != sort:
                        fresh = fresh_name(name)
                        m2 = subst_term(m2, name, TmVar(fresh))
                        merged.append((fresh, sort))
                    # same consumed binder in both disjuncts: merge
                else:
                    merged.append((name, sort))
                    have[name] = sort
            return merged, FOr(m1, m2)
    return [], phi


def is_quantifier_free(phi: Formula) -> bool:
    match phi:
        case FExists(_, _, _):
            return False
        case FNot(b):
            return is_quantifier_free(b)
        case FOr(l, r):
            return is_quantifier_free(l) and is_quantifier_free(r)
        case _:
            return True


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class EvalError(Exception):
    """Raised when evaluation preconditions are violated (ill-sorted input)."""


def _measure_map(measures) -> dict:
    if isinstance(measures, dict):
        return measures
    return {m.name: m for m in measures}


def eval_term(sigma: ValueAssignment, gamma: TypeEnv, t: Term, measures=()) -> Value:
    """Homomorphic term evaluation under a typed assignment."""
    meas = _measure_map(measures)

    def ev(t: Term) -> Value:
        match t:
            case TmVar(name):
                if name not in sigma:
                    raise EvalError(f"unassigned variable {name!r}")
                return sigma[name]
            case TmLit(value):
                return value
            case TmTransfer(a, b, c):
                amount, dest = ev(b), ev(c)
                if not isinstance(amount, VInt) or not isinstance(dest, VAddress):
                    raise EvalError("ill-sorted transfer term")
                return VTransfer(ev(a), amount.n, dest.token)
            case TmPair(a, b):
                return VPair(ev(a), ev(b))
            case TmCons(a, b):
                return VCons(ev(a), ev(b))
            case TmPlus(a, b):
                left, right = ev(a), ev(b)
                if not isinstance(left, VInt) or not isinstance(right, VInt):
                    raise EvalError("ill-sorted sum")
                return VInt(left.n + right.n)
            case TmMeasure(name, arg):
                m = meas.get(name)
                if m is None:
                    raise EvalError(f"unknown measure {name!r}")
                return eval_measure(m, ev(arg), meas)
            case TmMangled(name, _, arg):
                if name == "pack":
                    return model_pack(ev(arg))
                if name == "sha256":
                    data = ev(arg)
                    if not isinstance(data, VBytes):
                        raise EvalError("sha256 on non-bytes")
                    return model_sha256(data)
                raise EvalError(f"unknown builtin {name!r}")
        raise EvalError(f"not a term: {t!r}")

    return ev(t)


def eval_measure(m: MeasureDef, value: Value, measures) -> Value:
    """Structural recursion over the list argument per the defining
    equations."""
    match value:
        case VNil():
            return eval_term({}, TypeEnv(), m.nil_rhs, measures)
        case VCons(h, t):
            return eval_term({"h": h, "t": t}, TypeEnv(), m.cons_rhs, measures)
    raise EvalError(f"measure {m.name} applied to non-list")


def eval_formula(sigma: ValueAssignment, gamma: TypeEnv, phi: Formula,
                 budget: Budget = DEFAULT_BUDGET, measures=()) -> Verdict3:
    """Three-valued bounded evaluation of a well-sorted formula."""
    match phi:
        case FTrue():
            return V_TRUE
        case FEq(l, r):
            return _v_from_bool(eval_term(sigma, gamma, l, measures)
                                == eval_term(sigma, gamma, r, measures))
        case FCall():
            return _eval_call(sigma, gamma, phi, budget, measures, want_ok=True)
        case FCallErr():
            return _eval_call(sigma, gamma, phi, budget, measures, want_ok=False)
        case FNot(b):
            return v_not(eval_formula(sigma, gamma, b, budget, measures))
        case FOr(l, r):
            return v_or(eval_formula(sigma, gamma, l, budget, measures),
                        eval_formula(sigma, gamma, r, budget, measures))
        case FExists(x, sort, body):
            return _eval_exists(sigma, gamma, x, sort, body, budget, measures)
    raise EvalError(f"not a formula: {phi!r}")


def _eval_call(sigma, gamma, phi, budget, measures, want_ok: bool) -> Verdict3:
    fn = eval_term(sigma, gamma, phi.fn, measures)
    arg = eval_term(sigma, gamma, phi.arg, measures)
    expected = eval_term(sigma, gamma, phi.result if want_ok else phi.error, measures)
    if not isinstance(fn, VCode):
        raise EvalError("call on a non-code value")
    try:
        outcome = exec_seq((arg,), fn.body, budget.fuel)
    except StuckError:
        return V_FALSE  # no derivation of the judgment exists
    match outcome:
        case Ok(stack):
            if want_ok and len(stack) == 1:
                return _v_from_bool(stack[0] == expected)
            return V_FALSE
        case Failed(value):
            return _v_from_bool(value == expected) if not want_ok else V_FALSE
        case OutOfFuel():
            return V_UNKNOWN
    raise AssertionError


def _eval_exists(sigma, gamma, x, sort, body, budget, measures) -> Verdict3:
    inner_gamma = gamma if x in gamma else gamma.extend(x, sort)

    # one-point rule: a conjunct pins x to a term evaluable in the outer
    # scope, so the only possible witness is that term's value
    for c in conjuncts(body):
        pin = None
        match c:
            case FEq(TmVar(name), t) if name == x and x not in free_vars_term(t):
                pin = t
            case FEq(t, TmVar(name)) if name == x and x not in free_vars_term(t):
                pin = t
        if pin is not None and free_vars_term(pin) <= set(sigma.keys()):
            witness = eval_term(sigma, gamma, pin, measures)
            if not value_has_type(witness, sort):
                return V_FALSE
            return eval_formula({**sigma, x: witness}, inner_gamma, body, budget, measures)

    # bounded enumeration; sorts are infinite, so failure to find a witness
    # is Unknown, never False
    hints = [v for v in _constant_pool(body) + list(sigma.values())
             if value_has_type(v, sort)]
    for witness in itertools.islice(_candidates(sort, budget, hints), budget.max_candidates):
        verdict = eval_formula({**sigma, x: witness}, inner_gamma, body, budget, measures)
        if verdict is V_TRUE:
            return V_TRUE
    return V_UNKNOWN


def _constant_pool(phi: Formula) -> list:
    """Constant values assembled from literal subterms, in syntactic order."""
    seen = []

    def fold(t: Term):
        match t:
            case TmLit(value):
                return value
            case TmPair(a, b):
                fa, fb = fold(a), fold(b)
                return None if fa is None or fb is None else VPair(fa, fb)
            case TmCons(a, b):
                fa, fb = fold(a), fold(b)
                return None if fa is None or fb is None else VCons(fa, fb)
            case TmTransfer(a, b, c):
                fa, fb, fc = fold(a), fold(b), fold(c)
                if None in (fa, fb, fc) or not isinstance(fb, VInt) \
                        or not isinstance(fc, VAddress):
                    return None
                return VTransfer(fa, fb.n, fc.token)
            case _:
                return None

    def visit_term(t: Term):
        v = fold(t)
        if v is not None and v not in seen:
            seen.append(v)
        match t:
            case TmTransfer(a, b, c):
                visit_term(a)
                visit_term(b)
                visit_term(c)
            case TmPair(a, b) | TmCons(a, b) | TmPlus(a, b):
                visit_term(a)
                visit_term(b)
            case TmMeasure(_, arg):
                visit_term(arg)
            case TmMangled(_, _, arg):
                visit_term(arg)
            case _:
                pass

    def visit(phi: Formula):
        match phi:
            case FEq(l, r):
                visit_term(l)
                visit_term(r)
            case FCall(f, a, r) | FCallErr(f, a, r):
                visit_term(f)
                visit_term(a)
                visit_term(r)
            case FNot(b):
                visit(b)
            case FOr(l, r):
                visit(l)
                visit(r)
            case FExists(_, _, b):
                visit(b)
            case _:
                pass

    visit(phi)
    return seen


def _candidates(sort: SimpleType, budget: Budget, hints):
    """Deterministic candidate stream for a sort: hints first, then a
    systematic sweep of the budgeted subdomain."""
    emitted = set()

    def emit(v):
        if v not in emitted:
            emitted.add(v)
            yield v

    for h in hints:
        yield from emit(h)

    if isinstance(sort, TInt):
        for i in _int_sweep(budget.int_bound):
            yield from emit(VInt(i))
    elif isinstance(sort, TNat):
        for i in range(budget.int_bound + 1):
            yield from emit(VInt(i))
    elif isinstance(sort, TList):
        def lists(maxlen):
            if maxlen == 0:
                yield NIL
                return
            yield from lists(maxlen - 1)
            for tail in lists(maxlen - 1):
                for head in itertools.islice(
                        _candidates(sort.elem, budget, []), budget.int_bound * 2 + 1):
                    yield VCons(head, tail)

        for v in lists(budget.list_len):
            yield from emit(v)
    elif isinstance(sort, TPair):
        for a in itertools.islice(_candidates(sort.fst, budget, []), 64):
            for b in itertools.islice(_candidates(sort.snd, budget, []), 64):
                yield from emit(VPair(a, b))
    elif isinstance(sort, TOperation):
        for amount in _int_sweep(budget.int_bound):
            for payload in _int_sweep(budget.int_bound):
                for addr in budget.addr_pool:
                    yield from emit(VTransfer(VInt(payload), amount, addr))
    elif isinstance(sort, TArrow):
        for code in budget.code_pool:
            if value_has_type(code, sort):
                yield from emit(code)
    elif isinstance(sort, TAddress):
        for token in budget.addr_pool:
            yield from emit(VAddress(token))
    elif isinstance(sort, TBytes):
        yield from emit(VBytes(b""))
        yield from emit(VBytes(b"\x00"))


def _int_sweep(bound: int):
    yield 0
    for i in range(1, bound + 1):
        yield i
        yield -i


# ---------------------------------------------------------------------------
# Refinement stack typing and sampling
# ---------------------------------------------------------------------------


def stack_models(sigma: ValueAssignment, gamma: TypeEnv, stack: Stack,
                 phi_type: RefinementStackType, budget: Budget = DEFAULT_BUDGET,
                 measures=()) -> Verdict3:
    """sigma : Gamma |= S : Phi, by the push/bottom rules."""
    if len(stack) != len(phi_type.binders):
        return V_FALSE
    cur_sigma = dict(sigma)
    cur_gamma = gamma
    for value, (name, sort) in zip(stack, phi_type.binders):
        if not value_has_type(value, sort):
            return V_FALSE
        cur_gamma = cur_gamma.extend(name, sort)
        cur_sigma[name] = value
    return eval_formula(cur_sigma, cur_gamma, phi_type.pred, budget, measures)


def sample_stack(gamma: TypeEnv, phi_type: RefinementStackType, budget: Budget,
                 attempts: int, rng_seed: int, measures=()) -> list:
    """Rejection-sample (sigma, stack) pairs with stack_models = TRUE.

    Proposals are drawn from the budgeted candidate pools and then repaired
    against pinning equalities in the predicate (x = t conjuncts); every
    returned pair is verified by stack_models, so repairs only raise the
    hit rate.  Deterministic under a fixed seed; may return fewer than
    `attempts` samples.
    """
    import random

    rng = random.Random(rng_seed)
    hints = _constant_pool(phi_type.pred)
    binder_names = [n for n, _ in phi_type.binders]
    pools = {}

    def pool(sort):
        key = repr(sort)
        if key not in pools:
            sorted_hints = [v for v in hints if value_has_type(v, sort)]
            pools[key] = list(itertools.islice(
                _candidates(sort, budget, sorted_hints), budget.max_candidates)) or [None]
        return pools[key]

    out = []
    for _ in range(attempts):
        sigma = {}
        for name, sort in gamma.bindings:
            choice = rng.choice(pool(sort))
            if choice is None:
                break
            sigma[name] = choice
        else:
            slots = []
            for name, sort in phi_type.binders:
                choice = rng.choice(pool(sort))
                if choice is None:
                    break
                slots.append(choice)
            if len(slots) != len(phi_type.binders):
                continue
            _repair(sigma, binder_names, slots, phi_type, gamma, measures)
            stack = tuple(slots)
            if stack_models(sigma, gamma, stack, phi_type, budget, measures) is V_TRUE:
                out.append((sigma, stack))
    return out


def _repair(sigma, binder_names, slots, phi_type, gamma, measures):
    """Overwrite proposal slots pinned by `x = t` conjuncts (a few fixpoint
    passes, since pins may chain)."""
    for _ in range(3):
        comb = dict(sigma)
        comb.update({n: v for n, v in zip(binder_names, slots)})
        changed = False
        for c in conjuncts(phi_type.pred):
            match c:
                case FEq(TmVar(name), t) | FEq(t, TmVar(name)):
                    if name not in free_vars_term(t) and free_vars_term(t) <= set(comb):
                        try:
                            v = eval_term(comb, gamma, t, measures)
                        except EvalError:
                            continue
                        if name in binder_names:
                            i = binder_names.index(name)
                            if slots[i] != v:
                                slots[i] = v
                                changed = True
                        elif name in sigma and sigma[name] != v:
                            sigma[name] = v
                            changed = True
                case _:
                    pass
        if not changed:
            return
