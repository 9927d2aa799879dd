"""Forward strongest-postcondition engine over refinement stack types.

Walks an annotated contract from its desugared precondition, computing at
every program point the syntactically strongest refinement the typing
rules allow, and emits verification conditions at the declared sites: the
contract's normal and exceptional postconditions, loop-invariant entry and
preservation, lambda specifications, and user asserts.  `Assume` replaces
the computed type without a check and taints the result.

Exceptional control flow accumulates one existentially closed disjunct per
abort site (FAILWITH, or EXEC via `call_err`) over the declared error
binder; binders local to the site (stack names, DIP saves, iteration
ghosts) are closed off so each disjunct is well sorted under the contract
environment alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .logic import (
    FALSE, FCall, FCallErr, FEq, FExists, FOr, Formula,
    RefinementStackType, SortError, TmCons, TmLit, TmMangled, TmMeasure,
    TmPair, TmPlus, TmTransfer, TmVar, TypeEnv, f_and, f_exists, f_forall,
    f_implies, f_neq, f_or, rename_binders, subst_term, subst_term_in_term,
    term_of_value, wf_formula,
)
from .parser import Annotation, AnnotatedContract, LambdaSpec, StackTypePattern
from .simple import DIVERGES, SimpleTypeError, simple_check_seq
from .syntax import (
    BYTES, INT, NIL, OPERATION,
    Add, Block, Car, Cdr, Cons, Dip, Drop, Dup, Exec, Failwith, If, IfCons,
    Instr, InstrSeq, Iter, Lambda, Loop, Nil as NilInstr, Not, Pack, Pair,
    Push, Sha256, SimpleType, Swap, TArrow, TInt, TList, TNat, TPair,
    TransferTokens, VCode, VInt, Value, erase,
)

ORIGIN_CONTRACT_POST = "ContractPost"
ORIGIN_CONTRACT_EXC = "ContractExc"
ORIGIN_LOOP_ENTRY = "LoopInvEntry"
ORIGIN_LOOP_PRESERVE = "LoopInvPreserve"
ORIGIN_LAMBDA_PRE = "LambdaPre"
ORIGIN_LAMBDA_POST = "LambdaPost"
ORIGIN_LAMBDA_EXC = "LambdaExc"
ORIGIN_ASSERT = "Assert"


class CheckError(Exception):
    """Structural failure while checking a contract (shape mismatch,
    missing annotation, error-sort conflict)."""


@dataclass(frozen=True)
class VerificationCondition:
    vc_id: str
    binders: tuple  # ((name, SimpleType), ...) -- Gamma then stack binders
    hypothesis: Formula
    goal: Formula
    origin: str
    span: Optional[tuple]
    path: Optional[tuple] = None


@dataclass
class CheckResult:
    vcs: list
    trace: list  # [(path, RefinementStackType | None)]
    assume_tainted: bool
    gamma0: TypeEnv
    pre: RefinementStackType
    err_name: str
    err_sort: SimpleType
    code_literals: tuple


class CheckState:
    """Mutable walk state: the environment and current refinement type,
    plus the shared VC/exception/trace accumulators."""

    def __init__(self, gamma: TypeEnv, current: Optional[RefinementStackType],
                 measures=(), err_name: str = "err", err_sort: SimpleType = INT,
                 annotations=None, spans=None, shared=None):
        self.gamma = gamma
        self.current = current
        self.measures = tuple(measures)
        self.err_name = err_name
        self.err_sort = err_sort
        self.exc_parts: list = []
        self.annotations = annotations if annotations is not None else {}
        self.spans = spans if spans is not None else {}
        self.base_gamma = len(gamma.bindings)
        self.assume_tainted = False
        if shared is None:
            shared = {"vcs": [], "trace": [], "fresh": itertools.count(1)}
        self._shared = shared
        self.vcs: list = shared["vcs"]
        self.trace: list = shared["trace"]

    def fresh(self, base: str = "v") -> str:
        name = f"{base.split('#', 1)[0]}#{next(self._shared['fresh'])}"
        assert name not in self.gamma
        return name

    def child(self, gamma, current, err_name, err_sort) -> "CheckState":
        sub = CheckState(gamma, current, self.measures, err_name, err_sort,
                         self.annotations, self.spans, self._shared)
        return sub

    def locals_env(self) -> tuple:
        """Gamma bindings introduced after the contract-level prefix."""
        return self.gamma.bindings[self.base_gamma:]

    def emit(self, binders, hypothesis, goal, origin, path) -> VerificationCondition:
        vc = VerificationCondition(
            vc_id=f"vc-{len(self.vcs) + 1:03d}",
            binders=tuple(binders),
            hypothesis=hypothesis,
            goal=goal,
            origin=origin,
            span=self.spans.get(path),
            path=path,
        )
        self.vcs.append(vc)
        return vc

    def add_exc(self, site_formula: Formula):
        self.exc_parts.append(site_formula)

    def exc_accum(self) -> Formula:
        return f_or(*self.exc_parts) if self.exc_parts else FALSE


def _env_of(binders) -> TypeEnv:
    env = TypeEnv()
    for name, sort in binders:
        env = env.extend(name, sort)
    return env


def _wf(gamma: TypeEnv, phi: Formula, measures, what: str):
    try:
        wf_formula(gamma, phi, measures)
    except SortError as exc:
        raise CheckError(f"ill-sorted {what}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subtyping checks and measure weaving
# ---------------------------------------------------------------------------


def subtype_vc(state_or_gamma, phi1: RefinementStackType, phi2: RefinementStackType,
               origin: str, path: Optional[tuple] = None, state: Optional[CheckState] = None):
    """Emit the implication VC for `Gamma |- Phi1 <: Phi2`.

    The two binder stacks must erase to the same type stack; the goal is
    alpha-aligned positionally onto Phi1's binder names.  When called with
    a bare TypeEnv (no state) the VC is returned without being recorded.
    """
    if isinstance(state_or_gamma, CheckState):
        state = state_or_gamma
        gamma = state.gamma
    else:
        gamma = state_or_gamma
    if erase(phi1.binders) != erase(phi2.binders):
        raise CheckError(
            f"{origin}: stack shapes disagree: "
            f"{erase(phi1.binders)} vs {erase(phi2.binders)}")
    mapping = {old: new for (old, _), (new, _) in zip(phi2.binders, phi1.binders)}
    goal = rename_binders(phi2.pred, mapping)
    binders = gamma.bindings + tuple(phi1.binders)
    if state is not None:
        return state.emit(binders, phi1.pred, goal, origin, path)
    return VerificationCondition("vc-000", tuple(binders), phi1.pred, goal,
                                 origin, None, path)


def weave_measures(measures, elem_sort: SimpleType, cons_terms=None) -> list:
    """Defining equations of every measure over `list elem_sort`,
    instantiated at a freshly introduced list term: the nil equation, or
    the cons equation at (head, tail) when `cons_terms` is given."""
    out = []
    for m in measures:
        if m.arg_sort != TList(elem_sort):
            continue
        if cons_terms is None:
            out.append(FEq(TmMeasure(m.name, TmLit(NIL)), m.nil_rhs))
        else:
            head, tail = cons_terms
            rhs = subst_term_in_term(m.cons_rhs, "h", head)
            rhs = subst_term_in_term(rhs, "t", tail)
            out.append(FEq(TmMeasure(m.name, TmCons(head, tail)), rhs))
    return out


# ---------------------------------------------------------------------------
# Strongest postcondition per instruction
# ---------------------------------------------------------------------------


def strongest_post(state: CheckState, instr: Instr, path: tuple = ()) -> CheckState:
    """Advance `state.current` across one instruction, emitting any VCs and
    exception disjuncts the instruction's rule requires."""
    if state.current is None:
        return state  # unreachable code after an unconditional abort

    cur = state.current
    binders, phi = cur.binders, cur.pred

    def top(n: int):
        if len(binders) < n:
            raise CheckError(f"{type(instr).__name__}: stack too shallow at {path}")
        return binders[:n]

    def out(new_binders, new_phi):
        state.current = RefinementStackType(tuple(new_binders), new_phi)
        return state

    match instr:
        case Block(body):
            return _walk_seq(state, body, path + ("b",))
        case Dip(body):
            # the popped top moves into Gamma for the body; exception sites
            # inside close over it because it is a local beyond the contract
            # environment
            (x, tx), = top(1)
            saved_gamma = state.gamma
            state.gamma = state.gamma.extend(x, tx)
            state.current = RefinementStackType(binders[1:], phi)
            _walk_seq(state, body, path + ("b",))
            state.gamma = saved_gamma
            if state.current is None:
                return state
            return out(((x, tx),) + state.current.binders, state.current.pred)
        case Drop():
            (x, tx), = top(1)
            return out(binders[1:], FExists(x, tx, phi))
        case Dup():
            (x, tx), = top(1)
            x2 = state.fresh(x)
            return out(((x2, tx),) + binders, f_and(phi, FEq(TmVar(x2), TmVar(x))))
        case Swap():
            (x1, t1), (x2, t2) = top(2)
            return out(((x2, t2), (x1, t1)) + binders[2:], phi)
        case Push(ty, value):
            x = state.fresh("v")
            return out(((x, ty),) + binders,
                       f_and(phi, FEq(TmVar(x), term_of_value(value))))
        case Not():
            (x, tx), = top(1)
            x2 = state.fresh(x)
            cases = f_or(f_and(f_neq(TmVar(x), TmLit(VInt(0))), FEq(TmVar(x2), TmLit(VInt(0)))),
                         f_and(FEq(TmVar(x), TmLit(VInt(0))), FEq(TmVar(x2), TmLit(VInt(1)))))
            return out(((x2, INT),) + binders[1:],
                       FExists(x, tx, f_and(phi, cases)))
        case Add():
            (x1, t1), (x2, t2) = top(2)
            x3 = state.fresh("s")
            body = f_and(phi, FEq(TmPlus(TmVar(x1), TmVar(x2)), TmVar(x3)))
            return out(((x3, INT),) + binders[2:],
                       f_exists([(x1, t1), (x2, t2)], body))
        case Pair():
            (x1, t1), (x2, t2) = top(2)
            x3 = state.fresh("p")
            body = f_and(phi, FEq(TmPair(TmVar(x1), TmVar(x2)), TmVar(x3)))
            return out(((x3, TPair(t1, t2)),) + binders[2:],
                       f_exists([(x1, t1), (x2, t2)], body))
        case Car() | Cdr():
            (x, tx), = top(1)
            if not isinstance(tx, TPair):
                raise CheckError(f"CAR/CDR on non-pair at {path}")
            x1 = state.fresh("a")
            x2 = state.fresh("d")
            body = f_and(phi, FEq(TmVar(x), TmPair(TmVar(x1), TmVar(x2))))
            if isinstance(instr, Car):
                keep, keep_ty, other, other_ty = x1, tx.fst, x2, tx.snd
            else:
                keep, keep_ty, other, other_ty = x2, tx.snd, x1, tx.fst
            return out(((keep, keep_ty),) + binders[1:],
                       f_exists([(x, tx), (other, other_ty)], body))
        case NilInstr(elem):
            x = state.fresh("l")
            facts = [FEq(TmVar(x), TmLit(NIL))] + weave_measures(state.measures, elem)
            return out(((x, TList(elem)),) + binders, f_and(phi, *facts))
        case Cons():
            (x1, t1), (x2, t2) = top(2)
            if not isinstance(t2, TList):
                raise CheckError(f"CONS on non-list at {path}")
            x3 = state.fresh("l")
            facts = [FEq(TmCons(TmVar(x1), TmVar(x2)), TmVar(x3))]
            facts += weave_measures(state.measures, t2.elem, (TmVar(x1), TmVar(x2)))
            return out(((x3, t2),) + binders[2:],
                       f_exists([(x1, t1), (x2, t2)], f_and(phi, *facts)))
        case If(then_branch, else_branch):
            (x, tx), = top(1)
            rest = binders[1:]
            pre_t = RefinementStackType(
                rest, FExists(x, tx, f_and(phi, f_neq(TmVar(x), TmLit(VInt(0))))))
            pre_e = RefinementStackType(
                rest, FExists(x, tx, f_and(phi, FEq(TmVar(x), TmLit(VInt(0))))))
            return _join_branches(state, (pre_t, then_branch, path + ("t",)),
                                  (pre_e, else_branch, path + ("e",)))
        case IfCons(then_branch, else_branch):
            (x, tx), = top(1)
            if not isinstance(tx, TList):
                raise CheckError(f"IF_CONS on non-list at {path}")
            rest = binders[1:]
            x1 = state.fresh("h")
            x2 = state.fresh("t")
            cons_facts = [FEq(TmCons(TmVar(x1), TmVar(x2)), TmVar(x))]
            cons_facts += weave_measures(state.measures, tx.elem, (TmVar(x1), TmVar(x2)))
            pre_t = RefinementStackType(
                ((x1, tx.elem), (x2, tx)) + rest,
                FExists(x, tx, f_and(phi, *cons_facts)))
            nil_facts = [FEq(TmVar(x), TmLit(NIL))] + weave_measures(state.measures, tx.elem)
            pre_e = RefinementStackType(rest, FExists(x, tx, f_and(phi, *nil_facts)))
            return _join_branches(state, (pre_t, then_branch, path + ("t",)),
                                  (pre_e, else_branch, path + ("e",)))
        case Loop(body):
            return _loop(state, body, path)
        case Iter(body):
            return _iter(state, body, path)
        case Lambda(arg_ty, res_ty, body):
            return _lambda(state, arg_ty, res_ty, body, path)
        case Exec():
            (x1, t1), (x2, t2) = top(2)
            if not isinstance(t2, TArrow) or t2.arg != t1:
                raise CheckError(f"EXEC shape mismatch at {path}")
            x3 = state.fresh("r")
            call_fact = FCall(TmVar(x2), TmVar(x1), TmVar(x3))
            normal = f_exists([(x1, t1), (x2, t2)], f_and(phi, call_fact))
            err_fact = FCallErr(TmVar(x2), TmVar(x1), TmVar(state.err_name))
            site = f_and(phi, err_fact)
            close = [(x1, t1), (x2, t2)] + list(binders[2:]) + \
                [(n, t) for n, t in reversed(state.locals_env())]
            state.add_exc(f_exists(close, site))
            return out(((x3, t2.res),) + binders[2:], normal)
        case TransferTokens(arg_ty):
            (x1, t1), (x2, t2), (x3, t3) = top(3)
            x4 = state.fresh("op")
            fact = FEq(TmVar(x4), TmTransfer(TmVar(x1), TmVar(x2), TmVar(x3)))
            return out(((x4, OPERATION),) + binders[3:],
                       f_exists([(x1, t1), (x2, t2), (x3, t3)], f_and(phi, fact)))
        case Failwith():
            (x, tx), = top(1)
            if tx != state.err_sort:
                raise CheckError(
                    f"FAILWITH operand sort {tx} conflicts with the declared "
                    f"exception sort {state.err_sort}")
            site = f_and(phi, FEq(TmVar(x), TmVar(state.err_name)))
            close = [(x, tx)] + list(binders[1:]) + \
                [(n, t) for n, t in reversed(state.locals_env())]
            state.add_exc(f_exists(close, site))
            state.current = None
            return state
        case Pack():
            (x, tx), = top(1)
            x2 = state.fresh("b")
            fact = FEq(TmVar(x2), TmMangled("pack", tx, TmVar(x)))
            return out(((x2, BYTES),) + binders[1:],
                       FExists(x, tx, f_and(phi, fact)))
        case Sha256():
            (x, tx), = top(1)
            x2 = state.fresh("b")
            fact = FEq(TmVar(x2), TmMangled("sha256", BYTES, TmVar(x)))
            return out(((x2, BYTES),) + binders[1:],
                       FExists(x, tx, f_and(phi, fact)))
    raise CheckError(f"unsupported instruction {instr!r}")


def _join_branches(state: CheckState, left, right) -> CheckState:
    pre_l, body_l, path_l = left
    pre_r, body_r, path_r = right
    gamma_before = state.gamma

    state.current = pre_l
    _walk_seq(state, body_l, path_l)
    out_l = state.current
    assert state.gamma == gamma_before

    state.current = pre_r
    _walk_seq(state, body_r, path_r)
    out_r = state.current
    assert state.gamma == gamma_before

    if out_l is None and out_r is None:
        state.current = None
        return state
    if out_l is None:
        state.current = out_r
        return state
    if out_r is None:
        state.current = out_l
        return state
    if erase(out_l.binders) != erase(out_r.binders):
        raise CheckError("IF branches produce different stack shapes")
    joined = tuple((state.fresh("j"), t) for t in erase(out_l.binders))
    lmap = {old: new for (old, _), (new, _) in zip(out_l.binders, joined)}
    rmap = {old: new for (old, _), (new, _) in zip(out_r.binders, joined)}
    state.current = RefinementStackType(
        joined, FOr(rename_binders(out_l.pred, lmap), rename_binders(out_r.pred, rmap)))
    return state


def _expand_pattern(state: CheckState, pat: StackTypePattern, what: str) -> RefinementStackType:
    """Materialize an annotation's stack pattern against the computed
    stack: binder types must match positions exactly, and the `_` tail
    expands to fresh unconstrained binders."""
    if state.current is None:
        raise CheckError(f"{what}: annotation on unreachable code")
    shape = erase(state.current.binders)
    names = [n for n, _ in pat.binders]
    if pat.rest:
        if len(pat.binders) > len(shape):
            raise CheckError(f"{what}: pattern deeper than the stack")
    elif len(pat.binders) != len(shape):
        raise CheckError(f"{what}: pattern depth {len(pat.binders)} "
                         f"!= stack depth {len(shape)}")
    for (name, ty), actual in zip(pat.binders, shape):
        if ty != actual:
            raise CheckError(f"{what}: binder {name!r} declares {ty}, stack has {actual}")
    for name in names:
        if name in state.gamma:
            raise CheckError(f"{what}: binder {name!r} collides with a variable in scope")
    rest = tuple((state.fresh("r"), t) for t in shape[len(pat.binders):])
    binders = tuple(pat.binders) + rest
    _wf(state.gamma.concat(_env_of(binders)), pat.pred, state.measures, what)
    return RefinementStackType(binders, pat.pred)


def _loop(state: CheckState, body: InstrSeq, path: tuple) -> CheckState:
    inv_annots = [a for a in state.annotations.get(path, []) if a.kind == "loopinv"]
    if not inv_annots:
        raise CheckError("missing LoopInv (mandatory for a loop instruction)")
    inv = _expand_pattern(state, inv_annots[0].payload, "LoopInv")
    (x, tx) = inv.binders[0]
    if not isinstance(tx, (TInt, TNat)):
        raise CheckError("LOOP expects an int flag on top")

    subtype_vc(state, state.current, inv, ORIGIN_LOOP_ENTRY, path)

    body_pre = RefinementStackType(
        inv.binders[1:], FExists(x, tx, f_and(inv.pred, f_neq(TmVar(x), TmLit(VInt(0))))))
    gamma_before = state.gamma
    state.current = body_pre
    _walk_seq(state, body, path + ("b",))
    assert state.gamma == gamma_before
    if state.current is not None:
        subtype_vc(state, state.current, inv, ORIGIN_LOOP_PRESERVE, path)
    else:
        # the body always aborts; preservation holds vacuously
        fake = RefinementStackType(
            tuple((state.fresh("u"), t) for t in erase(inv.binders)), FALSE)
        subtype_vc(state, fake, inv, ORIGIN_LOOP_PRESERVE, path)

    state.current = RefinementStackType(
        inv.binders[1:], FExists(x, tx, f_and(inv.pred, FEq(TmVar(x), TmLit(VInt(0))))))
    return state


def _iter(state: CheckState, body: InstrSeq, path: tuple) -> CheckState:
    inv_annots = [a for a in state.annotations.get(path, []) if a.kind == "loopinv"]
    if not inv_annots:
        raise CheckError("missing LoopInv (mandatory for a loop instruction)")
    inv = _expand_pattern(state, inv_annots[0].payload, "LoopInv")
    (x, tx) = inv.binders[0]
    if not isinstance(tx, TList):
        raise CheckError("ITER expects a list on top")
    elem = tx.elem

    subtype_vc(state, state.current, inv, ORIGIN_LOOP_ENTRY, path)

    x1 = state.fresh("h")
    x2 = state.fresh("t")
    cons_facts = [FEq(TmCons(TmVar(x1), TmVar(x2)), TmVar(x))]
    cons_facts += weave_measures(state.measures, elem, (TmVar(x1), TmVar(x2)))
    body_pre = RefinementStackType(
        ((x1, elem),) + inv.binders[1:],
        FExists(x, tx, f_and(inv.pred, *cons_facts)))
    body_post = RefinementStackType(
        inv.binders[1:], FExists(x, tx, f_and(inv.pred, FEq(TmVar(x2), TmVar(x)))))

    gamma_before = state.gamma
    state.gamma = state.gamma.extend(x2, tx)
    state.current = body_pre
    _walk_seq(state, body, path + ("b",))
    if state.current is not None:
        subtype_vc(state, state.current, body_post, ORIGIN_LOOP_PRESERVE, path)
    else:
        fake = RefinementStackType(
            tuple((state.fresh("u"), t) for t in erase(body_post.binders)), FALSE)
        subtype_vc(state, fake, body_post, ORIGIN_LOOP_PRESERVE, path)
    state.gamma = gamma_before

    nil_facts = [FEq(TmVar(x), TmLit(NIL))] + weave_measures(state.measures, elem)
    state.current = RefinementStackType(
        inv.binders[1:], FExists(x, tx, f_and(inv.pred, *nil_facts)))
    return state


def _lambda(state: CheckState, arg_ty, res_ty, body, path) -> CheckState:
    annots = [a for a in state.annotations.get(path, []) if a.kind == "lambdannot"]
    if not annots:
        raise CheckError("missing LambdaAnnot (mandatory for LAMBDA)")
    spec: LambdaSpec = annots[0].payload
    err_sort = spec.exc_sort if spec.exc_sort is not None else INT
    exc_name = spec.exc_name if spec.exc_name != "_" else state.fresh("e")

    # the body is checked in isolation: ghosts plus an alias of the argument
    alias = state.fresh(spec.arg_name)
    gamma_b = TypeEnv()
    for name, ty in spec.ghosts:
        gamma_b = gamma_b.extend(name, ty)
    gamma_b = gamma_b.extend(alias, arg_ty)

    entry_pred = f_and(FEq(TmVar(alias), TmVar(spec.arg_name)), spec.pre)
    entry = RefinementStackType(((spec.arg_name, arg_ty),), entry_pred)
    env_entry = gamma_b.extend(spec.arg_name, arg_ty)
    _wf(env_entry, spec.pre, state.measures, "lambda precondition")

    child = state.child(gamma_b, entry, exc_name, err_sort)
    # entry condition is definitionally the annotated pre
    subtype_vc(child, entry, entry, ORIGIN_LAMBDA_PRE, path)
    _walk_seq(child, body, path + ("b",))

    post_goal_pred = subst_term(spec.post, spec.arg_name, TmVar(alias))
    _wf(gamma_b.extend(spec.res_name, res_ty), post_goal_pred,
        state.measures, "lambda postcondition")
    post_goal = RefinementStackType(((spec.res_name, res_ty),), post_goal_pred)
    if child.current is not None:
        subtype_vc(child, child.current, post_goal, ORIGIN_LAMBDA_POST, path)
    else:
        fake = RefinementStackType(((state.fresh("u"), res_ty),), FALSE)
        subtype_vc(child, fake, post_goal, ORIGIN_LAMBDA_POST, path)

    exc_goal = subst_term(spec.exc, spec.arg_name, TmVar(alias))
    _wf(gamma_b.extend(exc_name, err_sort), exc_goal, state.measures,
        "lambda exception condition")
    child.emit(gamma_b.bindings + ((exc_name, err_sort),), child.exc_accum(),
               exc_goal, ORIGIN_LAMBDA_EXC, path)

    # conjoin the call/call_err characterization over the new stack top;
    # the rule's single quantified fact is split into its normal and
    # aborting halves with the alias equality collapsed, both equivalent
    # transformations that keep each quantifier small enough for solvers
    f = state.fresh("f")
    ghost_quant = []
    mapping = {}
    for name, ty in spec.ghosts:
        mapping[name] = state.fresh(name)
        ghost_quant.append((mapping[name], ty))
    alias_q = state.fresh(spec.arg_name)
    res_q = state.fresh(spec.res_name)
    err_q = state.fresh(exc_name)

    pre_q = rename_binders(spec.pre, {**mapping, spec.arg_name: alias_q})
    post_q = rename_binders(spec.post, {**mapping, spec.arg_name: alias_q,
                                        spec.res_name: res_q})
    exc_q = rename_binders(spec.exc, {**mapping, spec.arg_name: alias_q,
                                      spec.exc_name: err_q})
    char_call = f_forall(
        ghost_quant + [(alias_q, arg_ty), (res_q, res_ty)],
        f_implies(pre_q,
                  f_implies(FCall(TmVar(f), TmVar(alias_q), TmVar(res_q)), post_q)))
    char_err = f_forall(
        ghost_quant + [(alias_q, arg_ty), (err_q, err_sort)],
        f_implies(pre_q,
                  f_implies(FCallErr(TmVar(f), TmVar(alias_q), TmVar(err_q)), exc_q)))

    cur = state.current
    state.current = RefinementStackType(
        ((f, TArrow(arg_ty, res_ty)),) + cur.binders,
        f_and(cur.pred, char_call, char_err))
    return state


def _walk_seq(state: CheckState, seq: InstrSeq, path: tuple) -> CheckState:
    for i, instr in enumerate(seq):
        ipath = path + (i,)
        annots = state.annotations.get(ipath, [])
        for ann in annots:
            if ann.placement == "pre" and ann.kind in ("assert", "assume"):
                _apply_assert_assume(state, ann, ipath)
        if any(a.kind == "loopinv" for a in annots) and not isinstance(instr, (Loop, Iter)):
            raise CheckError(f"LoopInv attached to a non-loop instruction at {ipath}")
        if any(a.kind == "lambdannot" for a in annots) and not isinstance(instr, Lambda):
            raise CheckError(f"LambdaAnnot attached to a non-lambda instruction at {ipath}")
        strongest_post(state, instr, ipath)
        state.trace.append((ipath, state.current))
        for ann in annots:
            if ann.placement == "post" and ann.kind in ("assert", "assume"):
                _apply_assert_assume(state, ann, ipath)
    return state


def _apply_assert_assume(state: CheckState, ann: Annotation, path: tuple):
    if state.current is None:
        return  # unreachable point; nothing to check or assume
    target = _expand_pattern(state, ann.payload, ann.kind.capitalize())
    if ann.kind == "assert":
        subtype_vc(state, state.current, target, ORIGIN_ASSERT, path)
    else:
        state.current = target
        state.assume_tainted = True


# ---------------------------------------------------------------------------
# Whole-contract checking
# ---------------------------------------------------------------------------


def collect_code_literals(contract: AnnotatedContract) -> tuple:
    """Code values occurring anywhere in the contract (PUSH payloads and
    LAMBDA bodies), for the oracle's arrow-sort candidate pool."""
    out = []

    def add(code: VCode):
        if code not in out:
            out.append(code)

    def visit_value(v: Value):
        match v:
            case VCode(body):
                add(v)
                visit_seq(body)
            case _:
                pass

    def visit_seq(seq):
        for instr in seq:
            match instr:
                case Push(_, v):
                    visit_value(v)
                case Lambda(a, r, b):
                    add(VCode(b))
                    visit_seq(b)
                case Block(b) | Dip(b) | Loop(b) | Iter(b):
                    visit_seq(b)
                case If(b1, b2) | IfCons(b1, b2):
                    visit_seq(b1)
                    visit_seq(b2)
                case _:
                    pass

    visit_seq(contract.code)
    return tuple(out)


def check_contract(contract: AnnotatedContract) -> CheckResult:
    """Run the forward engine over a parsed contract and emit its VC set."""
    spec = contract.spec
    param_ty, storage_ty = contract.parameter_ty, contract.storage_ty
    final_ty = TPair(TList(OPERATION), storage_ty)

    try:
        simple_out = simple_check_seq((TPair(param_ty, storage_ty),), contract.code)
    except SimpleTypeError as exc:
        raise CheckError(f"simple typing failed: {exc}") from exc
    if simple_out is DIVERGES:
        raise CheckError("the contract always aborts: its diverging stack "
                         "escapes to the final position")
    if simple_out != (final_ty,):
        raise CheckError(
            f"contract must end with (operation list, storage) pair; got {simple_out}")

    gamma0 = TypeEnv()
    for name, ty in spec.ghosts:
        gamma0 = gamma0.extend(name, ty)
    gamma0 = gamma0.extend(spec.param_name, param_ty)
    gamma0 = gamma0.extend(spec.storage_name, storage_ty)

    err_sort = spec.exc_sort if spec.exc_sort is not None else INT
    err_name = spec.exc_name if spec.exc_name != "_" else "err"

    _wf(gamma0, spec.pre, contract.measures, "contract precondition")
    post_env = gamma0.extend(spec.ops_name, TList(OPERATION)) \
                     .extend(spec.storage2_name, storage_ty)
    _wf(post_env, spec.post, contract.measures, "contract postcondition")
    exc_env = gamma0.extend(err_name, err_sort) if err_name not in gamma0 else None
    if exc_env is None:
        raise CheckError(f"exception binder {err_name!r} collides with a ghost")
    _wf(exc_env, spec.exc, contract.measures, "contract exception condition")

    annots = {}
    for pth, ann in contract.annotations:
        annots.setdefault(pth, []).append(ann)

    state = CheckState(gamma0, None, contract.measures, err_name, err_sort,
                       annots, contract.spans)
    s0 = state.fresh("s")
    pre = RefinementStackType(
        ((s0, TPair(param_ty, storage_ty)),),
        f_and(FEq(TmVar(s0), TmPair(TmVar(spec.param_name), TmVar(spec.storage_name))),
              spec.pre))
    state.current = pre
    state.trace.append(((), pre))

    _walk_seq(state, contract.code, ())

    # contract postcondition: destructure the final pair into the declared
    # (ops, storage') names, which is exact for the pair sort
    if state.current is not None:
        (rf, rt), = state.current.binders
        hyp = f_and(state.current.pred,
                    FEq(TmVar(rf), TmPair(TmVar(spec.ops_name), TmVar(spec.storage2_name))))
    else:
        rf, rt = state.fresh("u"), final_ty
        hyp = FALSE
    binders = gamma0.bindings + ((rf, rt), (spec.ops_name, TList(OPERATION)),
                                 (spec.storage2_name, storage_ty))
    state.emit(binders, hyp, spec.post, ORIGIN_CONTRACT_POST, ())

    state.emit(gamma0.bindings + ((err_name, err_sort),), state.exc_accum(),
               spec.exc, ORIGIN_CONTRACT_EXC, ())

    return CheckResult(
        vcs=list(state.vcs),
        trace=list(state.trace),
        assume_tainted=state.assume_tainted,
        gamma0=gamma0,
        pre=pre,
        err_name=err_name,
        err_sort=err_sort,
        code_literals=collect_code_literals(contract),
    )
