"""SMT-LIB2 encoding of verification conditions and the solver driver.

A VC `forall xs:Ts. hyp => goal` is discharged by checking its negation:
the binders become declared constants guarded by sort predicates, the
hypothesis's prenex existentials are skolemized, the goal is asserted
negated, and the solver decides satisfiability (unsat means verified).

Michelson-specific encodings follow the unquantified style throughout:
pairs and lists are algebraic datatypes; operations are a datatype with one
constructor per payload-sort instantiation plus an opaque spare, giving
injectivity without axioms; overloaded symbols (pack, call, measures) are
monomorphized by name mangling; measure definitions are never asserted as
quantified axioms but instantiated at the cons cells occurring in the VC;
sorts with real content (nat and containers of nat) contribute sort
predicates at every binder and quantifier.
"""

from __future__ import annotations

import hashlib
import os
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .logic import (
    FCall, FCallErr, FEq, FExists, FNot, FOr, FTrue, Formula, SortError,
    TmCons, TmLit, TmMangled, TmMeasure, TmPair, TmPlus, TmTransfer, TmVar,
    TypeEnv, free_vars_term, is_and, prenex_exists, sort_of_term,
    subst_term_in_term,
)
from .syntax import (
    NIL, SimpleType, TAddress, TArrow, TBytes, TInt, TList, TNat,
    TOperation, TPair, VAddress, VBytes, VCode, VCons, VInt, VNil, VPair,
    VTransfer, Value, principal_type,
)
from .verifier import VerificationCondition


class EncodingError(Exception):
    pass


class SolverError(Exception):
    """Solver process failure (spawn, IO, malformed output); distinct from
    an `unknown` verdict."""


@dataclass(frozen=True)
class SolverVerdict:
    kind: str  # verified | refuted | unknown
    model: Optional[str] = None
    time_ms: float = 0.0


@dataclass
class SolverConfig:
    solver_cmd: Optional[str] = None
    timeout: float = 10.0

    def command(self) -> list:
        cmd = self.solver_cmd or os.environ.get("MMV_SOLVER") or default_solver_command()
        return shlex.split(cmd)


def default_solver_command() -> str:
    bridge = Path(__file__).with_name("z3bridge.mjs")
    return f"node {bridge}"


# ---------------------------------------------------------------------------
# Name mangling
# ---------------------------------------------------------------------------


def mangle_sort(t: SimpleType, operand: bool = False) -> str:
    match t:
        case TInt():
            return "int"
        case TNat():
            return "nat"
        case TBytes():
            return "bytes"
        case TAddress():
            return "address"
        case TOperation():
            return "operation"
        case TPair(a, b):
            return f"pair!{mangle_sort(a, True)}!{mangle_sort(b, True)}"
        case TList(e):
            return f"list!{mangle_sort(e, True)}"
        case TArrow(a, b):
            inner = f"{mangle_sort(a, True)}!to!{mangle_sort(b, True)}"
            return f"lp!{inner}!rp" if operand else inner
    raise EncodingError(f"not a sort: {t!r}")


def mangle(base: str, inst: SimpleType) -> str:
    """Deterministic injective SMT symbol for an overloaded base name at a
    sort instantiation, e.g. pack!int, call!int!to!int."""
    return f"{base}!{mangle_sort(inst)}"


def demangle(symbol: str):
    """Inverse of `mangle`; raises EncodingError on malformed symbols."""
    base, sep, rest = symbol.partition("!")
    if not sep:
        raise EncodingError(f"unmangled symbol {symbol!r}")
    toks = rest.split("!")
    sort, pos = _parse_sort(toks, 0)
    if pos != len(toks):
        raise EncodingError(f"trailing tokens in {symbol!r}")
    return base, sort


def _parse_sort(toks, pos):
    left, pos = _parse_operand(toks, pos)
    if pos < len(toks) and toks[pos] == "to":
        right, pos = _parse_sort(toks, pos + 1)
        return TArrow(left, right), pos
    return left, pos


def _parse_operand(toks, pos):
    if pos >= len(toks):
        raise EncodingError("truncated mangled sort")
    tok = toks[pos]
    atoms = {"int": TInt(), "nat": TNat(), "bytes": TBytes(),
             "address": TAddress(), "operation": TOperation()}
    if tok in atoms:
        return atoms[tok], pos + 1
    if tok == "pair":
        a, pos = _parse_operand(toks, pos + 1)
        b, pos = _parse_operand(toks, pos)
        return TPair(a, b), pos
    if tok == "list":
        e, pos = _parse_operand(toks, pos + 1)
        return TList(e), pos
    if tok == "lp":
        inner, pos = _parse_sort(toks, pos + 1)
        if pos >= len(toks) or toks[pos] != "rp":
            raise EncodingError("unbalanced lp/rp in mangled sort")
        return inner, pos + 1
    raise EncodingError(f"unknown sort token {tok!r}")


def _sym(name: str) -> str:
    """SMT-legal symbol for an internal identifier (`#` from the fresh-name
    scheme cannot occur in user identifiers, so this stays injective)."""
    return name.replace("#", "!")


# ---------------------------------------------------------------------------
# Theory context
# ---------------------------------------------------------------------------


@dataclass
class TheoryContext:
    """Per-contract encoding context: measures, and the memo table for
    discharged scripts."""

    measures: tuple = ()
    instantiation_depth: int = 8
    cache: dict = field(default_factory=dict)


class _Emitter:
    """Collects declarations on demand while formulas are rendered."""

    def __init__(self, ctx: TheoryContext):
        self.ctx = ctx
        self.need_addr = False
        self.need_code = False
        self.need_pair = False
        self.need_list = False
        self.transfer_insts: list = []  # payload sorts, first-use order
        self.need_operation = False
        self.addr_tokens: list = []
        self.code_literals: list = []
        self.fun_decls: list = []  # (symbol, (arg sorts...), result sort)
        self.fun_seen: set = set()
        self.need_sha_axiom = False
        self.sort_preds: list = []  # rendered define-fun-rec texts, ordered
        self.sort_pred_seen: set = set()

    # -- sorts ---------------------------------------------------------

    def sort(self, t: SimpleType) -> str:
        match t:
            case TInt() | TNat():
                return "Int"
            case TBytes():
                return "String"
            case TAddress():
                self.need_addr = True
                return "Addr"
            case TOperation():
                self.need_operation = True
                self.need_addr = True
                return "Op"
            case TPair(a, b):
                self.need_pair = True
                return f"(Pr {self.sort(a)} {self.sort(b)})"
            case TList(e):
                self.need_list = True
                return f"(Lst {self.sort(e)})"
            case TArrow(_, _):
                self.need_code = True
                return "Code"
        raise EncodingError(f"not a sort: {t!r}")

    def transfer_ctor(self, payload: SimpleType) -> str:
        self.sort(TOperation())
        self.sort(payload)
        if payload not in self.transfer_insts:
            self.transfer_insts.append(payload)
        return mangle("transfer", payload)

    def addr(self, token: str) -> str:
        self.need_addr = True
        if token not in self.addr_tokens:
            self.addr_tokens.append(token)
        return f"addr!{self.addr_tokens.index(token)}"

    def code(self, value: VCode) -> str:
        self.need_code = True
        if value not in self.code_literals:
            self.code_literals.append(value)
        return f"code!{self.code_literals.index(value)}"

    def fun(self, symbol: str, args, res) -> str:
        """Declare an uninterpreted function on first use; `res` None means
        a boolean predicate."""
        if symbol not in self.fun_seen:
            self.fun_seen.add(symbol)
            rendered = "Bool" if res is None else self.sort(res)
            self.fun_decls.append((symbol, tuple(self.sort(a) for a in args),
                                   rendered, res))
        return symbol

    # -- sort predicates -------------------------------------------------

    def sort_predicate(self, t: SimpleType, sym: str) -> Optional[str]:
        """P_T(sym) as an SMT expression, or None when trivially true."""
        match t:
            case TNat():
                return f"(>= {sym} 0)"
            case TPair(a, b):
                pa = self.sort_predicate(a, f"(pr!fst {sym})")
                pb = self.sort_predicate(b, f"(pr!snd {sym})")
                parts = [p for p in (pa, pb) if p]
                if not parts:
                    return None
                return parts[0] if len(parts) == 1 else f"(and {' '.join(parts)})"
            case TList(e):
                if self.sort_predicate(e, "x") is None:
                    return None
                return f"({self._list_pred(t)} {sym})"
            case _:
                return None

    def _list_pred(self, t: TList) -> str:
        """Auxiliary recursive element predicate for a nat-bearing list."""
        name = f"P!{mangle_sort(t)}"
        if name not in self.sort_pred_seen:
            self.sort_pred_seen.add(name)
            sort = self.sort(t)
            inner = self.sort_predicate(t.elem, "(lst!head l)")
            body = (f"(ite ((_ is lst!nil) l) true "
                    f"(and {inner} ({name} (lst!tail l))))")
            self.sort_preds.append(
                f"(define-fun-rec {name} ((l {sort})) Bool {body})")
        return name

    # -- assembly ----------------------------------------------------------

    def declarations(self) -> list:
        out = []
        if self.need_addr:
            out.append("(declare-sort Addr 0)")
        if self.need_code:
            out.append("(declare-sort Code 0)")
        if self.need_pair:
            out.append("(declare-datatypes ((Pr 2)) ((par (X Y) "
                       "((pr!mk (pr!fst X) (pr!snd Y))))))")
        if self.need_list:
            out.append("(declare-datatypes ((Lst 1)) ((par (X) "
                       "((lst!nil) (lst!cons (lst!head X) (lst!tail (Lst X)))))))")
        if self.need_operation:
            ctors = []
            for payload in self.transfer_insts:
                c = mangle("transfer", payload)
                ctors.append(f"({c} ({c}!arg {self.sort(payload)}) "
                             f"({c}!amt Int) ({c}!dst Addr))")
            ctors.append("(op!other (op!other!ix Int))")
            out.append(f"(declare-datatypes ((Op 0)) (({' '.join(ctors)})))")
        out.extend(self.sort_preds)
        for i, _tok in enumerate(self.addr_tokens):
            out.append(f"(declare-const addr!{i} Addr)")
        if len(self.addr_tokens) > 1:
            names = " ".join(f"addr!{i}" for i in range(len(self.addr_tokens)))
            out.append(f"(assert (distinct {names}))")
        for i, _code in enumerate(self.code_literals):
            out.append(f"(declare-const code!{i} Code)")
        if len(self.code_literals) > 1:
            names = " ".join(f"code!{i}" for i in range(len(self.code_literals)))
            out.append(f"(assert (distinct {names}))")
        for symbol, args, res, _res_ty in self.fun_decls:
            out.append(f"(declare-fun {symbol} ({' '.join(args)}) {res})")
        if self.need_sha_axiom:
            out.append("(assert (forall ((x String)) "
                       "(= (str.len (sha256!bytes x)) 32)))")
        return out

    def codomain_axioms(self) -> list:
        """Quantified co-domain sort facts, emitted for nat-valued symbols
        only (all other sort predicates are trivial and skipped)."""
        out = []
        for symbol, args, _res, res_ty in self.fun_decls:
            pred = self.sort_predicate(res_ty, "__r") if res_ty is not None else None
            if pred is None:
                continue
            params = " ".join(f"(x{i} {a})" for i, a in enumerate(args))
            app = f"({symbol} {' '.join(f'x{i}' for i in range(len(args)))})"
            out.append(f"(assert (forall ({params}) {pred.replace('__r', app)}))")
        return out


# ---------------------------------------------------------------------------
# Formula and term encoding
# ---------------------------------------------------------------------------


def sort_predicate(t: SimpleType, sym: str) -> Optional[str]:
    """Characteristic predicate of a refined sort over an SMT symbol; None
    when trivially true (int, address, bytes, operation, arrows)."""
    return _Emitter(TheoryContext()).sort_predicate(t, sym)


def _encode_value(em: _Emitter, v: Value, sort: SimpleType) -> str:
    match v, sort:
        case VInt(n), _:
            return str(n) if n >= 0 else f"(- {-n})"
        case VAddress(token), _:
            return em.addr(token)
        case VBytes(data), _:
            return f'"{data.hex()}"'
        case VNil(), TList(_):
            return f"(as lst!nil {em.sort(sort)})"
        case VCons(h, t), TList(e):
            em.need_list = True
            return f"(lst!cons {_encode_value(em, h, e)} {_encode_value(em, v.tail, sort)})"
        case VPair(a, b), TPair(ta, tb):
            em.need_pair = True
            return f"(pr!mk {_encode_value(em, a, ta)} {_encode_value(em, b, tb)})"
        case VTransfer(arg, amount, dest), TOperation():
            payload = principal_type(arg)
            if payload is None:
                raise EncodingError("cannot determine transfer payload sort")
            ctor = em.transfer_ctor(payload)
            return (f"({ctor} {_encode_value(em, arg, payload)} "
                    f"{_encode_value(em, VInt(amount), TInt())} {em.addr(dest)})")
        case VCode(_), TArrow(_, _):
            return em.code(v)
    raise EncodingError(f"value {v!r} does not fit sort {sort!r}")


class _FormulaEncoder:
    def __init__(self, em: _Emitter, gamma: TypeEnv, measures):
        self.em = em
        self.gamma = gamma
        self.measures = measures

    def term_sort(self, t) -> SimpleType:
        return sort_of_term(self.gamma, t, self.measures)

    def term(self, t, expected: Optional[SimpleType] = None) -> str:
        em = self.em
        match t:
            case TmVar(name):
                return _sym(name)
            case TmLit(v):
                sort = expected if expected is not None else principal_type(v)
                if sort is None:
                    raise EncodingError(f"ambiguous literal {v!r}")
                return _encode_value(em, v, sort)
            case TmPair(a, b):
                em.need_pair = True
                ta = tb = None
                if isinstance(expected, TPair):
                    ta, tb = expected.fst, expected.snd
                return f"(pr!mk {self.term(a, ta)} {self.term(b, tb)})"
            case TmCons(h, tl):
                em.need_list = True
                te = expected.elem if isinstance(expected, TList) else None
                if te is None:
                    te = self.term_sort(h)
                return f"(lst!cons {self.term(h, te)} {self.term(tl, TList(te))})"
            case TmPlus(a, b):
                return f"(+ {self.term(a, TInt())} {self.term(b, TInt())})"
            case TmTransfer(a, m, d):
                payload = self.term_sort(a)
                ctor = em.transfer_ctor(payload)
                return (f"({ctor} {self.term(a, payload)} "
                        f"{self.term(m, TInt())} {self.term(d, TAddress())})")
            case TmMeasure(name, arg):
                m = {mm.name: mm for mm in self.measures}[name]
                symbol = mangle(name, m.arg_sort)
                em.fun(symbol, (m.arg_sort,), m.res_sort)
                return f"({symbol} {self.term(arg, m.arg_sort)})"
            case TmMangled(name, inst, arg):
                if name == "pack":
                    symbol = mangle("pack", inst)
                    em.fun(symbol, (inst,), TBytes())
                    return f"({symbol} {self.term(arg, inst)})"
                if name == "sha256":
                    em.fun("sha256!bytes", (TBytes(),), TBytes())
                    em.need_sha_axiom = True
                    return f"(sha256!bytes {self.term(arg, TBytes())})"
                raise EncodingError(f"unknown builtin {name!r}")
        raise EncodingError(f"not a term: {t!r}")

    def with_binding(self, name, sort) -> "_FormulaEncoder":
        gamma = self.gamma if name in self.gamma else self.gamma.extend(name, sort)
        return _FormulaEncoder(self.em, gamma, self.measures)

    def formula(self, phi: Formula) -> str:
        pair = is_and(phi)
        if pair is not None:
            parts = _flatten_and(phi)
            return f"(and {' '.join(self.formula(p) for p in parts)})"
        match phi:
            case FTrue():
                return "true"
            case FNot(FTrue()):
                return "false"
            case FEq(l, r):
                sort = self._eq_sort(l, r)
                return f"(= {self.term(l, sort)} {self.term(r, sort)})"
            case FCall(f, a, r):
                fs = self.term_sort(f)
                if not isinstance(fs, TArrow):
                    raise EncodingError("call on non-arrow sort")
                symbol = mangle("call", fs)
                self.em.fun(symbol, (fs, fs.arg), fs.res)
                return (f"(= ({symbol} {self.term(f, fs)} {self.term(a, fs.arg)}) "
                        f"{self.term(r, fs.res)})")
            case FCallErr(f, a, e):
                fs = self.term_sort(f)
                if not isinstance(fs, TArrow):
                    raise EncodingError("call_err on non-arrow sort")
                es = self.term_sort(e)
                flag = f"aborted!{mangle_sort(fs)}"
                self.em.fun(flag, (fs, fs.arg), None)
                # declared as Bool by special-casing below
                val = f"call_err!{mangle_sort(fs)}!err!{mangle_sort(es)}"
                self.em.fun(val, (fs, fs.arg), es)
                return (f"(and ({flag} {self.term(f, fs)} {self.term(a, fs.arg)}) "
                        f"(= ({val} {self.term(f, fs)} {self.term(a, fs.arg)}) "
                        f"{self.term(e, es)}))")
            case FNot(FExists(_, _, _)):
                binders, body = _forall_parts(phi)
                if binders is not None:
                    return self._quant("forall", binders, body, inner_neg=False)
                return f"(not {self.formula(phi.body)})"
            case FNot(b):
                return f"(not {self.formula(b)})"
            case FOr(_, _):
                parts = _flatten_or(phi)
                return f"(or {' '.join(self.formula(p) for p in parts)})"
            case FExists(x, sort, body):
                return self._quant("exists", [(x, sort)], body, inner_neg=False)
        raise EncodingError(f"not a formula: {phi!r}")

    def _quant(self, kind: str, binders, body, inner_neg: bool) -> str:
        enc = self
        rendered = []
        guards = []
        for name, sort in binders:
            rendered.append(f"({_sym(name)} {enc.em.sort(sort)})")
            guard = enc.em.sort_predicate(sort, _sym(name))
            if guard:
                guards.append(guard)
            enc = enc.with_binding(name, sort)
        inner = enc.formula(body)
        if kind == "exists":
            if guards:
                inner = f"(and {' '.join(guards)} {inner})"
        else:
            if guards:
                guard = guards[0] if len(guards) == 1 else f"(and {' '.join(guards)})"
                inner = f"(=> {guard} {inner})"
        return f"({kind} ({' '.join(rendered)}) {inner})"

    def _eq_sort(self, l, r) -> SimpleType:
        """Common sort of an equation; handles polymorphic nil literals by
        checking each side's inferred sort against the other."""
        from .logic import _check_sort

        try:
            ls = self.term_sort(l)
            _check_sort(self.gamma, r, ls, self.measures, ())
            return ls
        except SortError:
            pass
        try:
            rs = self.term_sort(r)
            _check_sort(self.gamma, l, rs, self.measures, ())
            return rs
        except SortError:
            try:
                return self.term_sort(l)
            except SortError:
                return self.term_sort(r)


def _flatten_and(phi) -> list:
    pair = is_and(phi)
    if pair is None:
        return [phi]
    return _flatten_and(pair[0]) + _flatten_and(pair[1])


def _flatten_or(phi) -> list:
    match phi:
        case FOr(l, r) if is_and(phi) is None:
            return _flatten_or(l) + _flatten_or(r)
    return [phi]


def _forall_parts(phi):
    """Recognize the forall encoding not(exists xs. not body); returns
    (binders, body) or (None, None)."""
    match phi:
        case FNot(inner):
            binders = []
            cur = inner
            while isinstance(cur, FExists):
                binders.append((cur.var, cur.sort))
                cur = cur.body
            if binders and isinstance(cur, FNot):
                return binders, cur.body
    return None, None


# ---------------------------------------------------------------------------
# Measure instantiation
# ---------------------------------------------------------------------------


def instantiate_measure_axioms(vc: VerificationCondition, measures, depth: int = 3) -> list:
    """Ground(ed) measure equations for a VC: every measure's nil equation,
    plus the cons equation instantiated at each syntactic cons cell in the
    hypothesis/goal, re-scanned after each round so instances growing from
    measure bodies are covered up to `depth` rounds.  No universally
    quantified measure axiom is ever produced."""
    if not measures:
        return []
    allowed = {n for n, _ in vc.binders}
    gamma = TypeEnv()
    for name, sort in vc.binders:
        gamma = gamma.extend(name, sort)
    hyp_binders, hyp_matrix = prenex_exists(vc.hypothesis)
    for name, sort in hyp_binders:
        gamma = gamma.extend(name, sort)
    allowed |= {n for n, _ in hyp_binders}

    facts = []
    for m in measures:
        facts.append(FEq(TmMeasure(m.name, TmLit(NIL)), m.nil_rhs))

    def cell_fits(cell, m) -> bool:
        try:
            return sort_of_term(gamma, cell, measures) == m.arg_sort
        except SortError:
            return False

    seen_cells = set()
    worklist = [hyp_matrix, vc.goal]
    for _round in range(max(depth, 1)):
        cells = []
        for phi in worklist:
            _collect_cons(phi, allowed, cells, seen_cells)
        if not cells:
            break
        new_facts = []
        for cell in cells:
            for m in measures:
                if not cell_fits(cell, m):
                    continue
                rhs = subst_term_in_term(m.cons_rhs, "h", cell.head)
                rhs = subst_term_in_term(rhs, "t", cell.tail)
                new_facts.append(FEq(TmMeasure(m.name, cell), rhs))
        facts.extend(new_facts)
        worklist = new_facts
    return facts


def _collect_cons(phi_or_term, allowed, out, seen):
    from .logic import term_of_value
    from .syntax import VCons as _VCons

    def visit_term(t):
        match t:
            case TmLit(v) if isinstance(v, _VCons):
                # list literals expose their cells like syntactic cons terms
                visit_term(term_of_value(v))
            case TmCons(h, tl):
                if t not in seen and free_vars_term(t) <= allowed:
                    seen.add(t)
                    out.append(t)
                visit_term(h)
                visit_term(tl)
            case TmPair(a, b) | TmPlus(a, b):
                visit_term(a)
                visit_term(b)
            case TmTransfer(a, b, c):
                visit_term(a)
                visit_term(b)
                visit_term(c)
            case TmMeasure(_, arg):
                visit_term(arg)
            case TmMangled(_, _, arg):
                visit_term(arg)
            case _:
                pass

    def visit(phi):
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

    if isinstance(phi_or_term, (TmVar, TmLit, TmCons, TmPair, TmPlus,
                                TmTransfer, TmMeasure, TmMangled)):
        visit_term(phi_or_term)
    else:
        visit(phi_or_term)


# ---------------------------------------------------------------------------
# Script assembly and discharge
# ---------------------------------------------------------------------------


def encode_vc(vc: VerificationCondition, ctx: TheoryContext) -> str:
    """Byte-deterministic SMT-LIB2 negation-check script for a VC."""
    em = _Emitter(ctx)
    gamma = TypeEnv()
    for name, sort in vc.binders:
        gamma = gamma.extend(name, sort)

    hyp_binders, hyp_matrix = prenex_exists(vc.hypothesis)
    for name, sort in hyp_binders:
        gamma = gamma.extend(name, sort)

    enc = _FormulaEncoder(em, gamma, ctx.measures)
    body = []
    for name, sort in vc.binders + tuple(hyp_binders):
        body.append(f"(declare-const {_sym(name)} {em.sort(sort)})")
        guard = em.sort_predicate(sort, _sym(name))
        if guard:
            body.append(f"(assert {guard})")
    if hyp_matrix != FTrue():
        body.append(f"(assert {enc.formula(hyp_matrix)})")
    body.append(f"(assert (not {enc.formula(vc.goal)}))")
    for fact in instantiate_measure_axioms(vc, ctx.measures, ctx.instantiation_depth):
        body.append(f"(assert {enc.formula(fact)})")
    body.extend(em.codomain_axioms())

    header = [f"; {vc.vc_id} {vc.origin}" + (f" span={vc.span}" if vc.span else ""),
              "(set-logic ALL)"]
    script = header + em.declarations() + body + ["(check-sat)", "(get-model)"]
    return "\n".join(script) + "\n"


def discharge(vc: VerificationCondition, ctx: TheoryContext,
              config: Optional[SolverConfig] = None) -> SolverVerdict:
    """Encode the VC, run the solver on it, and interpret the result.
    Verdicts are memoized by script content hash."""
    config = config or SolverConfig()
    script = encode_vc(vc, ctx)
    key = hashlib.sha256(script.encode()).hexdigest()
    if key in ctx.cache:
        return ctx.cache[key]
    verdict = run_solver(script, config)
    ctx.cache[key] = verdict
    return verdict


def run_solver(script: str, config: SolverConfig) -> SolverVerdict:
    if config.timeout is not None and config.timeout <= 0:
        return SolverVerdict("unknown", None, 0.0)
    start = time.monotonic()
    try:
        proc = subprocess.run(
            config.command(), input=script.encode(), capture_output=True,
            timeout=config.timeout)
    except subprocess.TimeoutExpired:
        return SolverVerdict("unknown", None, (time.monotonic() - start) * 1000)
    except OSError as exc:
        raise SolverError(f"cannot run solver {config.command()!r}: {exc}") from exc
    elapsed = (time.monotonic() - start) * 1000
    out = proc.stdout.decode(errors="replace")
    lines = [ln.strip() for ln in out.splitlines() if ln.strip()]
    first = lines[0] if lines else ""
    if first == "unsat":
        return SolverVerdict("verified", None, elapsed)
    if first == "sat":
        return SolverVerdict("refuted", "\n".join(lines[1:]), elapsed)
    if first == "unknown" or first == "timeout":
        return SolverVerdict("unknown", None, elapsed)
    raise SolverError(
        f"malformed solver output (rc={proc.returncode}): "
        f"{out[:200]!r} {proc.stderr.decode(errors='replace')[:200]!r}")


def discharge_all(vcs, ctx: TheoryContext, config: Optional[SolverConfig] = None,
                  jobs: int = 1) -> list:
    """Discharge a VC list, possibly concurrently; results follow VC order
    regardless of completion order."""
    config = config or SolverConfig()
    if jobs <= 1 or len(vcs) <= 1:
        return [discharge(vc, ctx, config) for vc in vcs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda vc: discharge(vc, ctx, config), vcs))
