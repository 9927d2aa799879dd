"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`.  The solver-facing
criteria drive the default external solver, so a working `node` with the
z3-solver package (or MMV_SOLVER pointing at another SMT-LIB2 solver) is
required.
"""

import itertools
import json
import random
import sys
import time
from pathlib import Path

import pytest

import genlib
from mmv.harness import soundness_harness
from mmv.interp import (
    OUT_OF_FUEL, Failed, Ok, exec_derivation_search, exec_seq,
)
from mmv.logic import (
    Budget, FEq, FExists, TRUE, MeasureDef, RefinementStackType, TmCons,
    TmLit, TmMeasure, TmPlus, TmVar, TypeEnv, V_FALSE, V_TRUE, V_UNKNOWN,
    eval_formula, f_and, f_implies, stack_models, term_of_value,
)
from mmv.parser import parse_contract
from mmv.simple import DIVERGES, generate_welltyped, simple_check_seq
from mmv.smt import SolverConfig, TheoryContext, discharge, discharge_all, encode_vc
from mmv.syntax import (
    BYTES, INT, NAT, NIL, OPERATION,
    Add, Car, Cdr, Cons, Dip, Drop, Dup, Exec, Failwith, If, IfCons, Iter,
    Lambda, Loop, Nil, Not, Pack, Pair, Push, Sha256, Swap, TArrow, TBytes,
    TList, TPair, VInt, VPair, erase, list_value, value_has_type,
)
from mmv.verifier import VerificationCondition, check_contract

CORPUS = Path(__file__).resolve().parents[1] / "src" / "mmv" / "corpus"
POSITIVE = ["identity.tz", "triangular_num.tz", "length.tz", "lambda_add.tz",
            "guard.tz", "transfer.tz"]
TWINS = ["identity_bad.tz", "triangular_num_bad.tz", "length_bad.tz",
         "lambda_add_bad.tz", "guard_bad.tz", "transfer_bad.tz"]

JOBS = 6


def _report(n, detail):
    print(f"\n[criterion {n:2d}] PASS - {detail}")


def _verify(path: Path):
    contract = parse_contract(path.read_text())
    result = check_contract(contract)
    ctx = TheoryContext(measures=contract.measures)
    verdicts = discharge_all(result.vcs, ctx, SolverConfig(timeout=10.0), jobs=JOBS)
    ok = all(v.kind == "verified" for v in verdicts)
    return contract, result, verdicts, ("VERIFIED" if ok else "UNVERIFIED")


def test_criterion_01_corpus_verification():
    slowest = 0.0
    for name in POSITIVE + TWINS:
        t0 = time.monotonic()
        _, _, _, verdict = _verify(CORPUS / name)
        dt = time.monotonic() - t0
        slowest = max(slowest, dt)
        expected = "UNVERIFIED" if name.endswith("_bad.tz") else "VERIFIED"
        assert verdict == expected, f"{name}: {verdict}"
        assert dt < 5.0, f"{name} took {dt:.1f}s"
    _report(1, f"6 positives VERIFIED, 6 twins UNVERIFIED, "
               f"slowest contract {slowest:.1f}s < 5s")


def test_criterion_02_empirical_soundness():
    t0 = time.monotonic()
    total = 0
    for name in POSITIVE:
        contract = parse_contract((CORPUS / name).read_text())
        report = soundness_harness(contract, samples=100, seed=0)
        assert report.ok, f"{name}: {report.failures}"
        total += report.sampled
    dt = time.monotonic() - t0
    assert dt < 60.0, f"harness took {dt:.1f}s"
    _report(2, f"{total} sampled runs across 6 contracts, zero definite "
               f"violations, {dt:.1f}s < 60s")


def test_criterion_03_lemma_suite():
    rng = random.Random(0)
    budget = Budget()
    decided = total = 0
    for _ in range(1000):
        gamma = genlib.rand_env(rng, 2)
        depth = rng.randint(0, 2)
        binders = tuple((f"s{i}", genlib.rand_sort(rng)) for i in range(depth))
        sort = genlib.rand_sort(rng)
        inner_env = gamma
        for n, t in binders:
            inner_env = inner_env.extend(n, t)
        phi = genlib.rand_formula(rng, inner_env.extend("xx", sort))
        v = genlib.rand_value(rng, sort)
        sigma = genlib.rand_sigma(rng, gamma)
        stack = tuple(genlib.rand_value(rng, t) for _, t in binders)
        total += 1

        s1 = stack_models(sigma, gamma, stack, RefinementStackType(
            binders, FExists("xx", sort, f_and(phi, FEq(TmVar("xx"), TmLit(v))))),
            budget)
        s2 = stack_models({**sigma, "xx": v}, gamma.extend("xx", sort), stack,
                          RefinementStackType(binders, phi), budget)
        s3 = stack_models(sigma, gamma, (v,) + stack, RefinementStackType(
            (("xx", sort),) + binders, phi), budget)
        if all(s is not V_UNKNOWN for s in (s1, s2, s3)):
            decided += 1
            assert s1 == s2 == s3, (phi, sigma, stack, v)
    assert decided / total >= 0.9
    _report(3, f"1000 instances, three statements agree on all decided, "
               f"{decided / total:.0%} decided >= 90%")


# ---------------------------------------------------------------------------
# criterion 4: exhaustive differential interpretation
# ---------------------------------------------------------------------------

_INTS4 = [VInt(i) for i in range(-3, 4)]
_LISTS4 = [list_value(c) for n in range(3)
           for c in itertools.product([VInt(-1), VInt(0), VInt(1)], repeat=n)]
_DEPTH_FUEL = 600


def _value_stacks():
    elems = _INTS4 + _LISTS4
    yield ()
    for a in elems:
        yield (a,)
    for a in elems:
        for b in elems:
            yield (a, b)


def _stack_type(stack):
    return tuple(TList(INT) if not isinstance(v, VInt) else INT for v in stack)


def _instr_options(ts):
    """Applicable (instr, out) pairs of size 1 for the exhaustive pool."""
    out = [(Push(INT, VInt(0)), (INT,) + ts), (Push(INT, VInt(1)), (INT,) + ts),
           (Nil(INT), (TList(INT),) + ts)]
    if len(ts) >= 1:
        out += [(Drop(), ts[1:]), (Dup(), (ts[0],) + ts),
                (Pack(), (BYTES,) + ts[1:])]
    if len(ts) >= 2:
        out += [(Swap(), (ts[1], ts[0]) + ts[2:]),
                (Pair(), (TPair(ts[0], ts[1]),) + ts[2:])]
    if len(ts) >= 1 and ts[0] == INT:
        out += [(Not(), ts), (Failwith(), DIVERGES)]
    if len(ts) >= 2 and ts[0] == INT and ts[1] == INT:
        out.append((Add(), (INT,) + ts[2:]))
    if len(ts) >= 1 and isinstance(ts[0], TPair):
        out += [(Car(), (ts[0].fst,) + ts[1:]), (Cdr(), (ts[0].snd,) + ts[1:])]
    if len(ts) >= 2 and isinstance(ts[1], TList) and ts[1].elem == ts[0]:
        out.append((Cons(), ts[1:]))
    if len(ts) >= 2 and isinstance(ts[1], TArrow) and ts[1].arg == ts[0]:
        out.append((Exec(), (ts[1].res,) + ts[2:]))
    if len(ts) >= 1 and isinstance(ts[0], TBytes):
        out.append((Sha256(), ts))
    return out


def _programs(ts, size, memo):
    """All simply typed instruction sequences of total size <= size."""
    key = (ts, size)
    if key in memo:
        return memo[key]
    results = {(): ts}
    if size <= 0 or ts is DIVERGES:
        memo[key] = results
        return results
    singles = list(_instr_options(ts))
    if size >= 2 and len(ts) >= 1:
        for body, out in _programs(ts[1:], size - 1, memo).items():
            singles.append((Dip(body),
                            DIVERGES if out is DIVERGES else (ts[0],) + out))
    if size >= 1 and len(ts) >= 1 and ts[0] == INT:
        branch_progs = _programs(ts[1:], size - 1, memo)
        for b1, out1 in branch_progs.items():
            for b2, out2 in branch_progs.items():
                if 1 + _size(b1) + _size(b2) > size:
                    continue
                joined = _unify(out1, out2)
                if joined is not None:
                    singles.append((If(b1, b2), joined))
        for b, out in branch_progs.items():
            if out is DIVERGES or out == (INT,) + ts[1:]:
                singles.append((Loop(b), ts[1:]))
    if size >= 1 and len(ts) >= 1 and ts[0] == TList(INT):
        tbody = _programs((INT, TList(INT)) + ts[1:], size - 1, memo)
        ebody = _programs(ts[1:], size - 1, memo)
        for b1, out1 in tbody.items():
            for b2, out2 in ebody.items():
                if 1 + _size(b1) + _size(b2) > size:
                    continue
                joined = _unify(out1, out2)
                if joined is not None:
                    singles.append((IfCons(b1, b2), joined))
        for b, out in _programs((INT,) + ts[1:], size - 1, memo).items():
            if out is DIVERGES or out == ts[1:]:
                singles.append((Iter(b), ts[1:]))
    if size >= 2:
        for b, out in _programs((INT,), size - 1, memo).items():
            if out is DIVERGES or out == (INT,):
                singles.append((Lambda(INT, INT, b), (TArrow(INT, INT),) + ts))

    for instr, out1 in singles:
        used = _size((instr,))
        if used > size:
            continue
        for rest, out2 in _programs(out1, size - used, memo).items():
            prog = (instr,) + rest
            if _size(prog) <= size:
                results.setdefault(prog, out2)
    memo[key] = results
    return results


def _size(seq):
    total = 0
    for instr in seq:
        total += 1
        for attr in ("body", "then_branch", "else_branch"):
            sub = getattr(instr, attr, None)
            if isinstance(sub, tuple):
                total += _size(sub)
    return total


def _unify(a, b):
    if a is DIVERGES:
        return b
    if b is DIVERGES:
        return a
    return a if a == b else None


def test_criterion_04_interpreter_differential():
    sys.setrecursionlimit(100000)
    stacks_by_type = {}
    for stack in _value_stacks():
        stacks_by_type.setdefault(_stack_type(stack), []).append(stack)

    memo = {}
    checked = 0
    programs_total = 0
    t0 = time.monotonic()
    for ts, stacks in stacks_by_type.items():
        progs = [p for p in _programs(ts, 3, memo) if p != ()]
        programs_total += len(progs)
        for prog in progs:
            simple_check_seq(ts, prog)  # enumerator sanity: must not raise
            for stack in stacks:
                expected = exec_seq(stack, prog, _DEPTH_FUEL)
                got = exec_derivation_search(stack, prog, _DEPTH_FUEL)
                assert got == frozenset({expected}), (prog, stack, got, expected)
                checked += 1
    dt = time.monotonic() - t0
    assert checked > 100000
    _report(4, f"{programs_total} typed programs x stacks = {checked} runs, "
               f"search outcome singleton and equal everywhere ({dt:.0f}s)")


def test_criterion_05_simple_type_soundness():
    start_stacks = [
        ((INT, INT), (VInt(1), VInt(-2))),
        ((INT, TList(INT)), (VInt(3), list_value([VInt(1), VInt(2)]))),
        ((TPair(INT, INT),), (VPair(VInt(1), VInt(2)),)),
    ]
    ok_runs = 0
    for i in range(5000):
        ts, stack = start_stacks[i % len(start_stacks)]
        seq = generate_welltyped(ts, 6, i)
        predicted = simple_check_seq(ts, seq)
        outcome = exec_seq(stack, seq, 10000)  # StuckError would fail the test
        if isinstance(outcome, Ok) and predicted is not DIVERGES:
            assert len(outcome.stack) == len(predicted)
            for v, t in zip(outcome.stack, predicted):
                assert value_has_type(v, t), (seq, v, t)
            ok_runs += 1
    assert ok_runs > 2000
    _report(5, f"5000 generated programs, {ok_runs} normal runs all satisfy "
               f"the predicted type stack, zero stuck")


def test_criterion_06_conservativity():
    for name in POSITIVE:
        contract = parse_contract((CORPUS / name).read_text())
        result = check_contract(contract)
        simple = {}
        simple_check_seq((TPair(contract.parameter_ty, contract.storage_ty),),
                         contract.code, (), simple)
        points = 0
        for path, rst in result.trace:
            if path == ():
                continue
            expected = simple.get(path)
            if rst is None:
                assert expected is DIVERGES, (name, path)
            else:
                assert expected is not DIVERGES
                assert erase(rst.binders) == expected, (name, path)
            points += 1
        assert points >= len(contract.code)
    _report(6, "traced refinements erase to the simple type stacks at every "
               "program point of all VERIFIED contracts")


def test_criterion_07_sort_guards():
    ctx = TheoryContext()
    cfg = SolverConfig(timeout=10.0)
    goal = FExists("n", NAT, FEq(TmVar("x"), TmVar("n")))  # x >= 0

    t0 = time.monotonic()
    nat = discharge(VerificationCondition("vc-nat", (("x", NAT),), TRUE, goal,
                                          "Assert", None), ctx, cfg)
    t_nat = time.monotonic() - t0
    t0 = time.monotonic()
    intv = discharge(VerificationCondition("vc-int", (("x", INT),), TRUE, goal,
                                           "Assert", None), ctx, cfg)
    t_int = time.monotonic() - t0
    assert nat.kind == "verified" and intv.kind == "refuted"
    assert t_nat < 1.0 and t_int < 1.0, (t_nat, t_int)
    _report(7, f"forall x:nat. x>=0 verified ({t_nat * 1000:.0f} ms), "
               f"forall x:int. x>=0 refuted ({t_int * 1000:.0f} ms)")


def test_criterion_08_measure_pipeline(tmp_path):
    _, res, _, verdict = _verify(CORPUS / "length.tz")
    assert verdict == "VERIFIED"
    _, _, _, bad_verdict = _verify(CORPUS / "length_bad.tz")
    assert bad_verdict == "UNVERIFIED"

    contract = parse_contract((CORPUS / "length.tz").read_text())
    result = check_contract(contract)
    ctx = TheoryContext(measures=contract.measures)
    quantified_measure_lines = []
    for vc in result.vcs:
        for line in encode_vc(vc, ctx).splitlines():
            if "forall" in line and "len" in line.replace("lst!", ""):
                quantified_measure_lines.append(line)
    assert not quantified_measure_lines, quantified_measure_lines
    _report(8, "length.tz VERIFIED, +1 mutation UNVERIFIED, scripts contain "
               "only instantiated measure equalities")


def test_criterion_09_encoding_crosscheck():
    rng = random.Random(99)
    budget = Budget()
    gamma = TypeEnv()
    len_m = MeasureDef("len", TList(INT), INT, TmLit(VInt(0)),
                       TmPlus(TmLit(VInt(1)), TmMeasure("len", TmVar("t"))))
    ctx = TheoryContext(measures=(len_m,))

    def ground_atomic():
        if rng.random() < 0.2:
            lst = genlib.rand_value(rng, TList(INT))
            return FEq(TmMeasure("len", term_of_value(lst)),
                       TmLit(VInt(rng.randint(0, 3))))
        return genlib.rand_formula(rng, gamma, depth=2)

    picked = []
    attempts = 0
    while len(picked) < 500 and attempts < 4000:
        attempts += 1
        hyp = ground_atomic()
        goal = ground_atomic()
        truth = eval_formula({}, gamma, f_implies(hyp, goal), budget, (len_m,))
        if truth in (V_TRUE, V_FALSE):
            picked.append(
                (VerificationCondition(f"vc-{len(picked):03d}", (), hyp, goal,
                                       "Assert", None), truth))
    assert len(picked) == 500
    t0 = time.monotonic()
    verdicts = discharge_all([v for v, _ in picked], ctx,
                             SolverConfig(timeout=10.0), jobs=8)
    dt = time.monotonic() - t0
    agree = 0
    for (vc, truth), verdict in zip(picked, verdicts):
        expected = "verified" if truth is V_TRUE else "refuted"
        assert verdict.kind == expected, (vc.vc_id, truth, verdict.kind)
        agree += 1
    _report(9, f"500 ground QF VCs, solver verdict agrees with the bounded "
               f"evaluator on all decided instances ({dt:.0f}s)")


def test_criterion_10_determinism(tmp_path):
    from mmv.cli import main

    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["emit-smt", str(CORPUS / "length.tz"), str(out1)]) == 0
    assert main(["emit-smt", str(CORPUS / "length.tz"), str(out2)]) == 0
    names = sorted(p.name for p in out1.iterdir())
    assert names == sorted(p.name for p in out2.iterdir())
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    import io
    from contextlib import redirect_stdout

    reports = []
    for _ in range(2):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["verify", str(CORPUS / "guard.tz"), "--json",
                         "--seed", "0", "--jobs", str(JOBS)])
        assert code == 0
        reports.append(json.loads(buf.getvalue()))

    def strip(rep):
        rep = dict(rep)
        rep.pop("total_time_ms")
        rep["vcs"] = [{k: v for k, v in row.items() if k != "time_ms"}
                      for row in rep["vcs"]]
        return rep

    assert strip(reports[0]) == strip(reports[1])
    _report(10, "emit-smt byte-identical across runs; JSON reports identical "
                "modulo timing fields")
