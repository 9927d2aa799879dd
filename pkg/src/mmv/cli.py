"""Command-line entry points.

    mmv verify   FILE      typecheck and discharge; VERIFIED/UNVERIFIED
    mmv run      FILE VAL  interpret on a (parameter, storage) input value
    mmv emit-smt FILE DIR  write one .smt2 script per VC plus an index
    mmv harness  FILE      empirical soundness check on sampled inputs

Exit codes: 0 verified/pass, 1 unverified/fail, 2 input or tool error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .harness import soundness_harness
from .interp import Failed, Ok, OutOfFuel, StuckError, exec_seq
from .logic import Budget
from .parser import ParseError, parse_contract, parse_value, pretty_value
from .simple import SimpleTypeError
from .smt import (
    SolverConfig, SolverError, TheoryContext, discharge_all, encode_vc,
)
from .syntax import TPair, value_has_type
from .verifier import CheckError, check_contract


@dataclass
class Report:
    file: str
    verdict: str  # VERIFIED | UNVERIFIED
    assume_tainted: bool
    rows: list  # (vc_id, origin, span, verdict kind, time_ms)
    total_ms: float

    def to_json(self) -> dict:
        return {
            "v": 1,
            "file": self.file,
            "verdict": self.verdict,
            "assume_tainted": self.assume_tainted,
            "vcs": [
                {"id": vc_id, "origin": origin,
                 "span": list(span) if span else None,
                 "verdict": kind, "time_ms": round(ms, 3)}
                for vc_id, origin, span, kind, ms in self.rows
            ],
            "total_time_ms": round(self.total_ms, 3),
        }

    def render(self) -> str:
        lines = [f"{self.file}: {self.verdict}"
                 + ("  [assume-tainted]" if self.assume_tainted else "")]
        for vc_id, origin, span, kind, ms in self.rows:
            where = f"  (at {span[0]}:{span[1]})" if span else ""
            lines.append(f"  {vc_id}  {origin:16s} {kind:9s} {ms:7.0f} ms{where}")
        lines.append(f"  total {self.total_ms:.0f} ms")
        return "\n".join(lines)


def _load(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SystemExit(_fail(f"cannot read {path}: {exc}"))
    return parse_contract(text)


def _fail(msg: str) -> int:
    print(f"mmv: {msg}", file=sys.stderr)
    return 2


def _solver_config(args) -> SolverConfig:
    timeout = args.timeout
    if timeout is None:
        env = os.environ.get("MMV_TIMEOUT")
        timeout = float(env) if env else 10.0
    return SolverConfig(solver_cmd=args.solver, timeout=timeout)


def cmd_verify(args) -> int:
    contract = _load(args.file)
    result = check_contract(contract)
    ctx = TheoryContext(measures=contract.measures)
    if args.emit_smt:
        _write_scripts(args.file, result.vcs, ctx, Path(args.emit_smt))
    start = time.monotonic()
    verdicts = discharge_all(result.vcs, ctx, _solver_config(args), jobs=args.jobs)
    total_ms = (time.monotonic() - start) * 1000
    rows = [(vc.vc_id, vc.origin, vc.span, v.kind, v.time_ms)
            for vc, v in zip(result.vcs, verdicts)]
    verdict = "VERIFIED" if all(v.kind == "verified" for v in verdicts) else "UNVERIFIED"
    report = Report(args.file, verdict, result.assume_tainted, rows, total_ms)
    if args.json:
        print(json.dumps(report.to_json(), sort_keys=True))
    else:
        print(report.render())
        for vc, v in zip(result.vcs, verdicts):
            if v.kind == "refuted" and v.model:
                print(f"  model for {vc.vc_id}:", file=sys.stderr)
                for line in v.model.splitlines():
                    print(f"    {line}", file=sys.stderr)
    return 0 if verdict == "VERIFIED" else 1


def cmd_run(args) -> int:
    contract = _load(args.file)
    value = parse_value(args.value)
    expected = TPair(contract.parameter_ty, contract.storage_ty)
    if not value_has_type(value, expected):
        return _fail(f"input value does not have type (parameter, storage) = "
                     f"pair {contract.parameter_ty} {contract.storage_ty}")
    try:
        outcome = exec_seq((value,), contract.code, args.fuel)
    except StuckError as exc:
        return _fail(f"stuck: {exc}")
    match outcome:
        case Ok(stack):
            print("Ok " + " |> ".join(pretty_value(v) for v in stack))
        case Failed(v):
            print(f"Failed {pretty_value(v)}")
        case OutOfFuel():
            print("OutOfFuel")
    return 0


def _write_scripts(file: str, vcs, ctx, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    index = {"v": 1, "file": file, "vcs": []}
    for vc in vcs:
        name = f"{vc.vc_id}-{vc.origin}.smt2"
        (outdir / name).write_text(encode_vc(vc, ctx))
        index["vcs"].append({"id": vc.vc_id, "origin": vc.origin, "file": name,
                             "span": list(vc.span) if vc.span else None})
    (outdir / "index.json").write_text(json.dumps(index, sort_keys=True, indent=1) + "\n")


def cmd_emit_smt(args) -> int:
    contract = _load(args.file)
    result = check_contract(contract)
    ctx = TheoryContext(measures=contract.measures)
    _write_scripts(args.file, result.vcs, ctx, Path(args.outdir))
    print(f"wrote {len(result.vcs)} scripts to {args.outdir}")
    return 0


def cmd_harness(args) -> int:
    contract = _load(args.file)
    budget = _parse_budget(args.budget)
    report = soundness_harness(contract, samples=args.samples, seed=args.seed,
                               budget=budget, fuel=args.fuel)
    print(report.render())
    return 0 if report.ok else 1


def _parse_budget(text):
    if not text:
        return None
    try:
        b, l = (int(p) for p in text.split(","))
    except ValueError:
        raise SystemExit(_fail("--budget expects B,L (e.g. 5,3)"))
    return Budget(int_bound=b, list_len=l)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="mmv", description=__doc__,
                                  formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="typecheck a contract and discharge its VCs")
    p.add_argument("file")
    p.add_argument("--solver", default=None, help="solver command template")
    p.add_argument("--timeout", type=float, default=None, help="per-VC timeout (s)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent VC discharges")
    p.add_argument("--emit-smt", default=None, metavar="DIR",
                   help="also write the encoded scripts")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="interpret a contract on an input value")
    p.add_argument("file")
    p.add_argument("value", help="input (parameter, storage) pair, e.g. '(10, 0)'")
    p.add_argument("--fuel", type=int, default=100000)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("emit-smt", help="write one .smt2 per VC plus an index")
    p.add_argument("file")
    p.add_argument("outdir")
    p.set_defaults(func=cmd_emit_smt)

    p = sub.add_parser("harness", help="empirical soundness check")
    p.add_argument("file")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", default=None, metavar="B,L")
    p.add_argument("--fuel", type=int, default=100000)
    p.set_defaults(func=cmd_harness)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        return _fail(f"parse error: {exc}")
    except (CheckError, SimpleTypeError) as exc:
        return _fail(str(exc))
    except SolverError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
