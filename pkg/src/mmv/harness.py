"""Empirical soundness testing.

Samples input stacks satisfying a contract's precondition, runs the
interpreter on each, and checks that no normal result definitely violates
the declared postcondition and no abort definitely violates the exception
predicate.  A definite violation on a contract whose VCs all discharged
would be a counterexample to the soundness theorem, so any `False` verdict
fails the harness and serializes the offending input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .interp import Failed, Ok, OutOfFuel, StuckError, exec_seq
from .logic import (
    Budget, TypeEnv, V_FALSE, eval_formula, sample_stack,
)
from .parser import AnnotatedContract, pretty_value
from .syntax import TList, OPERATION, VPair, value_has_type
from .verifier import CheckResult, check_contract, collect_code_literals


@dataclass
class HarnessFailure:
    kind: str  # post | exception | stuck | shape
    sigma: dict
    stack: tuple
    detail: str


@dataclass
class HarnessReport:
    requested: int
    sampled: int
    ran: int
    normal: int
    aborted: int
    out_of_fuel: int
    failures: list = field(default_factory=list)

    @property
    def vacuous(self) -> bool:
        return self.sampled == 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def render(self) -> str:
        lines = [f"samples: {self.sampled}/{self.requested} pre-satisfying"
                 + ("  (0 samples: vacuous pass)" if self.vacuous else ""),
                 f"runs: {self.normal} normal, {self.aborted} aborted, "
                 f"{self.out_of_fuel} out of fuel"]
        if self.ok:
            lines.append("soundness: PASS (no definite post/exception violation)")
        else:
            lines.append(f"soundness: FAIL ({len(self.failures)} counterexamples)")
            for f in self.failures:
                lines.append(f"  [{f.kind}] sigma={_render_sigma(f.sigma)} "
                             f"stack={[pretty_value(v) for v in f.stack]} :: {f.detail}")
        return "\n".join(lines)


def _render_sigma(sigma: dict) -> str:
    return "{" + ", ".join(f"{k}={pretty_value(v)}" for k, v in sorted(sigma.items())) + "}"


def soundness_harness(contract: AnnotatedContract, samples: int = 100,
                      seed: int = 0, budget: Budget = None,
                      fuel: int = 100000,
                      result: CheckResult = None) -> HarnessReport:
    """Run the empirical soundness check; report-only (never raises for a
    violation)."""
    if result is None:
        result = check_contract(contract)
    base = budget or Budget()
    budget = Budget(int_bound=base.int_bound, list_len=base.list_len,
                    fuel=base.fuel, addr_pool=base.addr_pool,
                    code_pool=tuple(base.code_pool) + collect_code_literals(contract),
                    max_candidates=base.max_candidates)

    spec = contract.spec
    gamma0 = result.gamma0
    pairs = sample_stack(gamma0, result.pre, budget, attempts=samples,
                         rng_seed=seed, measures=contract.measures)
    report = HarnessReport(requested=samples, sampled=len(pairs),
                           ran=0, normal=0, aborted=0, out_of_fuel=0)

    post_env = gamma0.extend(spec.ops_name, TList(OPERATION)) \
                     .extend(spec.storage2_name, contract.storage_ty)
    exc_env = gamma0.extend(result.err_name, result.err_sort)

    for sigma, stack in pairs:
        report.ran += 1
        try:
            outcome = exec_seq(stack, contract.code, fuel)
        except StuckError as exc:
            report.failures.append(HarnessFailure("stuck", sigma, stack, str(exc)))
            continue
        match outcome:
            case Ok(out_stack):
                report.normal += 1
                if len(out_stack) != 1 or not isinstance(out_stack[0], VPair):
                    report.failures.append(HarnessFailure(
                        "shape", sigma, stack,
                        f"final stack is not a single pair: {out_stack!r}"))
                    continue
                final = out_stack[0]
                env = {**sigma, spec.ops_name: final.fst,
                       spec.storage2_name: final.snd}
                verdict = eval_formula(env, post_env, spec.post, budget,
                                       contract.measures)
                if verdict is V_FALSE:
                    report.failures.append(HarnessFailure(
                        "post", sigma, stack,
                        f"postcondition is definitely false on {pretty_value(final)}"))
            case Failed(value):
                report.aborted += 1
                if not value_has_type(value, result.err_sort):
                    report.failures.append(HarnessFailure(
                        "exception", sigma, stack,
                        f"abort value {pretty_value(value)} is not of the "
                        f"declared error sort"))
                    continue
                env = {**sigma, result.err_name: value}
                verdict = eval_formula(env, exc_env, spec.exc, budget,
                                       contract.measures)
                if verdict is V_FALSE:
                    report.failures.append(HarnessFailure(
                        "exception", sigma, stack,
                        f"exception predicate is definitely false on "
                        f"{pretty_value(value)}"))
            case OutOfFuel():
                report.out_of_fuel += 1
    return report
