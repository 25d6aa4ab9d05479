"""A/B harness: deterministic arm assignment, engagement lift with Welch's
t-test on per-user totals, and guardrail verdicts."""

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import DegenerateSampleError

GUARDRAIL_PASS = "pass"
GUARDRAIL_FAIL = "fail"
GUARDRAIL_INCONCLUSIVE = "inconclusive"


def assign_arm(user_id: int, salt: str, weights: list[float]) -> int:
    """Stable hash bucketing of a user into weighted arms."""
    w = np.asarray(weights, dtype=np.float64)
    if len(w) == 0 or np.any(w <= 0):
        raise ValueError("weights must be positive")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()}")
    digest = hashlib.blake2b(f"{salt}:{user_id}".encode(),
                             digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2.0 ** 64
    return int(np.searchsorted(np.cumsum(w), u, side="right"))


def assign_arms(user_ids: np.ndarray, salt: str,
                weights: list[float]) -> np.ndarray:
    return np.fromiter((assign_arm(int(u), salt, weights) for u in user_ids),
                       dtype=np.int64, count=len(user_ids))


@dataclass(frozen=True)
class LiftResult:
    lift_percent: float
    p_value: float
    degenerate: bool = False


def lift_and_pvalue(control, treatment) -> LiftResult:
    """Relative mean lift (percent) and two-sided Welch p-value.

    Zero variance in both samples is flagged degenerate: p=1 for equal
    means, p=0 otherwise.
    """
    c = np.asarray(control, dtype=np.float64)
    t = np.asarray(treatment, dtype=np.float64)
    if len(c) < 2 or len(t) < 2:
        raise ValueError("both samples need n >= 2")
    mc, mt = c.mean(), t.mean()
    if mc == 0.0:
        raise DegenerateSampleError("control mean is zero; lift undefined")
    lift = 100.0 * (mt - mc) / mc
    vc, vt = c.var(ddof=1), t.var(ddof=1)
    se2 = vc / len(c) + vt / len(t)
    if se2 == 0.0:
        return LiftResult(lift_percent=lift,
                          p_value=1.0 if mt == mc else 0.0, degenerate=True)
    tstat = (mt - mc) / np.sqrt(se2)
    df = se2 ** 2 / ((vc / len(c)) ** 2 / (len(c) - 1)
                     + (vt / len(t)) ** 2 / (len(t) - 1))
    p = 2.0 * float(sps.t.sf(abs(tstat), df))
    return LiftResult(lift_percent=float(lift), p_value=min(1.0, p))


def guardrail_verdict(lift_percent: float, p_value: float,
                      min_lift: float = 0.0, alpha: float = 0.05) -> str:
    """Fail on a significant regression, pass when lift clears the bar,
    inconclusive otherwise."""
    if lift_percent < min_lift and p_value < alpha:
        return GUARDRAIL_FAIL
    if lift_percent >= min_lift:
        return GUARDRAIL_PASS
    return GUARDRAIL_INCONCLUSIVE


def guardrail_check(report, min_lift: float = 0.0,
                    alpha: float = 0.05) -> str:
    """Overall verdict for a report: fail dominates, then inconclusive."""
    verdicts = [guardrail_verdict(r.lift_percent, r.p_value, min_lift, alpha)
                for r in report.results]
    if GUARDRAIL_FAIL in verdicts:
        return GUARDRAIL_FAIL
    if GUARDRAIL_INCONCLUSIVE in verdicts:
        return GUARDRAIL_INCONCLUSIVE
    return GUARDRAIL_PASS


@dataclass(frozen=True)
class ArmSummary:
    name: str
    n_users: int
    mean_engagement: float
    std_engagement: float


@dataclass(frozen=True)
class TreatmentResult:
    name: str
    lift_percent: float
    p_value: float
    degenerate: bool
    guardrail: str


@dataclass(frozen=True)
class ExperimentReport:
    control_name: str
    arms: tuple        # ArmSummary, control first
    results: tuple     # TreatmentResult per non-control arm
    seed: int

    @property
    def lift_vs_control(self) -> float:
        return self.results[0].lift_percent

    @property
    def p_value(self) -> float:
        return self.results[0].p_value

    @property
    def guardrail(self) -> str:
        verdicts = {r.guardrail for r in self.results}
        if GUARDRAIL_FAIL in verdicts:
            return GUARDRAIL_FAIL
        if GUARDRAIL_INCONCLUSIVE in verdicts:
            return GUARDRAIL_INCONCLUSIVE
        return GUARDRAIL_PASS

    def to_json_dict(self) -> dict:
        return {
            "control": self.control_name,
            "seed": self.seed,
            "arms": [vars(a) for a in self.arms],
            "results": [vars(r) for r in self.results],
            "guardrail": self.guardrail,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            control_name=d["control"],
            seed=d["seed"],
            arms=tuple(ArmSummary(**a) for a in d["arms"]),
            results=tuple(TreatmentResult(**r) for r in d["results"]),
        )

    def to_table(self) -> str:
        """Aligned text table: Treatment | User Engagement Lift | p-value."""
        rows = [("Treatment", "User Engagement Lift", "p-value")]
        rows.append((f"{self.control_name} (control)", "-", "-"))
        for r in self.results:
            rows.append((r.name, f"{r.lift_percent:+.2f}%",
                         f"{r.p_value:.3f}"))
        widths = [max(len(row[i]) for row in rows) for i in range(3)]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(widths[j])
                                   for j, cell in enumerate(row)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


def run_experiment(config, seed: int | None = None,
                   workers: int = 1) -> ExperimentReport:
    """Simulate every configured arm and report lifts vs control.

    Fully deterministic per (config, seed); see pipeline.run_arm_experiment.
    """
    from .pipeline import run_arm_experiment
    return run_arm_experiment(config, seed=seed, workers=workers)


def compare_arms(control_name: str, arm_totals: dict[str, np.ndarray],
                 seed: int, min_lift: float = 0.0,
                 alpha: float = 0.05) -> ExperimentReport:
    """Assemble a report from per-arm per-user engagement totals."""
    if control_name not in arm_totals:
        raise ValueError(f"control arm {control_name!r} missing")
    summaries = []
    results = []
    order = [control_name] + [n for n in arm_totals if n != control_name]
    for name in order:
        x = np.asarray(arm_totals[name], dtype=np.float64)
        summaries.append(ArmSummary(
            name=name, n_users=len(x), mean_engagement=float(x.mean()),
            std_engagement=float(x.std(ddof=1)) if len(x) > 1 else 0.0))
    for name in order[1:]:
        res = lift_and_pvalue(arm_totals[control_name], arm_totals[name])
        results.append(TreatmentResult(
            name=name, lift_percent=res.lift_percent, p_value=res.p_value,
            degenerate=res.degenerate,
            guardrail=guardrail_verdict(res.lift_percent, res.p_value,
                                        min_lift, alpha)))
    return ExperimentReport(control_name=control_name,
                            arms=tuple(summaries), results=tuple(results),
                            seed=seed)
