"""Episode results and the aggregate metrics (SR, Pr, SRAT, FP, TNF).

Attempted target: its query was issued to the pipeline. In multion mode an
episode stops at the first target that is not found, so later targets are
unattempted. TNF counts every attempted target whose search ended without a
FOUND call, whether the agent gave up or ran out of steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from scipy.stats import beta

from .errors import InvariantViolation

MODES = ("multion", "realworld")


class Outcome(str, Enum):
    FOUND = "found"
    FALSE_POSITIVE = "false_positive"
    TERMINATED_NOT_FOUND = "terminated_not_found"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class TargetOutcome:
    query: str
    goal_id: str
    outcome: Outcome
    steps: int
    path_length: float

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "goal_id": self.goal_id,
            "outcome": self.outcome.value,
            "steps": self.steps,
            "path_length": self.path_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TargetOutcome":
        return cls(d["query"], d["goal_id"], Outcome(d["outcome"]), int(d["steps"]), float(d["path_length"]))


@dataclass
class EpisodeResult:
    episode_id: str
    mode: str
    seed: int
    pipeline: str
    config_fingerprint: str
    total_targets: int = 3
    outcomes: list[TargetOutcome] = field(default_factory=list)
    aborted: str | None = None  # set when an internal invariant broke mid-episode

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvariantViolation(f"unknown mode {self.mode!r}")
        if len(self.outcomes) > self.total_targets:
            raise InvariantViolation("more outcomes than targets")
        if self.mode == "multion":
            for o in self.outcomes[:-1]:
                if o.outcome is not Outcome.FOUND:
                    raise InvariantViolation("multion episode continued past a non-found target")

    @property
    def n_found(self) -> int:
        return sum(o.outcome is Outcome.FOUND for o in self.outcomes)

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "mode": self.mode,
            "seed": self.seed,
            "pipeline": self.pipeline,
            "config_fingerprint": self.config_fingerprint,
            "total_targets": self.total_targets,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "aborted": self.aborted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeResult":
        return cls(
            d["episode_id"],
            d["mode"],
            int(d["seed"]),
            d["pipeline"],
            d["config_fingerprint"],
            int(d.get("total_targets", 3)),
            [TargetOutcome.from_dict(o) for o in d.get("outcomes", [])],
            d.get("aborted"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return (lo, hi)


@dataclass
class Rate:
    value: float
    numerator: int | None = None
    denominator: int | None = None
    ci: tuple[float, float] | None = None

    @classmethod
    def of(cls, k: int, n: int, value: float | None = None) -> "Rate":
        v = (k / n if n else 0.0) if value is None else value
        return cls(v, k, n, clopper_pearson(k, n))

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "ci": list(self.ci) if self.ci is not None else None,
        }

    @classmethod
    def from_dict(cls, d) -> "Rate":
        if isinstance(d, (int, float)):
            return cls(float(d))
        ci = d.get("ci")
        return cls(float(d["value"]), d.get("numerator"), d.get("denominator"), tuple(ci) if ci is not None else None)


RATE_NAMES = ("SR", "Pr", "SRAT", "FP", "TNF")


@dataclass
class MetricsReport:
    SR: Rate
    Pr: Rate
    SRAT: Rate
    FP: Rate
    TNF: Rate
    n_episodes: int | None = None
    n_targets: int | None = None
    n_attempted: int | None = None

    def rates(self) -> dict[str, Rate]:
        return {k: getattr(self, k) for k in RATE_NAMES}

    def to_dict(self) -> dict:
        d = {k: r.to_dict() for k, r in self.rates().items()}
        d["counts"] = {"episodes": self.n_episodes, "targets": self.n_targets, "attempted": self.n_attempted}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        counts = d.get("counts", {}) or {}
        return cls(
            *(Rate.from_dict(d[k]) for k in RATE_NAMES),
            n_episodes=counts.get("episodes"),
            n_targets=counts.get("targets"),
            n_attempted=counts.get("attempted"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def table(self) -> str:
        lines = [f"{'metric':<6} {'value':>7} {'count':>11}  95% CI"]
        for k, r in self.rates().items():
            count = f"{r.numerator}/{r.denominator}" if r.denominator is not None else "-"
            ci = f"[{r.ci[0]:.3f}, {r.ci[1]:.3f}]" if r.ci else "-"
            lines.append(f"{k:<6} {r.value:>7.3f} {count:>11}  {ci}")
        return "\n".join(lines)


def aggregate(results: list[EpisodeResult]) -> MetricsReport:
    if not results:
        raise ValueError("aggregate needs at least one episode result")
    n_ep = len(results)
    all_found = sum(r.n_found == r.total_targets for r in results)
    found = sum(r.n_found for r in results)
    total = sum(r.total_targets for r in results)
    attempted = sum(len(r.outcomes) for r in results)
    fp = sum(o.outcome is Outcome.FALSE_POSITIVE for r in results for o in r.outcomes)
    tnf = sum(
        o.outcome in (Outcome.TERMINATED_NOT_FOUND, Outcome.BUDGET_EXHAUSTED) for r in results for o in r.outcomes
    )
    # Exact rational mean, rounded once, so the value does not depend on result order.
    pr_mean = float(sum(Fraction(r.n_found, r.total_targets) for r in results) / n_ep)
    return MetricsReport(
        SR=Rate.of(all_found, n_ep),
        Pr=Rate.of(found, total, value=pr_mean),
        SRAT=Rate.of(found, attempted),
        FP=Rate.of(fp, attempted),
        TNF=Rate.of(tnf, attempted),
        n_episodes=n_ep,
        n_targets=total,
        n_attempted=attempted,
    )
