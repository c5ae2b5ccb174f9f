"""Plan-deviation monitoring, cause attribution, and revision.

Deviation is measured on the cumulative prefix: with k sub-periods
observed, dev = (sum(actual) - sum(planned[:k])) / sum(planned[:k]),
and the plan is flagged only when |dev| strictly exceeds the
threshold.

Attribution compares each candidate factor's own (planned, actual)
deviation against the flagged plan's: a factor qualifies when it moved
in the same direction as the plan and its own |deviation| clears the
report's threshold; the qualifying factor with the largest magnitude
wins, ties falling to the lexicographically smallest name, and no
qualifier means "unexplained".

Two revision policies:
    reforecast   keep the realized prefix, scale every remaining
                 sub-period by (1 + dev)
    hold_target  keep the overall target, spread what is left over the
                 remaining sub-periods proportionally to the original
                 plan; per-period uplift beyond the cap is infeasible

Attribution and revision require a flagged report; asking either about
an on-plan report is a caller error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import CorrectionError, InfeasibleRevisionError
from .toolbox import plan_deviation

DEFAULT_THRESHOLD = 0.10
DEFAULT_UPLIFT_CAP = 0.50

POLICIES = ("reforecast", "hold_target")


@dataclass(frozen=True)
class DeviationReport:
    flagged: bool
    deviation: float
    periods_observed: int
    threshold: float


@dataclass(frozen=True)
class Attribution:
    cause: str                                  # factor name or "unexplained"
    considered: tuple[tuple[str, float], ...]   # (name, deviation), by name


@dataclass(frozen=True)
class RevisedPlan:
    policy: str
    values: tuple[float, ...]
    deviation: float


def _cumulative_deviation(planned: Sequence[float],
                          actual: Sequence[float]) -> float:
    cum_planned = sum(planned[: len(actual)])
    if cum_planned <= 0:
        raise CorrectionError(
            f"planned prefix must sum to a positive value, got {cum_planned}"
        )
    return plan_deviation(cum_planned, sum(actual))


def detect_deviation(
    planned: Sequence[float],
    actual: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
) -> DeviationReport:
    if not planned:
        raise CorrectionError("plan has no sub-periods")
    if not actual:
        raise CorrectionError("no actuals observed yet")
    if len(actual) > len(planned):
        raise CorrectionError(
            f"{len(actual)} actuals for a {len(planned)}-period plan"
        )
    if threshold < 0:
        raise CorrectionError(f"threshold must be >= 0, got {threshold}")
    dev = _cumulative_deviation(planned, actual)
    return DeviationReport(
        flagged=abs(dev) > threshold,
        deviation=dev,
        periods_observed=len(actual),
        threshold=threshold,
    )


def attribute_cause(
    report: DeviationReport,
    factors: Mapping[str, tuple[float, float]],
) -> Attribution:
    """Name the factor behind a flagged deviation. Each factor maps to
    its (planned, actual) pair."""
    if not report.flagged:
        raise CorrectionError(
            "attribution needs a flagged report; this plan is on track"
        )
    if not factors:
        raise CorrectionError("no candidate factors supplied")
    considered = tuple(
        (name, plan_deviation(planned, actual))
        for name, (planned, actual) in sorted(factors.items())
    )
    sign = 1 if report.deviation > 0 else -1
    best: tuple[float, str] | None = None
    for name, dev in considered:
        if dev == 0 or (1 if dev > 0 else -1) != sign:
            continue
        mag = abs(dev)
        if mag <= report.threshold:
            continue
        # considered is name-sorted; strict > keeps the smallest name on ties
        if best is None or mag > best[0]:
            best = (mag, name)
    return Attribution(best[1] if best else "unexplained", considered)


def revise_plan(
    planned: Sequence[float],
    actual: Sequence[float],
    report: DeviationReport,
    policy: str,
    uplift_cap: float = DEFAULT_UPLIFT_CAP,
) -> RevisedPlan:
    if policy not in POLICIES:
        raise CorrectionError(
            f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}"
        )
    if not report.flagged:
        raise CorrectionError(
            "revision needs a flagged report; this plan is on track"
        )
    if report.periods_observed != len(actual):
        raise CorrectionError(
            f"report covers {report.periods_observed} periods but "
            f"{len(actual)} actuals were supplied"
        )
    k = len(actual)
    if k == len(planned):
        raise CorrectionError("plan fully realized; nothing left to revise")
    remainder = planned[k:]

    if policy == "reforecast":
        scale = 1.0 + report.deviation
        values = list(map(float, actual)) + [p * scale for p in remainder]
        return RevisedPlan("reforecast", tuple(values), report.deviation)

    target = sum(planned)
    remaining_total = target - sum(actual)
    base = sum(remainder)
    if remaining_total <= 0:
        revised = [0.0 for _ in remainder]
    else:
        if base == 0:
            raise InfeasibleRevisionError(
                "remaining plan sums to zero; nothing to scale toward the target"
            )
        scale = remaining_total / base
        if scale - 1.0 > uplift_cap:
            raise InfeasibleRevisionError(
                f"holding the target needs a {scale - 1.0:.2%} uplift on "
                f"remaining sub-periods, above the {uplift_cap:.0%} cap"
            )
        revised = [p * scale for p in remainder]
    values = list(map(float, actual)) + revised
    return RevisedPlan("hold_target", tuple(values), report.deviation)
