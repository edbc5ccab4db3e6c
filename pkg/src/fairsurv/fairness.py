"""Censorship-aware fairness metrics over scored cohorts.

Two notions are implemented. Concordance imparity measures the largest
between-group gap in pairwise ranking quality over permissible pairs
(pairs whose shorter observed time is an event). Fair calibration runs a
per-group Hosmer-Lemeshow test on decile bins, with Kaplan-Meier
estimates standing in for event counts that censoring hides.

Pair conventions: a pair is concordant when the member with the shorter
observed time carries the strictly higher risk score; risk ties count
0.5; time-tied pairs are permissible only when both members are events
and count 0.5 (no ordering can be right or wrong).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .data import Dataset
from .errors import DegenerateStatisticError
from .estimators import chi_square_sf, kaplan_meier

FAIR_CALIBRATED = "fair_calibrated"
NOT_FAIR_CALIBRATED = "not_fair_calibrated"


@dataclass(frozen=True)
class ScoredCohort:
    """Risk-scored individuals: (time, event, group) plus model outputs.

    ``survival_probs`` are optional S(horizon | x) predictions used by
    calibration and Brier scoring; ``n_groups`` defaults to the largest
    group index present plus one.
    """

    times: np.ndarray
    events: np.ndarray
    groups: np.ndarray
    risks: np.ndarray
    survival_probs: np.ndarray | None = None
    horizon: float | None = None
    n_groups: int | None = None

    def __post_init__(self):
        # private copies: the cohort freezes its arrays without touching
        # whatever the caller handed in
        times = np.array(self.times, dtype=np.float64)
        events = np.array(self.events, dtype=bool)
        groups = np.array(self.groups, dtype=np.int64)
        risks = np.array(self.risks, dtype=np.float64)
        if not (times.shape == events.shape == groups.shape == risks.shape) or times.ndim != 1:
            raise ValueError("times, events, groups and risks must be 1-d and equal length")
        if times.size == 0:
            raise ValueError("cohort must be non-empty")
        if not np.all(np.isfinite(risks)):
            raise ValueError("risk scores must be finite")
        for name, arr in (("times", times), ("events", events), ("groups", groups), ("risks", risks)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.survival_probs is not None:
            probs = np.array(self.survival_probs, dtype=np.float64)
            if probs.shape != times.shape:
                raise ValueError("survival_probs must match cohort length")
            if np.any(probs < 0.0) or np.any(probs > 1.0):
                raise ValueError("survival_probs must lie in [0, 1]")
            probs.setflags(write=False)
            object.__setattr__(self, "survival_probs", probs)
        n_groups = self.n_groups if self.n_groups is not None else int(groups.max()) + 1
        if groups.min() < 0 or groups.max() >= n_groups:
            raise ValueError("group indices must lie in [0, n_groups)")
        object.__setattr__(self, "n_groups", n_groups)

    @property
    def n(self) -> int:
        return self.times.size

    @staticmethod
    def from_dataset(data: Dataset, risks, survival_probs=None, horizon=None) -> "ScoredCohort":
        return ScoredCohort(
            data.times, data.events, data.groups, risks,
            survival_probs=survival_probs, horizon=horizon,
            n_groups=data.group_spec.n_groups,
        )

    @cached_property
    def _pair_tables(self):
        return pair_tables(self.times, self.events, self.risks)


def pair_tables(times, events, risks):
    """Symmetric n x n pair matrices: permissibility and concordance score.

    permissible[i, j] is True when the pair's shorter observed time is an
    event (time ties: both must be events). score[i, j] is 1.0 when the
    shorter-time member has the strictly higher risk, 0.5 on risk or time
    ties, else 0.0. Diagonals are False / 0.
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    risks = np.asarray(risks, dtype=np.float64)
    t_i = times[:, None]
    t_j = times[None, :]
    e_i = events[:, None]
    e_j = events[None, :]
    i_earlier = t_i < t_j
    j_earlier = t_i > t_j
    tied_time = t_i == t_j

    permissible = np.where(i_earlier, e_i, np.where(j_earlier, e_j, e_i & e_j))
    np.fill_diagonal(permissible, False)

    r_i = risks[:, None]
    r_j = risks[None, :]
    correct = np.where(i_earlier, r_i > r_j, r_j > r_i)
    score = np.where(tied_time | (r_i == r_j), 0.5, correct.astype(np.float64))
    np.fill_diagonal(score, 0.0)
    return permissible, score


def permissible_pairs(cohort: ScoredCohort, group: int) -> list[tuple[int, int]]:
    """Ordered pairs (i, j), i anchored in ``group``, j any other index,
    whose shorter observed time is an event. Deterministic in (i, j)
    index order."""
    if not 0 <= group < cohort.n_groups:
        raise ValueError(f"unknown group id {group}")
    permissible, _ = cohort._pair_tables
    anchors = np.flatnonzero(cohort.groups == group)
    return [(int(i), int(j)) for i in anchors for j in np.flatnonzero(permissible[i])]


def concordance_fraction(cohort: ScoredCohort, group: int) -> float:
    """Share of the group's anchored permissible pairs ranked correctly."""
    if not 0 <= group < cohort.n_groups:
        raise ValueError(f"unknown group id {group}")
    permissible, score = cohort._pair_tables
    anchor = cohort.groups == group
    count = int(permissible[anchor].sum())
    if count == 0:
        raise DegenerateStatisticError(
            f"group {group} has no permissible pairs; its concordance fraction is undefined"
        )
    total = float(np.sum(score[anchor], where=permissible[anchor], dtype=np.float64))
    return total / count


def concordance_imparity(cohort: ScoredCohort) -> float:
    """Largest absolute gap in concordance fractions across groups."""
    fractions = [concordance_fraction(cohort, g) for g in range(cohort.n_groups)]
    return max(
        abs(fractions[a] - fractions[b])
        for a in range(len(fractions))
        for b in range(len(fractions))
        if a != b
    )


@dataclass(frozen=True)
class CalibrationBin:
    size: int
    observed_events: float  # n * (1 - KM(t)) for the bin
    predicted_mean: float   # mean predicted event probability 1 - S(t|x)
    skipped: bool           # dropped from the statistic (predicted mean 0 or 1)


@dataclass(frozen=True)
class GroupCalibration:
    statistic: float
    p_value: float
    bins: tuple[CalibrationBin, ...]
    skipped_bins: int


@dataclass(frozen=True)
class CalibrationReport:
    per_group: dict[int, GroupCalibration]
    verdict: str
    horizon: float
    n_bins: int

    @property
    def fair(self) -> bool:
        return self.verdict == FAIR_CALIBRATED


def default_horizon(times, events) -> float:
    """Median observed event time: the default evaluation horizon."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if not events.any():
        raise DegenerateStatisticError("no events: cannot pick a default horizon")
    return float(np.median(times[events]))


def fair_calibration(cohort: ScoredCohort, horizon: float | None = None,
                     bins: int = 10) -> CalibrationReport:
    """Per-group Hosmer-Lemeshow calibration verdict at a time horizon.

    Each group is sorted by predicted survival probability and cut into
    ``bins`` near-equal bins (sizes differ by at most one). Per bin, the
    expected event count n*p_mean is compared against the Kaplan-Meier
    estimate of events by the horizon, fitted on that bin's own (time,
    event) data. Bins whose predicted mean is exactly 0 or 1 are skipped
    (zero variance); the chi-square degrees of freedom stay bins - 1.
    The verdict is fair_calibrated iff every group's p-value is >= 0.05.
    """
    if cohort.survival_probs is None:
        raise ValueError("fair_calibration requires survival_probs on the cohort")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    if horizon is None:
        horizon = cohort.horizon if cohort.horizon is not None else default_horizon(
            cohort.times, cohort.events)
    if not horizon > 0:
        raise ValueError("horizon must be positive")

    per_group = {}
    for g in range(cohort.n_groups):
        members = np.flatnonzero(cohort.groups == g)
        if members.size < 2 * bins:
            raise ValueError(
                f"group {g} has {members.size} members; fair calibration with "
                f"{bins} bins needs at least {2 * bins}"
            )
        order = members[np.argsort(cohort.survival_probs[members], kind="stable")]
        statistic = 0.0
        skipped = 0
        bin_stats = []
        for chunk in np.array_split(order, bins):
            n_bin = chunk.size
            p_mean = float(np.mean(1.0 - cohort.survival_probs[chunk]))
            km = kaplan_meier(cohort.times[chunk], cohort.events[chunk])
            observed = n_bin * (1.0 - km.value_at(horizon))
            degenerate = p_mean in (0.0, 1.0)
            if degenerate:
                skipped += 1
            else:
                expected = n_bin * p_mean
                statistic += (observed - expected) ** 2 / (expected * (1.0 - p_mean))
            bin_stats.append(CalibrationBin(n_bin, observed, p_mean, degenerate))
        if skipped == bins:
            raise DegenerateStatisticError(
                f"group {g}: all calibration bins have degenerate predictions"
            )
        p_value = chi_square_sf(statistic, bins - 1)
        per_group[g] = GroupCalibration(statistic, p_value, tuple(bin_stats), skipped)

    verdict = (
        FAIR_CALIBRATED
        if all(gc.p_value >= 0.05 for gc in per_group.values())
        else NOT_FAIR_CALIBRATED
    )
    return CalibrationReport(per_group, verdict, float(horizon), bins)


def fairness_report(cohort: ScoredCohort, horizon: float | None = None,
                    bins: int = 10) -> dict:
    """JSON-compatible fairness summary: imparity plus calibration.

    The calibration block is only present when the cohort carries
    survival probabilities.
    """
    per_group = {str(g): concordance_fraction(cohort, g) for g in range(cohort.n_groups)}
    ci = concordance_imparity(cohort)
    report = {
        "ci": ci,
        "ci_percent": round(100.0 * ci, 2),
        "per_group_concordance": per_group,
    }
    if cohort.survival_probs is not None:
        cal = fair_calibration(cohort, horizon=horizon, bins=bins)
        report["calibration"] = {
            "verdict": cal.verdict,
            "horizon": cal.horizon,
            "n_bins": cal.n_bins,
            "per_group": {
                str(g): {
                    "L": gc.statistic,
                    "p": gc.p_value,
                    "skipped_bins": gc.skipped_bins,
                    "bins": [
                        {
                            "n": b.size,
                            "observed_events": b.observed_events,
                            "predicted_mean": b.predicted_mean,
                            "observed_event_prob": b.observed_events / b.size,
                            "skipped": b.skipped,
                        }
                        for b in gc.bins
                    ],
                }
                for g, gc in cal.per_group.items()
            },
        }
    return report
