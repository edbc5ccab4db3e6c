"""Survival model evaluation: concordance index, single-horizon Brier
score and time-dependent AUC, overall and per group.

Censoring is handled by inverse-probability-of-censoring weighting
(IPCW): weights come from the Kaplan-Meier estimate of the censoring
distribution (event flags flipped). With no censoring the Brier score
reduces to the plain mean squared error and the AUC to the usual
rank-sum AUC of the event-by-horizon label.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateStatisticError
from .estimators import kaplan_meier
from .fairness import ScoredCohort, default_horizon, pair_tables


def c_index(cohort: ScoredCohort) -> float:
    """Harrell-style concordance over unordered permissible pairs,
    group-blind; risk ties count 0.5 (same pair semantics as the
    fairness metrics)."""
    permissible, score = pair_tables(cohort.times, cohort.events, cohort.risks)
    upper = np.triu(permissible, k=1)
    total = int(upper.sum())
    if total == 0:
        raise DegenerateStatisticError("no permissible pairs: concordance index undefined")
    return float(np.sum(score, where=upper, dtype=np.float64)) / total


def _censoring_curve(times, events):
    return kaplan_meier(times, ~np.asarray(events, dtype=bool))


def _weight_at_left_limit(curve, t):
    """G(t-): censoring survival just before t."""
    return curve.value_at(np.nextafter(t, -np.inf))


def brier_score(cohort: ScoredCohort, horizon: float | None = None) -> float:
    """IPCW single-horizon Brier score of survival probabilities.

    Individuals with an event by the horizon contribute (0 - S)^2 / G(T-),
    survivors past the horizon contribute (1 - S)^2 / G(t); individuals
    censored by the horizon carry zero weight. The average runs over the
    full cohort size.
    """
    if cohort.survival_probs is None:
        raise ValueError("brier_score requires survival_probs on the cohort")
    t = _resolve_horizon(cohort, horizon)
    g_curve = _censoring_curve(cohort.times, cohort.events)
    total = 0.0
    for time_i, event_i, prob_i in zip(cohort.times, cohort.events, cohort.survival_probs):
        if time_i <= t and event_i:
            g = _weight_at_left_limit(g_curve, time_i)
            if g <= 0.0:
                raise DegenerateStatisticError(
                    "censoring weight vanishes before the horizon; Brier score undefined"
                )
            total += prob_i**2 / g
        elif time_i > t:
            g = g_curve.value_at(t)
            if g <= 0.0:
                raise DegenerateStatisticError(
                    "censoring weight vanishes at the horizon; Brier score undefined"
                )
            total += (1.0 - prob_i) ** 2 / g
    return total / cohort.n


def time_dependent_auc(cohort: ScoredCohort, horizon: float | None = None) -> float:
    """IPCW probability that a random case (event by the horizon) out-ranks
    a random control (time beyond the horizon); risk ties count 0.5.
    Individuals censored by the horizon join neither side but do inform
    the censoring estimate."""
    t = _resolve_horizon(cohort, horizon)
    cases = (cohort.times <= t) & cohort.events
    controls = cohort.times > t
    if not cases.any() or not controls.any():
        raise DegenerateStatisticError(
            "time-dependent AUC needs at least one case and one control at the horizon"
        )
    g_curve = _censoring_curve(cohort.times, cohort.events)
    g_control = g_curve.value_at(t)
    case_weights = np.array([
        _weight_at_left_limit(g_curve, time_i) for time_i in cohort.times[cases]
    ])
    if g_control <= 0.0 or np.any(case_weights <= 0.0):
        raise DegenerateStatisticError("censoring weight vanishes; AUC undefined")
    w_case = 1.0 / case_weights
    r_case = cohort.risks[cases]
    r_control = cohort.risks[controls]
    greater = (r_case[:, None] > r_control[None, :]).astype(np.float64)
    tied = (r_case[:, None] == r_control[None, :])
    scores = greater + 0.5 * tied
    weights = np.broadcast_to(w_case[:, None], scores.shape)
    return float(np.sum(scores * weights) / np.sum(weights))


def _resolve_horizon(cohort, horizon):
    if horizon is None:
        horizon = cohort.horizon
    if horizon is None:
        horizon = default_horizon(cohort.times, cohort.events)
    horizon = float(horizon)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    return horizon


@dataclass(frozen=True)
class GroupEval:
    c_index: float | None
    brier: float | None
    td_auc: float | None


@dataclass(frozen=True)
class EvalReport:
    c_index: float
    brier: float
    td_auc: float
    per_group: dict[int, GroupEval]
    horizon: float

    def to_dict(self) -> dict:
        return {
            "c_index": self.c_index,
            "brier": self.brier,
            "td_auc": self.td_auc,
            "horizon": self.horizon,
            "per_group": {
                str(g): {"c_index": ge.c_index, "brier": ge.brier, "td_auc": ge.td_auc}
                for g, ge in self.per_group.items()
            },
        }


def evaluate(forest, data: Dataset, horizon: float | None = None) -> EvalReport:
    """Score a trained forest on a dataset, overall and per group.

    The horizon defaults to the median observed event time of the data.
    Per-group metrics are computed on group-restricted cohorts; a metric
    undefined on some group (no pairs, no cases, vanishing weights) is
    reported as None rather than failing the whole evaluation.
    """
    if horizon is None:
        horizon = default_horizon(data.times, data.events)
    risks = forest.predict_risks(data.features_matrix)
    probs = forest.predict_survival_probs(data.features_matrix, horizon)
    cohort = ScoredCohort.from_dataset(data, risks, survival_probs=probs, horizon=horizon)
    report = EvalReport(
        c_index=c_index(cohort),
        brier=brier_score(cohort),
        td_auc=time_dependent_auc(cohort),
        per_group=_per_group(cohort),
        horizon=float(horizon),
    )
    return report


def evaluate_cohort(cohort: ScoredCohort) -> EvalReport:
    """Evaluate an externally scored cohort (risks required; Brier only
    when survival probabilities are present)."""
    horizon = _resolve_horizon(cohort, None)
    cohort = ScoredCohort(
        cohort.times, cohort.events, cohort.groups, cohort.risks,
        survival_probs=cohort.survival_probs, horizon=horizon,
        n_groups=cohort.n_groups,
    )
    return EvalReport(
        c_index=c_index(cohort),
        brier=brier_score(cohort) if cohort.survival_probs is not None else None,
        td_auc=time_dependent_auc(cohort),
        per_group=_per_group(cohort),
        horizon=horizon,
    )


def _per_group(cohort: ScoredCohort) -> dict[int, GroupEval]:
    out = {}
    for g in np.unique(cohort.groups):
        members = cohort.groups == g
        sub = ScoredCohort(
            cohort.times[members], cohort.events[members],
            np.zeros(int(members.sum()), dtype=np.int64), cohort.risks[members],
            survival_probs=None if cohort.survival_probs is None
            else cohort.survival_probs[members],
            horizon=cohort.horizon, n_groups=1,
        )
        out[int(g)] = GroupEval(
            c_index=_try(c_index, sub),
            brier=_try(brier_score, sub) if sub.survival_probs is not None else None,
            td_auc=_try(time_dependent_auc, sub),
        )
    return out


def _try(metric, cohort):
    try:
        return metric(cohort)
    except DegenerateStatisticError:
        return None
