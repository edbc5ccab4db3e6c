"""Nonparametric survival machinery.

Kaplan-Meier and Nelson-Aalen step estimators, survival/cumulative-hazard
interconversion, the two-sample log-rank statistic, and the chi-square
upper tail needed for calibration p-values.

Conventions used throughout:

- curves are right-continuous step functions with steps only at distinct
  event times; censoring times shrink risk sets but add no steps;
- at a tied timestamp, events precede censorings: individuals censored at
  time t are still in the risk set for events at t;
- evaluation before the first step returns S=1 (survival) or H=0 (hazard).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStatisticError

SURVIVAL = "survival"
CUMULATIVE_HAZARD = "cumulative_hazard"

_MACHEP = 1.11022302462515654042e-16


@dataclass(frozen=True)
class SurvivalCurve:
    """A step function over distinct event times.

    ``kind`` is either "survival" (S(t), non-increasing from 1) or
    "cumulative_hazard" (H(t), non-decreasing from 0). ``at_risk`` and
    ``events`` carry the risk-set sizes n_j and event counts d_j of the
    estimator that produced the curve; they are None for derived curves
    (conversions, ensemble means).
    """

    times: np.ndarray
    values: np.ndarray
    kind: str
    at_risk: np.ndarray | None = None
    events: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.kind not in (SURVIVAL, CUMULATIVE_HAZARD):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-d and equal length")
        if times.size and not np.all(np.diff(times) > 0):
            raise ValueError("step times must be strictly increasing")
        if self.kind == SURVIVAL:
            if values.size and (values[0] > 1.0 + 1e-12 or np.any(values < -1e-12)):
                raise ValueError("survival values must lie in [0, 1]")
            if values.size and np.any(np.diff(values) > 1e-12):
                raise ValueError("survival values must be non-increasing")
        else:
            if values.size and np.any(values < -1e-12):
                raise ValueError("cumulative hazard must be non-negative")
            if values.size and np.any(np.diff(values) < -1e-12):
                raise ValueError("cumulative hazard must be non-decreasing")
        for name in ("at_risk", "events"):
            field = getattr(self, name)
            if field is not None:
                arr = np.asarray(field, dtype=np.int64)
                if arr.shape != times.shape:
                    raise ValueError(f"{name} must match times in length")
                object.__setattr__(self, name, arr)

    @property
    def baseline(self) -> float:
        """Value before the first step: 1 for survival, 0 for hazard."""
        return 1.0 if self.kind == SURVIVAL else 0.0

    def value_at(self, t):
        """Evaluate the step function at time(s) t (right-continuous)."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate(([self.baseline], self.values))
        out = padded[idx]
        return float(out) if out.ndim == 0 else out

    def __call__(self, t):
        return self.value_at(t)


@dataclass(frozen=True)
class LogRankResult:
    """Two-sample log-rank outcome.

    ``z`` is the standardized statistic (group A minus its expectation),
    or None when the total variance is zero and the statistic is
    undefined. ``observed`` and ``expected`` are the (A, B) aggregates of
    observed and expected event counts; ``variance`` is the summed
    hypergeometric variance.
    """

    z: float | None
    observed: tuple[float, float]
    expected: tuple[float, float]
    variance: float

    @property
    def defined(self) -> bool:
        return self.z is not None


def _event_table(times, events):
    """Distinct event times with event counts d_j and risk counts n_j."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if times.size == 0:
        raise ValueError("empty sample")
    if times.shape != events.shape:
        raise ValueError("times and events must have equal length")
    event_times, d = np.unique(times[events], return_counts=True)
    sorted_times = np.sort(times)
    n_at_risk = times.size - np.searchsorted(sorted_times, event_times, side="left")
    return event_times, d.astype(np.int64), n_at_risk.astype(np.int64)


def kaplan_meier(times, events) -> SurvivalCurve:
    """Product-limit estimate of the survival function S(t).

    ``events`` is 1/True where the event was observed, 0/False where the
    observation is right-censored.
    """
    event_times, d, n = _event_table(times, events)
    surv = np.cumprod(1.0 - d / n)
    return SurvivalCurve(event_times, surv, SURVIVAL, at_risk=n, events=d)


def nelson_aalen(times, events) -> SurvivalCurve:
    """Nelson-Aalen estimate of the cumulative hazard H(t) = sum d_j/n_j."""
    event_times, d, n = _event_table(times, events)
    chf = np.cumsum(d / n)
    return SurvivalCurve(event_times, chf, CUMULATIVE_HAZARD, at_risk=n, events=d)


def curve_convert(curve: SurvivalCurve) -> SurvivalCurve:
    """Convert between the two curve kinds via S(t) = exp(-H(t)).

    Inverting a survival curve that reaches 0 is a domain error (the
    hazard would be infinite).
    """
    if curve.kind == CUMULATIVE_HAZARD:
        return SurvivalCurve(
            curve.times, np.exp(-curve.values), SURVIVAL,
            at_risk=curve.at_risk, events=curve.events,
        )
    if np.any(curve.values <= 0.0):
        raise DegenerateStatisticError(
            "cannot convert a survival curve with S=0 steps to a cumulative hazard"
        )
    return SurvivalCurve(
        curve.times, -np.log(curve.values), CUMULATIVE_HAZARD,
        at_risk=curve.at_risk, events=curve.events,
    )


def log_rank(group_a, group_b) -> LogRankResult:
    """Two-sample log-rank statistic z = sum(O_j - E_j) / sqrt(sum V_j).

    Each group is a (times, events) pair. The sum runs over the pooled
    distinct event times; V_j uses the hypergeometric variance and is 0
    when the pooled risk set has a single member. When the total variance
    is zero the statistic is undefined and ``z`` is None.

    The per-time numerator is computed as (d_a*n_b - d_b*n_a)/n, which
    makes log_rank(a, b).z == -log_rank(b, a).z hold exactly in floats.
    """
    t_a = np.asarray(group_a[0], dtype=np.float64)
    e_a = np.asarray(group_a[1], dtype=bool)
    t_b = np.asarray(group_b[0], dtype=np.float64)
    e_b = np.asarray(group_b[1], dtype=bool)
    if t_a.size == 0 or t_b.size == 0:
        raise ValueError("both groups must be non-empty")
    if not (e_a.any() or e_b.any()):
        raise ValueError("log-rank requires at least one event in the pooled data")

    pooled = np.unique(np.concatenate((t_a[e_a], t_b[e_b])))
    sorted_a = np.sort(t_a)
    sorted_b = np.sort(t_b)
    n_a = t_a.size - np.searchsorted(sorted_a, pooled, side="left")
    n_b = t_b.size - np.searchsorted(sorted_b, pooled, side="left")
    n = n_a + n_b

    d_a = _counts_at(t_a[e_a], pooled)
    d_b = _counts_at(t_b[e_b], pooled)
    d = d_a + d_b

    numer = np.sum((d_a * n_b - d_b * n_a) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_terms = d * (n_a / n) * (n_b / n) * (n - d) / (n - 1)
    var_terms[n <= 1] = 0.0
    variance = float(np.sum(var_terms))

    expected_a = float(np.sum(d * (n_a / n)))
    expected_b = float(np.sum(d * (n_b / n)))
    observed = (float(d_a.sum()), float(d_b.sum()))
    z = float(numer / math.sqrt(variance)) if variance > 0.0 else None
    return LogRankResult(z, observed, (expected_a, expected_b), variance)


def _counts_at(event_times, grid):
    """Count occurrences of each grid value among event_times (grid sorted)."""
    idx = np.searchsorted(grid, event_times)
    counts = np.zeros(grid.size, dtype=np.float64)
    np.add.at(counts, idx, 1.0)
    return counts


def chi_square_sf(x: float, df: int) -> float:
    """Upper-tail probability P(X >= x) for X ~ chi-square with df d.o.f.

    Computed through the regularized incomplete gamma function: a power
    series on the left region (x < df + 1), a continued fraction on the
    right. Absolute error is well below 1e-10 across the usable range.
    """
    if df is None or int(df) != df or df < 1:
        raise ValueError("df must be a positive integer")
    df = int(df)
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise ValueError("x must be finite and non-negative")
    if x == 0.0:
        return 1.0
    a = 0.5 * df
    s = 0.5 * x
    if x < df + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_p_series(a, s)))
    return min(1.0, max(0.0, _gamma_q_contfrac(a, s)))


def _gamma_p_series(a, s):
    """Lower regularized incomplete gamma P(a, s) by power series."""
    ap = a
    total = 1.0 / a
    term = total
    for _ in range(500):
        ap += 1.0
        term *= s / ap
        total += term
        if abs(term) < abs(total) * _MACHEP:
            break
    log_prefix = a * math.log(s) - s - math.lgamma(a)
    if log_prefix < -700.0:
        return 0.0
    return total * math.exp(log_prefix)


def _gamma_q_contfrac(a, s):
    """Upper regularized incomplete gamma Q(a, s) by continued fraction."""
    tiny = 1e-300
    b = s + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _MACHEP:
            break
    log_prefix = a * math.log(s) - s - math.lgamma(a)
    if log_prefix < -700.0:
        return 0.0
    return math.exp(log_prefix) * h
