"""Fairness-censorship interplay: the pairwise confusion tensor and the
floor/ceiling imparity outcomes.

The tensor stacks, per group of a binary sensitive attribute, the counts
of anchored ordered pairs classified by time order, the censoring flag of
the earlier observation, and risk order. Permissible cells (M) have an
observed earlier event; impermissible cells (N) have a censored earlier
observation. Time-tied or risk-tied pairs are excluded and reported as
exclusion counts.

Floor and ceiling are the two extreme resolutions of censorship: every
censored individual has an immediate event at its recorded time (floor),
or an event beyond every observed time (ceiling). They are specific
outcomes, not proven bounds over all resolutions.

For the ceiling, the censoring status of the *later* member of an
impermissible pair matters too: pushing censored times past the maximum
flips the pair's order when the later member was an event, but turns the
pair into an uninformative tie when both members were censored. The
tensor therefore carries both-censored subcounts per impermissible cell,
which makes the ceiling outcome match a brute-force resolution exactly.
Tensors assembled from bare cell counts default these subcounts to zero,
recovering the plain swapped-gain expression.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStatisticError
from .fairness import ScoredCohort

_PROPORTION_TOL = 1e-9


@dataclass(frozen=True)
class GroupCells:
    """One group's plane of the confusion tensor.

    m_* are permissible cells, n_* impermissible; the *_cc fields count
    the subset of each impermissible cell whose later member is also
    censored (both-censored pairs).
    """

    n_a: int = 0
    n_b: int = 0
    n_c: int = 0
    n_d: int = 0
    m_a: int = 0
    m_b: int = 0
    m_c: int = 0
    m_d: int = 0
    n_a_cc: int = 0
    n_b_cc: int = 0
    n_c_cc: int = 0
    n_d_cc: int = 0

    def __post_init__(self):
        for name in ("n_a", "n_b", "n_c", "n_d", "m_a", "m_b", "m_c", "m_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for cell in ("a", "b", "c", "d"):
            if not 0 <= getattr(self, f"n_{cell}_cc") <= getattr(self, f"n_{cell}"):
                raise ValueError(f"n_{cell}_cc must lie in [0, n_{cell}]")

    @property
    def permissible(self) -> int:
        return self.m_a + self.m_b + self.m_c + self.m_d

    @property
    def impermissible(self) -> int:
        return self.n_a + self.n_b + self.n_c + self.n_d

    @property
    def concordant(self) -> int:
        return self.m_b + self.m_c

    @property
    def floor_gain(self) -> int:
        """Impermissible pairs that become concordant under the floor."""
        return self.n_b + self.n_c

    @property
    def ceiling_gain(self) -> int:
        """Impermissible pairs that become concordant under the ceiling."""
        return (self.n_a - self.n_a_cc) + (self.n_d - self.n_d_cc)

    @property
    def both_censored(self) -> int:
        return self.n_a_cc + self.n_b_cc + self.n_c_cc + self.n_d_cc


@dataclass(frozen=True)
class ConfusionTensor:
    """Per-group pair classification for a binary sensitive attribute."""

    deprived: GroupCells
    favored: GroupCells
    excluded_time_ties: int = 0
    excluded_risk_ties: int = 0

    def cells(self, group: int) -> GroupCells:
        if group == 0:
            return self.deprived
        if group == 1:
            return self.favored
        raise ValueError("the confusion tensor is binary: group must be 0 or 1")

    def to_dict(self) -> dict:
        out = {}
        for g, cells in (("0", self.deprived), ("1", self.favored)):
            out[g] = {
                "N_a": cells.n_a, "N_b": cells.n_b, "N_c": cells.n_c, "N_d": cells.n_d,
                "M_a": cells.m_a, "M_b": cells.m_b, "M_c": cells.m_c, "M_d": cells.m_d,
                "permissible": cells.permissible,
                "impermissible": cells.impermissible,
                "concordant": cells.concordant,
                "both_censored": cells.both_censored,
            }
        out["excluded_time_ties"] = self.excluded_time_ties
        out["excluded_risk_ties"] = self.excluded_risk_ties
        return out


def build_tensor(cohort: ScoredCohort) -> ConfusionTensor:
    """Classify every anchored, strictly ordered, risk-untied pair.

    For an anchored pair (i, j) with i in the plane's group: the row is
    picked by which time is larger and the event flag of the earlier
    observation; the column by risk order. Time-tied or risk-tied pairs
    are excluded and counted. Requires a binary sensitive attribute.
    """
    if cohort.n_groups != 2:
        raise ValueError("the confusion tensor is defined for a binary sensitive attribute")
    t = cohort.times
    e = cohort.events
    r = cohort.risks

    t_i, t_j = t[:, None], t[None, :]
    e_i, e_j = e[:, None], e[None, :]
    r_i, r_j = r[:, None], r[None, :]

    off_diag = ~np.eye(cohort.n, dtype=bool)
    time_tie = (t_i == t_j) & off_diag
    risk_tie = (r_i == r_j) & ~time_tie & off_diag
    valid = off_diag & ~(t_i == t_j) & ~(r_i == r_j)

    i_later = valid & (t_i > t_j)
    j_later = valid & (t_i < t_j)
    r_hi = r_i > r_j

    planes = []
    for g in (0, 1):
        anchor = (cohort.groups == g)[:, None]

        def count(mask):
            return int(np.sum(mask & anchor))

        planes.append(GroupCells(
            n_a=count(i_later & ~e_j & r_hi),
            n_b=count(i_later & ~e_j & ~r_hi),
            m_a=count(i_later & e_j & r_hi),
            m_b=count(i_later & e_j & ~r_hi),
            n_c=count(j_later & ~e_i & r_hi),
            n_d=count(j_later & ~e_i & ~r_hi),
            m_c=count(j_later & e_i & r_hi),
            m_d=count(j_later & e_i & ~r_hi),
            n_a_cc=count(i_later & ~e_j & r_hi & ~e_i),
            n_b_cc=count(i_later & ~e_j & ~r_hi & ~e_i),
            n_c_cc=count(j_later & ~e_i & r_hi & ~e_j),
            n_d_cc=count(j_later & ~e_i & ~r_hi & ~e_j),
        ))
    return ConfusionTensor(
        planes[0], planes[1],
        excluded_time_ties=int(np.sum(time_tie)),
        excluded_risk_ties=int(np.sum(risk_tie)),
    )


def ci_from_tensor(tensor: ConfusionTensor) -> float:
    """Concordance imparity |C_0/P_0 - C_1/P_1| from tensor counts."""
    dep, fav = tensor.deprived, tensor.favored
    if dep.permissible == 0 or fav.permissible == 0:
        raise DegenerateStatisticError(
            "imparity is undefined: a group has no permissible pairs in the tensor"
        )
    return abs(dep.concordant / dep.permissible - fav.concordant / fav.permissible)


def floor_ci(tensor: ConfusionTensor) -> float:
    """Imparity when every censored individual has an immediate event.

    All impermissible pairs become permissible at their recorded times;
    the concordant gains are the cells whose earlier (censored) member
    carries the higher risk.
    """
    sides = []
    for cells in (tensor.deprived, tensor.favored):
        denom = cells.permissible + cells.impermissible
        if denom == 0:
            raise DegenerateStatisticError("floor outcome undefined: empty pair set for a group")
        sides.append((cells.concordant + cells.floor_gain) / denom)
    return abs(sides[0] - sides[1])


def ceiling_ci(tensor: ConfusionTensor) -> float:
    """Imparity when every censored individual outlives every observation.

    Pair order flips for impermissible pairs whose later member was an
    event, so the concordant gains swap to the opposite risk cells;
    both-censored pairs become ties and drop out entirely.
    """
    sides = []
    for cells in (tensor.deprived, tensor.favored):
        denom = cells.permissible + cells.impermissible - cells.both_censored
        if denom == 0:
            raise DegenerateStatisticError("ceiling outcome undefined: empty pair set for a group")
        sides.append((cells.concordant + cells.ceiling_gain) / denom)
    return abs(sides[0] - sides[1])


@dataclass(frozen=True)
class SubScenario:
    """Interpretation flags for how censorship can move the imparity.

    scenario_1: concordant gains are proportional to the existing
    concordance in both groups, so the floor outcome equals the imparity.
    scenario_2: one group fully discordant, the other fully concordant;
    censorship can move the imparity the most. scenario_3: both groups
    fully discordant; the movement is uniform in direction. Distributional
    confidence intervals over the censored pairs (an assumed-distribution
    refinement) are reported as unsupported.
    """

    scenario_1: bool
    scenario_2: bool
    scenario_3: bool
    label: str
    distributional_interval: str = "unsupported"


def classify_subscenario(tensor: ConfusionTensor) -> SubScenario:
    ratios = []
    gains = []
    for cells in (tensor.deprived, tensor.favored):
        if cells.permissible == 0:
            raise DegenerateStatisticError("sub-scenario undefined: group without permissible pairs")
        ratios.append(cells.concordant / cells.permissible)
        gains.append(None if cells.impermissible == 0
                     else cells.floor_gain / cells.impermissible)
    proportional = all(
        gain is None or abs(ratio - gain) < _PROPORTION_TOL
        for ratio, gain in zip(ratios, gains)
    )
    extremes = abs(ratios[0]) < _PROPORTION_TOL and abs(ratios[1] - 1.0) < _PROPORTION_TOL
    uniform = abs(ratios[0]) < _PROPORTION_TOL and abs(ratios[1]) < _PROPORTION_TOL
    if proportional:
        label = "scenario_1"
    elif extremes:
        label = "scenario_2"
    elif uniform:
        label = "scenario_3"
    else:
        label = "general"
    return SubScenario(proportional, extremes, uniform, label)


@dataclass(frozen=True)
class BoundsReport:
    """Imparity with its floor and ceiling outcomes and diagnostics."""

    ci: float
    ci_floor: float
    ci_ceiling: float
    floor_gains: tuple[int, int]
    ceiling_gains: tuple[int, int]
    sub_scenario: SubScenario
    excluded_time_ties: int
    excluded_risk_ties: int

    def to_dict(self) -> dict:
        return {
            "ci": self.ci,
            "floor_outcome": self.ci_floor,
            "ceiling_outcome": self.ci_ceiling,
            "floor_concordant_gains": list(self.floor_gains),
            "ceiling_concordant_gains": list(self.ceiling_gains),
            "sub_scenario": {
                "label": self.sub_scenario.label,
                "scenario_1": self.sub_scenario.scenario_1,
                "scenario_2": self.sub_scenario.scenario_2,
                "scenario_3": self.sub_scenario.scenario_3,
                "distributional_interval": self.sub_scenario.distributional_interval,
            },
            "excluded_time_ties": self.excluded_time_ties,
            "excluded_risk_ties": self.excluded_risk_ties,
        }


def bounds_report(tensor: ConfusionTensor) -> BoundsReport:
    return BoundsReport(
        ci=ci_from_tensor(tensor),
        ci_floor=floor_ci(tensor),
        ci_ceiling=ceiling_ci(tensor),
        floor_gains=(tensor.deprived.floor_gain, tensor.favored.floor_gain),
        ceiling_gains=(tensor.deprived.ceiling_gain, tensor.favored.ceiling_gain),
        sub_scenario=classify_subscenario(tensor),
        excluded_time_ties=tensor.excluded_time_ties,
        excluded_risk_ties=tensor.excluded_risk_ties,
    )
