"""Fairness-aware survival forest.

Trees are grown on bootstrap samples and split greedily by a log-rank
criterion with a fairness penalty: the score of a candidate split is the
smoothed between-child survival separation minus the smoothed
between-group separation inside each child,

    score = log1p(|z_children|) - sum_child log1p(|z_child_groups|),

where each z is a two-sample log-rank statistic and the within-child
comparison is deprived group versus everyone else. A degenerate
comparison (empty side or zero variance) contributes 0. With
``fairness_enabled`` off the penalty term is dropped, giving a plain
log-rank survival forest for ablations.

Leaves store the Nelson-Aalen cumulative hazard of their in-bag members;
the ensemble prediction is the pointwise mean of per-tree leaf hazards
on the global grid of training event times, and the scalar risk score is
that hazard at the last event time.

Training is deterministic for a fixed (seed, config, data): tree i draws
from its own generator seeded by (seed, i) and nodes are processed in
breadth-first order, so results do not depend on the worker count.
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .data import CATEGORICAL, Dataset, FeatureSpec, GroupSpec
from .errors import ModelFormatError
from .estimators import CUMULATIVE_HAZARD, SurvivalCurve, log_rank
from ._split_kernel import scan_node, thin_indices

FORMAT_NAME = "fairsurv-forest"
FORMAT_MAJOR = 1


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``min_unique_events`` is the stop rule: a node is split only while it
    holds more than this many distinct event times. ``mtry`` defaults to
    ceil(sqrt(n_features)) at training time. ``bootstrap=False`` trains
    every tree on the full sample (deterministic single-tree test mode).
    """

    n_trees: int = 100
    min_unique_events: int = 3
    mtry: int | None = None
    fairness_enabled: bool = True
    max_thresholds_per_feature: int = 32
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_unique_events < 1:
            raise ValueError("min_unique_events must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.max_thresholds_per_feature < 1:
            raise ValueError("max_thresholds_per_feature must be >= 1")


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float | None          # continuous split: go left when x <= threshold
    categories: frozenset | None     # categorical split: go left when x in categories
    score: float
    left: np.ndarray                 # member positions, relative to the node
    right: np.ndarray


@dataclass(frozen=True)
class TreeNode:
    """Either a split (feature >= 0) or a leaf carrying hazard steps."""

    feature: int = -1
    threshold: float | None = None
    categories: frozenset | None = None
    left: int = -1
    right: int = -1
    step_times: np.ndarray | None = None
    step_events: np.ndarray | None = None   # d_j per step
    step_at_risk: np.ndarray | None = None  # n_j per step

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    @cached_property
    def hazard_values(self) -> np.ndarray:
        return np.cumsum(self.step_events / self.step_at_risk)

    @property
    def total_hazard(self) -> float:
        return float(self.hazard_values[-1]) if self.step_times.size else 0.0

    def hazard_at(self, query_times) -> np.ndarray:
        idx = np.searchsorted(self.step_times, query_times, side="right")
        padded = np.concatenate(([0.0], self.hazard_values))
        return padded[idx]


@dataclass(frozen=True)
class SurvivalTree:
    nodes: tuple[TreeNode, ...]

    def leaf_for(self, x) -> TreeNode:
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if _goes_left(node, x[node.feature]) else node.right]
        return node

    def route(self, X) -> np.ndarray:
        """Leaf node index per row of X."""
        out = np.zeros(X.shape[0], dtype=np.int64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node_id, rows = stack.pop()
            node = self.nodes[node_id]
            if node.is_leaf:
                out[rows] = node_id
                continue
            values = X[rows, node.feature]
            if node.categories is not None:
                left = np.isin(values.astype(np.int64), sorted(node.categories))
            else:
                left = values <= node.threshold
            stack.append((node.left, rows[left]))
            stack.append((node.right, rows[~left]))
        return out


def _goes_left(node: TreeNode, value) -> bool:
    if node.categories is not None:
        return int(value) in node.categories
    return value <= node.threshold


def combine_split_score(z_between, z_within=()) -> float:
    """Fold log-rank statistics into the split score.

    Undefined statistics (None) count as zero separation on either side.
    """
    minuend = math.log1p(abs(z_between)) if z_between is not None else 0.0
    penalty = sum(math.log1p(abs(z)) for z in z_within if z is not None)
    return minuend - penalty


def split_score(feature_values, threshold, times, events, dep_mask,
                fairness_enabled=True) -> float:
    """Score one candidate split (reference scalar path).

    ``threshold`` is a float for continuous features (left: x <= t) or a
    set of category codes (left: x in set). ``dep_mask`` flags the
    deprived group; the penalty compares it against all other members
    within each child.
    """
    feature_values = np.asarray(feature_values)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    dep_mask = np.asarray(dep_mask, dtype=bool)
    if isinstance(threshold, (set, frozenset)):
        left = np.isin(feature_values.astype(np.int64), sorted(threshold))
    else:
        left = feature_values <= threshold
    if not left.any() or left.all():
        raise ValueError("split must produce two non-empty children")

    z_between = _safe_log_rank(times[left], events[left], times[~left], events[~left])
    if not fairness_enabled:
        return combine_split_score(z_between)
    z_within = [
        _subgroup_z(times[side], events[side], dep_mask[side])
        for side in (left, ~left)
    ]
    return combine_split_score(z_between, z_within)


def _safe_log_rank(t_a, e_a, t_b, e_b):
    if t_a.size == 0 or t_b.size == 0 or not (e_a.any() or e_b.any()):
        return None
    return log_rank((t_a, e_a), (t_b, e_b)).z


def _subgroup_z(times, events, dep_mask):
    if not dep_mask.any() or dep_mask.all():
        return None
    return _safe_log_rank(times[dep_mask], events[dep_mask],
                          times[~dep_mask], events[~dep_mask])


def candidate_thresholds(values, cap) -> np.ndarray:
    """Midpoints between consecutive sorted unique values, thinned to at
    most ``cap`` evenly spaced candidates (same rule as the scan kernel)."""
    unique = np.unique(values)
    if unique.size < 2:
        return np.empty(0)
    mids = 0.5 * (unique[:-1] + unique[1:])
    return mids[thin_indices(mids.size, cap)]


def best_split(X_node, times, events, dep_mask, feature_ids, cardinalities,
               max_thresholds=32, fairness_enabled=True) -> SplitCandidate | None:
    """Highest-scoring candidate over the given features, or None.

    Continuous features propose thinned midpoints, categorical features
    one-vs-rest per category. Ties break toward the lower feature index,
    then the lower threshold/category. Candidates must leave at least one
    event in each child; None means no candidate qualifies.
    """
    X_node = np.asarray(X_node, dtype=np.float64)
    features = np.asarray(sorted(feature_ids), dtype=np.int64)
    cards = np.asarray(
        [-1 if cardinalities[f] is None else cardinalities[f] for f in features],
        dtype=np.int64,
    )
    found, fpos, threshold, is_cat, score = scan_node(
        np.ascontiguousarray(X_node[:, features].T),
        cards,
        np.asarray(times, dtype=np.float64),
        np.asarray(events, dtype=bool),
        np.asarray(dep_mask, dtype=bool),
        max_thresholds, fairness_enabled,
    )
    if not found:
        return None
    feature = int(features[fpos])
    values = X_node[:, feature]
    if is_cat:
        left = values.astype(np.int64) == int(threshold)
        return SplitCandidate(feature, None, frozenset((int(threshold),)), float(score),
                              np.flatnonzero(left), np.flatnonzero(~left))
    left = values <= threshold
    return SplitCandidate(feature, float(threshold), None, float(score),
                          np.flatnonzero(left), np.flatnonzero(~left))


def _leaf_node(times, events) -> TreeNode:
    event_times, d = np.unique(times[events], return_counts=True)
    order = np.sort(times)
    n_at_risk = times.size - np.searchsorted(order, event_times, side="left")
    return TreeNode(
        step_times=event_times,
        step_events=d.astype(np.int64),
        step_at_risk=n_at_risk.astype(np.int64),
    )


def _grow_tree(X, times, events, dep_mask, cardinalities, config, mtry, tree_index):
    rng = np.random.default_rng([config.seed, tree_index])
    n = times.size
    if config.bootstrap:
        inbag = rng.integers(0, n, size=n)
    else:
        inbag = np.arange(n)
    Xb = X[inbag]
    tb = times[inbag]
    eb = events[inbag]
    db = dep_mask[inbag]
    p = X.shape[1]

    nodes: list[TreeNode | None] = [None]
    queue = [(0, np.arange(n))]
    head = 0
    while head < len(queue):
        node_id, members = queue[head]
        head += 1
        t_m = tb[members]
        e_m = eb[members]
        if np.unique(t_m[e_m]).size <= config.min_unique_events:
            nodes[node_id] = _leaf_node(t_m, e_m)
            continue
        features = np.sort(rng.choice(p, size=mtry, replace=False))
        candidate = best_split(
            Xb[members], t_m, e_m, db[members], features, cardinalities,
            max_thresholds=config.max_thresholds_per_feature,
            fairness_enabled=config.fairness_enabled,
        )
        if candidate is None:
            nodes[node_id] = _leaf_node(t_m, e_m)
            continue
        left_id = len(nodes)
        nodes.append(None)
        right_id = len(nodes)
        nodes.append(None)
        nodes[node_id] = TreeNode(
            feature=candidate.feature, threshold=candidate.threshold,
            categories=candidate.categories, left=left_id, right=right_id,
        )
        queue.append((left_id, members[candidate.left]))
        queue.append((right_id, members[candidate.right]))
    return SurvivalTree(tuple(nodes))


def _grow_tree_args(args):
    return _grow_tree(*args)


@dataclass(frozen=True)
class SurvivalForest:
    """A trained ensemble, immutable and safe for concurrent prediction."""

    trees: tuple[SurvivalTree, ...]
    time_grid: np.ndarray
    config: ForestConfig
    schema: tuple[FeatureSpec, ...]
    group_spec: GroupSpec

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _check_features(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.size != len(self.schema):
            raise ValueError(
                f"feature vector must have length {len(self.schema)}, got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("feature values must be finite")
        return x

    def _check_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise ValueError(
                f"feature matrix must have {len(self.schema)} columns, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("feature values must be finite")
        return X

    def predict_chf(self, x) -> SurvivalCurve:
        """Ensemble cumulative hazard for one individual on the training
        event-time grid (pointwise mean over trees)."""
        x = self._check_features(x)
        total = np.zeros(self.time_grid.size)
        for tree in self.trees:
            total += tree.leaf_for(x).hazard_at(self.time_grid)
        return SurvivalCurve(self.time_grid, total / self.n_trees, CUMULATIVE_HAZARD)

    def predict_risk(self, x) -> float:
        """Scalar risk: the ensemble hazard at the last training event time."""
        x = self._check_features(x)
        return float(
            sum(tree.leaf_for(x).total_hazard for tree in self.trees) / self.n_trees
        )

    def predict_survival_at(self, x, t) -> float:
        """Survival probability exp(-H(t)) at time t for one individual."""
        x = self._check_features(x)
        t = float(t)
        total = 0.0
        for tree in self.trees:
            leaf = tree.leaf_for(x)
            total += float(leaf.hazard_at(np.asarray([t]))[0])
        return math.exp(-total / self.n_trees)

    def predict_risks(self, X) -> np.ndarray:
        """Vector of risk scores for the rows of X."""
        X = self._check_matrix(X)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            totals = np.array([n.total_hazard if n.is_leaf else 0.0 for n in tree.nodes])
            acc += totals[tree.route(X)]
        return acc / self.n_trees

    def predict_survival_probs(self, X, t) -> np.ndarray:
        """Vector of exp(-H(t)) predictions for the rows of X."""
        X = self._check_matrix(X)
        t = np.asarray([float(t)])
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            leaf_ids = tree.route(X)
            for leaf_id in np.unique(leaf_ids):
                value = float(tree.nodes[leaf_id].hazard_at(t)[0])
                acc[leaf_ids == leaf_id] += value
        return np.exp(-acc / self.n_trees)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(serialize_forest(self))

    @staticmethod
    def load(path) -> "SurvivalForest":
        with open(path, encoding="utf-8") as fh:
            return parse_forest(fh.read())


def train_forest(data: Dataset, config: ForestConfig, workers: int = 1) -> SurvivalForest:
    """Grow the configured number of trees on bootstrap samples of data.

    ``workers`` > 1 trains trees in separate processes; the result is
    identical for any worker count.
    """
    if not data.events.any():
        raise ValueError("training requires at least one observed event")
    p = data.n_features
    mtry = config.mtry if config.mtry is not None else math.ceil(math.sqrt(p))
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
    cardinalities = [
        spec.cardinality if spec.kind == CATEGORICAL else None for spec in data.schema
    ]
    dep_mask = data.groups == data.group_spec.deprived_index
    time_grid = np.unique(data.times[data.events])

    args = [
        (data.features_matrix, data.times, data.events, dep_mask,
         cardinalities, config, mtry, i)
        for i in range(config.n_trees)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trees = tuple(pool.map(_grow_tree_args, args))
    else:
        trees = tuple(_grow_tree_args(a) for a in args)
    return SurvivalForest(trees, time_grid, config, data.schema, data.group_spec)


def _format_float(x: float) -> str:
    return repr(float(x))


def serialize_forest(forest: SurvivalForest) -> str:
    """Versioned line-oriented text form with bit-exact float round-trip."""
    lines = [f"{FORMAT_NAME} {FORMAT_MAJOR}"]
    cfg = forest.config
    lines.append("config " + json.dumps({
        "n_trees": cfg.n_trees,
        "min_unique_events": cfg.min_unique_events,
        "mtry": cfg.mtry,
        "fairness_enabled": cfg.fairness_enabled,
        "max_thresholds_per_feature": cfg.max_thresholds_per_feature,
        "seed": cfg.seed,
        "bootstrap": cfg.bootstrap,
    }, sort_keys=True))
    lines.append("schema " + json.dumps([
        {"name": s.name, "kind": s.kind, "cardinality": s.cardinality,
         "categories": list(s.categories) if s.categories else None}
        for s in forest.schema
    ]))
    lines.append("groups " + json.dumps({
        "attribute": forest.group_spec.attribute_name,
        "labels": list(forest.group_spec.group_labels),
        "deprived_index": forest.group_spec.deprived_index,
    }))
    lines.append("time_grid " + " ".join(_format_float(t) for t in forest.time_grid))
    for i, tree in enumerate(forest.trees):
        lines.append(f"tree {i}")
        for node_id, node in enumerate(tree.nodes):
            if node.is_leaf:
                steps = " ".join(
                    f"{_format_float(t)}:{d}:{n}"
                    for t, d, n in zip(node.step_times, node.step_events, node.step_at_risk)
                )
                lines.append(f"node {node_id} leaf {steps}".rstrip())
            elif node.categories is not None:
                cats = ",".join(str(c) for c in sorted(node.categories))
                lines.append(
                    f"node {node_id} split {node.feature} cat {cats} {node.left} {node.right}"
                )
            else:
                lines.append(
                    f"node {node_id} split {node.feature} le "
                    f"{_format_float(node.threshold)} {node.left} {node.right}"
                )
        lines.append(f"end tree {i}")
    lines.append("end forest")
    return "\n".join(lines) + "\n"


def parse_forest(text: str) -> SurvivalForest:
    lines = text.splitlines()
    if not lines:
        raise ModelFormatError("empty model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != FORMAT_NAME:
        raise ModelFormatError("not a recognized forest model file")
    if int(head[1]) != FORMAT_MAJOR:
        raise ModelFormatError(
            f"unsupported model format version {head[1]} (this build reads {FORMAT_MAJOR})"
        )
    try:
        return _parse_body(lines)
    except (IndexError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc


def _parse_body(lines) -> SurvivalForest:
    sections = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("tree "):
        key, _, rest = lines[i].partition(" ")
        sections[key] = rest
        i += 1
    cfg = json.loads(sections["config"])
    config = ForestConfig(**cfg)
    schema = tuple(
        FeatureSpec(s["name"], s["kind"], s["cardinality"],
                    tuple(s["categories"]) if s["categories"] else None)
        for s in json.loads(sections["schema"])
    )
    grp = json.loads(sections["groups"])
    group_spec = GroupSpec(grp["attribute"], tuple(grp["labels"]), grp["deprived_index"])
    grid_text = sections["time_grid"].split()
    time_grid = np.array([float(v) for v in grid_text], dtype=np.float64)

    trees = []
    while i < len(lines) and lines[i].startswith("tree "):
        i += 1
        nodes = {}
        while not lines[i].startswith("end tree"):
            parts = lines[i].split()
            node_id = int(parts[1])
            if parts[2] == "leaf":
                steps = [s.split(":") for s in parts[3:]]
                nodes[node_id] = TreeNode(
                    step_times=np.array([float(s[0]) for s in steps]),
                    step_events=np.array([int(s[1]) for s in steps], dtype=np.int64),
                    step_at_risk=np.array([int(s[2]) for s in steps], dtype=np.int64),
                )
            else:
                feature = int(parts[3])
                if parts[4] == "cat":
                    nodes[node_id] = TreeNode(
                        feature=feature,
                        categories=frozenset(int(c) for c in parts[5].split(",")),
                        left=int(parts[6]), right=int(parts[7]),
                    )
                else:
                    nodes[node_id] = TreeNode(
                        feature=feature, threshold=float(parts[5]),
                        left=int(parts[6]), right=int(parts[7]),
                    )
            i += 1
        i += 1
        trees.append(SurvivalTree(tuple(nodes[k] for k in range(len(nodes)))))
    if i >= len(lines) or lines[i] != "end forest":
        raise ModelFormatError("missing end-of-forest marker")
    return SurvivalForest(tuple(trees), time_grid, config, schema, group_spec)
