"""Dataset model, CSV ingestion, and the seeded synthetic data generator.

A Dataset is an immutable collection of individuals, each carrying a
feature vector, an observed time, an event indicator (True = event
observed, False = right-censored) and a group index into the dataset's
GroupSpec. Group index 0 is always the deprived group.
"""

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, ParseError, SchemaError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSpec:
    """One feature column: continuous, or categorical with a cardinality.

    ``categories`` holds the label-encoding vocabulary (code -> label) for
    features ingested from CSV; it is None for features constructed
    directly from arrays.
    """

    name: str
    kind: str = CONTINUOUS
    cardinality: int | None = None
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if self.cardinality is None or self.cardinality < 1:
                raise ValueError(f"categorical feature {self.name!r} needs a cardinality >= 1")
            if self.categories is not None and len(self.categories) != self.cardinality:
                raise ValueError(f"feature {self.name!r}: categories do not match cardinality")
        elif self.cardinality is not None:
            raise ValueError(f"continuous feature {self.name!r} cannot have a cardinality")


@dataclass(frozen=True)
class GroupSpec:
    """The sensitive attribute: its name, value labels and deprived index."""

    attribute_name: str
    group_labels: tuple[str, ...]
    deprived_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_labels", tuple(self.group_labels))
        if len(self.group_labels) < 2:
            raise ValueError("a sensitive attribute needs at least 2 groups")
        if len(set(self.group_labels)) != len(self.group_labels):
            raise ValueError("group labels must be unique")
        if not 0 <= self.deprived_index < len(self.group_labels):
            raise ValueError("deprived_index out of range")

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)


@dataclass(frozen=True)
class Individual:
    features: tuple[float, ...]
    time: float
    event: bool
    group: int


@dataclass(frozen=True)
class Dataset:
    schema: tuple[FeatureSpec, ...]
    individuals: tuple[Individual, ...]
    group_spec: GroupSpec

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "individuals", tuple(self.individuals))
        if not self.individuals:
            raise ValueError("dataset must contain at least one individual")
        p = len(self.schema)
        n_groups = self.group_spec.n_groups
        for i, ind in enumerate(self.individuals):
            if len(ind.features) != p:
                raise ValueError(f"individual {i}: expected {p} features, got {len(ind.features)}")
            if not (math.isfinite(ind.time) and ind.time > 0):
                raise ValueError(f"individual {i}: time must be positive and finite")
            if not 0 <= ind.group < n_groups:
                raise ValueError(f"individual {i}: group index {ind.group} out of range")
        for j, spec in enumerate(self.schema):
            if spec.kind == CATEGORICAL:
                col = self.features_matrix[:, j]
                if np.any(col != np.floor(col)) or np.any(col < 0) or np.any(col >= spec.cardinality):
                    raise ValueError(
                        f"feature {spec.name!r}: categorical codes must be integers "
                        f"in [0, {spec.cardinality})"
                    )

    @cached_property
    def features_matrix(self) -> np.ndarray:
        x = np.array([ind.features for ind in self.individuals], dtype=np.float64)
        x.setflags(write=False)
        return x

    @cached_property
    def times(self) -> np.ndarray:
        t = np.array([ind.time for ind in self.individuals], dtype=np.float64)
        t.setflags(write=False)
        return t

    @cached_property
    def events(self) -> np.ndarray:
        e = np.array([ind.event for ind in self.individuals], dtype=bool)
        e.setflags(write=False)
        return e

    @cached_property
    def groups(self) -> np.ndarray:
        g = np.array([ind.group for ind in self.individuals], dtype=np.int64)
        g.setflags(write=False)
        return g

    @property
    def n(self) -> int:
        return len(self.individuals)

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @property
    def censored_count(self) -> int:
        return int(np.sum(~self.events))

    @property
    def censored_rate(self) -> float:
        return self.censored_count / self.n

    def group_counts(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.group_spec.n_groups)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.schema, tuple(self.individuals[int(i)] for i in indices), self.group_spec)

    @staticmethod
    def from_arrays(features, times, events, groups, group_spec, schema=None) -> "Dataset":
        """Build a dataset from parallel arrays; schema defaults to continuous
        features named f0..f{p-1}."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if schema is None:
            schema = tuple(FeatureSpec(f"f{j}") for j in range(features.shape[1]))
        individuals = tuple(
            Individual(tuple(float(v) for v in row), float(t), bool(e), int(g))
            for row, t, e, g in zip(features, times, events, groups)
        )
        return Dataset(tuple(schema), individuals, group_spec)


@dataclass(frozen=True)
class SchemaConfig:
    """Column mapping for CSV ingestion."""

    time_col: str
    event_col: str
    group_col: str
    deprived_value: str
    feature_cols: tuple[str, ...]
    categorical_cols: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "feature_cols", tuple(self.feature_cols))
        object.__setattr__(self, "categorical_cols", tuple(self.categorical_cols))
        if not self.feature_cols:
            raise ConfigError("feature_cols must name at least one column")
        unknown = set(self.categorical_cols) - set(self.feature_cols)
        if unknown:
            raise ConfigError(f"categorical_cols not in feature_cols: {sorted(unknown)}")


_SCHEMA_KEYS = {"time_col", "event_col", "group_col", "deprived_value",
                "feature_cols", "categorical_cols"}


def read_schema_config(path) -> SchemaConfig:
    """Parse a flat key=value schema config file.

    Recognized keys: time_col, event_col, group_col, deprived_value,
    feature_cols (comma list), categorical_cols (comma list, optional).
    Blank lines and lines starting with '#' are ignored.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _SCHEMA_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
    for key in ("time_col", "event_col", "group_col", "deprived_value", "feature_cols"):
        if key not in values:
            raise ConfigError(f"schema config is missing required key {key!r}")
    split = lambda s: tuple(part.strip() for part in s.split(",") if part.strip())
    return SchemaConfig(
        time_col=values["time_col"],
        event_col=values["event_col"],
        group_col=values["group_col"],
        deprived_value=values["deprived_value"],
        feature_cols=split(values["feature_cols"]),
        categorical_cols=split(values.get("categorical_cols", "")),
    )


def load_csv(path, config: SchemaConfig) -> Dataset:
    """Load a UTF-8, comma-separated file with a header row into a Dataset.

    Categorical feature columns are label-encoded by first appearance.
    Group labels are encoded with the deprived value first (group 0),
    remaining labels by first appearance. Row numbers in errors are
    1-based over data rows (the header is row 0).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        needed = [config.time_col, config.event_col, config.group_col, *config.feature_cols]
        for col in needed:
            if col not in header:
                raise SchemaError(f"missing column {col!r}")
            if header.count(col) > 1:
                raise SchemaError(f"column {col!r} appears more than once in the header")
        col_of = {name: header.index(name) for name in set(needed)}

        cat_vocab = {name: [] for name in config.categorical_cols}
        cat_code = {name: {} for name in config.categorical_cols}
        group_labels = [config.deprived_value]
        group_code = {config.deprived_value: 0}

        rows = []
        for rownum, cells in enumerate(reader, start=1):
            if len(cells) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(cells)}", row=rownum)
            time = _parse_positive_real(cells[col_of[config.time_col]], config.time_col, rownum)
            event_raw = cells[col_of[config.event_col]].strip()
            if event_raw not in ("0", "1"):
                raise ParseError(
                    f"column {config.event_col!r}: event value must be 0 or 1, got {event_raw!r}",
                    row=rownum,
                )
            group_raw = cells[col_of[config.group_col]].strip()
            if group_raw == "":
                raise ParseError(f"column {config.group_col!r}: missing group value", row=rownum)
            if group_raw not in group_code:
                group_code[group_raw] = len(group_labels)
                group_labels.append(group_raw)
            feats = []
            for name in config.feature_cols:
                raw = cells[col_of[name]].strip()
                if name in cat_code:
                    if raw == "":
                        raise ParseError(f"column {name!r}: missing value", row=rownum)
                    if raw not in cat_code[name]:
                        cat_code[name][raw] = len(cat_vocab[name])
                        cat_vocab[name].append(raw)
                    feats.append(float(cat_code[name][raw]))
                else:
                    feats.append(_parse_real(raw, name, rownum))
            rows.append((tuple(feats), time, event_raw == "1", group_code[group_raw]))

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    if len(group_labels) < 2:
        raise SchemaError(
            f"group column {config.group_col!r} must contain at least 2 distinct values"
        )
    if sum(1 for r in rows if r[3] == 0) == 0:
        raise SchemaError(
            f"deprived value {config.deprived_value!r} never appears in column "
            f"{config.group_col!r}"
        )
    schema = tuple(
        FeatureSpec(name, CATEGORICAL, len(cat_vocab[name]), tuple(cat_vocab[name]))
        if name in cat_code else FeatureSpec(name)
        for name in config.feature_cols
    )
    group_spec = GroupSpec(config.group_col, tuple(group_labels), deprived_index=0)
    individuals = tuple(Individual(*row) for row in rows)
    return Dataset(schema, individuals, group_spec)


def _parse_real(raw, col, rownum):
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"column {col!r}: non-numeric value {raw!r}", row=rownum) from None
    if not math.isfinite(value):
        raise ParseError(f"column {col!r}: non-finite value {raw!r}", row=rownum)
    return value


def _parse_positive_real(raw, col, rownum):
    value = _parse_real(raw, col, rownum)
    if value <= 0:
        raise ParseError(f"column {col!r}: time must be > 0, got {raw!r}", row=rownum)
    return value


def write_csv(data: Dataset, path, time_col="time", event_col="event", group_col="group"):
    """Write a dataset back to CSV so that load_csv reproduces it exactly.

    Floats are written with repr (exact round-trip). Categorical features
    are written as their original labels when the schema carries them.
    The guarantee holds for datasets whose encoding vocabularies are in
    first-appearance order, which is true for everything load_csv and
    generate_synthetic produce.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([spec.name for spec in data.schema] + [time_col, event_col, group_col])
        for ind in data.individuals:
            cells = []
            for spec, value in zip(data.schema, ind.features):
                if spec.kind == CATEGORICAL:
                    code = int(value)
                    cells.append(spec.categories[code] if spec.categories else str(code))
                else:
                    cells.append(repr(value))
            cells.append(repr(ind.time))
            cells.append("1" if ind.event else "0")
            cells.append(data.group_spec.group_labels[ind.group])
            writer.writerow(cells)


@dataclass(frozen=True)
class SynthConfig:
    """Configuration for the biased-censored synthetic generator."""

    n: int
    n_features: int
    group_fraction_deprived: float
    hazard_ratio_deprived: float
    censor_rate_target: float
    seed: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.n_features < 2:
            raise ValueError("n_features must be >= 2 (two informative features)")
        if not 0.0 < self.group_fraction_deprived < 1.0:
            raise ValueError("group_fraction_deprived must lie in (0, 1)")
        if not (self.hazard_ratio_deprived > 0 and math.isfinite(self.hazard_ratio_deprived)):
            raise ValueError("hazard_ratio_deprived must be positive and finite")
        if not 0.0 <= self.censor_rate_target < 1.0:
            raise ValueError("censor_rate_target must lie in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


# Fixed generator coefficients. The hazard is
#   base_rate * ratio^deprived * exp(b0*x0 + b1_eff*x1)
# where x0 is a noisy group proxy (mean ln(ratio) for the deprived group,
# spread _PROXY_NOISE) and x1's coefficient flips direction for the
# deprived group with strength _FLIP per unit of ln(ratio).
_SYNTH_B0 = 0.3
_SYNTH_B1 = 0.8
_FLIP = 1.2
_PROXY_NOISE = 0.3
_SYNTH_BASE_RATE = 0.1


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Draw a biased, right-censored dataset with exponential hazards.

    The two informative features model a realistic discrimination
    pattern: feature 0 is a noisy proxy of group membership (deprived
    mean ln(hazard_ratio_deprived)), and feature 1's effect on the hazard
    runs in the opposite direction for the deprived group, so a learner
    that ignores group structure fits the majority pattern and mis-ranks
    the minority. Both the proxy shift and the direction flip scale with
    ln(hazard_ratio_deprived) and vanish at ratio 1, where the groups are
    statistically identical. Censoring times are exponential with a rate
    calibrated so the expected censored fraction equals
    censor_rate_target. Output is deterministic for a fixed config.
    """
    rng = np.random.default_rng(config.seed)
    n, p = config.n, config.n_features

    n_deprived = min(n - 1, max(1, round(config.group_fraction_deprived * n)))
    deprived = np.zeros(n, dtype=bool)
    deprived[rng.permutation(n)[:n_deprived]] = True

    x = rng.standard_normal((n, p))
    shift = math.log(config.hazard_ratio_deprived)
    x[:, 0] = np.where(deprived, shift, 0.0) + _PROXY_NOISE * x[:, 0]

    b1 = np.where(deprived, _SYNTH_B1 - _FLIP * shift, _SYNTH_B1)
    score = _SYNTH_B0 * x[:, 0] + b1 * x[:, 1]
    rate = _SYNTH_BASE_RATE * np.exp(score)
    rate[deprived] *= config.hazard_ratio_deprived

    event_time = rng.exponential(1.0 / rate)
    if config.censor_rate_target > 0.0:
        censor_rate = _solve_censor_rate(rate, config.censor_rate_target)
        censor_time = rng.exponential(1.0 / censor_rate, size=n)
        observed = np.minimum(event_time, censor_time)
        event = event_time <= censor_time
    else:
        observed = event_time
        event = np.ones(n, dtype=bool)
    observed = np.maximum(observed, 1e-12)

    groups = np.where(deprived, 0, 1)
    spec = GroupSpec("group", ("deprived", "favored"), deprived_index=0)
    return Dataset.from_arrays(x, observed, event, groups, spec)


def _solve_censor_rate(event_rates, target):
    """Censoring rate mu with mean_i mu/(mu + lambda_i) == target (bisection)."""
    lo, hi = 1e-12, 1e12

    def frac(mu):
        return float(np.mean(mu / (mu + event_rates)))

    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def split_k_fold(data: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Stratified k-fold split by (group, event status).

    Within each stratum, members are shuffled and dealt round-robin, with
    the starting fold rotating between strata so overall fold sizes differ
    by at most one. Returns k (train, test) pairs; folds are disjoint and
    their union is the full dataset.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > data.n:
        raise ValueError(f"k={k} exceeds dataset size n={data.n}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(data.n, dtype=np.int64)
    offset = 0
    strata = sorted(set(zip(data.groups.tolist(), data.events.tolist())))
    for group, event in strata:
        idx = np.flatnonzero((data.groups == group) & (data.events == event))
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = (offset + np.arange(idx.size)) % k
        offset += idx.size
    folds = []
    for f in range(k):
        test_idx = np.flatnonzero(fold_of == f)
        train_idx = np.flatnonzero(fold_of != f)
        folds.append((data.subset(train_idx), data.subset(test_idx)))
    return folds
