import numpy as np
import pytest

from fairsurv.data import (
    CATEGORICAL,
    Dataset,
    FeatureSpec,
    GroupSpec,
    SchemaConfig,
    SynthConfig,
    generate_synthetic,
    load_csv,
    read_schema_config,
    split_k_fold,
    write_csv,
)
from fairsurv.errors import ConfigError, ParseError, SchemaError
from fairsurv.estimators import log_rank

TOY_CSV = """age,time,event,race
30,1,1,A
41,2,0,B
25,3,1,A
"""

TOY_CONFIG = SchemaConfig(
    time_col="time", event_col="event", group_col="race",
    deprived_value="A", feature_cols=("age",),
)


def write_file(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_toy(tmp_path):
    data = load_csv(write_file(tmp_path, "toy.csv", TOY_CSV), TOY_CONFIG)
    assert data.n == 3
    assert data.censored_count == 1
    np.testing.assert_array_equal(data.times, [1, 2, 3])
    np.testing.assert_array_equal(data.events, [True, False, True])
    np.testing.assert_array_equal(data.groups, [0, 1, 0])  # deprived value A -> 0
    assert data.group_spec.group_labels == ("A", "B")
    assert data.group_spec.deprived_index == 0


def test_load_csv_missing_column(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event\n30,1,1\n")
    with pytest.raises(SchemaError, match="race"):
        load_csv(path, TOY_CONFIG)


def test_load_csv_nonnumeric_cell_reports_row(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event,race\n30,1,1,A\nxx,2,0,B\n")
    with pytest.raises(ParseError, match="row 2"):
        load_csv(path, TOY_CONFIG)


def test_load_csv_nonpositive_time(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event,race\n30,0,1,A\n31,2,1,B\n")
    with pytest.raises(ParseError, match="row 1"):
        load_csv(path, TOY_CONFIG)


def test_load_csv_bad_event_value(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event,race\n30,1,2,A\n31,2,1,B\n")
    with pytest.raises(ParseError, match="event"):
        load_csv(path, TOY_CONFIG)


def test_load_csv_missing_value_rejected(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event,race\n,1,1,A\n31,2,1,B\n")
    with pytest.raises(ParseError, match="row 1"):
        load_csv(path, TOY_CONFIG)


def test_load_csv_single_group_rejected(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event,race\n30,1,1,A\n31,2,1,A\n")
    with pytest.raises(SchemaError, match="2 distinct"):
        load_csv(path, TOY_CONFIG)


def test_load_csv_deprived_value_must_appear(tmp_path):
    path = write_file(tmp_path, "bad.csv", "age,time,event,race\n30,1,1,B\n31,2,1,C\n")
    with pytest.raises(SchemaError, match="'A'"):
        load_csv(path, TOY_CONFIG)


def test_categorical_first_appearance_encoding(tmp_path):
    csv_text = "job,time,event,race\nnurse,1,1,A\nclerk,2,1,B\nnurse,3,0,A\nsmith,4,1,B\n"
    config = SchemaConfig("time", "event", "race", "A", ("job",), ("job",))
    data = load_csv(write_file(tmp_path, "cat.csv", csv_text), config)
    spec = data.schema[0]
    assert spec.kind == CATEGORICAL
    assert spec.categories == ("nurse", "clerk", "smith")
    np.testing.assert_array_equal(data.features_matrix[:, 0], [0, 1, 0, 2])


def make_rossi_like_csv(tmp_path):
    # 432 rows, 318 censored, 9 features with race as the sensitive attribute
    rng = np.random.default_rng(3)
    lines = ["fin,age,race,wexp,mar,paro,prio,educ,emp,week,arrest"]
    censored_flags = np.zeros(432, dtype=bool)
    censored_flags[:318] = True
    rng.shuffle(censored_flags)
    for i in range(432):
        censored = censored_flags[i]
        week = 52 if censored else int(rng.integers(1, 52))
        race = "black" if rng.random() < 0.55 else "other"
        row = [
            str(rng.integers(0, 2)), str(rng.integers(17, 45)), race,
            str(rng.integers(0, 2)), str(rng.integers(0, 2)), str(rng.integers(0, 2)),
            str(rng.integers(0, 19)), str(rng.integers(2, 7)), str(rng.integers(0, 2)),
            str(week), "0" if censored else "1",
        ]
        lines.append(",".join(row))
    return write_file(tmp_path, "rossi_like.csv", "\n".join(lines) + "\n")


def test_load_csv_rossi_shaped(tmp_path):
    config = SchemaConfig(
        time_col="week", event_col="arrest", group_col="race", deprived_value="black",
        feature_cols=("fin", "age", "race", "wexp", "mar", "paro", "prio", "educ", "emp"),
        categorical_cols=("race",),
    )
    data = load_csv(make_rossi_like_csv(tmp_path), config)
    assert data.n == 432
    assert data.censored_count == 318
    assert abs(data.censored_rate - 0.736) < 1e-3
    assert data.n_features == 9


def test_roundtrip_loaded_dataset(tmp_path):
    csv_text = "job,score,time,event,race\nnurse,1.25,1.5,1,B\nclerk,-0.7,2.25,1,A\nnurse,0.125,3.75,0,B\n"
    config = SchemaConfig("time", "event", "race", "A", ("job", "score"), ("job",))
    data = load_csv(write_file(tmp_path, "rt.csv", csv_text), config)
    out = tmp_path / "rt_out.csv"
    write_csv(data, out, time_col="time", event_col="event", group_col="race")
    again = load_csv(out, config)
    assert again == data


def test_roundtrip_synthetic(tmp_path):
    data = generate_synthetic(SynthConfig(40, 3, 0.4, 2.0, 0.3, seed=5))
    out = tmp_path / "synth.csv"
    write_csv(data, out)
    config = SchemaConfig("time", "event", "group", "deprived",
                          feature_cols=tuple(s.name for s in data.schema))
    again = load_csv(out, config)
    assert again == data


def test_schema_config_file_parsing(tmp_path):
    text = (
        "# mapping\n"
        "time_col = week\n"
        "event_col = arrest\n"
        "group_col = race\n"
        "deprived_value = black\n"
        "feature_cols = fin, age, race\n"
        "categorical_cols = race\n"
    )
    config = read_schema_config(write_file(tmp_path, "schema.cfg", text))
    assert config.time_col == "week"
    assert config.feature_cols == ("fin", "age", "race")
    assert config.categorical_cols == ("race",)


def test_schema_config_missing_key(tmp_path):
    path = write_file(tmp_path, "schema.cfg", "time_col = t\nevent_col = e\n")
    with pytest.raises(ConfigError, match="group_col"):
        read_schema_config(path)


def test_schema_config_unknown_key(tmp_path):
    path = write_file(tmp_path, "schema.cfg", "time_col = t\nfrobnicate = 1\n")
    with pytest.raises(ConfigError, match="frobnicate"):
        read_schema_config(path)


def test_schema_config_categoricals_must_be_features():
    with pytest.raises(ConfigError):
        SchemaConfig("t", "e", "g", "x", ("a",), ("b",))


def test_generate_synthetic_deterministic():
    cfg = SynthConfig(120, 4, 0.35, 2.5, 0.4, seed=7)
    assert generate_synthetic(cfg) == generate_synthetic(cfg)


def test_generate_synthetic_equal_hazard_groups_indistinguishable():
    # oracle: two-sample log-rank between the generated groups
    clean = 0
    for seed in range(10):
        data = generate_synthetic(SynthConfig(500, 4, 0.4, 1.0, 0.3, seed=seed))
        dep = data.groups == 0
        res = log_rank(
            (data.times[dep], data.events[dep]),
            (data.times[~dep], data.events[~dep]),
        )
        if res.z is not None and abs(res.z) < 3.0:
            clean += 1
    assert clean >= 9


def test_generate_synthetic_biased_hazard_orders_medians():
    data = generate_synthetic(SynthConfig(2000, 4, 0.4, 3.0, 0.2, seed=21))
    dep_median = np.median(data.times[data.groups == 0])
    fav_median = np.median(data.times[data.groups == 1])
    assert dep_median < fav_median


def test_generate_synthetic_censor_rate_near_target():
    for seed in (1, 2, 3):
        data = generate_synthetic(SynthConfig(3000, 5, 0.3, 2.0, 0.5, seed=seed))
        assert abs(data.censored_rate - 0.5) < 0.05


def test_generate_synthetic_output_satisfies_invariants():
    rng = np.random.default_rng(99)
    for _ in range(10):
        cfg = SynthConfig(
            n=int(rng.integers(10, 200)),
            n_features=int(rng.integers(2, 8)),
            group_fraction_deprived=float(rng.uniform(0.1, 0.9)),
            hazard_ratio_deprived=float(rng.uniform(0.3, 4.0)),
            censor_rate_target=float(rng.uniform(0.0, 0.8)),
            seed=int(rng.integers(0, 2**32)),
        )
        data = generate_synthetic(cfg)
        assert data.n == cfg.n
        assert np.all(data.times > 0) and np.all(np.isfinite(data.times))
        assert data.features_matrix.shape == (cfg.n, cfg.n_features)
        assert set(np.unique(data.groups)) <= {0, 1}
        assert data.group_counts().min() >= 1


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(10, 1, 0.5, 1.0, 0.0, 0)
    with pytest.raises(ValueError):
        SynthConfig(10, 3, 0.0, 1.0, 0.0, 0)
    with pytest.raises(ValueError):
        SynthConfig(10, 3, 0.5, -1.0, 0.0, 0)
    with pytest.raises(ValueError):
        SynthConfig(10, 3, 0.5, 1.0, 1.0, 0)


def test_split_k_fold_basic_partition():
    data = generate_synthetic(SynthConfig(10, 2, 0.4, 1.5, 0.3, seed=2))
    folds = split_k_fold(data, 5, seed=0)
    assert len(folds) == 5
    seen = []
    for train, test in folds:
        assert test.n == 2
        assert train.n == 8
        seen.extend((ind.time, ind.group) for ind in test.individuals)
    assert len(seen) == 10 and len(set(seen)) == 10


def test_split_k_fold_stratification_within_one():
    data = generate_synthetic(SynthConfig(432, 4, 0.5, 2.0, 0.7, seed=4))
    k = 5
    folds = split_k_fold(data, k, seed=1)
    for g in (0, 1):
        for e in (False, True):
            total = int(np.sum((data.groups == g) & (data.events == e)))
            for _, test in folds:
                count = int(np.sum((test.groups == g) & (test.events == e)))
                assert abs(count - total / k) <= 1.0


def test_split_k_fold_bad_k():
    data = generate_synthetic(SynthConfig(10, 2, 0.4, 1.5, 0.0, seed=2))
    for k in (0, 1):
        with pytest.raises(ValueError):
            split_k_fold(data, k, seed=0)
    with pytest.raises(ValueError):
        split_k_fold(data, 11, seed=0)


def test_split_k_fold_disjoint_exhaustive_property():
    rng = np.random.default_rng(14)
    for _ in range(6):
        n = int(rng.integers(12, 80))
        data = generate_synthetic(SynthConfig(n, 2, 0.45, 2.0, 0.4, seed=int(rng.integers(1e6))))
        k = int(rng.integers(2, min(n, 8)))
        folds = split_k_fold(data, k, seed=int(rng.integers(1e6)))
        all_test = [ind for _, test in folds for ind in test.individuals]
        assert len(all_test) == n
        assert sorted(map(id, all_test)) == sorted(map(id, data.individuals))


def test_dataset_validation():
    spec = GroupSpec("g", ("a", "b"))
    with pytest.raises(ValueError, match="at least one"):
        Dataset((FeatureSpec("x"),), (), spec)
    with pytest.raises(ValueError, match="time"):
        Dataset.from_arrays([[1.0]], [0.0], [True], [0], spec)
    with pytest.raises(ValueError, match="group"):
        Dataset.from_arrays([[1.0]], [1.0], [True], [2], spec)
    with pytest.raises(ValueError, match="categorical"):
        Dataset.from_arrays(
            [[3.0]], [1.0], [True], [0], spec,
            schema=(FeatureSpec("c", CATEGORICAL, cardinality=2),),
        )


def test_group_spec_validation():
    with pytest.raises(ValueError):
        GroupSpec("g", ("only",))
    with pytest.raises(ValueError):
        GroupSpec("g", ("a", "a"))
    with pytest.raises(ValueError):
        GroupSpec("g", ("a", "b"), deprived_index=5)


def test_load_csv_duplicate_referenced_column(tmp_path):
    path = write_file(tmp_path, "dup.csv", "age,age,time,event,race\n30,31,1,1,A\n32,33,2,1,B\n")
    with pytest.raises(SchemaError, match="more than once"):
        load_csv(path, TOY_CONFIG)


def test_split_k_fold_leave_one_out():
    data = generate_synthetic(SynthConfig(8, 2, 0.4, 1.5, 0.0, seed=6))
    folds = split_k_fold(data, 8, seed=1)
    assert all(test.n == 1 for _, test in folds)
    assert all(train.n == 7 for train, _ in folds)
