import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fairsurv.cli import main
from fairsurv.data import SynthConfig, generate_synthetic, write_csv

SCHEMA_TEXT = (
    "time_col = time\n"
    "event_col = event\n"
    "group_col = group\n"
    "deprived_value = deprived\n"
    "feature_cols = f0, f1, f2\n"
)


@pytest.fixture
def workspace(tmp_path):
    data = generate_synthetic(SynthConfig(140, 3, 0.4, 2.5, 0.3, seed=8))
    data_path = tmp_path / "data.csv"
    write_csv(data, data_path)
    schema_path = tmp_path / "schema.cfg"
    schema_path.write_text(SCHEMA_TEXT, encoding="utf-8")
    return tmp_path, data_path, schema_path, data


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def report_without_duration(text):
    doc = json.loads(text)
    doc.get("manifest", {}).pop("duration_seconds", None)
    return doc


def test_train_writes_deterministic_model(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    model = tmp / "model.txt"
    code, out, _ = run_cli(
        ["train", "--data", data_path, "--schema", schema_path,
         "--out", model, "--trees", 4, "--seed", 1], capsys)
    assert code == 0
    first = model.read_bytes()
    manifest = json.loads(out)["manifest"]
    assert manifest["params"]["fairness_enabled"] is True
    assert manifest["seed"] == 1
    assert set(manifest["input_digests"]) == {str(data_path), str(schema_path)}

    code, _, _ = run_cli(
        ["train", "--data", data_path, "--schema", schema_path,
         "--out", model, "--trees", 4, "--seed", 1], capsys)
    assert code == 0
    assert model.read_bytes() == first


def test_train_no_fairness_recorded(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    model = tmp / "ablation.txt"
    code, out, _ = run_cli(
        ["train", "--data", data_path, "--schema", schema_path,
         "--out", model, "--trees", 2, "--seed", 0, "--no-fairness"], capsys)
    assert code == 0
    assert json.loads(out)["manifest"]["params"]["fairness_enabled"] is False
    config_line = model.read_text(encoding="utf-8").splitlines()[1]
    assert '"fairness_enabled": false' in config_line


def test_train_missing_schema_key_is_config_error(workspace, capsys):
    tmp, data_path, _, _ = workspace
    bad_schema = tmp / "bad.cfg"
    bad_schema.write_text("time_col = time\nevent_col = event\n", encoding="utf-8")
    code, _, err = run_cli(
        ["train", "--data", data_path, "--schema", bad_schema, "--out", tmp / "m.txt"],
        capsys)
    assert code == 2
    assert err.startswith("error config")


def test_train_missing_data_file_is_data_error(workspace, capsys):
    tmp, _, schema_path, _ = workspace
    code, _, err = run_cli(
        ["train", "--data", tmp / "nope.csv", "--schema", schema_path,
         "--out", tmp / "m.txt"], capsys)
    assert code == 3
    assert err.startswith("error data")


def test_audit_with_model_reports_all_sections(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    model = tmp / "model.txt"
    run_cli(["train", "--data", data_path, "--schema", schema_path,
             "--out", model, "--trees", 4, "--seed", 3], capsys)
    out_path = tmp / "report.json"
    code, out, _ = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path,
         "--model", model, "--out", out_path], capsys)
    assert code == 0
    report = json.loads(out)
    assert json.loads(out_path.read_text(encoding="utf-8")) == report
    assert set(report) == {"groups", "fairness", "bounds", "evaluation",
                           "calibration_table", "manifest"}
    assert report["groups"]["deprived_index"] == 0
    fairness = report["fairness"]
    assert 0.0 <= fairness["ci"] <= 1.0
    assert fairness["ci_percent"] == round(fairness["ci"] * 100, 2)
    assert set(fairness["per_group_concordance"]) == {"0", "1"}
    assert report["bounds"]["floor_outcome"] >= 0.0
    tensor = report["bounds"]["tensor"]
    for plane in ("0", "1"):
        assert tensor[plane]["concordant"] <= tensor[plane]["permissible"]
    assert report["evaluation"]["c_index"] > 0.0
    assert len(report["calibration_table"]) == 20  # 2 groups x 10 deciles
    # tie-free cohort: report imparity equals the tensor-derived value exactly
    if report["bounds"]["excluded_risk_ties"] == 0 and report["bounds"]["excluded_time_ties"] == 0:
        assert report["bounds"]["ci"] == fairness["ci"]


def test_audit_rerun_identical_up_to_duration(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    model = tmp / "model.txt"
    run_cli(["train", "--data", data_path, "--schema", schema_path,
             "--out", model, "--trees", 3, "--seed", 5], capsys)
    args = ["audit", "--data", data_path, "--schema", schema_path, "--model", model]
    _, out_a, _ = run_cli(args, capsys)
    _, out_b, _ = run_cli(args, capsys)
    assert report_without_duration(out_a) == report_without_duration(out_b)


def make_symmetric_fixture(tmp_path):
    """Two identical groups: every deprived row has an exact favored twin
    (same time, risk and prediction), and the per-bin predicted event
    probabilities match the realized fractions."""
    rows = []
    preds = []
    idx = 0
    for group in ("deprived", "favored"):
        pos = 0
        for b in range(10):
            k = 10 - b
            surv = 1.0 - k / 12.0
            for m in range(12):
                time = 1.0 + pos * 1e-6 if m < k else 20.0 + pos * 1e-6
                rows.append([0.0, 0.0, 0.0, time, 1, group])
                preds.append([idx, float(pos), surv])
                idx += 1
                pos += 1
    data_path = tmp_path / "sym.csv"
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f0", "f1", "f2", "time", "event", "group"])
        writer.writerows(rows)
    pred_path = tmp_path / "preds.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "risk", "surv_prob"])
        writer.writerows(preds)
    schema_path = tmp_path / "sym_schema.cfg"
    schema_path.write_text(SCHEMA_TEXT, encoding="utf-8")
    return data_path, pred_path, schema_path


def test_audit_external_predictions_symmetric_cohort(tmp_path, capsys):
    data_path, pred_path, schema_path = make_symmetric_fixture(tmp_path)
    code, out, _ = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path,
         "--predictions", pred_path, "--id-col", "id", "--horizon", 10.0], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["fairness"]["ci"] == 0.0
    assert report["fairness"]["calibration"]["verdict"] == "fair_calibrated"
    assert report["manifest"]["params"]["predictions"] == str(pred_path)


def test_audit_tie_free_cohort_ci_matches_tensor(tmp_path, capsys):
    # distinct times and risks: the report imparity must equal the
    # tensor-derived value exactly
    rng = np.random.default_rng(13)
    n = 60
    times = rng.permutation(n) + 1.0
    risks = rng.permutation(n).astype(float)
    events = rng.random(n) < 0.6
    data_path = tmp_path / "tf.csv"
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f0", "f1", "f2", "time", "event", "group"])
        for i in range(n):
            writer.writerow([0.0, 0.0, 0.0, times[i], int(events[i]),
                             "deprived" if i % 2 else "favored"])
    pred_path = tmp_path / "tf_preds.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "risk"])
        for i in range(n):
            writer.writerow([i, risks[i]])
    schema_path = tmp_path / "tf.cfg"
    schema_path.write_text(SCHEMA_TEXT, encoding="utf-8")
    code, out, _ = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path,
         "--predictions", pred_path, "--id-col", "id"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["bounds"]["excluded_time_ties"] == 0
    assert report["bounds"]["excluded_risk_ties"] == 0
    assert report["bounds"]["ci"] == report["fairness"]["ci"]


def test_audit_without_probs_marks_calibration_unavailable(workspace, capsys):
    tmp, data_path, schema_path, data = workspace
    pred_path = tmp / "risks_only.csv"
    rng = np.random.default_rng(2)
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "risk"])
        for i in range(data.n):
            writer.writerow([i, float(rng.normal())])
    code, out, _ = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path,
         "--predictions", pred_path, "--id-col", "id"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["fairness"]["calibration"]["available"] is False
    assert report["evaluation"]["brier"] is None


def test_audit_prediction_row_count_mismatch(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    pred_path = tmp / "short.csv"
    pred_path.write_text("id,risk\n0,1.0\n", encoding="utf-8")
    code, _, err = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path,
         "--predictions", pred_path], capsys)
    assert code == 3
    assert err.startswith("error data")


def test_audit_needs_exactly_one_source(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    code, _, err = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path], capsys)
    assert code == 2
    assert "one of" in err


def test_audit_all_censored_is_degenerate(tmp_path, capsys):
    data_path = tmp_path / "cens.csv"
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["f0", "f1", "f2", "time", "event", "group"])
        for i in range(30):
            writer.writerow([0.1 * i, 0.0, 0.0, 1.0 + i, 0,
                             "deprived" if i % 2 else "favored"])
    schema_path = tmp_path / "schema.cfg"
    schema_path.write_text(SCHEMA_TEXT, encoding="utf-8")
    pred_path = tmp_path / "preds.csv"
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "risk"])
        for i in range(30):
            writer.writerow([i, float(i)])
    code, _, err = run_cli(
        ["audit", "--data", data_path, "--schema", schema_path,
         "--predictions", pred_path], capsys)
    assert code == 4
    assert err.startswith("error degenerate")


def test_ablate_structure_and_determinism(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    args = ["ablate", "--data", data_path, "--schema", schema_path,
            "--folds", 3, "--seeds", 1, "--trees", 3, "--seed", 2]
    code, out_a, _ = run_cli(args, capsys)
    assert code == 0
    report = json.loads(out_a)
    table = report["ablation"]
    assert set(table) == {"fairness_on", "fairness_off"}
    for arm in table.values():
        assert arm["runs"] == 3
        assert set(arm["per_group"]) == {"deprived", "favored"}
        assert arm["train_seconds"] >= 0.0
        for entry in arm["per_group"].values():
            assert set(entry) == {"c_index_percent", "brier_percent", "td_auc_percent"}
    code, out_b, _ = run_cli(args, capsys)
    a = report_without_duration(out_a)
    b = report_without_duration(out_b)
    for doc in (a, b):
        for arm in doc["ablation"].values():
            arm.pop("train_seconds")
    assert a == b


def test_ablate_single_fold_rejected(workspace, capsys):
    tmp, data_path, schema_path, _ = workspace
    code, _, err = run_cli(
        ["ablate", "--data", data_path, "--schema", schema_path, "--folds", 1],
        capsys)
    assert code == 2
    assert err.startswith("error config")


def test_cli_usage_error_exit_code():
    proc = subprocess.run(
        [sys.executable, "-m", "fairsurv.cli", "train"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2


def test_cli_subprocess_end_to_end(tmp_path):
    data = generate_synthetic(SynthConfig(80, 3, 0.4, 2.0, 0.3, seed=4))
    data_path = tmp_path / "d.csv"
    write_csv(data, data_path)
    schema_path = tmp_path / "s.cfg"
    schema_path.write_text(SCHEMA_TEXT, encoding="utf-8")
    model = tmp_path / "m.txt"
    proc = subprocess.run(
        [sys.executable, "-m", "fairsurv.cli", "train", "--data", str(data_path),
         "--schema", str(schema_path), "--out", str(model), "--trees", "2"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert model.exists()
    proc = subprocess.run(
        [sys.executable, "-m", "fairsurv.cli", "audit", "--data", str(data_path),
         "--schema", str(schema_path), "--model", str(model)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    json.loads(proc.stdout)
