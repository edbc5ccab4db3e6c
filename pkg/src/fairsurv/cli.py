"""Command-line interface: train, audit, ablate.

Every command is deterministic given (input bytes, flags, seed); the only
non-deterministic report field is the manifest's wall-clock duration.
Reports are single JSON documents on stdout (and in --out when given).

Exit codes: 0 success, 2 usage or configuration error, 3 data, parse or
model-file error, 4 degenerate statistic.
"""

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import bounds_report, build_tensor
from .data import Dataset, load_csv, read_schema_config, split_k_fold
from .errors import (
    ConfigError,
    DegenerateStatisticError,
    FairsurvError,
    ModelFormatError,
    ParseError,
    SchemaError,
)
from .evaluation import evaluate, evaluate_cohort
from .fairness import ScoredCohort, concordance_imparity, default_horizon, fairness_report
from .forest import ForestConfig, SurvivalForest, train_forest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


@dataclass
class RunManifest:
    """Reproducibility record embedded in every emitted report."""

    command: str
    params: dict
    seed: int | None
    input_digests: dict = field(default_factory=dict)
    tool_version: str = __version__
    duration_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "input_digests": self.input_digests,
            "tool_version": self.tool_version,
            "duration_seconds": self.duration_seconds,
        }


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit(document, out_path):
    text = json.dumps(document, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsurv",
        description="Fairness-aware survival analysis: train forests, audit risk "
                    "models with censorship-aware fairness metrics, run ablations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a fair survival forest")
    train.add_argument("--data", required=True)
    train.add_argument("--schema", required=True)
    train.add_argument("--out", required=True, help="model output path")
    train.add_argument("--trees", type=int, default=100)
    train.add_argument("--d0", type=int, default=3,
                       help="minimum unique event times for splitting")
    train.add_argument("--mtry", type=int, default=None)
    train.add_argument("--max-thresholds", type=int, default=32)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--no-fairness", action="store_true",
                       help="drop the fairness penalty (ablation arm)")
    train.add_argument("--workers", type=int, default=1)

    audit = sub.add_parser("audit", help="fairness and accuracy audit of predictions")
    audit.add_argument("--data", required=True)
    audit.add_argument("--schema", required=True)
    audit.add_argument("--model", default=None)
    audit.add_argument("--predictions", default=None,
                       help="CSV of externally produced predictions")
    audit.add_argument("--risk-col", default="risk")
    audit.add_argument("--id-col", default=None,
                       help="column of 0-based data row indices; default is row order")
    audit.add_argument("--horizon", type=float, default=None)
    audit.add_argument("--bins", type=int, default=10)
    audit.add_argument("--out", default=None)

    ablate = sub.add_parser("ablate", help="cross-validated fairness on/off comparison")
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--schema", required=True)
    ablate.add_argument("--folds", type=int, default=5)
    ablate.add_argument("--seeds", type=int, default=1, help="number of repetitions")
    ablate.add_argument("--seed", type=int, default=0, help="base seed")
    ablate.add_argument("--trees", type=int, default=50)
    ablate.add_argument("--d0", type=int, default=3)
    ablate.add_argument("--mtry", type=int, default=None)
    ablate.add_argument("--max-thresholds", type=int, default=32)
    ablate.add_argument("--horizon", type=float, default=None)
    ablate.add_argument("--workers", type=int, default=1)
    ablate.add_argument("--out", default=None)
    return parser


def cmd_train(args) -> int:
    start = time.time()
    config = ForestConfig(
        n_trees=args.trees, min_unique_events=args.d0, mtry=args.mtry,
        fairness_enabled=not args.no_fairness,
        max_thresholds_per_feature=args.max_thresholds, seed=args.seed,
    )
    schema = read_schema_config(args.schema)
    data = load_csv(args.data, schema)
    forest = train_forest(data, config, workers=args.workers)
    forest.save(args.out)
    manifest = RunManifest(
        command="train",
        params={
            "trees": args.trees, "d0": args.d0, "mtry": args.mtry,
            "max_thresholds": args.max_thresholds,
            "fairness_enabled": not args.no_fairness, "workers": args.workers,
            "out": args.out,
        },
        seed=args.seed,
        input_digests={args.data: _digest(args.data), args.schema: _digest(args.schema)},
        duration_seconds=round(time.time() - start, 3),
    )
    _emit({"manifest": manifest.to_dict(), "model": args.out,
           "n": data.n, "censored_rate": data.censored_rate}, None)
    return EXIT_OK


def _load_predictions(path, data: Dataset, risk_col, id_col):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty predictions file")
        header = [h.strip() for h in header]
        if risk_col not in header:
            raise SchemaError(f"missing column {risk_col!r}")
        if id_col is not None and id_col not in header:
            raise SchemaError(f"missing column {id_col!r}")
        risk_idx = header.index(risk_col)
        id_idx = header.index(id_col) if id_col is not None else None
        prob_idx = header.index("surv_prob") if "surv_prob" in header else None
        rows = list(reader)
    if len(rows) != data.n:
        raise SchemaError(
            f"predictions hold {len(rows)} rows but the data has {data.n}"
        )
    risks = np.empty(data.n)
    probs = np.empty(data.n) if prob_idx is not None else None
    seen = set()
    for rownum, cells in enumerate(rows, start=1):
        if id_idx is not None:
            try:
                target = int(cells[id_idx])
            except ValueError:
                raise ParseError(f"column {id_col!r}: bad id {cells[id_idx]!r}",
                                 row=rownum) from None
            if not 0 <= target < data.n or target in seen:
                raise SchemaError(f"prediction ids do not join 1:1 with data rows "
                                  f"(offending id {target})")
            seen.add(target)
        else:
            target = rownum - 1
        try:
            risks[target] = float(cells[risk_idx])
            if probs is not None:
                probs[target] = float(cells[prob_idx])
        except ValueError:
            raise ParseError("non-numeric prediction value", row=rownum) from None
    return risks, probs


def cmd_audit(args) -> int:
    start = time.time()
    if (args.model is None) == (args.predictions is None):
        raise ConfigError("audit needs exactly one of --model or --predictions")
    schema = read_schema_config(args.schema)
    data = load_csv(args.data, schema)
    horizon = args.horizon if args.horizon is not None else default_horizon(
        data.times, data.events)

    digests = {args.data: _digest(args.data), args.schema: _digest(args.schema)}
    if args.model is not None:
        forest = SurvivalForest.load(args.model)
        digests[args.model] = _digest(args.model)
        risks = forest.predict_risks(data.features_matrix)
        probs = forest.predict_survival_probs(data.features_matrix, horizon)
    else:
        digests[args.predictions] = _digest(args.predictions)
        risks, probs = _load_predictions(args.predictions, data, args.risk_col, args.id_col)

    cohort = ScoredCohort.from_dataset(data, risks, survival_probs=probs, horizon=horizon)
    report = {
        "groups": {
            "attribute": data.group_spec.attribute_name,
            "labels": list(data.group_spec.group_labels),
            "deprived_index": data.group_spec.deprived_index,
        },
        "fairness": fairness_report(cohort, horizon=horizon, bins=args.bins),
    }
    if "calibration" in report["fairness"]:
        report["calibration_table"] = _calibration_table(report["fairness"]["calibration"])
    else:
        report["fairness"]["calibration"] = {
            "available": False,
            "reason": "no survival probabilities supplied",
        }

    if data.group_spec.n_groups == 2:
        tensor = build_tensor(cohort)
        report["bounds"] = bounds_report(tensor).to_dict()
        report["bounds"]["tensor"] = tensor.to_dict()
    else:
        report["bounds"] = {
            "supported": False,
            "reason": "the uncertainty tensor is defined for a binary sensitive attribute",
        }

    eval_report = evaluate_cohort(cohort)
    report["evaluation"] = eval_report.to_dict()
    report["manifest"] = RunManifest(
        command="audit",
        params={
            "model": args.model, "predictions": args.predictions,
            "risk_col": args.risk_col, "id_col": args.id_col,
            "horizon": horizon, "bins": args.bins,
        },
        seed=None,
        input_digests=digests,
        duration_seconds=round(time.time() - start, 3),
    ).to_dict()
    _emit(report, args.out)
    return EXIT_OK


def _calibration_table(calibration) -> list:
    table = []
    for group, entry in sorted(calibration["per_group"].items()):
        for i, bin_stat in enumerate(entry["bins"]):
            table.append({
                "group": group,
                "bin": i,
                "n": bin_stat["n"],
                "predicted_event_prob": bin_stat["predicted_mean"],
                "km_observed_event_prob": bin_stat["observed_event_prob"],
            })
    return table


def run_ablation(data: Dataset, folds: int, seeds: int, base_config: ForestConfig,
                 horizon: float | None = None, base_seed: int = 0,
                 workers: int = 1) -> dict:
    """Cross-validated comparison of the fairness penalty on versus off.

    For each repetition seed and fold, both arms are trained on the same
    training split and scored on the held-out fold: concordance imparity
    on held-out risks, plus per-group concordance/Brier/AUC. Reported
    values are medians over all (seed, fold) runs; runtime is the total
    training wall-clock per arm.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    labels = data.group_spec.group_labels
    arms = {}
    for fairness in (True, False):
        runs = {"ci": [], "per_group": {g: {"c_index": [], "brier": [], "td_auc": []}
                                        for g in range(len(labels))}}
        train_time = 0.0
        for rep in range(seeds):
            seed = base_seed + rep
            for fold_i, (train, test) in enumerate(split_k_fold(data, folds, seed=seed)):
                config = ForestConfig(
                    n_trees=base_config.n_trees,
                    min_unique_events=base_config.min_unique_events,
                    mtry=base_config.mtry,
                    fairness_enabled=fairness,
                    max_thresholds_per_feature=base_config.max_thresholds_per_feature,
                    seed=seed * 100 + fold_i,
                    bootstrap=base_config.bootstrap,
                )
                t0 = time.time()
                forest = train_forest(train, config, workers=workers)
                train_time += time.time() - t0
                risks = forest.predict_risks(test.features_matrix)
                runs["ci"].append(concordance_imparity(ScoredCohort.from_dataset(test, risks)))
                report = evaluate(forest, test, horizon=horizon)
                for g, group_eval in report.per_group.items():
                    runs["per_group"][g]["c_index"].append(group_eval.c_index)
                    runs["per_group"][g]["brier"].append(group_eval.brier)
                    runs["per_group"][g]["td_auc"].append(group_eval.td_auc)
        arm = {
            "median_ci": _median(runs["ci"]),
            "median_ci_percent": _percent(_median(runs["ci"])),
            "per_group": {},
            "runs": len(runs["ci"]),
            "train_seconds": round(train_time, 3),
        }
        for g in range(len(labels)):
            entry = runs["per_group"][g]
            arm["per_group"][labels[g]] = {
                "c_index_percent": _percent(_median(entry["c_index"])),
                "brier_percent": _percent(_median(entry["brier"])),
                "td_auc_percent": _percent(_median(entry["td_auc"])),
            }
        arms["fairness_on" if fairness else "fairness_off"] = arm
    return arms


def _median(values):
    values = [v for v in values if v is not None]
    return float(np.median(values)) if values else None


def _percent(value):
    return None if value is None else round(100.0 * value, 2)


def cmd_ablate(args) -> int:
    start = time.time()
    schema = read_schema_config(args.schema)
    data = load_csv(args.data, schema)
    base_config = ForestConfig(
        n_trees=args.trees, min_unique_events=args.d0, mtry=args.mtry,
        max_thresholds_per_feature=args.max_thresholds, seed=args.seed,
    )
    table = run_ablation(
        data, folds=args.folds, seeds=args.seeds, base_config=base_config,
        horizon=args.horizon, base_seed=args.seed, workers=args.workers,
    )
    report = {
        "ablation": table,
        "manifest": RunManifest(
            command="ablate",
            params={
                "folds": args.folds, "seeds": args.seeds, "trees": args.trees,
                "d0": args.d0, "mtry": args.mtry, "horizon": args.horizon,
                "workers": args.workers,
            },
            seed=args.seed,
            input_digests={args.data: _digest(args.data), args.schema: _digest(args.schema)},
            duration_seconds=round(time.time() - start, 3),
        ).to_dict(),
    }
    _emit(report, args.out)
    return EXIT_OK


_HANDLERS = {"train": cmd_train, "audit": cmd_audit, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ParseError, ModelFormatError, OSError) as exc:
        print(f"error data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegenerateStatisticError as exc:
        print(f"error degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except FairsurvError as exc:
        print(f"error internal: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
