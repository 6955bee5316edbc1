"""Command-line entry point: forecast <dcm|fit|predict|eval|ablate|diagnose|guide|curve|synth>.

Machine-readable JSON goes to stdout, tables to CSV files, human summaries to
stderr. Exit codes: 0 success, 2 input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import basis as basis_mod
from .complexity import compute_all, load_dcm_table, save_dcm_table
from .data_io import (ArchDescriptor, DEFAULT_FAMILIES, load_dataset, load_manifest,
                      load_records, save_records, subsample)
from .diagnostics import (anova_variance_depth, classify_pc6, depth_guidance,
                          offset_variability_ranking, pc6_quadratic_fit)
from .errors import InputError, NumericError
from .evaluation import (EvalConfig, ablation_rows, report_rows, run_ablation,
                         run_protocol, sample_size_curve, fit_two_stage,
                         write_curve_csv, write_report_csv, DEFAULT_CURVE_FRACTIONS)
from .forecaster import load_model, predict_baseline, save_model
from .synthetic import MetaCorpusSpec, generate_meta_corpus

EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(payload: dict, no_timestamp: bool) -> None:
    if not no_timestamp:
        payload = {**payload, "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    print(json.dumps(payload, indent=2, sort_keys=True))


def _eval_config(args) -> EvalConfig:
    hp = {}
    if getattr(args, "rounds", None) is not None:
        hp["rounds"] = args.rounds
    if getattr(args, "max_depth", None) is not None:
        hp["max_depth"] = args.max_depth
    if getattr(args, "learning_rate", None) is not None:
        hp["learning_rate"] = args.learning_rate
    if getattr(args, "n_trees", None) is not None:
        hp["n_trees"] = args.n_trees
    n = args.n_components
    n_components = 7 if n == "auto" else int(n)
    return EvalConfig(n_components=n_components, stage2_kind=args.stage2,
                      stage2_hyperparameters=hp, seed=args.seed)


def _resolve_n(args, records, vectors) -> int:
    """auto = select by LODO stage-1 MSE over 1..7, falling back to 7."""
    if args.n_components != "auto":
        return int(args.n_components)
    dataset_ids = sorted({r.dataset_id for r in records})
    mean_acc = {ds: float(np.mean([r.accuracy for r in records if r.dataset_id == ds]))
                for ds in dataset_ids}
    if len(dataset_ids) < 3:
        return 7
    try:
        return basis_mod.select_n_components(
            [v for v in vectors if v.dataset_id in set(dataset_ids)],
            mean_acc, candidates=list(range(1, 8)))
    except InputError:
        return 7


# ---------------------------------------------------------------------------

def cmd_dcm(args) -> None:
    manifest = load_manifest(args.manifest)
    ids = manifest.dataset_ids() if args.all else [args.dataset]
    if not args.all and args.dataset is None:
        raise InputError("dcm needs --dataset ID or --all")
    existing = load_dcm_table(args.out) if Path(args.out).exists() and args.merge else []
    keyed = {(v.dataset_id, v.fraction, v.seed): v for v in existing}
    for ds in ids:
        entry = manifest[ds]
        table = load_dataset(entry, base_dir=args.base_dir)
        for fraction in args.fraction:
            for seed in args.seed:
                work = table if fraction >= 1.0 else subsample(table, fraction, seed)
                vec = compute_all(work, seed=seed, fraction=fraction)
                keyed[(vec.dataset_id, vec.fraction, vec.seed)] = vec
                _log(f"dcm: {ds} fraction={fraction} seed={seed} done")
    vectors = [keyed[k] for k in sorted(keyed)]
    save_dcm_table(vectors, args.out)
    _log(f"dcm: wrote {len(vectors)} rows to {args.out}")


def cmd_fit(args) -> None:
    records = load_records(args.records)
    vectors = load_dcm_table(args.dcm)
    config = _eval_config(args)
    config.n_components = _resolve_n(args, records, vectors)
    model = fit_two_stage(records, vectors, config)
    save_model(model, args.out)
    rep = {ds: basis_mod.representative_vector([v for v in vectors if v.dataset_id == ds])
           for ds in sorted({r.dataset_id for r in records})}
    preds, targets = [], []
    for r in records:
        f = model.forecast(rep[r.dataset_id], r.arch)
        preds.append(f.final)
        targets.append(r.accuracy)
    preds, targets = np.array(preds), np.array(targets)
    _emit({
        "n_components": model.basis.n_components,
        "train_mse": float(((preds - targets) ** 2).mean()),
        "train_mae": float(np.abs(preds - targets).mean()),
        "n_records": len(records),
        "model_path": str(args.out),
    }, args.no_timestamp)


def cmd_predict(args) -> None:
    model = load_model(args.model)
    vectors = load_dcm_table(args.dcm)
    mine = [v for v in vectors if v.dataset_id == args.dataset]
    if not mine:
        raise InputError(f"dataset {args.dataset} not in DCM table {args.dcm}")
    arch = ArchDescriptor(family=args.family, depth=args.depth, filters=args.filters,
                          dense_units=args.dense_units, dropout=args.dropout,
                          learning_rate=args.learning_rate)
    f = model.forecast(basis_mod.representative_vector(mine), arch)
    _emit({"base": f.base, "offset": f.offset, "final": f.final, "clamped": f.clamped},
          args.no_timestamp)


def cmd_eval(args) -> None:
    records = load_records(args.records)
    vectors = load_dcm_table(args.dcm)
    config = _eval_config(args)
    domains = None
    if args.protocol == "lodm":
        if args.manifest is None:
            raise InputError("eval --protocol lodm needs --manifest for domain tags")
        domains = load_manifest(args.manifest).domains()
    report = run_protocol(records, vectors, args.protocol, config, domains=domains,
                          test_fraction=args.test_fraction)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = report_rows(report)
    write_report_csv(rows, out_dir / f"eval_{args.protocol}.csv")
    _emit({
        "protocol": report.protocol,
        "config": report.config,
        "folds": {fr.name: {scope: vars(m) for scope, m in fr.scopes.items()}
                  for fr in report.folds},
        "csv": str(out_dir / f"eval_{args.protocol}.csv"),
    }, args.no_timestamp)


def cmd_ablate(args) -> None:
    records = load_records(args.records)
    vectors = load_dcm_table(args.dcm)
    config = _eval_config(args)
    report = run_ablation(records, vectors, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(ablation_rows(report), out_dir / "ablation.csv")
    wins = sum(report.two_stage[f].mse < report.single_stage[f].mse for f in report.folds)
    _emit({
        "config": report.config,
        "two_stage": {f: vars(report.two_stage[f]) for f in report.folds},
        "single_stage": {f: vars(report.single_stage[f]) for f in report.folds},
        "two_stage_mse_wins": int(wins),
        "n_folds": len(report.folds),
        "csv": str(out_dir / "ablation.csv"),
    }, args.no_timestamp)


def _load_pc6_points(path: str) -> list[tuple[float, float]]:
    points = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"pc6", "mse"} <= set(reader.fieldnames):
            raise InputError(f"{path}: points CSV needs pc6,mse columns")
        for row in reader:
            points.append((float(row["pc6"]), float(row["mse"])))
    return points


def cmd_diagnose(args) -> None:
    payload: dict = {}
    if args.points:
        points = _load_pc6_points(args.points)
        fit = pc6_quadratic_fit(points)
        payload["pc6"] = {"a": fit.a, "b": fit.b, "c": fit.c, "r2": fit.r2,
                          "points": fit.n_points}
        payload["regimes"] = [
            {"pc6": x, "mse": y, **vars(classify_pc6(x, args.tau))}
            for x, y in points
        ]
    if args.records and args.dcm:
        records = load_records(args.records)
        vectors = load_dcm_table(args.dcm)
        config = _eval_config(args)
        by_ds = {}
        for v in vectors:
            by_ds.setdefault(v.dataset_id, []).append(v)
        rep = {ds: basis_mod.representative_vector(vs) for ds, vs in by_ds.items()}
        model = fit_two_stage(records, vectors, config)
        scores = {ds: basis_mod.project(model.basis, rep[ds]) for ds in rep}
        base = {ds: predict_baseline(model.stage1, scores[ds]) for ds in rep}
        ranking = offset_variability_ranking(records, rep, base)
        payload["variability"] = [{"measure": m, "association": a} for m, a in ranking]
        anova = anova_variance_depth(records, rep, n_quantiles=args.quantiles)
        payload["anova"] = {
            "variance_mean_bin": vars(anova.factor_a),
            "depth": vars(anova.factor_b),
            "interaction": vars(anova.interaction),
            "residual": vars(anova.residual),
            "n": anova.n,
        }
        if model.basis.n_components >= 6:
            payload["pc6_scores"] = {
                ds: {"score": float(scores[ds].scores[5]),
                     **vars(classify_pc6(float(scores[ds].scores[5]), args.tau))}
                for ds in sorted(rep)
            }
    if not payload:
        raise InputError("diagnose needs --points and/or (--records with --dcm)")
    _emit(payload, args.no_timestamp)


def cmd_guide(args) -> None:
    vectors = load_dcm_table(args.dcm)
    by_ds = {}
    for v in vectors:
        by_ds.setdefault(v.dataset_id, []).append(v)
    if args.dataset not in by_ds:
        raise InputError(f"dataset {args.dataset} not in DCM table")
    value = basis_mod.representative_vector(by_ds[args.dataset]).variance_mean
    corpus = [basis_mod.representative_vector(vs).variance_mean
              for ds, vs in sorted(by_ds.items()) if ds != args.dataset]
    g = depth_guidance(value, corpus)
    _emit(vars(g), args.no_timestamp)


def cmd_curve(args) -> None:
    manifest = load_manifest(args.manifest)
    table = load_dataset(manifest[args.dataset], base_dir=args.base_dir)
    records = load_records(args.records)
    model = load_model(args.model)
    seeds = list(range(args.n_seeds))
    rows = sample_size_curve(table, args.fraction, seeds, model, records)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"curve_{args.dataset}.csv"
    write_curve_csv(rows, path)
    _emit({
        "dataset": args.dataset,
        "rows": len(rows),
        "fractions": list(args.fraction),
        "csv": str(path),
    }, args.no_timestamp)


def cmd_synth(args) -> None:
    spec = MetaCorpusSpec(n_datasets=args.datasets, offset_law=args.offset_law,
                          noise_sigma=args.noise, seed=args.seed,
                          rows_per_dataset=args.rows)
    records, tables, difficulty = generate_meta_corpus(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with manifest_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset_id", "domain", "format", "features_path",
                    "labels_path", "label_column"])
        for ds_id, table in tables.items():
            data_path = f"{ds_id}.csv"
            with (out_dir / data_path).open("w", newline="") as dfh:
                dw = csv.writer(dfh)
                dw.writerow([f"f{j}" for j in range(table.d)] + ["label"])
                for row, lab in zip(table.features, table.labels):
                    dw.writerow([repr(float(v)) for v in row] + [int(lab)])
            w.writerow([ds_id, table.domain, "csv", data_path, "", "label"])
    save_records(records, out_dir / "records.csv")
    _emit({
        "manifest": str(manifest_path),
        "records": str(out_dir / "records.csv"),
        "datasets": {ds: difficulty[ds] for ds in sorted(difficulty)},
        "n_records": len(records),
    }, args.no_timestamp)


# ---------------------------------------------------------------------------

def _add_common(p, stage2: bool = False) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timestamp", action="store_true")
    if stage2:
        p.add_argument("--n-components", default="auto",
                       help="PCA components: integer or 'auto' (default)")
        p.add_argument("--stage2", choices=["gbt", "rf"], default="gbt")
        p.add_argument("--rounds", type=int, default=None)
        p.add_argument("--max-depth", type=int, default=None)
        p.add_argument("--learning-rate", type=float, default=None)
        p.add_argument("--n-trees", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forecast",
                                     description="Pre-training performance forecasting "
                                                 "from data complexity measures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dcm", help="compute complexity measures from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--all", action="store_true")
    p.add_argument("--fraction", type=float, nargs="+", default=[1.0])
    p.add_argument("--base-dir", default=".")
    p.add_argument("--out", required=True)
    p.add_argument("--merge", action="store_true",
                   help="merge into an existing DCM table instead of overwriting")
    p.add_argument("--seed", type=int, nargs="+", default=[0])
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_dcm)

    p = sub.add_parser("fit", help="fit the two-stage forecaster")
    p.add_argument("--records", required=True)
    p.add_argument("--dcm", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, stage2=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forecast one (dataset, architecture) pair")
    p.add_argument("--model", required=True)
    p.add_argument("--dcm", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--family", required=True, choices=list(DEFAULT_FAMILIES))
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--filters", type=int, required=True)
    p.add_argument("--dense-units", type=int, required=True)
    p.add_argument("--dropout", type=float, required=True)
    p.add_argument("--learning-rate", type=float, required=True, dest="learning_rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("--records", required=True)
    p.add_argument("--dcm", required=True)
    p.add_argument("--protocol", choices=["indist", "lodo", "lodm"], required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out-dir", default="out")
    _add_common(p, stage2=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="two-stage vs single-stage LODO comparison")
    p.add_argument("--records", required=True)
    p.add_argument("--dcm", required=True)
    p.add_argument("--out-dir", default="out")
    _add_common(p, stage2=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("diagnose", help="PC6 quadratic, regimes, variability, ANOVA")
    p.add_argument("--points", default=None, help="CSV with pc6,mse columns")
    p.add_argument("--records", default=None)
    p.add_argument("--dcm", default=None)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--quantiles", type=int, default=5)
    _add_common(p, stage2=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("guide", help="depth guidance from variance mean")
    p.add_argument("--dcm", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_guide)

    p = sub.add_parser("curve", help="sample-size sensitivity curve")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--fraction", type=float, nargs="+",
                   default=list(DEFAULT_CURVE_FRACTIONS))
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--base-dir", default=".")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("synth", help="generate a synthetic meta-corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--datasets", type=int, default=7)
    p.add_argument("--rows", type=int, default=1200)
    p.add_argument("--offset-law", choices=["zero", "multiplicative"], default="zero")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        _log(f"input error: {exc}")
        return EXIT_INPUT
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _log(f"numeric error: {exc}")
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
