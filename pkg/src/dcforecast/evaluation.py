"""Metrics, split construction, protocol runners, ablation, sample-size curve.

Every fold fits its own basis, Stage-1, and Stage-2 strictly on training
datasets; a leakage audit checks the fitted id sets against the test ids
before any held-out prediction is made.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import fit_basis, project, _representative_vector
from .complexity import ComplexityVector, MEASURE_NAMES, compute_all
from .data_io import PerformanceRecord, subsample
from .errors import InputError
from .forecaster import (ForecastModel, PCScores, build_features, combine,
                         feature_schema, fit_single_stage, fit_stage1, fit_stage2,
                         predict_baseline, predict_offset)

R2_SENTINEL = -1e9
SST_FLOOR = 1e-12

DEFAULT_CURVE_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.16, 0.25, 0.50, 1.0)


@dataclass(frozen=True)
class Metrics:
    r2: float
    mse: float
    mae: float
    n: int


def metrics(targets, predictions) -> Metrics:
    """R^2 (vs the TEST-target mean), MSE, MAE."""
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if t.size == 0 or t.shape != p.shape:
        raise InputError("targets and predictions must be equal nonzero length")
    err = t - p
    mse = float((err ** 2).mean())
    mae = float(np.abs(err).mean())
    sse = float((err ** 2).sum())
    sst = float(((t - t.mean()) ** 2).sum())
    if sst < SST_FLOOR:
        r2 = 0.0 if sse < SST_FLOOR else max(1.0 - sse / SST_FLOOR, R2_SENTINEL)
    else:
        r2 = 1.0 - sse / sst
    return Metrics(r2=r2, mse=mse, mae=mae, n=int(t.size))


@dataclass(frozen=True)
class Fold:
    name: str
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]


def folds_lodo(records: list[PerformanceRecord]) -> list[Fold]:
    """One fold per dataset; the fold's dataset is the test set."""
    ids = sorted({r.dataset_id for r in records})
    if len(ids) < 2:
        raise InputError("LODO needs >= 2 datasets")
    folds = []
    for held in ids:
        test = tuple(i for i, r in enumerate(records) if r.dataset_id == held)
        train = tuple(i for i, r in enumerate(records) if r.dataset_id != held)
        folds.append(Fold(name=held, train_indices=train, test_indices=test))
    return folds


def folds_lodm(records: list[PerformanceRecord], domains: dict[str, str]) -> list[Fold]:
    """One fold per domain tag."""
    missing = sorted({r.dataset_id for r in records} - set(domains))
    if missing:
        raise InputError(f"datasets without a domain tag: {missing}")
    tags = sorted({domains[r.dataset_id] for r in records})
    if len(tags) < 2:
        raise InputError("LODM needs >= 2 domains")
    folds = []
    for tag in tags:
        test = tuple(i for i, r in enumerate(records) if domains[r.dataset_id] == tag)
        train = tuple(i for i, r in enumerate(records) if domains[r.dataset_id] != tag)
        folds.append(Fold(name=tag, train_indices=train, test_indices=test))
    return folds


def split_indist(records: list[PerformanceRecord], test_fraction: float = 0.2,
                 seed: int = 0) -> Fold:
    """Single train/test split, stratified by dataset id, deterministic per seed."""
    if not (0.0 < test_fraction < 1.0):
        raise InputError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    by_ds: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        by_ds.setdefault(r.dataset_id, []).append(i)
    test: list[int] = []
    for ds in sorted(by_ds):
        idx = np.array(by_ds[ds])
        if idx.size < 2:
            raise InputError(f"dataset {ds} has < 2 records; cannot stratify")
        k = int(round(test_fraction * idx.size))
        k = min(max(k, 1), idx.size - 1)
        test.extend(rng.choice(idx, size=k, replace=False).tolist())
    test_set = set(test)
    train = tuple(i for i in range(len(records)) if i not in test_set)
    return Fold(name="indist", train_indices=train, test_indices=tuple(sorted(test)))


# ---------------------------------------------------------------------------
# fold pipeline

@dataclass
class EvalConfig:
    n_components: int = 7
    stage1_method: str = "ols"
    ridge_lambda: float = 1e-2
    stage2_kind: str = "gbt"
    stage2_hyperparameters: dict = field(default_factory=dict)
    seed: int = 0
    families: tuple[str, ...] = ("LeNet", "VGG", "ResNet")

    def echo(self) -> dict:
        return {
            "n_components": self.n_components,
            "stage1_method": self.stage1_method,
            "ridge_lambda": self.ridge_lambda,
            "stage2_kind": self.stage2_kind,
            "stage2_hyperparameters": dict(self.stage2_hyperparameters),
            "seed": self.seed,
            "families": list(self.families),
        }


def _scores_by_dataset(basis, vectors: list[ComplexityVector],
                       dataset_ids: list[str]) -> dict[str, PCScores]:
    out = {}
    for ds in dataset_ids:
        mine = [v for v in vectors if v.dataset_id == ds]
        if not mine:
            raise InputError(f"no complexity vector for dataset {ds}")
        out[ds] = project(basis, _representative_vector(mine))
    return out


def fit_two_stage(records: list[PerformanceRecord], vectors: list[ComplexityVector],
                  config: EvalConfig) -> ForecastModel:
    """Fit basis + Stage-1 + Stage-2 on the given records (no held-out set)."""
    train_ids = sorted({r.dataset_id for r in records})
    missing = [d for d in train_ids if not any(v.dataset_id == d for v in vectors)]
    if missing:
        raise InputError(f"records reference datasets missing from the DCM table: {missing}")
    train_vecs = [v for v in vectors if v.dataset_id in set(train_ids)]
    basis = fit_basis(train_vecs, requested_n=config.n_components)
    scores = _scores_by_dataset(basis, train_vecs, train_ids)
    mean_acc = {ds: float(np.mean([r.accuracy for r in records if r.dataset_id == ds]))
                for ds in train_ids}
    stage1 = fit_stage1([scores[d] for d in train_ids],
                        [mean_acc[d] for d in train_ids],
                        method=config.stage1_method, ridge_lambda=config.ridge_lambda)
    base_by_ds = {d: predict_baseline(stage1, scores[d]) for d in train_ids}
    schema = feature_schema(basis.n_components, config.families, with_baseline=True)
    rows = np.stack([build_features(scores[r.dataset_id], r.arch,
                                    base_by_ds[r.dataset_id], families=config.families)
                     for r in records])
    offsets = np.array([r.accuracy - base_by_ds[r.dataset_id] for r in records])
    stage2 = fit_stage2(rows, offsets, kind=config.stage2_kind, schema=schema,
                        hyperparameters=config.stage2_hyperparameters,
                        seed=config.seed, dataset_ids=frozenset(train_ids))
    return ForecastModel(basis=basis, stage1=stage1, stage2=stage2,
                         families=config.families)


def _audit_leakage(model: ForecastModel, test_ids: set[str], fold: str) -> None:
    for label, fitted in (("basis", model.basis.fitted_dataset_ids),
                          ("stage1", model.stage1.fitted_dataset_ids),
                          ("stage2", model.stage2.fitted_dataset_ids)):
        overlap = fitted & test_ids
        if overlap:
            raise RuntimeError(f"leakage in fold {fold}: {label} saw test ids {sorted(overlap)}")


@dataclass
class FoldResult:
    name: str
    scopes: dict[str, Metrics]               # "full", "stage1"
    per_dataset: dict[str, dict[str, Metrics]]


@dataclass
class EvalReport:
    protocol: str
    folds: list[FoldResult]
    config: dict


def _evaluate_fold(records, vectors, fold: Fold, config: EvalConfig,
                   indist: bool = False) -> FoldResult:
    train_records = [records[i] for i in fold.train_indices]
    test_records = [records[i] for i in fold.test_indices]
    test_ids = {r.dataset_id for r in test_records}
    if indist:
        # in-distribution: test datasets also appear in training, by design
        model = fit_two_stage(train_records, vectors, config)
    else:
        model = fit_two_stage(train_records, vectors, config)
        _audit_leakage(model, test_ids, fold.name)
    scores = _scores_by_dataset(model.basis, vectors, sorted(test_ids))
    base = {ds: predict_baseline(model.stage1, scores[ds]) for ds in scores}
    targets, preds, bases, ds_tags = [], [], [], []
    for r in test_records:
        f = combine(base[r.dataset_id],
                    predict_offset(model.stage2,
                                   build_features(scores[r.dataset_id], r.arch,
                                                  base[r.dataset_id],
                                                  families=config.families)))
        targets.append(r.accuracy)
        preds.append(f.final)
        bases.append(f.base)
        ds_tags.append(r.dataset_id)
    targets = np.array(targets)
    preds = np.array(preds)
    bases = np.array(bases)
    scopes = {"full": metrics(targets, preds), "stage1": metrics(targets, bases)}
    per_dataset = {}
    for ds in sorted(test_ids):
        mask = np.array([t == ds for t in ds_tags])
        per_dataset[ds] = {"full": metrics(targets[mask], preds[mask]),
                           "stage1": metrics(targets[mask], bases[mask])}
    return FoldResult(name=fold.name, scopes=scopes, per_dataset=per_dataset)


def run_protocol(records: list[PerformanceRecord], vectors: list[ComplexityVector],
                 protocol: str, config: EvalConfig,
                 domains: dict[str, str] | None = None,
                 test_fraction: float = 0.2) -> EvalReport:
    """Run the in-distribution / LODO / LODM evaluation end to end."""
    if protocol == "lodo":
        folds = folds_lodo(records)
        indist = False
    elif protocol == "lodm":
        if domains is None:
            raise InputError("LODM needs dataset -> domain tags")
        folds = folds_lodm(records, domains)
        indist = False
    elif protocol == "indist":
        folds = [split_indist(records, test_fraction, config.seed)]
        indist = True
    else:
        raise InputError(f"unknown protocol: {protocol}")
    results = []
    for fold in folds:
        try:
            results.append(_evaluate_fold(records, vectors, fold, config, indist=indist))
        except InputError as exc:
            raise InputError(f"fold {fold.name}: {exc}") from exc
    return EvalReport(protocol=protocol, folds=results, config=config.echo())


# ---------------------------------------------------------------------------
# ablation

@dataclass
class AblationReport:
    folds: list[str]
    two_stage: dict[str, Metrics]
    single_stage: dict[str, Metrics]
    config: dict


def run_ablation(records: list[PerformanceRecord], vectors: list[ComplexityVector],
                 config: EvalConfig) -> AblationReport:
    """LODO: full two-stage pipeline vs single-stage direct-accuracy learner."""
    folds = folds_lodo(records)
    two_stage: dict[str, Metrics] = {}
    single_stage: dict[str, Metrics] = {}
    for fold in folds:
        res = _evaluate_fold(records, vectors, fold, config)
        two_stage[fold.name] = res.scopes["full"]

        train_records = [records[i] for i in fold.train_indices]
        test_records = [records[i] for i in fold.test_indices]
        train_ids = sorted({r.dataset_id for r in train_records})
        train_vecs = [v for v in vectors if v.dataset_id in set(train_ids)]
        basis = fit_basis(train_vecs, requested_n=config.n_components)
        scores = _scores_by_dataset(basis, vectors, sorted({r.dataset_id for r in records}))
        schema = feature_schema(basis.n_components, config.families, with_baseline=False)
        rows = np.stack([build_features(scores[r.dataset_id], r.arch, None,
                                        families=config.families) for r in train_records])
        accs = np.array([r.accuracy for r in train_records])
        model = fit_single_stage(rows, accs, schema=schema,
                                 hyperparameters=config.stage2_hyperparameters,
                                 seed=config.seed, kind=config.stage2_kind,
                                 dataset_ids=frozenset(train_ids))
        preds = [predict_offset(model, build_features(scores[r.dataset_id], r.arch, None,
                                                      families=config.families))
                 for r in test_records]
        preds = np.clip(preds, 0.0, 1.0)
        single_stage[fold.name] = metrics([r.accuracy for r in test_records], preds)
    return AblationReport(folds=[f.name for f in folds], two_stage=two_stage,
                          single_stage=single_stage, config=config.echo())


# ---------------------------------------------------------------------------
# sample-size curve

@dataclass
class CurveRow:
    dataset_id: str
    fraction: float
    seed: int
    mse: float
    deviations: dict[str, float]   # per-measure relative deviation vs full data


def sample_size_curve(table, fractions, seeds, model: ForecastModel,
                      records: list[PerformanceRecord],
                      reference_seed: int = 0) -> list[CurveRow]:
    """DCM stability and forecast error as a function of the sampling fraction.

    The model must have been trained without this dataset (audited here).
    """
    ds_records = [r for r in records if r.dataset_id == table.dataset_id]
    if not ds_records:
        raise InputError(f"no records for dataset {table.dataset_id}")
    _audit_leakage(model, {table.dataset_id}, "sample_size_curve")
    reference = compute_all(table, seed=reference_seed)
    ref_vals = reference.values()
    rows = []
    for fraction in fractions:
        for seed in seeds:
            try:
                sub = subsample(table, fraction, seed, stratified=True)
            except InputError as exc:
                warnings.warn(f"fraction {fraction} skipped: {exc}", stacklevel=2)
                continue
            vec = compute_all(sub, seed=seed, fraction=fraction)
            vals = vec.values()
            dev = {m: float(abs(vals[i] - ref_vals[i]) / max(abs(ref_vals[i]), SST_FLOOR))
                   for i, m in enumerate(MEASURE_NAMES)}
            preds = [model.forecast(vec, r.arch).final for r in ds_records]
            mse = float(np.mean([(p - r.accuracy) ** 2
                                 for p, r in zip(preds, ds_records)]))
            rows.append(CurveRow(dataset_id=table.dataset_id, fraction=fraction,
                                 seed=seed, mse=mse, deviations=dev))
    return rows


# ---------------------------------------------------------------------------
# report serialization

REPORT_HEADER = ["protocol", "fold", "scope", "dataset", "r2", "mse", "mae", "n"]
CURVE_HEADER = ["dataset", "fraction", "seed", "mse", *MEASURE_NAMES]


def report_rows(report: EvalReport) -> list[list]:
    rows = []
    for fr in report.folds:
        for scope in ("stage1", "full"):
            m = fr.scopes[scope]
            rows.append([report.protocol, fr.name, scope, "all", m.r2, m.mse, m.mae, m.n])
        for ds in sorted(fr.per_dataset):
            for scope in ("stage1", "full"):
                m = fr.per_dataset[ds][scope]
                rows.append([report.protocol, fr.name, scope, ds, m.r2, m.mse, m.mae, m.n])
    return rows


def ablation_rows(report: AblationReport) -> list[list]:
    rows = []
    for name in report.folds:
        for scope, m in (("full", report.two_stage[name]),
                         ("single_stage", report.single_stage[name])):
            rows.append(["lodo_ablation", name, scope, "all", m.r2, m.mse, m.mae, m.n])
    return rows


def write_report_csv(rows: list[list], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for row in rows:
            w.writerow([row[0], row[1], row[2], row[3],
                        repr(float(row[4])), repr(float(row[5])),
                        repr(float(row[6])), row[7]])


def write_curve_csv(rows: list[CurveRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for r in rows:
            w.writerow([r.dataset_id, repr(r.fraction), r.seed, repr(r.mse),
                        *(repr(r.deviations[m]) for m in MEASURE_NAMES)])
