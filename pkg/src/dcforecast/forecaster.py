"""Two-stage forecaster: linear dataset baseline plus tree-ensemble offset.

Stage 1 regresses per-dataset mean accuracy on PC scores (OLS or Ridge).
Stage 2 learns the per-configuration offset from the baseline with a
gradient-boosted or random-forest regressor over [PC | arch | baseline]
features. The final forecast is baseline + offset, clamped to [0, 1].
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import ComplexityBasis, PCScores, project
from .complexity import ComplexityVector, MEASURE_NAMES
from .data_io import ArchDescriptor, DEFAULT_FAMILIES
from .errors import InputError, NumericError
from .trees import TreeEnsemble, fit_gradient_boosting, fit_random_forest

MODEL_VERSION = 1

GBT_DEFAULTS = {"rounds": 300, "max_depth": 3, "learning_rate": 0.05, "min_leaf": 2}
RF_DEFAULTS = {"n_trees": 200, "max_depth": 3, "min_leaf": 2}
DEFAULT_RIDGE_LAMBDA = 1e-2


@dataclass(frozen=True)
class BaselineModel:
    method: str                 # "ols" | "ridge"
    ridge_lambda: float
    intercept: float
    coefficients: np.ndarray    # (N,)
    residual_std: float
    fitted_dataset_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "coefficients",
                           np.asarray(self.coefficients, dtype=np.float64))

    @property
    def n_components(self) -> int:
        return self.coefficients.size


def fit_stage1(scores: list[PCScores], accuracies: list[float], method: str = "ols",
               ridge_lambda: float = DEFAULT_RIDGE_LAMBDA) -> BaselineModel:
    """Fit the dataset-level baseline regression on PC scores.

    OLS needs more datasets than components; otherwise Ridge is forced.
    Ridge penalizes coefficients but never the intercept.
    """
    if method not in ("ols", "ridge"):
        raise InputError(f"unknown stage-1 method: {method}")
    if len(scores) != len(accuracies) or not scores:
        raise InputError("scores and accuracies must be same nonzero length")
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.min() < 0 or acc.max() > 1:
        raise InputError("accuracies must lie in [0, 1]")
    S = np.stack([s.scores for s in scores])
    m, n_comp = S.shape
    if method == "ols" and m <= n_comp:
        warnings.warn(f"only {m} datasets for {n_comp} components: forcing Ridge",
                      stacklevel=2)
        method = "ridge"
    X = np.column_stack([np.ones(m), S])
    if method == "ols":
        gram = X.T @ X
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise NumericError("singular normal equations under OLS; use method='ridge'")
        beta = np.linalg.solve(gram, X.T @ acc)
    else:
        penalty = np.eye(n_comp + 1) * ridge_lambda
        penalty[0, 0] = 0.0
        beta = np.linalg.solve(X.T @ X + penalty, X.T @ acc)
    resid = acc - X @ beta
    df = m - n_comp - 1
    residual_std = math.sqrt(float((resid ** 2).sum()) / df) if df > 0 else 0.0
    return BaselineModel(method=method, ridge_lambda=ridge_lambda,
                         intercept=float(beta[0]), coefficients=beta[1:],
                         residual_std=residual_std,
                         fitted_dataset_ids=frozenset(s.dataset_id for s in scores))


def predict_baseline(model: BaselineModel, scores: PCScores) -> float:
    """Affine evaluation; never clamped (clamping happens at the final sum)."""
    if scores.scores.size != model.n_components:
        raise InputError(f"expected {model.n_components} scores, got {scores.scores.size}")
    return float(model.intercept + model.coefficients @ scores.scores)


# ---------------------------------------------------------------------------
# stage-2 features

def feature_schema(n_components: int, families: tuple[str, ...] = DEFAULT_FAMILIES,
                   with_baseline: bool = True) -> list[str]:
    names = [f"pc{i + 1}" for i in range(n_components)]
    names += [f"family_{f}" for f in families]
    names += ["depth", "filters", "dense_units", "dropout", "log10_learning_rate"]
    if with_baseline:
        names.append("baseline")
    return names


def build_features(scores: PCScores, arch: ArchDescriptor, baseline: float | None,
                   families: tuple[str, ...] = DEFAULT_FAMILIES) -> np.ndarray:
    """[PC1..PCN | onehot(family) | depth filters dense dropout log10(lr) | baseline]."""
    if arch.family not in families:
        raise InputError(f"unknown family '{arch.family}' (schema has {families})")
    onehot = [1.0 if arch.family == f else 0.0 for f in families]
    parts = [scores.scores, onehot,
             [float(arch.depth), float(arch.filters), float(arch.dense_units),
              arch.dropout, math.log10(arch.learning_rate)]]
    if baseline is not None:
        parts.append([baseline])
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


@dataclass
class OffsetModel:
    kind: str                      # "gbt" | "rf"
    ensemble: TreeEnsemble
    schema: list[str]
    hyperparameters: dict
    seed: int
    fitted_dataset_ids: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ensemble": self.ensemble.to_dict(),
            "schema": list(self.schema),
            "hyperparameters": dict(self.hyperparameters),
            "seed": self.seed,
            "fitted_dataset_ids": sorted(self.fitted_dataset_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OffsetModel":
        return cls(kind=d["kind"], ensemble=TreeEnsemble.from_dict(d["ensemble"]),
                   schema=list(d["schema"]), hyperparameters=dict(d["hyperparameters"]),
                   seed=int(d["seed"]),
                   fitted_dataset_ids=frozenset(d.get("fitted_dataset_ids", [])))


def fit_stage2(rows: np.ndarray, offsets: np.ndarray, kind: str, schema: list[str],
               hyperparameters: dict | None = None, seed: int = 0,
               dataset_ids: frozenset[str] = frozenset()) -> OffsetModel:
    """Fit the offset regressor on feature rows; deterministic per seed."""
    rows = np.asarray(rows, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != len(schema):
        raise InputError(f"feature rows must be (n, {len(schema)})")
    if rows.shape[0] < 10:
        raise InputError("fit_stage2 needs >= 10 rows")
    if not np.all(np.isfinite(offsets)):
        raise InputError("offsets must be finite")
    if np.allclose(rows, rows[0]):
        warnings.warn("all feature rows identical: offset model is constant", stacklevel=2)
    if kind == "gbt":
        hp = {**GBT_DEFAULTS, **(hyperparameters or {})}
        ensemble = fit_gradient_boosting(rows, offsets, rounds=hp["rounds"],
                                         max_depth=hp["max_depth"],
                                         learning_rate=hp["learning_rate"],
                                         min_leaf=hp["min_leaf"])
    elif kind == "rf":
        hp = {**RF_DEFAULTS, **(hyperparameters or {})}
        ensemble = fit_random_forest(rows, offsets, n_trees=hp["n_trees"],
                                     max_depth=hp["max_depth"],
                                     min_leaf=hp["min_leaf"], seed=seed)
    else:
        raise InputError(f"unknown stage-2 kind: {kind}")
    return OffsetModel(kind=kind, ensemble=ensemble, schema=list(schema),
                       hyperparameters=hp, seed=seed, fitted_dataset_ids=dataset_ids)


def predict_offset(model: OffsetModel, features: np.ndarray) -> float:
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (len(model.schema),):
        raise InputError(f"feature vector must have {len(model.schema)} entries "
                         f"({model.schema}), got shape {features.shape}")
    return float(model.ensemble.predict(features[None, :])[0])


def fit_single_stage(rows: np.ndarray, accuracies: np.ndarray, schema: list[str],
                     hyperparameters: dict | None = None, seed: int = 0,
                     kind: str = "gbt",
                     dataset_ids: frozenset[str] = frozenset()) -> OffsetModel:
    """Ablation variant: same learner trained on final accuracy directly."""
    return fit_stage2(rows, accuracies, kind=kind, schema=schema,
                      hyperparameters=hyperparameters, seed=seed,
                      dataset_ids=dataset_ids)


@dataclass(frozen=True)
class Forecast:
    base: float
    offset: float
    final: float
    clamped: bool


def combine(base: float, offset: float) -> Forecast:
    """Final accuracy = clamp(base + offset, 0, 1)."""
    raw = base + offset
    final = min(1.0, max(0.0, raw))
    return Forecast(base=base, offset=offset, final=final, clamped=final != raw)


def predict_final(stage1: BaselineModel, stage2: OffsetModel, scores: PCScores,
                  arch: ArchDescriptor,
                  families: tuple[str, ...] = DEFAULT_FAMILIES) -> Forecast:
    base = predict_baseline(stage1, scores)
    features = build_features(scores, arch, base, families=families)
    return combine(base, predict_offset(stage2, features))


# ---------------------------------------------------------------------------
# model bundle persistence

@dataclass
class ForecastModel:
    """Everything needed to forecast a new (dataset, architecture) pair."""

    basis: ComplexityBasis
    stage1: BaselineModel
    stage2: OffsetModel
    families: tuple[str, ...] = DEFAULT_FAMILIES

    def forecast(self, vector: ComplexityVector, arch: ArchDescriptor) -> Forecast:
        scores = project(self.basis, vector)
        return predict_final(self.stage1, self.stage2, scores, arch,
                             families=self.families)

    def to_dict(self) -> dict:
        b = self.basis
        return {
            "version": MODEL_VERSION,
            "basis": {
                "measure_names": list(b.measure_names),
                "log1p_measures": list(b.log1p_measures),
                "mean": b.mean.tolist(),
                "std": b.std.tolist(),
                "loadings": b.loadings.tolist(),
                "explained_ratios": b.explained_ratios.tolist(),
                "n_components": b.n_components,
                "train_min": b.train_min.tolist(),
                "train_max": b.train_max.tolist(),
                "fitted_dataset_ids": sorted(b.fitted_dataset_ids),
            },
            "stage1": {
                "method": self.stage1.method,
                "ridge_lambda": self.stage1.ridge_lambda,
                "intercept": self.stage1.intercept,
                "coefficients": self.stage1.coefficients.tolist(),
                "residual_std": self.stage1.residual_std,
                "fitted_dataset_ids": sorted(self.stage1.fitted_dataset_ids),
            },
            "stage2": self.stage2.to_dict(),
            "feature_schema": list(self.stage2.schema),
            "families": list(self.families),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForecastModel":
        if d.get("version") != MODEL_VERSION:
            raise InputError(f"unsupported model version: {d.get('version')}")
        try:
            bd = d["basis"]
            basis = ComplexityBasis(
                measure_names=tuple(bd["measure_names"]),
                log1p_measures=tuple(bd["log1p_measures"]),
                mean=np.asarray(bd["mean"], dtype=np.float64),
                std=np.asarray(bd["std"], dtype=np.float64),
                loadings=np.asarray(bd["loadings"], dtype=np.float64),
                explained_ratios=np.asarray(bd["explained_ratios"], dtype=np.float64),
                n_components=int(bd["n_components"]),
                train_min=np.asarray(bd["train_min"], dtype=np.float64),
                train_max=np.asarray(bd["train_max"], dtype=np.float64),
                fitted_dataset_ids=frozenset(bd["fitted_dataset_ids"]),
            )
            if basis.measure_names != MEASURE_NAMES:
                raise InputError("model basis has an unexpected measure set")
            sd = d["stage1"]
            stage1 = BaselineModel(
                method=sd["method"], ridge_lambda=float(sd["ridge_lambda"]),
                intercept=float(sd["intercept"]),
                coefficients=np.asarray(sd["coefficients"], dtype=np.float64),
                residual_std=float(sd["residual_std"]),
                fitted_dataset_ids=frozenset(sd["fitted_dataset_ids"]),
            )
            stage2 = OffsetModel.from_dict(d["stage2"])
            return cls(basis=basis, stage1=stage1, stage2=stage2,
                       families=tuple(d["families"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"corrupt model bundle: {exc}") from None


def save_model(model: ForecastModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: str | Path) -> ForecastModel:
    path = Path(path)
    if not path.exists():
        raise InputError(f"model file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid model JSON: {exc}") from None
    return ForecastModel.from_dict(data)
