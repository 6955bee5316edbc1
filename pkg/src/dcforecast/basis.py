"""Leakage-safe standardization + PCA transform over complexity vectors.

A basis is fit once on training vectors and then only projects; evaluation
code audits that held-out dataset ids never appear in the fitted id set.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .complexity import MEASURE_NAMES, ComplexityVector
from .errors import InputError

EIG_FLOOR = 1e-12
EPS_RANGE = 1e-9
DEFAULT_LOG1P = ("max_fisher_ratio",)  # capped heavy tail would dominate the PCA


@dataclass(frozen=True)
class ComplexityBasis:
    measure_names: tuple[str, ...]
    log1p_measures: tuple[str, ...]
    mean: np.ndarray            # (14,)
    std: np.ndarray             # (14,), floored
    loadings: np.ndarray        # (rank, 14), orthonormal rows
    explained_ratios: np.ndarray  # (rank,), non-increasing
    n_components: int
    train_min: np.ndarray = field(repr=False, default=None)
    train_max: np.ndarray = field(repr=False, default=None)
    fitted_dataset_ids: frozenset[str] = frozenset()

    @property
    def rank(self) -> int:
        return self.loadings.shape[0]

    def standardize(self, vector: ComplexityVector) -> np.ndarray:
        raw = vector.values()
        if not np.all(np.isfinite(raw)):
            raise InputError(f"{vector.dataset_id}: non-finite measure values")
        for i, name in enumerate(self.measure_names):
            if name in self.log1p_measures:
                raw[i] = np.log1p(raw[i])
        return (raw - self.mean) / self.std


@dataclass(frozen=True)
class PCScores:
    dataset_id: str
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))


def _vectors_matrix(vectors: list[ComplexityVector], log1p_measures) -> np.ndarray:
    M = np.stack([v.values() for v in vectors])
    for i, name in enumerate(MEASURE_NAMES):
        if name in log1p_measures:
            M[:, i] = np.log1p(M[:, i])
    return M


def fit_basis(vectors: list[ComplexityVector], requested_n: int,
              log1p_measures: tuple[str, ...] = DEFAULT_LOG1P) -> ComplexityBasis:
    """Standardize measures, eigendecompose their covariance, fix signs.

    Components are sorted by descending eigenvalue; each component's
    largest-magnitude loading is made positive, so refits are bit-identical.
    N is capped at the rank of the centered training matrix.
    """
    if len(vectors) < 2:
        raise InputError("fit_basis needs at least 2 complexity vectors")
    if requested_n < 1:
        raise InputError("requested_n must be >= 1")
    M = _vectors_matrix(vectors, log1p_measures)
    mean = M.mean(axis=0)
    std = np.maximum(M.std(axis=0, ddof=1), EIG_FLOOR)
    Z = (M - mean) / std
    cov = (Z.T @ Z) / (Z.shape[0] - 1)
    eig, vecs = np.linalg.eigh(cov)
    order = np.argsort(eig, kind="stable")[::-1]
    eig = np.maximum(eig[order], 0.0)
    vecs = vecs[:, order]
    total = eig.sum()
    ratios = eig / total if total > 0 else eig
    ratios[ratios < EIG_FLOOR] = 0.0
    rank = int(np.count_nonzero(ratios))
    rank = max(rank, 1)
    loadings = vecs.T[:rank].copy()
    for i in range(rank):
        j = int(np.argmax(np.abs(loadings[i])))
        if loadings[i, j] < 0:
            loadings[i] *= -1.0
    return ComplexityBasis(
        measure_names=MEASURE_NAMES,
        log1p_measures=tuple(log1p_measures),
        mean=mean,
        std=std,
        loadings=loadings,
        explained_ratios=ratios[:rank],
        n_components=min(requested_n, rank),
        train_min=M.min(axis=0),
        train_max=M.max(axis=0),
        fitted_dataset_ids=frozenset(v.dataset_id for v in vectors),
    )


def project(basis: ComplexityBasis, vector: ComplexityVector) -> PCScores:
    """Scores of a vector in the basis, truncated to N components."""
    z = basis.standardize(vector)
    transformed = z * basis.std + basis.mean
    outside = (transformed < basis.train_min - EPS_RANGE) | (transformed > basis.train_max + EPS_RANGE)
    if outside.any():
        names = [basis.measure_names[i] for i in np.flatnonzero(outside)]
        warnings.warn(f"{vector.dataset_id}: measures outside training range: {names}",
                      stacklevel=2)
    scores = basis.loadings[: basis.n_components] @ z
    return PCScores(dataset_id=vector.dataset_id, scores=scores)


def explained_variance(basis: ComplexityBasis) -> list[float]:
    return [float(r) for r in basis.explained_ratios]


def loadings_report(basis: ComplexityBasis, component: int) -> list[tuple[str, float]]:
    """Measures of one component ranked by |loading| descending."""
    if not (0 <= component < basis.n_components):
        raise InputError(f"component {component} out of range (N={basis.n_components})")
    row = basis.loadings[component]
    order = np.argsort(-np.abs(row), kind="stable")
    return [(basis.measure_names[i], float(row[i])) for i in order]


def select_n_components(vectors: list[ComplexityVector],
                        mean_accuracies: dict[str, float],
                        candidates: list[int]) -> int:
    """Pick N by leave-one-dataset-out Stage-1 MSE; ties go to the smaller N.

    vectors may contain replicate rows per dataset (multiple fractions/seeds);
    all replicates join the basis fit, one representative per dataset feeds
    the regression.
    """
    from .forecaster import fit_stage1, predict_baseline

    dataset_ids = sorted({v.dataset_id for v in vectors})
    if len(dataset_ids) < 3:
        raise InputError("select_n_components needs >= 3 datasets")
    missing = [d for d in dataset_ids if d not in mean_accuracies]
    if missing:
        raise InputError(f"no mean accuracy for datasets: {missing}")
    candidates = sorted(set(candidates))
    if not candidates:
        raise InputError("no candidate N values")
    results = []
    for n in candidates:
        sq_errors = []
        feasible = True
        for held in dataset_ids:
            train_vecs = [v for v in vectors if v.dataset_id != held]
            train_ids = sorted({v.dataset_id for v in train_vecs})
            basis = fit_basis(train_vecs, requested_n=n)
            if basis.n_components < n:
                feasible = False
                break
            scores = {d: _representative_scores(basis, train_vecs, d) for d in train_ids}
            model = fit_stage1(
                [scores[d] for d in train_ids],
                [mean_accuracies[d] for d in train_ids],
                method="ols" if len(train_ids) > n + 1 else "ridge",
            )
            held_vec = _representative_vector([v for v in vectors if v.dataset_id == held])
            pred = predict_baseline(model, project(basis, held_vec))
            sq_errors.append((pred - mean_accuracies[held]) ** 2)
        if feasible:
            results.append((float(np.mean(sq_errors)), n))
    if not results:
        raise InputError("no candidate N is within rank for every fold")
    results.sort()  # MSE ascending, then smaller N
    return results[0][1]


def representative_vector(vecs: list[ComplexityVector]) -> ComplexityVector:
    """Highest fraction, then lowest seed: the most complete view of a dataset."""
    return sorted(vecs, key=lambda v: (-v.fraction, v.seed))[0]


_representative_vector = representative_vector


def _representative_scores(basis: ComplexityBasis, vecs: list[ComplexityVector],
                           dataset_id: str) -> PCScores:
    mine = [v for v in vecs if v.dataset_id == dataset_id]
    return project(basis, _representative_vector(mine))
