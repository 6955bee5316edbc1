"""Seeded generators: planted-complexity datasets and synthetic meta-corpora.

These back the test suite: datasets with known separability to validate the
complexity measures, and (dataset, architecture, accuracy) corpora with a
known accuracy law to validate the forecaster end to end.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .data_io import ArchDescriptor, DatasetTable, PerformanceRecord
from .errors import InputError

# the full factorial hyperparameter grid used by default
GRID_FAMILIES = (("LeNet", 5), ("VGG", 16), ("ResNet", 18))
GRID_FILTERS = (8, 16, 32, 64)
GRID_DENSE = (64, 128, 256)
GRID_DROPOUT = (0.0, 0.25, 0.5)
GRID_LR = (0.001, 0.0005, 0.0001)


@dataclass(frozen=True)
class PlantedSpec:
    n: int
    d: int
    n_classes: int
    separation: float
    nonlinearity: str = "none"       # none | xor | ring
    proportions: tuple[float, ...] | None = None
    intrinsic_dim: int | None = None
    seed: int = 0
    clip_sigma: float | None = None  # bound class blobs (stabilizes range measures)

    def __post_init__(self):
        if self.nonlinearity not in ("none", "xor", "ring"):
            raise InputError(f"unknown nonlinearity mode: {self.nonlinearity}")
        props = self.proportions
        if props is not None:
            if len(props) != self.n_classes or abs(sum(props) - 1.0) > 1e-9:
                raise InputError("proportions must have one entry per class and sum to 1")
        k = self.intrinsic_dim
        if k is not None and not (1 <= k <= self.d):
            raise InputError("intrinsic_dim must be in [1, d]")


def _class_counts(spec: PlantedSpec) -> np.ndarray:
    props = spec.proportions or tuple([1.0 / spec.n_classes] * spec.n_classes)
    props = np.asarray(props)
    counts = np.floor(props * spec.n).astype(int)
    rem = props * spec.n - counts
    for idx in np.argsort(-rem, kind="stable")[: spec.n - counts.sum()]:
        counts[idx] += 1
    if (counts < 2).any():
        raise InputError("planted spec leaves a class with < 2 rows")
    return counts


def generate_dataset(spec: PlantedSpec, dataset_id: str = "planted",
                     domain: str = "synthetic") -> DatasetTable:
    """Gaussian class blobs on an intrinsic subspace, embedded in d dimensions.

    xor/ring modes relabel points by quadrant sign product / radius so the
    planted boundary is non-linear.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.intrinsic_dim or spec.d
    counts = _class_counts(spec)
    # deterministic class centers: scaled unit directions cycled over the subspace
    centers = np.zeros((spec.n_classes, k))
    for c in range(spec.n_classes):
        centers[c, c % k] = spec.separation * (1 + c // k)
    zs, labels = [], []
    for c in range(spec.n_classes):
        pts = rng.standard_normal((counts[c], k))
        if spec.clip_sigma is not None:
            pts = np.clip(pts, -spec.clip_sigma, spec.clip_sigma)
        zs.append(centers[c] + pts)
        labels.append(np.full(counts[c], c))
    Z = np.concatenate(zs)
    y = np.concatenate(labels).astype(np.int64)
    if spec.nonlinearity == "xor":
        if k < 2:
            raise InputError("xor mode needs intrinsic_dim >= 2")
        med = np.median(Z[:, :2], axis=0)
        y = ((Z[:, 0] > med[0]) ^ (Z[:, 1] > med[1])).astype(np.int64)
    elif spec.nonlinearity == "ring":
        r = np.linalg.norm(Z - Z.mean(axis=0), axis=1)
        y = (r > np.median(r)).astype(np.int64)
    if k < spec.d:
        # embed via a seeded orthonormal map plus faint ambient noise
        q, _ = np.linalg.qr(rng.standard_normal((spec.d, k)))
        X = Z @ q.T + 1e-3 * rng.standard_normal((spec.n, spec.d))
    else:
        X = Z
    return DatasetTable(features=X, labels=y, dataset_id=dataset_id, domain=domain)


# ---------------------------------------------------------------------------
# meta-corpus generation

def default_architecture_grid() -> list[ArchDescriptor]:
    grid = []
    for (family, depth), filters, dense, dropout, lr in product(
            GRID_FAMILIES, GRID_FILTERS, GRID_DENSE, GRID_DROPOUT, GRID_LR):
        grid.append(ArchDescriptor(family=family, depth=depth, filters=filters,
                                   dense_units=dense, dropout=dropout, learning_rate=lr))
    return grid


def zero_offset(arch: ArchDescriptor, difficulty: float) -> float:
    return 0.0


def multiplicative_depth_offset(arch: ArchDescriptor, difficulty: float) -> float:
    """Depth x difficulty interaction: deep models gain on hard data, lose on easy."""
    depth_term = (arch.depth - 13.0) / 13.0          # LeNet < 0 < ResNet
    return 0.08 * depth_term * (difficulty - 0.5) * 2.0


OFFSET_LAWS: dict[str, Callable[[ArchDescriptor, float], float]] = {
    "zero": zero_offset,
    "multiplicative": multiplicative_depth_offset,
}


@dataclass(frozen=True)
class MetaCorpusSpec:
    n_datasets: int = 7
    difficulty_range: tuple[float, float] = (0.05, 0.95)
    base_high: float = 0.98
    base_low: float = 0.35
    offset_law: str = "zero"
    noise_sigma: float = 0.0
    rows_per_dataset: int = 1200
    n_features: int = 6
    n_classes: int = 3
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.difficulty_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise InputError("difficulty_range must be within [0, 1]")
        if self.offset_law not in OFFSET_LAWS:
            raise InputError(f"unknown offset law: {self.offset_law}")


def difficulty_to_separation(difficulty: float, sep_hi: float = 6.0,
                             sep_lo: float = 0.8) -> float:
    """Monotone log-linear link: harder datasets get closer class blobs."""
    return float(sep_hi ** (1.0 - difficulty) * sep_lo ** difficulty)


def generate_meta_corpus(spec: MetaCorpusSpec,
                         domains: list[str] | None = None,
                         ) -> tuple[list[PerformanceRecord], dict[str, DatasetTable], dict[str, float]]:
    """(records, planted tables, per-dataset difficulty).

    Accuracy law: clamp(base(difficulty) + offset(arch, difficulty) + noise),
    with base affine in difficulty (hence in log-separation). Every dataset
    gets the full factorial architecture grid.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.difficulty_range
    difficulties = np.linspace(lo, hi, spec.n_datasets)
    grid = default_architecture_grid()
    offset_fn = OFFSET_LAWS[spec.offset_law]
    records: list[PerformanceRecord] = []
    tables: dict[str, DatasetTable] = {}
    diff_by_id: dict[str, float] = {}
    for j, diff in enumerate(difficulties):
        ds_id = f"synth{j:02d}"
        domain = domains[j] if domains else f"domain{j % 3}"
        table = generate_dataset(
            PlantedSpec(n=spec.rows_per_dataset, d=spec.n_features,
                        n_classes=spec.n_classes,
                        separation=difficulty_to_separation(diff),
                        seed=spec.seed * 1000 + j),
            dataset_id=ds_id, domain=domain)
        tables[ds_id] = table
        diff_by_id[ds_id] = float(diff)
        base = spec.base_high - (spec.base_high - spec.base_low) * diff
        for arch in grid:
            acc = base + offset_fn(arch, diff)
            if spec.noise_sigma > 0:
                acc += spec.noise_sigma * rng.standard_normal()
            acc = min(1.0, max(0.0, acc))
            records.append(PerformanceRecord(dataset_id=ds_id, arch=arch, accuracy=acc))
    return records, tables, diff_by_id
