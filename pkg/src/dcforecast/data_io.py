"""Dataset and performance-record loading, standardization, and subsampling.

All loaders are pure functions; returned tables hold read-only numpy arrays
and are safe to share across threads.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InputError

STD_FLOOR = 1e-12

KNOWN_FORMATS = ("csv", "idx")
DEFAULT_FAMILIES = ("LeNet", "VGG", "ResNet")

MANIFEST_HEADER = ["dataset_id", "domain", "format", "features_path", "labels_path", "label_column"]
RECORD_HEADER = ["dataset_id", "family", "depth", "filters", "dense_units", "dropout", "learning_rate", "accuracy"]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DatasetTable:
    """Numeric feature matrix with dense integer class labels."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64, values in [0, C)
    dataset_id: str
    domain: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise InputError(f"{self.dataset_id}: features must be 2-D, got shape {feats.shape}")
        if feats.shape[0] != labs.shape[0]:
            raise InputError(f"{self.dataset_id}: {feats.shape[0]} rows but {labs.shape[0]} labels")
        if feats.shape[0] < 2 or feats.shape[1] < 1:
            raise InputError(f"{self.dataset_id}: need n >= 2 and d >= 1, got {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise InputError(f"{self.dataset_id}: non-finite feature values")
        if labs.min() < 0:
            raise InputError(f"{self.dataset_id}: negative label")
        c = int(labs.max()) + 1
        present = np.unique(labs)
        if present.size != c:
            raise InputError(f"{self.dataset_id}: label set has gaps (expected 0..{c - 1})")
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "labels", _readonly(labs))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray  # floored at STD_FLOOR

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64)
        s = np.asarray(self.std, dtype=np.float64)
        if m.shape != s.shape or m.ndim != 1:
            raise InputError("standardization stats must be matching 1-D arrays")
        object.__setattr__(self, "mean", _readonly(m))
        object.__setattr__(self, "std", _readonly(s))


@dataclass(frozen=True)
class ManifestEntry:
    dataset_id: str
    domain: str
    format: str
    features_path: str
    labels_path: str = ""
    label_column: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __getitem__(self, dataset_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.dataset_id == dataset_id:
                return e
        raise InputError(f"unknown dataset id: {dataset_id}")

    def dataset_ids(self) -> list[str]:
        return [e.dataset_id for e in self.entries]

    def domains(self) -> dict[str, str]:
        return {e.dataset_id: e.domain for e in self.entries}


@dataclass(frozen=True)
class ArchDescriptor:
    family: str
    depth: int
    filters: int
    dense_units: int
    dropout: float
    learning_rate: float

    def __post_init__(self):
        if self.depth <= 0 or self.filters <= 0 or self.dense_units <= 0:
            raise InputError(f"arch sizes must be positive: {self}")
        if not (0.0 <= self.dropout < 1.0):
            raise InputError(f"dropout must be in [0, 1): {self.dropout}")
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise InputError(f"learning rate must be positive and finite: {self.learning_rate}")


@dataclass(frozen=True)
class PerformanceRecord:
    dataset_id: str
    arch: ArchDescriptor
    accuracy: float

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0):
            raise InputError(f"accuracy outside [0, 1]: {self.accuracy} ({self.dataset_id})")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse the manifest CSV; preserves row order, rejects duplicate ids."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"manifest not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != MANIFEST_HEADER:
            raise InputError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        entries = []
        seen = set()
        for row in reader:
            e = ManifestEntry(
                dataset_id=row["dataset_id"].strip(),
                domain=row["domain"].strip(),
                format=row["format"].strip(),
                features_path=row["features_path"].strip(),
                labels_path=(row["labels_path"] or "").strip(),
                label_column=(row["label_column"] or "").strip(),
            )
            if e.format not in KNOWN_FORMATS:
                raise InputError(f"unknown format '{e.format}' for dataset {e.dataset_id}")
            if e.dataset_id in seen:
                raise InputError(f"duplicate dataset_id in manifest: {e.dataset_id}")
            seen.add(e.dataset_id)
            entries.append(e)
    return DatasetManifest(entries=tuple(entries))


def load_tabular(entry: ManifestEntry, base_dir: str | Path = ".") -> DatasetTable:
    """Load a headered CSV table; labels densified to 0..C-1 by first appearance."""
    path = Path(base_dir) / entry.features_path
    if not path.exists():
        raise InputError(f"csv file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if entry.label_column not in header:
            raise InputError(f"{path}: label column '{entry.label_column}' not in header")
        label_idx = header.index(entry.label_column)
        feat_idx = [i for i in range(len(header)) if i != label_idx]
        feats, raw_labels = [], []
        for rno, row in enumerate(reader, start=2):
            if not row:
                continue
            vals = []
            for i in feat_idx:
                try:
                    vals.append(float(row[i]))
                except (ValueError, IndexError):
                    raise InputError(f"{path}: non-numeric feature at row {rno}, column '{header[i]}'") from None
            feats.append(vals)
            raw_labels.append(row[label_idx].strip())
    order: dict[str, int] = {}
    labels = []
    for lab in raw_labels:
        if lab not in order:
            order[lab] = len(order)
        labels.append(order[lab])
    if len(order) < 2:
        raise InputError(f"{path}: need at least 2 classes, found {len(order)}")
    return DatasetTable(
        features=np.array(feats, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        dataset_id=entry.dataset_id,
        domain=entry.domain,
    )


def _read_idx(path: Path, expect_rank: int) -> np.ndarray:
    if not path.exists():
        raise InputError(f"idx file not found: {path}")
    data = path.read_bytes()
    if len(data) < 4:
        raise InputError(f"{path}: truncated idx header")
    zero1, zero2, dtype, ndim = struct.unpack(">BBBB", data[:4])
    if zero1 != 0 or zero2 != 0 or dtype != 0x08:
        raise InputError(f"{path}: bad idx magic (expected unsigned-byte type 0x08)")
    if ndim != expect_rank:
        raise InputError(f"{path}: expected rank {expect_rank}, got {ndim}")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise InputError(f"{path}: truncated idx dimension header")
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    count = int(np.prod(dims))
    if len(data) - header_len != count:
        raise InputError(f"{path}: payload size {len(data) - header_len} != expected {count}")
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path,
             dataset_id: str = "", domain: str = "") -> DatasetTable:
    """Load IDX image/label pairs; pixels scaled to [0, 1], images flattened row-major."""
    images = _read_idx(Path(images_path), expect_rank=3)
    labels = _read_idx(Path(labels_path), expect_rank=1)
    if images.shape[0] != labels.shape[0]:
        raise InputError(f"image count {images.shape[0]} != label count {labels.shape[0]}")
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return DatasetTable(features=feats, labels=labels.astype(np.int64),
                        dataset_id=dataset_id, domain=domain)


def load_dataset(entry: ManifestEntry, base_dir: str | Path = ".") -> DatasetTable:
    if entry.format == "csv":
        return load_tabular(entry, base_dir)
    return load_idx(Path(base_dir) / entry.features_path, Path(base_dir) / entry.labels_path,
                    dataset_id=entry.dataset_id, domain=entry.domain)


def fit_standardization(table: DatasetTable) -> StandardizationStats:
    """Per-column mean and (n-1)-denominator std, floored at STD_FLOOR."""
    mean = table.features.mean(axis=0)
    std = table.features.std(axis=0, ddof=1)
    return StandardizationStats(mean=mean, std=np.maximum(std, STD_FLOOR))


def apply_standardization(table: DatasetTable, stats: StandardizationStats) -> DatasetTable:
    if stats.mean.shape[0] != table.d:
        raise InputError(f"stats have {stats.mean.shape[0]} columns, table has {table.d}")
    feats = (table.features - stats.mean) / stats.std
    # floored columns (constant in the fit set) would otherwise explode; zero them
    floored = stats.std <= STD_FLOOR
    if floored.any():
        feats = feats.copy()
        feats[:, floored] = 0.0
    return replace(table, features=feats)


def subsample(table: DatasetTable, fraction: float, seed: int,
              stratified: bool = True) -> DatasetTable:
    """Deterministic random subsample; stratified mode preserves class proportions."""
    if not (0.0 < fraction <= 1.0):
        raise InputError(f"fraction must be in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    n, c = table.n, table.n_classes
    if stratified:
        counts = table.class_counts()
        take = np.floor(fraction * counts).astype(int)
        # largest-remainder rounding toward round(fraction * n)
        target = int(round(fraction * n))
        rem = fraction * counts - np.floor(fraction * counts)
        short = max(0, min(target, n) - take.sum())
        for idx in np.argsort(-rem, kind="stable")[:short]:
            if take[idx] < counts[idx]:
                take[idx] += 1
        total = int(take.sum())
        if total < max(2 * c, 10) or (take < 2).any():
            raise InputError(
                f"fraction {fraction} too small: stratified subsample needs every class >= 2 rows "
                f"and total >= {max(2 * c, 10)}")
        keep = []
        for cls in range(c):
            rows = np.flatnonzero(table.labels == cls)
            keep.append(rng.choice(rows, size=take[cls], replace=False))
        keep = np.concatenate(keep)
    else:
        k = max(2, int(round(fraction * n)))
        keep = rng.choice(n, size=k, replace=False)
    keep.sort()
    sub = DatasetTable(features=table.features[keep], labels=table.labels[keep],
                       dataset_id=table.dataset_id, domain=table.domain)
    if sub.n_classes != c:
        raise InputError(f"fraction {fraction} dropped a class entirely")
    return sub


def load_records(path: str | Path,
                 families: tuple[str, ...] | None = DEFAULT_FAMILIES) -> list[PerformanceRecord]:
    """Parse the performance-record CSV; every row validated.

    families=None disables the family whitelist (for extended corpora).
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"records file not found: {path}")
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != RECORD_HEADER:
            raise InputError(f"records header must be {','.join(RECORD_HEADER)}")
        for rno, row in enumerate(reader, start=2):
            try:
                arch = ArchDescriptor(
                    family=row["family"].strip(),
                    depth=int(row["depth"]),
                    filters=int(row["filters"]),
                    dense_units=int(row["dense_units"]),
                    dropout=float(row["dropout"]),
                    learning_rate=float(row["learning_rate"]),
                )
                rec = PerformanceRecord(dataset_id=row["dataset_id"].strip(), arch=arch,
                                        accuracy=float(row["accuracy"]))
            except (ValueError, KeyError) as exc:
                raise InputError(f"{path}: bad record at row {rno}: {exc}") from None
            if families is not None and rec.arch.family not in families:
                raise InputError(f"{path}: unknown family '{rec.arch.family}' at row {rno}")
            records.append(rec)
    return records


def save_records(records: list[PerformanceRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_HEADER)
        for r in records:
            a = r.arch
            w.writerow([r.dataset_id, a.family, a.depth, a.filters, a.dense_units,
                        repr(float(a.dropout)), repr(float(a.learning_rate)),
                        repr(float(r.accuracy))])
