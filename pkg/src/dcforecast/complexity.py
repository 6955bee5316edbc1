"""The 14 data complexity measures and their batched computation.

Conventions used throughout: variance with the n-1 denominator, Euclidean
distance on standardized features, multiclass handled by averaging over
unordered class pairs. Distance ties break by canonical row index, vote
ties by smaller class id, so every measure is deterministic.

covariance_mean and variance_mean are computed on the raw (pre-standardization)
table; everything geometric runs on the standardized table.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations, permutations
from pathlib import Path

import numpy as np

from .data_io import DatasetTable, apply_standardization, fit_standardization
from .errors import InputError

FISHER_CAP = 1e6
EPS = 1e-12

MEASURE_NAMES = (
    "covariance_mean",
    "variance_mean",
    "max_fisher_ratio",
    "overlap_region",
    "max_feature_efficiency",
    "linear_error",
    "nn_distance_ratio",
    "knn3_error",
    "nn_nonlinearity",
    "raw_feature_count",
    "pca95_components",
    "pca_retention_ratio",
    "class_entropy",
    "imbalance_ratio",
)


@dataclass(frozen=True)
class ComplexityVector:
    covariance_mean: float
    variance_mean: float
    max_fisher_ratio: float
    overlap_region: float
    max_feature_efficiency: float
    linear_error: float
    nn_distance_ratio: float
    knn3_error: float
    nn_nonlinearity: float
    raw_feature_count: int
    pca95_components: int
    pca_retention_ratio: float
    class_entropy: float
    imbalance_ratio: float
    dataset_id: str = ""
    fraction: float = 1.0
    seed: int = 0

    def values(self) -> np.ndarray:
        return np.array([float(getattr(self, m)) for m in MEASURE_NAMES], dtype=np.float64)


# ---------------------------------------------------------------------------
# feature-distribution measures (raw table)

def covariance_mean(table: DatasetTable) -> float:
    """Mean absolute feature-pair covariance; 0 when d == 1 (no pairs)."""
    if table.d < 2:
        return 0.0
    cov = np.cov(table.features, rowvar=False, ddof=1)
    iu = np.triu_indices(table.d, k=1)
    return float(np.abs(cov[iu]).mean())


def variance_mean(table: DatasetTable) -> float:
    """Mean per-column sample variance."""
    return float(table.features.var(axis=0, ddof=1).mean())


# ---------------------------------------------------------------------------
# class-geometry measures (standardized table)

def max_fisher_ratio(table: DatasetTable) -> float:
    """Max over features of between-class / within-class scatter, capped."""
    X, y = table.features, table.labels
    mu = X.mean(axis=0)
    between = np.zeros(table.d)
    within = np.zeros(table.d)
    for c in range(table.n_classes):
        Xc = X[y == c]
        muc = Xc.mean(axis=0)
        between += Xc.shape[0] * (muc - mu) ** 2
        within += ((Xc - muc) ** 2).sum(axis=0)
    ratios = between / (within + EPS)
    return float(min(ratios.max(), FISHER_CAP))


def _class_ranges(table: DatasetTable):
    X, y = table.features, table.labels
    mins = np.stack([X[y == c].min(axis=0) for c in range(table.n_classes)])
    maxs = np.stack([X[y == c].max(axis=0) for c in range(table.n_classes)])
    return mins, maxs


def overlap_region(table: DatasetTable, pair_average_first: bool = False) -> float:
    """Average per-feature class-pair range overlap, normalized by range union.

    The two averaging orders (features-then-pairs vs pairs-then-features) are
    both exposed; for this flat mean they coincide numerically.
    """
    mins, maxs = _class_ranges(table)
    per_pair = []
    for a, b in combinations(range(table.n_classes), 2):
        lo = np.maximum(mins[a], mins[b])
        hi = np.minimum(maxs[a], maxs[b])
        union = np.maximum(maxs[a], maxs[b]) - np.minimum(mins[a], mins[b])
        frac = np.maximum(0.0, hi - lo) / np.maximum(union, EPS)
        per_pair.append(frac)
    per_pair = np.stack(per_pair)
    if pair_average_first:
        return float(per_pair.mean(axis=0).mean())
    return float(per_pair.mean(axis=1).mean())


def max_feature_efficiency(table: DatasetTable) -> float:
    """Mean over class pairs of the best single-feature exclusion fraction."""
    X, y = table.features, table.labels
    mins, maxs = _class_ranges(table)
    effs = []
    for a, b in combinations(range(table.n_classes), 2):
        mask = (y == a) | (y == b)
        Xp = X[mask]
        lo = np.maximum(mins[a], mins[b])
        hi = np.minimum(maxs[a], maxs[b])
        outside = (Xp < lo) | (Xp > hi)  # disjoint ranges (lo > hi) put every point outside
        effs.append(outside.mean(axis=0).max())
    return float(np.mean(effs))


def linear_error(table: DatasetTable, iters: int = 500, step: float = 0.1,
                 l2: float = 1e-4) -> float:
    """Training error of a deterministically trained multinomial logistic model.

    Zero init, full-batch gradient descent. Two exact refinements keep the
    result at the quality of the best linear rule where that is computable:
    binary problems get a midpoint threshold sweep along the learned
    discriminant, and 1-D problems get the exact optimal interval labeling
    (the best any linear model can do on a line). The reported value is the
    minimum over the trained model and these refinements, all deterministic.
    """
    X, y = table.features, table.labels
    n, d, c = table.n, table.d, table.n_classes
    if n < c:
        raise InputError("linear_error needs n >= C")
    W = np.zeros((d, c))
    b = np.zeros(c)
    Y = np.zeros((n, c))
    Y[np.arange(n), y] = 1.0
    for _ in range(iters):
        logits = X @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - Y) / n
        W -= step * (X.T @ g + l2 * W)
        b -= step * g.sum(axis=0)
    scores = X @ W + b
    # argmax with ties to the smaller class id (argmax already does this)
    pred = scores.argmax(axis=1)
    err = float((pred != y).mean())
    if c == 2:
        s = X @ (W[:, 1] - W[:, 0])
        err = min(err, _best_threshold_error(s, y))
    if d == 1:
        err = min(err, _best_interval_error(X[:, 0], y, c))
    return err


def _best_threshold_error(scores: np.ndarray, y: np.ndarray) -> float:
    """Exact best 0-1 error of a threshold rule on a 1-D score, both orientations."""
    order = np.argsort(scores, kind="stable")
    s, lab = scores[order], y[order]
    n = lab.size
    # cum1[i] = count of class-1 labels among the first i points
    cum1 = np.concatenate([[0], np.cumsum(lab)])
    total1 = cum1[-1]
    best = n
    for i in range(n + 1):  # predict class 0 for the first i points, class 1 after
        if 0 < i < n and s[i - 1] == s[i]:
            continue  # not a realizable threshold
        err_a = cum1[i] + (n - i) - (total1 - cum1[i])
        err_b = n - err_a  # reversed orientation
        best = min(best, err_a, err_b)
    return best / n


def _best_interval_error(x: np.ndarray, y: np.ndarray, c: int) -> float:
    """Optimal 0-1 error of any multinomial linear model on a 1-D feature.

    On a line the argmax of C affine scores partitions the axis into at most
    C intervals, each class appearing at most once, in any order. Enumerate
    class sequences and place boundaries by dynamic programming over groups
    of equal feature values (boundaries cannot split ties).
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    # group equal values; counts[g, cls] = class histogram of group g
    boundaries = np.flatnonzero(np.diff(xs) != 0)
    starts = np.concatenate([[0], boundaries + 1])
    ends = np.concatenate([boundaries + 1, [xs.size]])
    counts = np.zeros((starts.size, c), dtype=np.int64)
    for g, (a, b) in enumerate(zip(starts, ends)):
        counts[g] = np.bincount(ys[a:b], minlength=c)
    best_match = 0
    for size in range(1, c + 1):
        for seq in permutations(range(c), size):
            # A[j] = max matches with every group so far in intervals 0..j
            A = np.zeros(size, dtype=np.int64)
            for g in range(counts.shape[0]):
                new = np.empty(size, dtype=np.int64)
                new[0] = A[0] + counts[g, seq[0]]
                for j in range(1, size):
                    new[j] = max(new[j - 1], A[j] + counts[g, seq[j]])
                A = new
            best_match = max(best_match, int(A[-1]))
    return float((ys.size - best_match) / ys.size)


# ---------------------------------------------------------------------------
# neighborhood measures

_CHUNK = 256  # keeps the chunked distance matrix ~200 MB at n = 100k


def _knn_indices(queries: np.ndarray, corpus: np.ndarray, k: int,
                 exclude: np.ndarray | None = None) -> np.ndarray:
    """Indices (into corpus) of the k nearest neighbors per query row.

    Distance ties break by lower corpus index. exclude[i] gives a corpus index
    masked out for query i (self-exclusion). Chunked so n can reach 1e5.
    """
    nq, nc = queries.shape[0], corpus.shape[0]
    if (nc - (0 if exclude is None else 1)) < k:
        raise InputError(f"need at least {k} neighbors, corpus has {nc}")
    c_sq = (corpus ** 2).sum(axis=1)
    out = np.empty((nq, k), dtype=np.int64)
    for start in range(0, nq, _CHUNK):
        q = queries[start:start + _CHUNK]
        d2 = q @ corpus.T
        d2 *= -2.0
        d2 += c_sq
        d2 += (q ** 2).sum(axis=1)[:, None]
        np.maximum(d2, 0.0, out=d2)
        if exclude is not None:
            rows = np.arange(start, start + q.shape[0])
            d2[np.arange(q.shape[0]), exclude[rows]] = np.inf
        m = min(nc, k + 16)
        part = np.argpartition(d2, m - 1, axis=1)[:, :m] if m < nc else \
            np.broadcast_to(np.arange(nc), (q.shape[0], nc))
        cand = np.sort(part, axis=1)  # index order, so stable sort ties break low
        # re-rank the candidates with difference-based distances: the fused
        # form above is fast but its rounding can split mathematically exact
        # ties, which must break by index instead
        exact = ((q[:, None, :] - corpus[cand]) ** 2).sum(axis=2)
        if exclude is not None:
            sel = cand == exclude[np.arange(start, start + q.shape[0])][:, None]
            exact[sel] = np.inf
        order = np.argsort(exact, axis=1, kind="stable")
        out[start:start + q.shape[0]] = np.take_along_axis(cand, order[:, :k], axis=1)
    return out


def _nearest_distance(queries: np.ndarray, corpus: np.ndarray,
                      exclude: np.ndarray | None = None) -> np.ndarray:
    """Distance to the nearest corpus point per query (optionally excluding self)."""
    nq, nc = queries.shape[0], corpus.shape[0]
    c_sq = (corpus ** 2).sum(axis=1)
    out = np.empty(nq)
    for start in range(0, nq, _CHUNK):
        q = queries[start:start + _CHUNK]
        d2 = q @ corpus.T
        d2 *= -2.0
        d2 += c_sq
        d2 += (q ** 2).sum(axis=1)[:, None]
        np.maximum(d2, 0.0, out=d2)
        if exclude is not None:
            rows = np.arange(start, start + q.shape[0])
            d2[np.arange(q.shape[0]), exclude[rows]] = np.inf
        # recompute the winning distance in difference form so the reported
        # value is free of the fused form's rounding
        best = d2.argmin(axis=1)
        out[start:start + q.shape[0]] = ((q - corpus[best]) ** 2).sum(axis=1)
    return np.sqrt(out)


def nn_distance_ratio(table: DatasetTable) -> float:
    """Mean nearest same-class distance over mean nearest other-class distance."""
    X, y = table.features, table.labels
    counts = table.class_counts()
    if (counts < 2).any():
        raise InputError("nn_distance_ratio needs every class to have >= 2 rows")
    intra = np.empty(table.n)
    inter = np.empty(table.n)
    for c in range(table.n_classes):
        idx = np.flatnonzero(y == c)
        other = np.flatnonzero(y != c)
        intra[idx] = _nearest_distance(X[idx], X[idx], exclude=np.arange(idx.size))
        inter[idx] = _nearest_distance(X[idx], X[other])
    return float(intra.mean() / max(inter.mean(), EPS))


def knn3_error(table: DatasetTable, k: int = 3) -> float:
    """Leave-one-out k-NN error; distance ties by row index, vote ties by class id."""
    if table.n < k + 1:
        raise InputError(f"knn error needs n >= {k + 1}")
    X, y = table.features, table.labels
    nbrs = _knn_indices(X, X, k, exclude=np.arange(table.n))
    votes = y[nbrs]
    errors = 0
    for i in range(table.n):
        counts = np.bincount(votes[i], minlength=table.n_classes)
        pred = counts.argmax()  # argmax ties -> smaller class id
        errors += int(pred != y[i])
    return errors / table.n


def nn_nonlinearity(table: DatasetTable, seed: int) -> float:
    """1-NN error on n same-class interpolants, sampled in canonical row order.

    Rows are sorted lexicographically before sampling, so the value is
    invariant to row permutations of the input table.
    """
    counts = table.class_counts()
    if (counts < 2).any():
        raise InputError("nn_nonlinearity needs every class to have >= 2 rows")
    X, y = table.features, table.labels
    keys = [y] + [X[:, j] for j in range(table.d - 1, -1, -1)]
    canon = np.lexsort(keys)  # primary key: first feature column, label last
    Xc, yc = X[canon], y[canon]
    n = table.n
    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(yc == c) for c in range(table.n_classes)]
    first = rng.integers(0, n, size=n)
    synth = np.empty_like(Xc)
    synth_y = np.empty(n, dtype=np.int64)
    for i in range(n):
        p = first[i]
        cls = yc[p]
        members = by_class[cls]
        j = rng.integers(0, members.size - 1)
        pos = np.searchsorted(members, p)
        if j >= pos:  # partner uniform among same-class rows excluding p
            j += 1
        q = members[j]
        alpha = rng.uniform()
        synth[i] = alpha * Xc[p] + (1.0 - alpha) * Xc[q]
        synth_y[i] = cls
    nearest = _knn_indices(synth, Xc, 1)[:, 0]
    return float((yc[nearest] != synth_y).mean())


# ---------------------------------------------------------------------------
# dimensionality and class balance

def dimensionality_measures(table: DatasetTable) -> tuple[int, int, float]:
    """(raw feature count, components for 95% variance, retention ratio)."""
    cov = np.cov(table.features, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    eig = np.linalg.eigvalsh(cov)[::-1]
    eig = np.maximum(eig, 0.0)
    total = eig.sum()
    if total <= EPS:
        k = 1  # all-constant table: a single (degenerate) component suffices
    else:
        cum = np.cumsum(eig) / total
        k = int(np.searchsorted(cum, 0.95 - 1e-12) + 1)
    return table.d, k, k / table.d


def class_balance_measures(table: DatasetTable) -> tuple[float, float]:
    """(normalized class entropy, minority/majority count ratio)."""
    counts = table.class_counts()
    p = counts / counts.sum()
    entropy = float(-(p * np.log(p)).sum() / np.log(table.n_classes))
    return entropy, float(counts.min() / counts.max())


# ---------------------------------------------------------------------------

def compute_all(table: DatasetTable, seed: int, fraction: float = 1.0) -> ComplexityVector:
    """All 14 measures for a raw table; standardizes internally for geometry."""
    counts = table.class_counts()
    if table.n_classes < 2:
        raise InputError(f"{table.dataset_id}: need >= 2 classes")
    if (counts < 2).any():
        raise InputError(f"{table.dataset_id}: every class needs >= 2 rows")
    std_table = apply_standardization(table, fit_standardization(table))

    def run(name, fn, *args):
        try:
            return fn(*args)
        except InputError:
            raise
        except Exception as exc:  # noqa: BLE001 - tag numeric failures with the measure
            raise InputError(f"{table.dataset_id}: measure {name} failed: {exc}") from exc

    d, k95, ratio = run("dimensionality", dimensionality_measures, std_table)
    entropy, imbalance = run("class_balance", class_balance_measures, std_table)
    return ComplexityVector(
        covariance_mean=run("covariance_mean", covariance_mean, table),
        variance_mean=run("variance_mean", variance_mean, table),
        max_fisher_ratio=run("max_fisher_ratio", max_fisher_ratio, std_table),
        overlap_region=run("overlap_region", overlap_region, std_table),
        max_feature_efficiency=run("max_feature_efficiency", max_feature_efficiency, std_table),
        linear_error=run("linear_error", linear_error, std_table),
        nn_distance_ratio=run("nn_distance_ratio", nn_distance_ratio, std_table),
        knn3_error=run("knn3_error", knn3_error, std_table),
        nn_nonlinearity=run("nn_nonlinearity", nn_nonlinearity, std_table, seed),
        raw_feature_count=d,
        pca95_components=k95,
        pca_retention_ratio=ratio,
        class_entropy=entropy,
        imbalance_ratio=imbalance,
        dataset_id=table.dataset_id,
        fraction=fraction,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# DCM table persistence

DCM_HEADER = ["dataset_id", "fraction", "seed", *MEASURE_NAMES]


def save_dcm_table(vectors: list[ComplexityVector], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DCM_HEADER)
        for v in vectors:
            w.writerow([v.dataset_id, repr(v.fraction), v.seed,
                        *(repr(float(getattr(v, m))) for m in MEASURE_NAMES)])


def load_dcm_table(path: str | Path) -> list[ComplexityVector]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"DCM table not found: {path}")
    vectors = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != DCM_HEADER:
            raise InputError(f"DCM table header must be {','.join(DCM_HEADER)}")
        for row in reader:
            kwargs = {m: float(row[m]) for m in MEASURE_NAMES}
            kwargs["raw_feature_count"] = int(kwargs["raw_feature_count"])
            kwargs["pca95_components"] = int(kwargs["pca95_components"])
            vectors.append(ComplexityVector(dataset_id=row["dataset_id"].strip(),
                                            fraction=float(row["fraction"]),
                                            seed=int(row["seed"]), **kwargs))
    return vectors
