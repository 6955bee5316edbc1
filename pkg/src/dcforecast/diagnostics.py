"""Pre-training diagnostics: PC6 quadratic risk, regime classification,
offset-variability ranking, variance-by-depth ANOVA, and depth guidance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .complexity import ComplexityVector, MEASURE_NAMES
from .data_io import PerformanceRecord
from .errors import InputError, NumericError

PC6_TAU_DEFAULT = 0.5

VARIANCE_RECOMMENDATIONS = [
    "stratified sampling",
    "noise-robust loss functions",
    "targeted data augmentation",
]
BIAS_RECOMMENDATIONS = [
    "class re-weighting",
    "oversampling methods (e.g. SMOTE)",
    "bias mitigation techniques",
]


@dataclass(frozen=True)
class QuadraticFit:
    a: float
    b: float
    c: float
    r2: float
    n_points: int

    def predict(self, x: float) -> float:
        return self.a + self.b * x + self.c * x * x


def pc6_quadratic_fit(points: list[tuple[float, float]]) -> QuadraticFit:
    """Least-squares fit of per-dataset forecast MSE against the PC6 score."""
    if len(points) < 3:
        raise InputError("quadratic fit needs >= 3 points")
    x = np.array([p[0] for p in points], dtype=np.float64)
    y = np.array([p[1] for p in points], dtype=np.float64)
    if np.unique(x).size < 3:
        raise NumericError("quadratic fit needs >= 3 distinct x values")
    X = np.column_stack([np.ones_like(x), x, x * x])
    coef, residuals, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 3:
        raise NumericError("rank-deficient quadratic design")
    pred = X @ coef
    sst = float(((y - y.mean()) ** 2).sum())
    sse = float(((y - pred) ** 2).sum())
    r2 = 1.0 - sse / sst if sst > 0 else 0.0
    return QuadraticFit(a=float(coef[0]), b=float(coef[1]), c=float(coef[2]),
                        r2=r2, n_points=x.size)


@dataclass(frozen=True)
class RegimeReport:
    pc6_score: float
    regime: str   # "variance-dominated" | "bias-dominated" | "balanced"
    recommendations: tuple[str, ...]


def classify_pc6(score: float, tau: float = PC6_TAU_DEFAULT) -> RegimeReport:
    """Step classification of the PC6 score into a bias/variance risk regime."""
    if tau <= 0:
        raise InputError(f"tau must be positive, got {tau}")
    if score > tau:
        return RegimeReport(score, "variance-dominated", tuple(VARIANCE_RECOMMENDATIONS))
    if score < -tau:
        return RegimeReport(score, "bias-dominated", tuple(BIAS_RECOMMENDATIONS))
    return RegimeReport(score, "balanced", ("no special preprocessing indicated",))


# ---------------------------------------------------------------------------
# offset variability ranking

def offset_variability_ranking(records: list[PerformanceRecord],
                               vectors: dict[str, ComplexityVector],
                               base_by_dataset: dict[str, float],
                               ) -> list[tuple[str, float]]:
    """Rank raw measures by |Pearson correlation| with per-dataset offset spread.

    Offset spread is the std (n-1) of accuracy - baseline across that
    dataset's configurations. Measures constant across datasets get
    association 0 and rank last. The signed correlation is reported.
    """
    by_ds: dict[str, list[float]] = {}
    for r in records:
        if r.dataset_id not in base_by_dataset:
            raise InputError(f"no baseline for dataset {r.dataset_id}")
        by_ds.setdefault(r.dataset_id, []).append(r.accuracy - base_by_dataset[r.dataset_id])
    ds_ids = sorted(by_ds)
    if len(ds_ids) < 3:
        raise InputError("variability ranking needs >= 3 datasets")
    for ds, offs in by_ds.items():
        if len(offs) < 2:
            raise InputError(f"dataset {ds} has < 2 configurations")
    spread = np.array([np.std(by_ds[ds], ddof=1) for ds in ds_ids])
    missing = [ds for ds in ds_ids if ds not in vectors]
    if missing:
        raise InputError(f"no complexity vector for datasets: {missing}")
    M = np.stack([vectors[ds].values() for ds in ds_ids])
    spread_sd = spread.std(ddof=1)
    assoc = []
    for i, name in enumerate(MEASURE_NAMES):
        col = M[:, i]
        if col.std(ddof=1) <= 1e-15 or spread_sd <= 1e-15:
            assoc.append((name, 0.0))
        else:
            r = float(np.corrcoef(col, spread)[0, 1])
            assoc.append((name, r))
    assoc.sort(key=lambda kv: -abs(kv[1]))
    return assoc


# ---------------------------------------------------------------------------
# two-way ANOVA

@dataclass(frozen=True)
class AnovaRow:
    ss: float
    df: int
    f: float
    p: float


@dataclass(frozen=True)
class AnovaTable:
    factor_a: AnovaRow       # variance-mean quantile bin
    factor_b: AnovaRow       # depth
    interaction: AnovaRow
    residual: AnovaRow       # f and p are NaN here
    ss_total: float
    n: int


def _dummy(levels: np.ndarray, n_levels: int) -> np.ndarray:
    """Treatment-coded dummy columns (reference level dropped)."""
    out = np.zeros((levels.size, n_levels - 1))
    for j in range(1, n_levels):
        out[levels == j, j - 1] = 1.0
    return out


def two_way_anova(a_levels: np.ndarray, b_levels: np.ndarray,
                  response: np.ndarray) -> AnovaTable:
    """Fixed-effects two-way ANOVA with interaction, sequential (type-I) SS.

    Effects enter in order A, B, AxB; p values from the F distribution.
    """
    a_levels = np.asarray(a_levels)
    b_levels = np.asarray(b_levels)
    y = np.asarray(response, dtype=np.float64)
    n = y.size
    na = int(a_levels.max()) + 1
    nb = int(b_levels.max()) + 1
    for i in range(na):
        for j in range(nb):
            if not np.any((a_levels == i) & (b_levels == j)):
                raise InputError(f"empty ANOVA cell: A level {i}, B level {j}")
    A = _dummy(a_levels, na)
    B = _dummy(b_levels, nb)
    AB = np.concatenate([A[:, [i]] * B[:, [j]]
                         for i in range(na - 1) for j in range(nb - 1)], axis=1) \
        if na > 1 and nb > 1 else np.zeros((n, 0))
    ones = np.ones((n, 1))

    def rss(X):
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ beta
        return float(r @ r)

    rss0 = rss(ones)
    rss_a = rss(np.hstack([ones, A]))
    rss_ab = rss(np.hstack([ones, A, B]))
    rss_full = rss(np.hstack([ones, A, B, AB]))
    ss_a = max(rss0 - rss_a, 0.0)
    ss_b = max(rss_a - rss_ab, 0.0)
    ss_i = max(rss_ab - rss_full, 0.0)
    ss_r = max(rss_full, 0.0)
    df_a, df_b = na - 1, nb - 1
    df_i = df_a * df_b
    df_r = n - na * nb
    if df_r <= 0:
        raise InputError("no residual degrees of freedom (need replicates per cell)")

    def row(ss, df):
        msr = ss_r / df_r
        f = (ss / df) / msr if msr > 0 else np.inf
        p = float(stats.f.sf(f, df, df_r)) if np.isfinite(f) else 0.0
        return AnovaRow(ss=ss, df=df, f=float(f), p=p)

    return AnovaTable(
        factor_a=row(ss_a, df_a),
        factor_b=row(ss_b, df_b),
        interaction=row(ss_i, df_i),
        residual=AnovaRow(ss=ss_r, df=df_r, f=float("nan"), p=float("nan")),
        ss_total=float(((y - y.mean()) ** 2).sum()),
        n=n,
    )


def anova_variance_depth(records: list[PerformanceRecord],
                         vectors: dict[str, ComplexityVector],
                         n_quantiles: int = 5) -> AnovaTable:
    """ANOVA of accuracy on variance-mean quantile bin x model depth.

    Records are binned by their dataset's variance_mean (per-record binning).
    """
    if n_quantiles < 2:
        raise InputError("need >= 2 quantile bins")
    missing = sorted({r.dataset_id for r in records} - set(vectors))
    if missing:
        raise InputError(f"no complexity vector for datasets: {missing}")
    vm = np.array([vectors[r.dataset_id].variance_mean for r in records])
    edges = np.quantile(vm, np.linspace(0, 1, n_quantiles + 1)[1:-1])
    a = np.searchsorted(edges, vm, side="right")
    a = _dense_levels(a)
    depths = np.array([r.arch.depth for r in records])
    b = _dense_levels(np.searchsorted(np.unique(depths), depths))
    y = np.array([r.accuracy for r in records])
    return two_way_anova(a, b, y)


def _dense_levels(levels: np.ndarray) -> np.ndarray:
    _, dense = np.unique(levels, return_inverse=True)
    return dense


# ---------------------------------------------------------------------------
# depth guidance

@dataclass(frozen=True)
class DepthGuidance:
    variance_mean: float
    lower_quantile: float
    upper_quantile: float
    recommendation: str
    rule: str


def depth_guidance(variance_mean_value: float,
                   corpus_variance_means: list[float]) -> DepthGuidance:
    """Depth recommendation from where the value sits in the corpus distribution.

    Low feature dispersion favors deep models; high dispersion means shallow
    or medium depth suffices; the middle band gives no strong preference.
    """
    if len(corpus_variance_means) < 3:
        raise InputError("depth guidance needs >= 3 corpus variance-mean values")
    vals = np.asarray(corpus_variance_means, dtype=np.float64)
    lo = float(np.quantile(vals, 1.0 / 3.0))
    hi = float(np.quantile(vals, 2.0 / 3.0))
    if variance_mean_value < lo:
        rec = "deep"
    elif variance_mean_value > hi:
        rec = "shallow/medium"
    else:
        rec = "no strong preference"
    rule = (f"value {variance_mean_value:.6g} vs corpus quantile band "
            f"[{lo:.6g}, {hi:.6g}]: below -> deep, above -> shallow/medium")
    return DepthGuidance(variance_mean=variance_mean_value, lower_quantile=lo,
                         upper_quantile=hi, recommendation=rec, rule=rule)
