"""Acceptance suite: nine end-to-end criteria with explicit tolerances.

Each test prints a single PASS line on success; a failed assertion is the
FAIL line. Runtime budgets are asserted inside the tests themselves.
"""
import json
import time
import warnings

import numpy as np
from scipy import stats

from dcforecast.basis import fit_basis, project
from dcforecast.complexity import MEASURE_NAMES, ComplexityVector, compute_all
from dcforecast.data_io import (DatasetTable, apply_standardization,
                                fit_standardization, subsample)
from dcforecast.diagnostics import anova_variance_depth, pc6_quadratic_fit, two_way_anova
from dcforecast.evaluation import EvalConfig, folds_lodm, folds_lodo, run_ablation
from dcforecast.forecaster import PCScores, fit_stage1, predict_baseline
from dcforecast.synthetic import MetaCorpusSpec, generate_meta_corpus
from dcforecast.trees import TreeEnsemble, fit_gradient_boosting

from oracles import (brute_best_linear_1d, brute_class_balance, brute_covariance_mean,
                     brute_dimensionality, brute_efficiency, brute_fisher,
                     brute_knn_error, brute_nn_nonlinearity, brute_nn_ratio,
                     brute_overlap, brute_variance_mean)
from conftest import random_small_table


def _report(n, text):
    print(f"ACCEPTANCE criterion {n}: PASS - {text}")


# per-dataset (PC6 score, forecast MSE) pairs from the published error profile
PC6_MSE_POINTS = [
    (0.611, 10.7e-3),
    (-0.853, 4.94e-3),
    (0.379, 3.47e-3),
    (-0.737, 2.56e-3),
    (0.345, 1.13e-3),
    (-0.195, 0.54e-3),
    (0.188, 0.48e-3),
]


def test_criterion_1_pc6_quadratic_reproduction():
    t0 = time.time()
    fit = pc6_quadratic_fit(PC6_MSE_POINTS)
    for got, want in ((fit.a, -0.0008), (fit.b, 0.0066), (fit.c, 0.0159)):
        assert abs(got - want) / abs(want) < 0.15, (got, want)
    assert abs(fit.r2 - 0.84) <= 0.05, fit.r2
    elapsed = time.time() - t0
    assert elapsed < 1.0, elapsed
    _report(1, f"quadratic ({fit.a:.6f}, {fit.b:.6f}, {fit.c:.6f}), "
               f"r2={fit.r2:.4f}, {elapsed:.3f}s")


def test_criterion_2_measure_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    tol = 1e-9
    for _ in range(200):
        table = random_small_table(rng, max_n=12, max_d=3, max_classes=3)
        seed = int(rng.integers(0, 1000))
        v = compute_all(table, seed=seed)
        # raw-scale measures see the raw features; geometry measures see the
        # standardized copy. The oracles get the same standardized array the
        # measures do: tie-breaking in the neighbor measures is only
        # well-defined on bitwise-identical inputs. Standardization itself is
        # checked against its own naive oracle in the data-handling tests.
        X = apply_standardization(table, fit_standardization(table)).features
        y = table.labels
        assert abs(v.covariance_mean - brute_covariance_mean(table.features)) < tol
        assert abs(v.variance_mean - brute_variance_mean(table.features)) < tol
        assert abs(v.max_fisher_ratio - brute_fisher(X, y)) < tol
        assert abs(v.overlap_region - brute_overlap(X, y)) < tol
        assert abs(v.max_feature_efficiency - brute_efficiency(X, y)) < tol
        assert abs(v.nn_distance_ratio - brute_nn_ratio(X, y)) < tol
        assert abs(v.knn3_error - brute_knn_error(X, y)) < tol
        assert abs(v.nn_nonlinearity - brute_nn_nonlinearity(X, y, seed)) < tol
        d, k, ratio = brute_dimensionality(X)
        assert v.raw_feature_count == d and v.pca95_components == k
        assert abs(v.pca_retention_ratio - ratio) < tol
        entropy, imbalance = brute_class_balance(y)
        assert abs(v.class_entropy - entropy) < tol
        assert abs(v.imbalance_ratio - imbalance) < tol
        if X.shape[1] == 1:
            oracle = brute_best_linear_1d(X[:, 0], y, table.n_classes)
            assert v.linear_error <= oracle + tol
            if oracle == 0.0:
                assert v.linear_error == 0.0
    elapsed = time.time() - t0
    assert elapsed < 30.0, elapsed
    _report(2, f"200 random tables match brute-force oracles, {elapsed:.1f}s")


def test_criterion_3_leakage_safe_fold_construction():
    t0 = time.time()
    # seven datasets over three domains (2 handwriting / 3 objects / 2 medical)
    domains = ["handwriting", "handwriting", "objects", "objects", "objects",
               "medical", "medical"]
    spec = MetaCorpusSpec(n_datasets=7, rows_per_dataset=60, n_features=3, seed=0)
    records, tables, _ = generate_meta_corpus(spec, domains=domains)
    domain_map = {ds: t.domain for ds, t in tables.items()}

    lodo = folds_lodo(records)
    assert len(lodo) == 7
    all_idx = set(range(len(records)))
    for fold in lodo:
        train, test = set(fold.train_indices), set(fold.test_indices)
        assert train & test == set(), fold.name
        assert train | test == all_idx, fold.name
        assert {records[i].dataset_id for i in test} == {fold.name}
        assert fold.name not in {records[i].dataset_id for i in train}

    lodm = folds_lodm(records, domain_map)
    assert len(lodm) == 3
    for fold in lodm:
        train, test = set(fold.train_indices), set(fold.test_indices)
        assert train & test == set(), fold.name
        assert train | test == all_idx, fold.name
        assert {domain_map[records[i].dataset_id] for i in test} == {fold.name}
        assert fold.name not in {domain_map[records[i].dataset_id] for i in train}
    elapsed = time.time() - t0
    assert elapsed < 1.0, elapsed
    _report(3, f"7 LODO + 3 LODM folds partition exactly with no leakage, "
               f"{elapsed:.2f}s")


def test_criterion_4_two_stage_beats_single_stage():
    t0 = time.time()
    spec = MetaCorpusSpec(n_datasets=7, offset_law="multiplicative",
                          noise_sigma=0.01, rows_per_dataset=400, seed=3)
    records, tables, _ = generate_meta_corpus(spec)
    vectors = []
    for ds, table in tables.items():
        vectors.append(compute_all(table, seed=0, fraction=1.0))
        for s in (0, 1, 2):
            sub = subsample(table, 0.6, s)
            vectors.append(compute_all(sub, seed=s, fraction=0.6))
    config = EvalConfig(n_components=7, stage2_hyperparameters={"rounds": 150})
    report = run_ablation(records, vectors, config)
    wins = sum(report.two_stage[f].mse < report.single_stage[f].mse
               for f in report.folds)
    assert wins >= 6, {f: (report.two_stage[f].mse, report.single_stage[f].mse)
                       for f in report.folds}
    elapsed = time.time() - t0
    assert elapsed < 120.0, elapsed
    _report(4, f"two-stage wins {wins}/7 LODO folds on planted "
               f"depth-difficulty interaction, {elapsed:.0f}s")


def test_criterion_5_stage1_exact_recovery():
    t0 = time.time()
    rng = np.random.default_rng(5)
    # (a) direct OLS recovery of planted coefficients on PC scores
    S = rng.normal(size=(10, 3))
    beta = np.array([0.04, -0.03, 0.02])
    acc = 0.6 + S @ beta
    model = fit_stage1([PCScores(dataset_id=f"d{i}", scores=s)
                        for i, s in enumerate(S)], list(acc))
    assert abs(model.intercept - 0.6) < 1e-6
    assert np.all(np.abs(model.coefficients - beta) < 1e-6)

    # (b) noise-free linear corpus: measure vectors lie in a 3-dim affine
    # subspace and mean accuracy is affine in the subspace coordinates, so a
    # 3-component baseline must predict each held-out dataset exactly.  Each
    # LODO fold holds out a single dataset-level scalar, so the fold metric is
    # the absolute error; r2 is computed on the pooled held-out predictions.
    W = rng.uniform(0.5, 1.5, size=(3, 14))
    coef = np.array([0.5, -0.3, 0.2])
    fisher = MEASURE_NAMES.index("max_fisher_ratio")
    factors = 0.05 * rng.normal(size=(7, 3))
    vecs, acc_by_ds = [], {}
    for i in range(7):
        vals = 0.5 + factors[i] @ W
        vals[fisher] = np.expm1(vals[fisher])  # affine again after log1p
        kw = dict(zip(MEASURE_NAMES, [float(x) for x in vals]))
        kw["raw_feature_count"] = 10
        kw["pca95_components"] = 5
        vecs.append(ComplexityVector(dataset_id=f"d{i}", fraction=1.0, seed=0, **kw))
        acc_by_ds[f"d{i}"] = 0.6 + float(factors[i] @ coef)
    preds, targets = [], []
    for held in sorted(acc_by_ds):
        train = [v for v in vecs if v.dataset_id != held]
        basis = fit_basis(train, requested_n=3)
        assert basis.n_components == 3
        scores = {v.dataset_id: project(basis, v) for v in train}
        stage1 = fit_stage1([scores[d] for d in sorted(scores)],
                            [acc_by_ds[d] for d in sorted(scores)])
        held_vec = next(v for v in vecs if v.dataset_id == held)
        with warnings.catch_warnings():
            # held-out values may sit just outside the training range
            warnings.simplefilter("ignore", UserWarning)
            pred = predict_baseline(stage1, project(basis, held_vec))
        assert abs(pred - acc_by_ds[held]) <= 1e-6, held
        preds.append(pred)
        targets.append(acc_by_ds[held])
    targets = np.array(targets)
    preds = np.array(preds)
    sst = float(((targets - targets.mean()) ** 2).sum())
    r2 = 1.0 - float(((targets - preds) ** 2).sum()) / sst
    assert r2 >= 0.99, r2
    elapsed = time.time() - t0
    assert elapsed < 10.0, elapsed
    _report(5, f"OLS recovery < 1e-6; held-out baseline r2={r2:.6f}, "
               f"{elapsed:.1f}s")


def test_criterion_6_boosting_monotonicity_and_round_trip():
    t0 = time.time()
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(15, 40))
        d = int(rng.integers(1, 4))
        X = rng.normal(size=(n, d))
        y = np.sin(2 * X[:, 0]) + 0.3 * rng.normal(size=n)
        model = fit_gradient_boosting(X, y, rounds=300, max_depth=2,
                                      learning_rate=0.1)
        mses = np.array(model.train_mse_per_round)
        assert mses.size == 300
        assert np.all(np.diff(mses) <= 1e-12), seed
        clone = TreeEnsemble.from_dict(json.loads(json.dumps(model.to_dict())))
        assert np.array_equal(clone.predict(X), model.predict(X)), seed
    elapsed = time.time() - t0
    assert elapsed < 60.0, elapsed
    _report(6, f"50 problems x 300 rounds non-increasing; JSON round trip "
               f"bit-identical, {elapsed:.0f}s")


def _plateau_table(n, seed, spacing=0.5, d=3, n_classes=3):
    """Large planted table with bounded, correlated features and heavy overlap.

    Noise is mixed to full rank before clipping so every feature pair carries
    structural covariance, and class centers differ only along the last axis.
    """
    rng = np.random.default_rng(seed)
    A = np.eye(d) + 0.3
    col_std = np.sqrt(np.diag(A @ A.T))
    counts = [n - 2 * (n // 3), n // 3, n // 3]
    feats, labs = [], []
    for c in range(n_classes):
        E = rng.standard_normal((counts[c], d)) @ A.T
        E = np.clip(E, -2.5 * col_std, 2.5 * col_std)
        center = np.zeros(d)
        center[d - 1] = spacing * col_std[d - 1] * c
        feats.append(center + E)
        labs.append(np.full(counts[c], c))
    return DatasetTable(features=np.concatenate(feats),
                        labels=np.concatenate(labs).astype(np.int64),
                        dataset_id="plateau")


def test_criterion_7_sixteen_percent_sampling_plateau():
    t0 = time.time()
    table = _plateau_table(100_000, seed=11)
    reference = compute_all(table, seed=0).values()
    sub = subsample(table, 0.16, 0)
    sampled = compute_all(sub, seed=0, fraction=0.16).values()
    worst = {}
    for i, name in enumerate(MEASURE_NAMES):
        dev = abs(sampled[i] - reference[i]) / max(abs(reference[i]), 1e-12)
        limit = 0.10 if name == "nn_nonlinearity" else 0.05
        assert dev < limit, (name, dev, reference[i], sampled[i])
        worst[name] = dev
    elapsed = time.time() - t0
    assert elapsed < 300.0, elapsed
    top = max(worst, key=worst.get)
    _report(7, f"100k-row table, fraction 0.16: max deviation "
               f"{worst[top]:.3f} ({top}), {elapsed:.0f}s")


def test_criterion_8_anova_correctness():
    t0 = time.time()
    # balanced 2x2 with two replicates per cell, sums of squares done by hand
    a = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    b = np.array([0, 0, 1, 1, 0, 0, 1, 1])
    y = np.array([1.0, 3.0, 5.0, 7.0, 2.0, 4.0, 10.0, 12.0])
    t = two_way_anova(a, b, y)
    assert abs(t.factor_a.ss - 18.0) < 1e-9
    assert abs(t.factor_b.ss - 72.0) < 1e-9
    assert abs(t.interaction.ss - 8.0) < 1e-9
    assert abs(t.residual.ss - 8.0) < 1e-9
    assert (t.factor_a.df, t.factor_b.df, t.interaction.df, t.residual.df) == (1, 1, 1, 4)
    assert abs(t.factor_a.f - 9.0) < 1e-9
    assert abs(t.factor_b.f - 36.0) < 1e-9
    assert abs(t.interaction.f - 4.0) < 1e-9

    # planted depth x difficulty interaction must be detected
    spec = MetaCorpusSpec(n_datasets=7, offset_law="multiplicative",
                          noise_sigma=0.01, rows_per_dataset=60, seed=8)
    records, _, diffs = generate_meta_corpus(spec)
    vals = dict(zip(MEASURE_NAMES, [0.5] * 14))
    vals["raw_feature_count"] = 6
    vals["pca95_components"] = 3
    vectors = {}
    for ds, diff in diffs.items():
        kw = dict(vals, variance_mean=diff)
        vectors[ds] = ComplexityVector(dataset_id=ds, fraction=1.0, seed=0, **kw)
    planted = anova_variance_depth(records, vectors, n_quantiles=5)
    assert planted.interaction.p < 0.001, planted.interaction.p

    # F-distribution tail areas vs Monte-Carlo estimates on five probes
    rng = np.random.default_rng(88)
    n_sim = 200_000
    probes = [(9.0, 1, 4), (4.0, 1, 4), (36.0, 2, 10), (2.5, 3, 20), (1.2, 4, 40)]
    for f_val, df1, df2 in probes:
        sims = ((rng.chisquare(df1, n_sim) / df1)
                / (rng.chisquare(df2, n_sim) / df2))
        p_hat = float((sims > f_val).mean())
        se = np.sqrt(max(p_hat * (1 - p_hat), 1e-12) / n_sim)
        p_exact = float(stats.f.sf(f_val, df1, df2))
        assert abs(p_exact - p_hat) <= 3 * se, (f_val, df1, df2, p_exact, p_hat)
    elapsed = time.time() - t0
    assert elapsed < 60.0, elapsed
    _report(8, f"hand ANOVA exact, interaction p={planted.interaction.p:.2e}, "
               f"5 Monte-Carlo probes within 3 SE, {elapsed:.0f}s")


def test_criterion_9_out_of_scope_declaration():
    # The published per-dataset accuracy tables and the figure-level results
    # depend on a trained LeNet/VGG/ResNet corpus over seven image benchmarks
    # that cannot be re-trained at desk scale. Those exact metric values are
    # declared not reproducible here; criteria 3-5 cover the corresponding
    # protocol and property behavior on planted corpora instead. See README.
    _report(9, "exact corpus-level metric tables declared out of scope; "
               "covered by protocol/property criteria 3-5")
