import numpy as np
import pytest

from tsnn.config import CoverageStudyConfig, DecayStudyConfig, HoldoutStudyConfig
from tsnn.core import GroundTruth, ObservedMatrix
from tsnn.estimators import apply_fallback, complete
from tsnn.experiments import (_data_seed, _sim, clt_standardized_errors, fit_loglog_slope, fit_method,
                              fold_intervals, holdout_predictions, mse, run_coverage_study, run_decay_study,
                              run_holdout_comparison)
from tsnn.inference import coverage_rate
from tsnn.synthesis import derived_seed
from tsnn.tuning import PercentileSpec, make_folds


def test_slope_examples():
    ns = np.array([50, 100, 200, 400])
    assert fit_loglog_slope(list(zip(ns, ns ** -0.9))).slope == pytest.approx(-0.9, abs=1e-12)
    assert fit_loglog_slope([(10, 1.0), (100, 0.1)]).slope == pytest.approx(-1.0, abs=1e-12)
    flat = fit_loglog_slope([(10, 0.3), (20, 0.3), (40, 0.3)])
    assert flat.slope == pytest.approx(0.0, abs=1e-12) and flat.r_squared == 1.0
    with pytest.raises(ValueError):
        fit_loglog_slope([(10, 1.0), (10, 2.0)])


def _decay_cfg(**kw):
    base = dict(seed=11, n_list=[20, 30], replicates=1, target_snr=3.0, methods=["tsnn", "allrow"])
    base.update(kw)
    return DecayStudyConfig(**base)


def test_decay_study_shape_and_determinism():
    cfg = _decay_cfg()
    a = run_decay_study(cfg)
    assert len(a["summary"]) == len(cfg.methods) * len(cfg.n_list)
    assert [r["method"] for r in a["slopes"]] == cfg.methods
    b = run_decay_study(cfg)
    assert a == b


def test_decay_single_run_recomputed():
    cfg = _decay_cfg(n_list=[25], methods=["tsnn"])
    got = run_decay_study(cfg)["summary"][0]["mean_mse"]
    # recompute the one cell by hand
    truth, matrix, model = _sim(cfg, 25, 0)
    base = _data_seed(cfg.seed, 25)
    plan = make_folds(matrix, "random", cfg.folds, seed=derived_seed(base, 0, "folds"))
    res, _ = fit_method("tsnn", matrix, cfg, plan, derived_seed(base, 0, "neighbors"), model)
    assert got == mse(apply_fallback(res, matrix.observed_mean()).theta_hat, truth)


def test_decay_workers_match_serial():
    cfg = _decay_cfg()
    assert run_decay_study(cfg, workers=2) == run_decay_study(cfg)


def _oracle_rows(seed, lam):
    cfg = DecayStudyConfig(seed=seed, n_list=[30], replicates=1, noise_sd=0.0, lam=lam,
                           mechanism={"kind": "mcar", "p": 1.0}, methods=["tsnn", "otsnn"],
                           grid={"points": 12, "percentiles": {"tsnn": (0.5, 60), "otsnn": (0.5, 60)}})
    return {r["method"]: r["mse"] for r in run_decay_study(cfg)["replicates"]}


def test_oracle_distances_equal_when_additive():
    # lam = 1, no noise, full data: estimated and latent distances coincide
    for seed in range(3):
        rows = _oracle_rows(seed, 1.0)
        assert rows["otsnn"] == pytest.approx(rows["tsnn"], rel=1e-9)


def test_oracle_distances_not_worse_on_average():
    totals = np.zeros(2)
    for seed in range(10):
        rows = _oracle_rows(seed, 0.75)
        totals += [rows["tsnn"], rows["otsnn"]]
    assert totals[1] <= totals[0]


def test_coverage_constant_matrix_is_one():
    mat = ObservedMatrix.full(np.full((12, 12), 2.5))
    plan = make_folds(mat, "random", 4, seed=0)
    out = fold_intervals(mat, plan, 1, PercentileSpec(1.5, 10, 3), 0, 0.95, 0.0)
    assert out["sigma_hat"] == 0.0
    assert coverage_rate(out["ci_hat"], GroundTruth(mat.values), out["test"]) == 1.0
    assert coverage_rate(out["ci_o"], GroundTruth(mat.values), out["test"]) == 1.0


def test_coverage_zero_level_is_zero():
    cfg = CoverageStudyConfig(seed=4, n_list=[30], replicates=1, target_snr=2 ** 0.5, level=0.0)
    row = run_coverage_study(cfg)["summary"][0]
    assert row["mean_coverage_hat"] == 0.0 and row["mean_coverage_oracle"] == 0.0


def test_coverage_study_in_range_and_deterministic():
    cfg = CoverageStudyConfig(seed=4, n_list=[30, 40], replicates=2, target_snr=2 ** 0.5)
    a = run_coverage_study(cfg)
    assert a == run_coverage_study(cfg)
    assert len(a["summary"]) == 2 and len(a["replicates"]) == 4
    for row in a["summary"]:
        assert 0.5 <= row["mean_coverage_hat"] <= 1.0


def _holdout_instance(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10, 12)) + rng.normal(size=(1, 12))
    return ObservedMatrix(X, rng.random((10, 12)) < 0.8)


def test_holdout_allrow_matches_column_mean_oracle():
    mat = _holdout_instance()
    cfg = HoldoutStudyConfig(input="unused.csv", seed=0, folds=5, holdout_cols=4, methods=["allrow"])
    plan = make_folds(mat, "blocked", 5, 4, seed=0)
    out = run_holdout_comparison(mat, plan, ["allrow"], cfg)
    expected = []
    for k in range(5):
        test = plan.test_mask(k) & mat.mask
        train = plan.train_mask(mat, k)
        for i, j in zip(*np.nonzero(test)):
            col = mat.values[train[:, j], j]
            pred = col.mean() if col.size else mat.values[train].mean()
            expected.append(mat.values[i, j] - pred)
    got = [r["residual"] for r in out["residuals"]]
    np.testing.assert_allclose(got, expected, rtol=1e-12)
    assert out["summary"][0]["count"] == len(expected)


def test_holdout_summary_per_method_and_perfect_predictor(monkeypatch):
    mat = ObservedMatrix(np.ones((10, 12)), np.random.default_rng(1).random((10, 12)) < 0.9)
    cfg = HoldoutStudyConfig(input="unused.csv", seed=0, folds=5, holdout_cols=4)
    plan = make_folds(mat, "blocked", 5, 4, seed=0)
    methods = ["tsnn", "allrow", "allcol", "usvt"]
    out = run_holdout_comparison(mat, plan, methods, cfg)
    assert [s["method"] for s in out["summary"]] == methods
    for s in out["summary"]:
        assert s["median"] == s["q1"] == s["q3"] == 0.0


def test_clt_errors_shape():
    z = clt_standardized_errors(40, seed=1)
    assert z.shape == (40,) and np.isfinite(z).all()
    np.testing.assert_array_equal(z, clt_standardized_errors(40, seed=1))
