"""Simulation drivers: MSE decay, interval coverage and blocked hold-out comparison.

Every (n, replicate) cell derives its own seeds from the study seed, so cells
can run in any order or in worker processes and still give identical tables.
"""
from __future__ import annotations

import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import soft_impute_best, soft_impute_complete, usvt_complete
from .config import CoverageStudyConfig, DecayStudyConfig, HoldoutStudyConfig
from .core import GroundTruth, Mechanism, ObservedMatrix, Radii
from .distances import (estimated_col_distances, estimated_row_distances, latent_col_distances,
                        latent_row_distances)
from .estimators import apply_fallback, complete, complete_from_neighborhoods
from .inference import confidence_intervals, coverage_rate, estimate_noise_sd, within_neighborhood_sd_grid
from .neighborhoods import build_neighborhoods
from .synthesis import SimConfig, derived_seed, generate
from .tuning import DEFAULT_PERCENTILES, FoldPlan, PercentileSpec, eta_grid_from_percentiles, make_folds, tune

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_loglog_slope(points) -> SlopeFit:
    """Least squares line through (log n, log mse)."""
    pts = np.asarray(points, dtype=float)
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct n")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r2)


def mse(theta_hat: np.ndarray, truth: GroundTruth) -> float:
    return float(np.mean((theta_hat - truth.theta) ** 2))


def _data_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(n), 0xDA7A]).generate_state(1, np.uint64)[0] >> 1)


def _sim(cfg, n: int, replicate: int):
    sim = SimConfig(n, n, cfg.lam, cfg.noise_sd, cfg.target_snr, cfg.mechanism.build(), _data_seed(cfg.seed, n))
    return generate(sim, replicate)


def _spec(cfg, method: str) -> PercentileSpec:
    lo, hi = cfg.grid.percentiles.get(method, DEFAULT_PERCENTILES.get(method, (1.5, 10.0)))
    return PercentileSpec(lo, hi, cfg.grid.points)


def fit_method(method: str, matrix: ObservedMatrix, cfg, plan: FoldPlan, nbr_seed: int, model=None):
    """Tune on the training folds of fold 0, then complete the whole observed matrix.

    Returns the completion and a metadata dict (chosen radii, undefined count).
    """
    meta = {}
    if method in ("tsnn", "rownn", "colnn", "drnn", "otsnn"):
        if method == "otsnn":
            row_t, col_t = latent_row_distances(model), latent_col_distances(model)
            tuned = tune(matrix, "tsnn", _spec(cfg, method), plan, 0, nbr_seed, row_t, col_t,
                         leave_out=cfg.tune_leave_out)
            radii = tuned.radii
            res = complete(matrix, "tsnn", radii, nbr_seed, row_t, col_t)
        else:
            tuned = tune(matrix, method, _spec(cfg, method), plan, 0, nbr_seed,
                         leave_out=cfg.tune_leave_out)
            row_t = estimated_row_distances(matrix) if method != "colnn" else None
            col_t = estimated_col_distances(matrix) if method != "rownn" else None
            # training-fold radii map to the full tables through their percentiles
            radii = tuned.transfer(row_t, col_t)
            res = complete(matrix, method, radii, nbr_seed, row_t, col_t)
        meta.update(eta_row_sq=radii.eta_row_sq, eta_col_sq=radii.eta_col_sq,
                    row_percentile=tuned.row_percentile, col_percentile=tuned.col_percentile)
    elif method in ("allrow", "allcol"):
        res = complete(matrix, method)
    elif method == "usvt":
        res = usvt_complete(matrix, cfg.usvt_eta)
    else:
        raise ValueError(f"unknown method {method!r}")
    meta["undefined"] = int(res.undefined_mask.sum())
    return res, meta


def _decay_cell(cfg: DecayStudyConfig, n: int, replicate: int) -> list[dict]:
    truth, matrix, model = _sim(cfg, n, replicate)
    base = _data_seed(cfg.seed, n)
    plan = make_folds(matrix, "random", cfg.folds, seed=derived_seed(base, replicate, "folds"))
    nbr_seed = derived_seed(base, replicate, "neighbors")
    fill = matrix.observed_mean()
    rows = []
    for method in cfg.methods:
        try:
            if method == "softimpute":
                lam, res, _ = soft_impute_best(matrix, cfg.softimpute_lambdas, truth.theta,
                                               np.ones(matrix.shape, dtype=bool),
                                               cfg.softimpute_max_iter, cfg.softimpute_tol)
                meta = {"lambda": lam, "undefined": 0}
            else:
                res, meta = fit_method(method, matrix, cfg, plan, nbr_seed, model)
        except Exception as err:
            raise RuntimeError(f"replicate {replicate}, n={n}, method {method}: {err}") from err
        theta = res.theta_hat
        if cfg.fallback_mean:
            theta = apply_fallback(res, fill).theta_hat
        rows.append({"method": method, "n": n, "replicate": replicate, "mse": mse(theta, truth), **meta})
    return rows


def _run_cells(fn, cfg, cells, workers: int):
    if workers > 1:
        # spawn: forking after numba has started its OpenMP pool aborts the child
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futures = [pool.submit(fn, cfg, n, r) for n, r in cells]
            return [f.result() for f in futures]
    out = []
    for n, r in cells:
        log.info("cell n=%d replicate=%d", n, r)
        out.append(fn(cfg, n, r))
    return out


def _summarise(values):
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def run_decay_study(cfg: DecayStudyConfig, workers: int = 1) -> dict:
    """Mean and SD of MSE against the signal for every (method, n).

    Returns ``{"summary": [...], "replicates": [...], "slopes": [...]}``.
    """
    cells = [(n, r) for n in cfg.n_list for r in range(cfg.replicates)]
    long = [row for rows in _run_cells(_decay_cell, cfg, cells, workers) for row in rows]
    summary = []
    slopes = []
    for method in cfg.methods:
        pts = []
        for n in cfg.n_list:
            vals = [row["mse"] for row in long if row["method"] == method and row["n"] == n]
            mean, sd = _summarise(vals)
            summary.append({"method": method, "n": n, "mean_mse": mean, "sd_mse": sd})
            pts.append((n, mean))
        if len(cfg.n_list) >= 2:
            fit = fit_loglog_slope(pts)
            slopes.append({"method": method, "slope": fit.slope, "intercept": fit.intercept,
                           "r_squared": fit.r_squared})
    return {"summary": summary, "replicates": long, "slopes": slopes}


def fold_intervals(matrix: ObservedMatrix, plan: FoldPlan, fold_id: int, spec: PercentileSpec, seed: int,
                   level: float, noise_sd: Optional[float], cap_row=None, cap_col=None,
                   leave_out: str = "cross"):
    """Train TS-NN on all folds but one and build both interval types on the held-out fold.

    The noise SD estimate is the root mean squared leave-self-out training
    residual at the tuned radii (the quantity the tuning step minimises).
    """
    train = matrix.restrict(plan.train_mask(matrix, fold_id))
    row_t, col_t = estimated_row_distances(train), estimated_col_distances(train)
    tuned = tune(train, "tsnn", spec, seed=seed, row_table=row_t, col_table=col_t,
                 cap_row=cap_row, cap_col=cap_col, leave_out=leave_out)
    r = tuned.radii
    rs = build_neighborhoods(row_t, r.eta_row_sq, r.cap_row, True, seed)
    cs = build_neighborhoods(col_t, r.eta_col_sq, r.cap_col, True, seed)
    res = complete_from_neighborhoods(train, rs, cs)
    loo = apply_fallback(complete_from_neighborhoods(train, rs, cs, exclude_target=True), train.observed_mean())
    sigma_hat = estimate_noise_sd(train, loo).sigma_hat
    within = within_neighborhood_sd_grid(train, res, rs, cs)
    ci_hat = confidence_intervals(res, sigma_hat, level, within, "estimated")
    ci_o = None
    if noise_sd is not None:
        ci_o = confidence_intervals(res, noise_sd, level, within, "oracle")
    test = plan.test_mask(fold_id) & matrix.mask
    return {"result": res, "sigma_hat": sigma_hat, "ci_hat": ci_hat, "ci_o": ci_o, "test": test, "radii": r}


def _coverage_cell(cfg: CoverageStudyConfig, n: int, replicate: int) -> dict:
    truth, matrix, model = _sim(cfg, n, replicate)
    base = _data_seed(cfg.seed, n)
    plan = make_folds(matrix, "random", cfg.folds, seed=derived_seed(base, replicate, "folds"))
    nbr_seed = derived_seed(base, replicate, "neighbors")
    spec = _spec(cfg, "tsnn")
    cov_hat, cov_o, sig = [], [], []
    for k in range(cfg.folds):
        out = fold_intervals(matrix, plan, k, spec, nbr_seed, cfg.level, model.noise_sd, cfg.cap_row, cfg.cap_col,
                             cfg.tune_leave_out)
        cov_hat.append(coverage_rate(out["ci_hat"], truth, out["test"]))
        cov_o.append(coverage_rate(out["ci_o"], truth, out["test"]))
        sig.append(out["sigma_hat"])
    return {"n": n, "replicate": replicate, "coverage_hat": float(np.mean(cov_hat)),
            "coverage_oracle": float(np.mean(cov_o)), "sigma_hat": float(np.mean(sig)),
            "noise_sd": float(model.noise_sd)}


def run_coverage_study(cfg: CoverageStudyConfig, workers: int = 1) -> dict:
    cells = [(n, r) for n in cfg.n_list for r in range(cfg.replicates)]
    long = _run_cells(_coverage_cell, cfg, cells, workers)
    summary = []
    for n in cfg.n_list:
        rows = [row for row in long if row["n"] == n]
        mh, sh = _summarise([row["coverage_hat"] for row in rows])
        mo, so = _summarise([row["coverage_oracle"] for row in rows])
        summary.append({"n": n, "mean_coverage_hat": mh, "sd_coverage_hat": sh,
                        "mean_coverage_oracle": mo, "sd_coverage_oracle": so})
    return {"summary": summary, "replicates": long}


def _residual_summary(method: str, resid: np.ndarray) -> dict:
    q1, med, q3 = np.percentile(resid, [25, 50, 75])
    return {"method": method, "count": int(resid.size), "median": float(med), "q1": float(q1), "q3": float(q3),
            "mean": float(resid.mean()), "rmse": float(np.sqrt(np.mean(resid ** 2)))}


def holdout_predictions(matrix: ObservedMatrix, plan: FoldPlan, fold_id: int, method: str, cfg,
                        seed: int = 0) -> np.ndarray:
    """Completion trained on everything outside one test fold (undefined cells use the training mean)."""
    train = matrix.restrict(plan.train_mask(matrix, fold_id))
    fill = train.observed_mean()
    if method in ("tsnn", "rownn", "colnn", "drnn"):
        tuned = tune(train, method, _spec(cfg, method), seed=seed)
        res = complete(train, method, tuned.radii, seed, exclude_target=True)
    elif method in ("allrow", "allcol"):
        res = complete(train, method, exclude_target=True)
    elif method == "usvt":
        res = usvt_complete(train, cfg.usvt_eta)
    elif method == "softimpute":
        # pick lambda on an inner random split of the training entries
        inner = make_folds(train, "random", 5, seed=seed)
        fit_on = train.restrict(inner.train_mask(train, 0))
        lam, _, _ = soft_impute_best(fit_on, cfg.softimpute_lambdas, train.filled(0.0),
                                     inner.test_mask(0) & train.mask)
        res = soft_impute_complete(train, lam)
    else:
        raise ValueError(f"unknown method {method!r}")
    return apply_fallback(res, fill).theta_hat


def run_holdout_comparison(matrix: ObservedMatrix, plan: FoldPlan, methods, cfg: HoldoutStudyConfig) -> dict:
    """Residuals (observed minus estimate) on blocked hold-out entries, summarised per method."""
    resid = {m: [] for m in methods}
    for k in range(plan.K):
        test = plan.test_mask(k) & matrix.mask
        if not test.any():
            continue
        for method in methods:
            theta = holdout_predictions(matrix, plan, k, method, cfg, seed=cfg.seed + k)
            resid[method].append(matrix.values[test] - theta[test])
    summaries = []
    long = []
    for method in methods:
        r = np.concatenate(resid[method]) if resid[method] else np.array([])
        if r.size == 0:
            raise ValueError("no observed hold-out entries in any fold")
        summaries.append(_residual_summary(method, r))
        long.extend({"method": method, "residual": float(x)} for x in r)
    return {"summary": summaries, "residuals": long}


def clt_standardized_errors(n: int, lam: float = 1.0, target_snr: float = 2 ** 0.5, cap: int = 3,
                            percentile: float = 10.0, seed: int = 0) -> np.ndarray:
    """Standardized hold-out errors sqrt(|N|) (theta_hat - theta) / sigma for a CLT check.

    The matrix is fully observed; one entry per row and column (a random
    permutation) is held out so the n errors share almost no data. Radii sit
    at a fixed distance percentile and every neighborhood is capped at
    ``cap`` members, which keeps the bias small next to the noise term.
    """
    sim = SimConfig(n, n, lam, target_snr=target_snr, mechanism=Mechanism("mcar", p=1.0), seed=seed)
    truth, matrix, model = generate(sim, 0)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC17]))
    cols = rng.permutation(n)
    keep = np.ones(matrix.shape, dtype=bool)
    keep[np.arange(n), cols] = False
    train = matrix.restrict(keep)
    row_t, col_t = estimated_row_distances(train), estimated_col_distances(train)
    er = eta_grid_from_percentiles(row_t, [percentile])[0]
    ec = eta_grid_from_percentiles(col_t, [percentile])[0]
    rs = build_neighborhoods(row_t, er, cap, True, seed)
    cs = build_neighborhoods(col_t, ec, cap, True, seed)
    res = complete_from_neighborhoods(train, rs, cs)
    idx = (np.arange(n), cols)
    if res.undefined_mask[idx].any():
        raise ValueError("some held-out entries have no neighbors; raise the percentile")
    err = res.theta_hat[idx] - truth.theta[idx]
    return np.sqrt(res.neighbor_count[idx]) * err / model.noise_sd
