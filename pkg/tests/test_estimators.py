import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsnn.core import ObservedMatrix, Radii
from tsnn.distances import estimated_col_distances, estimated_row_distances
from tsnn.estimators import (allcol_complete, allrow_complete, apply_fallback, colnn_complete, complete,
                             drnn_complete, rownn_complete, tsnn_complete)

from conftest import random_matrix
from oracle import tsnn as naive_tsnn

NaN = np.nan
BIG = Radii(np.inf, np.inf)


def _below_min(table):
    off = table.d_sq[~np.eye(table.size, dtype=bool)]
    off = off[np.isfinite(off)]
    return float(off.min()) / 2 if off.size else 0.0


def test_all_neighbors_average():
    res = tsnn_complete(ObservedMatrix.full([[1.0, 2.0], [3.0, 4.0]]), BIG)
    np.testing.assert_array_equal(res.theta_hat, np.full((2, 2), 2.5))
    assert np.all(res.neighbor_count == 4)


def test_singletons_return_data():
    mat = random_matrix(np.random.default_rng(0), 5, 4, "full")
    res = tsnn_complete(mat, Radii(0.0, 0.0))
    np.testing.assert_array_equal(res.theta_hat, mat.values)


def test_fully_missing_is_undefined():
    mat = ObservedMatrix(np.zeros((3, 2)), np.zeros((3, 2), dtype=bool))
    res = tsnn_complete(mat, BIG)
    assert res.undefined_mask.all() and np.all(res.neighbor_count == 0)
    assert np.isnan(res.theta_hat).all()


def test_rownn_single_column():
    res = rownn_complete(ObservedMatrix.full([[1.0], [3.0]]), np.inf)
    np.testing.assert_array_equal(res.theta_hat.ravel(), [2.0, 2.0])


def test_colnn_examples():
    res = colnn_complete(ObservedMatrix.full([[1.0, 5.0]]), np.inf)
    np.testing.assert_array_equal(res.theta_hat, [[3.0, 3.0]])
    const = ObservedMatrix.from_nan([[2.0, NaN, 2.0], [2.0, 2.0, NaN]])
    res = colnn_complete(const, np.inf)
    assert np.all(res.theta_hat[~res.undefined_mask] == 2.0)


def test_drnn_single_pair():
    X = ObservedMatrix.full([[1.0, 7.0], [2.0, 5.0]])
    # rows and columns are each other's only neighbor; exclude self pairs
    res = drnn_complete(X, BIG, exclude_target=True)
    assert res.theta_hat[0, 0] == 2.0 + 7.0 - 5.0
    assert res.neighbor_count[0, 0] == 1


def test_drnn_exact_on_additive():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=6), rng.normal(size=5)
    theta = a[:, None] + b[None, :]
    mat = ObservedMatrix.full(theta)
    for radii in (BIG, Radii(0.3, 0.7), Radii(2.0, 0.1)):
        np.testing.assert_allclose(drnn_complete(mat, radii).theta_hat, theta, rtol=0, atol=1e-12)


def test_drnn_no_admissible_triple():
    mat = ObservedMatrix.from_nan([[NaN, 1.0], [2.0, NaN]])
    res = drnn_complete(mat, BIG)
    assert res.undefined_mask[0, 0] and res.neighbor_count[0, 0] == 0


def test_allrow_allcol():
    mat = ObservedMatrix.from_nan([[1.0, NaN], [3.0, 4.0]])
    np.testing.assert_array_equal(allrow_complete(mat).theta_hat, [[2.0, 4.0], [2.0, 4.0]])
    np.testing.assert_array_equal(allcol_complete(mat).theta_hat, [[1.0, 1.0], [3.5, 3.5]])
    hole = ObservedMatrix.from_nan([[1.0, NaN], [3.0, NaN]])
    assert allrow_complete(hole).undefined_mask[:, 1].all()
    const = ObservedMatrix.full(np.full((3, 3), 4.0))
    assert np.all(allrow_complete(const).theta_hat == 4.0)


def test_fallback():
    mat = ObservedMatrix.from_nan([[1.0, NaN], [3.0, NaN]])
    res = apply_fallback(allrow_complete(mat), 9.0)
    assert res.filled and np.all(res.theta_hat[:, 1] == 9.0)
    assert res.undefined_mask[:, 1].all()


def test_dispatch_errors():
    mat = ObservedMatrix.full(np.ones((2, 2)))
    with pytest.raises(ValueError):
        complete(mat, "tsnn")
    with pytest.raises(ValueError):
        complete(mat, "nope", BIG)


def test_exclude_target_against_oracle(rng):
    for _ in range(20):
        mat = random_matrix(rng, 4, 5, "mcar")
        res = tsnn_complete(mat, Radii(1.0, 1.5), exclude_target=True)
        ref = naive_tsnn(mat.values.tolist(), mat.mask.tolist(), 1.0, 1.5, exclude_target=True)
        for i in range(4):
            for j in range(5):
                theta, cnt = ref[i][j]
                assert res.neighbor_count[i, j] == cnt
                if cnt:
                    assert res.theta_hat[i, j] == pytest.approx(theta, rel=1e-12)


# ---- properties ----------------------------------------------------------------

instances = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1),
                      st.sampled_from(["full", "mcar", "mnar", "blocky"]))


@settings(max_examples=50, deadline=None)
@given(instances)
def test_rownn_is_tsnn_with_tiny_column_radius(inst):
    n, m, seed, kind = inst
    mat = random_matrix(np.random.default_rng(seed), n, m, kind)
    ct = estimated_col_distances(mat)
    ts = tsnn_complete(mat, Radii(0.8, _below_min(ct)), col_table=ct)
    rn = rownn_complete(mat, 0.8)
    np.testing.assert_array_equal(ts.neighbor_count, rn.neighbor_count)
    np.testing.assert_array_equal(ts.theta_hat, rn.theta_hat)


@settings(max_examples=50, deadline=None)
@given(instances)
def test_colnn_is_transposed_rownn(inst):
    n, m, seed, kind = inst
    mat = random_matrix(np.random.default_rng(seed), n, m, kind)
    a = colnn_complete(mat, 0.9)
    b = rownn_complete(mat.T, 0.9).transpose()
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)
    np.testing.assert_array_equal(a.neighbor_count, b.neighbor_count)


@settings(max_examples=50, deadline=None)
@given(instances, st.sampled_from(["tsnn", "rownn", "colnn", "allrow", "allcol"]))
def test_range_containment(inst, method):
    n, m, seed, kind = inst
    mat = random_matrix(np.random.default_rng(seed), n, m, kind)
    if not mat.mask.any():
        return
    res = complete(mat, method, Radii(0.7, 0.7))
    lo, hi = mat.values[mat.mask].min(), mat.values[mat.mask].max()
    ok = ~res.undefined_mask
    assert np.all(res.theta_hat[ok] >= lo - 1e-12) and np.all(res.theta_hat[ok] <= hi + 1e-12)
    np.testing.assert_array_equal(res.neighbor_count == 0, res.undefined_mask)
    assert np.all(np.isfinite(res.theta_hat[ok]))


@settings(max_examples=40, deadline=None)
@given(instances, st.floats(0.1, 5.0), st.floats(-3, 3))
def test_affine_equivariance(inst, a, b):
    n, m, seed, kind = inst
    mat = random_matrix(np.random.default_rng(seed), n, m, kind)
    moved = ObservedMatrix(np.where(mat.mask, a * mat.values + b, np.nan), mat.mask)
    # radii placed between distinct distances so rounding cannot flip membership
    rt, ct = estimated_row_distances(mat), estimated_col_distances(mat)
    r = _mid_radius(rt.d_sq)
    c = _mid_radius(ct.d_sq)
    base = tsnn_complete(mat, Radii(r, c), row_table=rt, col_table=ct)
    res = tsnn_complete(moved, Radii(a * a * r, a * a * c))
    np.testing.assert_array_equal(res.undefined_mask, base.undefined_mask)
    ok = ~base.undefined_mask
    np.testing.assert_allclose(res.theta_hat[ok], a * base.theta_hat[ok] + b, rtol=1e-9, atol=1e-9)


def _mid_radius(d):
    vals = np.unique(d[np.isfinite(d)])
    if vals.size < 2:
        return 0.5
    gaps = np.diff(vals)
    k = int(np.argmax(gaps))
    return float((vals[k] + vals[k + 1]) / 2)


def test_precomputed_tables_match(rng):
    mat = random_matrix(rng, 8, 7, "mnar")
    radii = Radii(0.8, 1.1)
    a = tsnn_complete(mat, radii)
    b = tsnn_complete(mat, radii, row_table=estimated_row_distances(mat), col_table=estimated_col_distances(mat))
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)


def test_unobserved_values_never_read(rng):
    mat = random_matrix(rng, 7, 6, "mcar")
    junk = ObservedMatrix(np.where(mat.mask, mat.values, -1e12), mat.mask)
    for method in ("tsnn", "drnn", "rownn", "allcol"):
        np.testing.assert_array_equal(complete(mat, method, Radii(1.0, 1.0)).theta_hat,
                                      complete(junk, method, Radii(1.0, 1.0)).theta_hat)
