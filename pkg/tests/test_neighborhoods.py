import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsnn.core import ObservedMatrix
from tsnn.distances import DistanceTable, estimated_col_distances, estimated_row_distances
from tsnn.neighborhoods import NeighborhoodSet, build_neighborhoods, joint_neighborhood

from conftest import random_matrix


def _table(d):
    d = np.asarray(d, dtype=float)
    return DistanceTable(d, np.ones(d.shape, dtype=np.int64), "row")


STAR = _table([[0.0, 0.5, 1.0, 4.0],
               [0.5, 0.0, 9.0, 9.0],
               [1.0, 9.0, 0.0, 9.0],
               [4.0, 9.0, 9.0, 0.0]])


def test_radius_threshold():
    s = build_neighborhoods(STAR, 1.5)
    assert s.members[0].tolist() == [0, 1, 2]


def test_tie_is_included():
    assert build_neighborhoods(STAR, 1.0).members[0].tolist() == [0, 1, 2]


def test_zero_radius_gives_self_only():
    s = build_neighborhoods(STAR, 0.0)
    assert [x.tolist() for x in s.members] == [[0], [1], [2], [3]]


def test_no_self():
    assert build_neighborhoods(STAR, 1.5, allow_self=False).members[0].tolist() == [1, 2]


def test_cap_keeps_self():
    s = build_neighborhoods(STAR, 1.5, cap=2, seed=11)
    members = s.members[0].tolist()
    assert len(members) == 2 and 0 in members and s.capped[0]
    assert not s.capped[3]


def test_cap_zero_rejected():
    with pytest.raises(ValueError):
        build_neighborhoods(STAR, 1.0, cap=0)


def test_cap_deterministic():
    table = estimated_row_distances(random_matrix(np.random.default_rng(1), 30, 10, "full"))
    a = build_neighborhoods(table, np.inf, cap=5, seed=3)
    b = build_neighborhoods(table, np.inf, cap=5, seed=3)
    np.testing.assert_array_equal(a.indicator, b.indicator)
    assert np.all(a.sizes == 5)


def test_joint_examples():
    full = ObservedMatrix.full(np.ones((2, 2)))
    everyone = NeighborhoodSet.everything(2, "row")
    cols = NeighborhoodSet.everything(2, "column")
    assert joint_neighborhood(everyone, cols, full, 0, 0).count == 4
    assert joint_neighborhood(everyone, cols, full, 0, 0, exclude_target=True).count == 3
    hole = ObservedMatrix(np.ones((2, 2)), np.array([[False, True], [True, True]]))
    single_r, single_c = NeighborhoodSet.singletons(2, "row"), NeighborhoodSet.singletons(2, "column")
    assert joint_neighborhood(single_r, single_c, hole, 0, 0).count == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**32 - 1), st.floats(0, 3), st.floats(0, 3))
def test_monotone_in_radius(n, m, seed, r1, r2):
    table = estimated_row_distances(random_matrix(np.random.default_rng(seed), n, m, "mcar"))
    lo, hi = sorted([r1, r2])
    small, big = build_neighborhoods(table, lo), build_neighborhoods(table, hi)
    assert np.all(big.indicator | ~small.indicator)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(1, 6), st.integers(0, 2**32 - 1), st.integers(1, 4), st.booleans())
def test_cap_bound_and_membership(n, m, seed, cap, allow_self):
    table = estimated_row_distances(random_matrix(np.random.default_rng(seed), n, m, "full"))
    s = build_neighborhoods(table, 1.0, cap=cap, allow_self=allow_self, seed=seed)
    for a, members in enumerate(s.members):
        assert len(members) <= cap
        assert (a in members) == allow_self
        assert all(table.d_sq[a, b] <= 1.0 for b in members)
        if s.capped[a]:
            assert len(members) == cap


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_joint_count_bounded_by_product(n, m, seed):
    rng = np.random.default_rng(seed)
    mat = random_matrix(rng, n, m, "mcar")
    rs = build_neighborhoods(estimated_row_distances(mat), 1.0)
    cs = build_neighborhoods(estimated_col_distances(mat), 1.0)
    for i in range(n):
        for j in range(m):
            joint = joint_neighborhood(rs, cs, mat, i, j)
            prod = rs.sizes[i] * cs.sizes[j]
            assert joint.count <= prod
            full_product = mat.mask[np.ix_(rs.members[i], cs.members[j])].all()
            assert (joint.count == prod) == bool(full_product)
            for a, b in joint.pairs:
                assert rs.indicator[i, a] and cs.indicator[j, b] and mat.mask[a, b]
