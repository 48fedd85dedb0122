import numpy as np
import pytest

from tsnn.core import ObservedMatrix


def random_matrix(rng, n, m, kind="mcar", p=0.7):
    """Small random instance; ``kind`` picks the missingness pattern."""
    values = rng.normal(size=(n, m))
    if kind == "full":
        mask = np.ones((n, m), dtype=bool)
    elif kind == "mcar":
        mask = rng.random((n, m)) < p
    elif kind == "mnar":
        # larger values are seen more often, plus some dead cells
        mask = (rng.random((n, m)) < np.where(values > 0, 0.8, 0.4)) & (rng.random((n, m)) > 0.2)
    elif kind == "blocky":
        mask = np.ones((n, m), dtype=bool)
        mask[: n // 2, : m // 2] = False
    else:
        raise ValueError(kind)
    values = np.where(mask, values, np.nan)
    return ObservedMatrix(values, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
