"""Shared independent oracles for the test suite.

These stay deliberately separate from the implementation paths they
check: determinants by cofactor expansion, 2x2 eigenvalues by the
quadratic formula, scatter matrices by plain loops.
"""

import numpy as np
import pytest


def det_cofactor(m: np.ndarray) -> float:
    """Determinant by recursive cofactor expansion along the first row."""
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(m, 0, axis=0), j, axis=1)
        total += (-1.0) ** j * m[0, j] * det_cofactor(minor)
    return total


def eig2x2(m: np.ndarray) -> tuple[float, float]:
    """Eigenvalues of a symmetric 2x2 matrix by the quadratic formula."""
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    half_tr = (a + c) / 2.0
    disc = np.sqrt(((a - c) / 2.0) ** 2 + b * b)
    return half_tr - disc, half_tr + disc


def random_spd(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """A random SPD matrix A A^T + eps*I."""
    a = rng.standard_normal((d, d)) * scale
    return a @ a.T + 0.1 * scale**2 * np.eye(d)


def scatter_naive(pts: np.ndarray) -> np.ndarray:
    """Scatter matrix of a point set by explicit loops."""
    mean = pts.mean(axis=0)
    d = pts.shape[1]
    w = np.zeros((d, d))
    for x in pts:
        diff = x - mean
        w += np.outer(diff, diff)
    return w


def pooled_scatter_naive(pts: np.ndarray, labels: np.ndarray, g: int) -> np.ndarray:
    """Pooled within-group scatter by per-cluster loops."""
    d = pts.shape[1]
    w = np.zeros((d, d))
    for j in range(g):
        members = pts[labels == j]
        if members.shape[0] > 0:
            w += scatter_naive(members)
    return w


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session", autouse=True)
def descent_never_violated():
    """Every reduction step executed anywhere in the suite must descend."""
    yield
    from tdclust.solver import DESCENT_MONITOR

    assert DESCENT_MONITOR.violations == 0, (
        f"{DESCENT_MONITOR.violations} descent violations "
        f"in {DESCENT_MONITOR.steps} reduction steps"
    )
