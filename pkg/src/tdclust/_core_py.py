"""Pure-numpy implementation of the hot solver kernels.

Selected at import time by :mod:`tdclust._kernel` when the compiled
extension is unavailable (or disabled via TDCLUST_PURE_PYTHON=1).  The
compiled backend must match these functions' semantics exactly, including
argmin tie-breaking (smallest cluster index wins).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

BACKEND = "python"


def distance_matrix(points: np.ndarray, means: np.ndarray, chol_lower: np.ndarray) -> np.ndarray:
    """All n*g squared Mahalanobis distances under the metric L L^T.

    Returns an (n, g) array with entry (i, j) = ||L^{-1}(x_i - m_j)||^2.
    """
    n = points.shape[0]
    g = means.shape[0]
    out = np.empty((n, g))
    for j in range(g):
        z = solve_triangular(
            chol_lower, (points - means[j]).T, lower=True, check_finite=False
        )
        out[:, j] = np.einsum("dn,dn->n", z, z)
    return out


def distance_argmin(
    points: np.ndarray, means: np.ndarray, chol_lower: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-observation nearest cluster and its squared distance.

    Ties go to the smallest cluster index.
    """
    dists = distance_matrix(points, means, chol_lower)
    jmin = np.argmin(dists, axis=1)
    dmin = dists[np.arange(points.shape[0]), jmin]
    return dmin, jmin.astype(np.int64)
