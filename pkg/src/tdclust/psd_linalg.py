"""Dense symmetric positive-definite matrix kernel.

Everything the clustering criterion needs from linear algebra lives here:
Cholesky factorization with a relative positivity threshold, (log-)
determinants, Mahalanobis quadratic forms, the rank-one determinant update
det(W + y y^T) = (1 + y^T W^{-1} y) det W, and extreme eigenvalues by
cyclic Jacobi rotations.  Dimensions are small (d <= ~32), so clarity and
symmetry preservation win over asymptotics.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

# Relative pivot threshold: a Cholesky pivot <= PD_PIVOT_RTOL * trace/d
# signals a singular scatter matrix.
PD_PIVOT_RTOL = 1e-12

# Jacobi sweep target: off-diagonal Frobenius norm <= JACOBI_RTOL * ||m||_F.
JACOBI_RTOL = 1e-12
_JACOBI_MAX_SWEEPS = 100

_SYMMETRY_RTOL = 1e-8


class SpdMatrix:
    """An SPD matrix together with its lower Cholesky factor.

    Instances are immutable after construction and safe to share between
    threads.  Construct through :func:`factorize`.

    Attributes:
        entries: the (d, d) matrix, exactly symmetric.
        factor: lower-triangular L with L @ L.T == entries, positive diagonal.
        log_det: log determinant, 2 * sum(log(diag(L))).
    """

    __slots__ = ("entries", "factor", "log_det")

    def __init__(self, entries: np.ndarray, factor: np.ndarray, log_det: float):
        self.entries = entries
        self.factor = factor
        self.log_det = log_det
        entries.setflags(write=False)
        factor.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __repr__(self):  # pragma: no cover
        return f"SpdMatrix(dim={self.dim}, log_det={self.log_det:.6g})"


def _as_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    skew = np.abs(m - m.T).max()
    scale = max(np.abs(m).max(), 1.0)
    if skew > _SYMMETRY_RTOL * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {skew:g})")
    # Force exact symmetry so entries[i, j] == entries[j, i] bitwise.
    return (m + m.T) / 2.0


def factorize(m: np.ndarray) -> SpdMatrix:
    """Cholesky-factorize a symmetric matrix.

    Raises NotPositiveDefinite when any pivot falls at or below
    PD_PIVOT_RTOL * trace/d, which for pooled scatter matrices signals
    violated general position or too small a retention count.
    """
    sym = _as_symmetric(m)
    d = sym.shape[0]
    pivot_floor = PD_PIVOT_RTOL * max(np.trace(sym), 0.0) / d
    lower = np.zeros_like(sym)
    log_det = 0.0
    for j in range(d):
        pivot = sym[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= pivot_floor:
            raise NotPositiveDefinite(
                f"pivot {pivot:g} at column {j} below threshold {pivot_floor:g}"
            )
        ljj = math.sqrt(pivot)
        lower[j, j] = ljj
        log_det += 2.0 * math.log(ljj)
        if j + 1 < d:
            lower[j + 1 :, j] = (sym[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / ljj
    return SpdMatrix(sym, lower, log_det)


def det_spd(m: SpdMatrix) -> float:
    """Determinant as the product of squared Cholesky diagonal entries."""
    return float(np.prod(np.diag(m.factor)) ** 2)


def log_det_spd(m: SpdMatrix) -> float:
    return m.log_det


def _forward_solve(lower: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Small d: plain forward substitution, no LAPACK round trip.
    d = lower.shape[0]
    z = np.empty(d)
    for k in range(d):
        z[k] = (v[k] - lower[k, :k] @ z[:k]) / lower[k, k]
    return z


def mahalanobis_sq(x: np.ndarray, mean: np.ndarray, w: SpdMatrix) -> float:
    """Squared Mahalanobis distance (x - mean)^T w^{-1} (x - mean).

    With w = L L^T this is ||L^{-1}(x - mean)||^2, one triangular solve.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if x.shape != (w.dim,) or mean.shape != (w.dim,):
        raise DimensionMismatch(
            f"vectors of shape {x.shape}/{mean.shape} vs matrix dim {w.dim}"
        )
    z = _forward_solve(w.factor, x - mean)
    return float(z @ z)


def quad_form(v: np.ndarray, w: SpdMatrix) -> float:
    """v^T w^{-1} v for a raw difference vector v."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (w.dim,):
        raise DimensionMismatch(f"vector shape {v.shape} vs matrix dim {w.dim}")
    z = _forward_solve(w.factor, v)
    return float(z @ z)


def solve_spd(w: SpdMatrix, v: np.ndarray) -> np.ndarray:
    """w^{-1} v via two triangular solves."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (w.dim,):
        raise DimensionMismatch(f"vector shape {v.shape} vs matrix dim {w.dim}")
    z = _forward_solve(w.factor, v)
    d = w.dim
    out = np.empty(d)
    lower = w.factor
    for k in range(d - 1, -1, -1):
        out[k] = (z[k] - lower[k + 1 :, k] @ out[k + 1 :]) / lower[k, k]
    return out


def det_rank_one_update(w: SpdMatrix, y: np.ndarray) -> float:
    """det(w + y y^T) without forming the updated matrix.

    Uses the identity det(w + y y^T) = (1 + y^T w^{-1} y) * det(w).
    """
    return (1.0 + quad_form(y, w)) * det_spd(w)


def extreme_eigenvalues(m) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix.

    Accepts an SpdMatrix or a plain symmetric array; positive
    semi-definiteness is allowed (no factorization involved).  Cyclic
    Jacobi rotations run until the off-diagonal norm drops below
    JACOBI_RTOL times the Frobenius norm.
    """
    if isinstance(m, SpdMatrix):
        a = m.entries.copy()
    else:
        a = _as_symmetric(m).copy()
    d = a.shape[0]
    if d == 1:
        v = float(a[0, 0])
        return v, v
    fro = math.sqrt(float((a * a).sum()))
    if fro == 0.0:
        return 0.0, 0.0
    target = JACOBI_RTOL * fro
    for _ in range(_JACOBI_MAX_SWEEPS):
        off_sq = float((a * a).sum() - (np.diag(a) ** 2).sum())
        if off_sq <= target * target:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(1.0 + theta * theta)
                )
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
    diag = np.diag(a)
    return float(diag.min()), float(diag.max())
