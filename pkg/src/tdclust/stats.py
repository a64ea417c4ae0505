"""Statistical utilities around the solver.

Chi-square quantiles (own regularized incomplete gamma plus bisection),
Bhattacharyya distance between normal populations, bottleneck matching of
estimated versus true populations, the tail-fraction diagnostic used to
choose the retention count r, and seeded normal sampling helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import psd_linalg
from .configuration import Configuration, Dataset
from .errors import LengthMismatch, TdclustError

CHI2_ABS_TOL = 1e-10
DEFAULT_GAMMAS = (0.95, 0.975, 0.99, 0.999)

_GAMMAINC_MAX_ITER = 500
_GAMMAINC_EPS = 1e-15


@dataclass(frozen=True)
class NormalParams:
    """Mean vector and covariance of one normal population."""

    mean: np.ndarray
    cov: psd_linalg.SpdMatrix

    @classmethod
    def from_arrays(cls, mean, cov) -> "NormalParams":
        return cls(np.asarray(mean, dtype=np.float64), psd_linalg.factorize(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x).

    Series expansion for x < a + 1, continued fraction otherwise.
    """
    if x < 0 or a <= 0:
        raise ValueError("need x >= 0 and a > 0")
    if x == 0.0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(_GAMMAINC_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _GAMMAINC_EPS:
                break
        return total * math.exp(-x + a * math.log(x) - lg)
    # Lentz's continued fraction for Q(a, x).
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMAINC_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMAINC_EPS:
            break
    q = math.exp(-x + a * math.log(x) - lg) * h
    return 1.0 - q


def chi2_cdf(df: int, x: float) -> float:
    """CDF of the chi-square distribution with df degrees of freedom."""
    if x <= 0:
        return 0.0
    return _gamma_p(df / 2.0, x / 2.0)


def chi2_quantile(df: int, p: float) -> float:
    """p-quantile of chi-square with df degrees of freedom.

    Bisection on the CDF to absolute tolerance 1e-10.
    """
    if df < 1:
        raise ValueError("df must be a positive integer")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    lo, hi = 0.0, float(df)
    while chi2_cdf(df, hi) < p:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover
            break
    while hi - lo > CHI2_ABS_TOL:
        mid = 0.5 * (lo + hi)
        if chi2_cdf(df, mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bhattacharyya(p: NormalParams, q: NormalParams) -> float:
    """Bhattacharyya distance between two normal populations, in [0, 1].

    1 - sqrt(sqrt(det V1 det V2) / det((V1+V2)/2))
      * exp(-1/4 (mu2-mu1)^T (V1+V2)^{-1} (mu2-mu1)),
    evaluated in log space.
    """
    if p.dim != q.dim:
        raise LengthMismatch(f"dimension mismatch: {p.dim} vs {q.dim}")
    vsum = psd_linalg.factorize(p.cov.entries + q.cov.entries)
    vmean = psd_linalg.factorize((p.cov.entries + q.cov.entries) / 2.0)
    log_coef = 0.25 * (p.cov.log_det + q.cov.log_det) - 0.5 * vmean.log_det
    quad = 0.25 * psd_linalg.quad_form(q.mean - p.mean, vsum)
    return float(min(max(1.0 - math.exp(log_coef - quad), 0.0), 1.0))


def _bipartite_matching(adjacency: np.ndarray) -> int:
    """Maximum bipartite matching size by augmenting paths (Kuhn)."""
    k = adjacency.shape[0]
    match_right = [-1] * k

    def try_augment(u: int, visited: list[bool]) -> bool:
        for v in range(k):
            if adjacency[u, v] and not visited[v]:
                visited[v] = True
                if match_right[v] < 0 or try_augment(match_right[v], visited):
                    match_right[v] = u
                    return True
        return False

    size = 0
    for u in range(k):
        if try_augment(u, [False] * k):
            size += 1
    return size


def best_matching(
    estimated: list[NormalParams], truth: list[NormalParams]
) -> tuple[list[int], float]:
    """Bottleneck assignment of estimated populations to true ones.

    Minimizes, over all matchings, the maximum Bhattacharyya distance of a
    matched pair; solved exactly by binary search over the sorted pairwise
    distances with a bipartite-matching feasibility test.  Returns
    (perm, max_distance) with perm[j] = index of the estimate matched to
    truth j.
    """
    if len(estimated) != len(truth):
        raise LengthMismatch(
            f"{len(estimated)} estimated vs {len(truth)} true populations"
        )
    k = len(truth)
    dist = np.array(
        [[bhattacharyya(estimated[i], truth[j]) for j in range(k)] for i in range(k)]
    )
    values = np.unique(dist)
    lo, hi = 0, values.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _bipartite_matching(dist <= values[mid]) == k:
            hi = mid
        else:
            lo = mid + 1
    threshold = values[lo]

    # Recover one perfect matching at the optimal threshold.
    adjacency = dist <= threshold
    match_right = [-1] * k

    def try_augment(u: int, visited: list[bool]) -> bool:
        for v in range(k):
            if adjacency[u, v] and not visited[v]:
                visited[v] = True
                if match_right[v] < 0 or try_augment(match_right[v], visited):
                    match_right[v] = u
                    return True
        return False

    for u in range(k):
        try_augment(u, [False] * k)
    perm = [match_right[j] for j in range(k)]
    return perm, float(threshold)


@dataclass(frozen=True)
class TailDiagnostic:
    """Observed tail fractions of retained squared distances vs chi-square.

    `fractions[gamma]` is the share of retained observations whose squared
    Mahalanobis distance to their cluster, under the estimated common
    covariance (pooled scatter / r), strictly exceeds the chi-square
    gamma-quantile.  `score` is the squared mismatch against the
    theoretical tails 1 - gamma.
    """

    r_candidate: int
    fractions: dict[float, float] = field(default_factory=dict)
    score: float = 0.0


def tail_fractions(
    data: Dataset, report, gammas: tuple[float, ...] = DEFAULT_GAMMAS
) -> TailDiagnostic:
    """Tail diagnostic of a solve report on its dataset.

    Distances use the maximum-likelihood covariance (pooled scatter
    divided by r), which is the scale under which retained regular
    observations are approximately chi-square distributed.
    """
    cfg: Configuration = report.best
    means = report.mle_means
    cov = psd_linalg.factorize(report.mle_cov)
    pts = data.points[cfg.indices]
    centered = pts - means[cfg.labels]
    z = np.linalg.solve(cov.factor, centered.T)
    d2 = np.einsum("dn,dn->n", z, z)
    fractions = {}
    score = 0.0
    for gamma in gammas:
        threshold = chi2_quantile(data.d, gamma)
        frac = float(np.mean(d2 > threshold))
        fractions[gamma] = frac
        score += (frac - (1.0 - gamma)) ** 2
    return TailDiagnostic(r_candidate=cfg.r, fractions=fractions, score=score)


@dataclass(frozen=True)
class SweepResult:
    diagnostics: list[TailDiagnostic]
    recommended_r: int
    errors: dict[int, str]


def sweep_r(
    data: Dataset,
    r_candidates,
    settings,
    gammas: tuple[float, ...] = DEFAULT_GAMMAS,
    threads: int = 1,
) -> SweepResult:
    """Solve once per candidate r and recommend the one whose tail
    fractions best match the theoretical chi-square tails."""
    from . import solver  # deferred: solver is a heavier import

    diagnostics: list[TailDiagnostic] = []
    errors: dict[int, str] = {}
    for r in r_candidates:
        candidate_settings = replace(settings, r=int(r))
        try:
            report = solver.multistart(data, candidate_settings, threads=threads)
        except TdclustError as exc:
            errors[int(r)] = str(exc)
            continue
        diagnostics.append(tail_fractions(data, report, gammas))
    if not diagnostics:
        raise TdclustError("every sweep candidate failed: " + repr(errors))
    best = min(diagnostics, key=lambda diag: (diag.score, -diag.r_candidate))
    return SweepResult(diagnostics=diagnostics, recommended_r=best.r_candidate, errors=errors)


def estimate_mixing(cfg: Configuration, n: int) -> np.ndarray:
    """Mixing proportions: cluster sizes divided by n (sums to r/n)."""
    return cfg.sizes() / n


def sample_standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via the Box-Muller transform.

    Uses pairs of uniforms from the given seeded generator; deterministic
    for a fixed generator state.
    """
    count = int(np.prod(shape)) if np.ndim(shape) else int(shape)
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate(
        [radius * np.cos(2.0 * np.pi * u2), radius * np.sin(2.0 * np.pi * u2)]
    )[:count]
    return z.reshape(shape)


def sample_normal(
    rng: np.random.Generator, mean: np.ndarray, cov_factor: np.ndarray, count: int
) -> np.ndarray:
    """Draws from N(mean, L L^T) given the lower Cholesky factor L."""
    d = mean.shape[0]
    z = sample_standard_normal(rng, (count, d))
    return mean + z @ cov_factor.T
