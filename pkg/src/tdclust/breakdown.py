"""Empirical breakdown experiments for the trimmed determinant criterion.

Breakdown is operationalized as a ratio test along an increasing magnitude
schedule: replace a few observations with points at magnitude M, solve
exactly, and watch whether the estimated means (or the extreme eigenvalues
of the pooled scatter) grow without bound as M does.  Replacement
placements mirror the classical adversarial patterns: a tight twin pair
that can masquerade as a cluster, and mutually far points that cannot.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import oracle, psd_linalg, solver
from .configuration import (
    Configuration,
    Dataset,
    parallelepiped_volume,
    pooled_stats,
)
from .errors import GeneralPositionViolated, InstanceTooLarge

BREAKDOWN_RATIO = 1e3
DEFAULT_SCHEDULE = (1e2, 1e4, 1e6)
_SEPARATION_GUARD = 10_000_000


def example41_dataset(a: float) -> Dataset:
    """The 10-point 1D benchmark set with gap parameter a > 1.

    Two natural clusters: five integers centered at 0, and five more
    consecutive integers starting at a + 2.  Replacing the 7th and 8th
    points with a remote twin pair flips the optimal solution from
    discarding the pair (cost 56/3) to adopting it as a cluster (cost
    10 + (5/6)(a+2)^2 + pair scatter) once a < sqrt(52/5) - 2.
    """
    if a <= 1:
        raise ValueError("the gap parameter must exceed 1")
    pts = np.array([-2.0, -1.0, 0.0, 1.0, 2.0, a + 2, a + 3, a + 4, a + 5, a + 6])
    return Dataset(pts[:, None])


@dataclass(frozen=True)
class TwinPair:
    """Replacements clumped at (M, M + gap, M + 2*gap, ...) on axis 1."""

    gap: float


@dataclass(frozen=True)
class FarApart:
    """Replacements mutually >= factor * M apart and that far from the data."""

    factor: float


@dataclass(frozen=True)
class Custom:
    """Caller-supplied replacement points per magnitude."""

    points: Mapping[float, np.ndarray] | Callable[[float], np.ndarray]


@dataclass(frozen=True)
class ReplacementPlan:
    indices: tuple[int, ...]  # 0-based observation positions to replace
    schedule: tuple[float, ...] = DEFAULT_SCHEDULE
    placement: TwinPair | FarApart | Custom = TwinPair(1e-3)

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("replacement indices must be distinct")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ValueError("the magnitude schedule must be strictly increasing")


def _replacement_points(
    data: Dataset, plan: ReplacementPlan, magnitude: float
) -> np.ndarray:
    m, d = len(plan.indices), data.d
    placement = plan.placement
    if isinstance(placement, Custom):
        source = placement.points
        pts = source(magnitude) if callable(source) else source[magnitude]
        pts = np.asarray(pts, dtype=np.float64)
        if pts.shape != (m, d):
            raise ValueError(f"custom points must have shape ({m}, {d})")
        return pts
    out = np.zeros((m, d))
    if isinstance(placement, TwinPair):
        out[:, 0] = magnitude + placement.gap * np.arange(m)
        return out
    base = float(np.abs(data.points).max())
    for k in range(m):
        out[k, k % d] = base + placement.factor * magnitude * (k + 1)
    return out


def apply_replacements(
    data: Dataset, plan: ReplacementPlan, magnitude: float
) -> Dataset:
    """Dataset with plan.indices replaced by points at the given magnitude."""
    if not plan.indices:
        return data
    if max(plan.indices) >= data.n:
        raise ValueError("replacement index beyond the dataset")
    pts = data.points.copy()
    pts[list(plan.indices)] = _replacement_points(data, plan, magnitude)
    modified = Dataset(pts)
    _reject_exact_degeneracy(modified)
    return modified


def _reject_exact_degeneracy(data: Dataset) -> None:
    # Twin pairs sit deliberately close, so the scale-relative diagnostic
    # of check_general_position does not apply here; only exact
    # degeneracies (duplicates, truly dependent subsets) are rejected.
    pts = data.points
    if np.unique(pts, axis=0).shape[0] < data.n:
        raise GeneralPositionViolated("duplicate observations after replacement")
    if data.d > 1 and data.n <= 25:
        for subset in itertools.combinations(range(data.n), data.d + 1):
            sub = pts[list(subset)]
            spread = float((sub.max(axis=0) - sub.min(axis=0)).max())
            if parallelepiped_volume(sub) <= 1e-12 * max(spread, 1.0) ** data.d:
                raise GeneralPositionViolated(
                    f"affinely dependent subset {subset} after replacement"
                )


@dataclass(frozen=True)
class MagnitudeRecord:
    magnitude: float
    max_mean_norm: float
    log_det: float
    retained_replacements: int
    lambda_min: float
    lambda_max: float


@dataclass(frozen=True)
class ProbeReport:
    records: tuple[MagnitudeRecord, ...]
    breakdown: bool  # ratio test on the tracked quantity
    multistart_records: tuple[MagnitudeRecord, ...] = ()

    def to_dict(self) -> dict:
        def rec(r: MagnitudeRecord) -> dict:
            return {
                "magnitude": r.magnitude,
                "max_mean_norm": r.max_mean_norm,
                "log_det": r.log_det,
                "retained_replacements": r.retained_replacements,
                "lambda_min": r.lambda_min,
                "lambda_max": r.lambda_max,
            }

        return {
            "records": [rec(r) for r in self.records],
            "breakdown": self.breakdown,
            "multistart_records": [rec(r) for r in self.multistart_records],
        }


def _solve_record(
    data: Dataset, plan: ReplacementPlan, magnitude: float, cfg: Configuration
) -> MagnitudeRecord:
    stats = pooled_stats(data, cfg)
    nonempty = ~stats.empty
    norms = np.linalg.norm(stats.means[nonempty], axis=1)
    lam_lo, lam_hi = psd_linalg.extreme_eigenvalues(stats.pooled_ssp)
    replaced = set(plan.indices)
    retained_repl = sum(1 for i in cfg.indices.tolist() if i in replaced)
    return MagnitudeRecord(
        magnitude=magnitude,
        max_mean_norm=float(norms.max()),
        log_det=stats.log_det,
        retained_replacements=retained_repl,
        lambda_min=lam_lo,
        lambda_max=lam_hi,
    )


def _probe(
    data: Dataset,
    g: int,
    r: int,
    plan: ReplacementPlan,
    tracked: Callable[[MagnitudeRecord], float],
    multistart_settings: solver.SolverSettings | None,
) -> ProbeReport:
    records = []
    ms_records = []
    for magnitude in plan.schedule:
        modified = apply_replacements(data, plan, magnitude)
        result = oracle.enumerate_optimum(modified, g, r)
        records.append(_solve_record(modified, plan, magnitude, result.optimum))
        if multistart_settings is not None:
            report = solver.multistart(modified, multistart_settings)
            ms_records.append(_solve_record(modified, plan, magnitude, report.best))
    first, last = tracked(records[0]), tracked(records[-1])
    breakdown = last > BREAKDOWN_RATIO * max(first, 1e-300)
    return ProbeReport(
        records=tuple(records), breakdown=breakdown, multistart_records=tuple(ms_records)
    )


def probe_mean_breakdown(
    data: Dataset,
    g: int,
    r: int,
    plan: ReplacementPlan,
    multistart_settings: solver.SolverSettings | None = None,
) -> ProbeReport:
    """Does the largest estimated mean norm grow unboundedly along the
    schedule?  Ground truth comes from the exact oracle; a multistart run
    per magnitude can be recorded alongside for comparison."""
    return _probe(data, g, r, plan, lambda rec: rec.max_mean_norm, multistart_settings)


def probe_ssp_breakdown(
    data: Dataset,
    g: int,
    r: int,
    plan: ReplacementPlan,
    multistart_settings: solver.SolverSettings | None = None,
) -> "SspProbeReport":
    """Track the extreme eigenvalues of the optimal pooled scatter along
    the schedule, against the data-only bounds from the clean set."""
    base = _probe(data, g, r, plan, lambda rec: rec.lambda_max, multistart_settings)
    return SspProbeReport(
        records=base.records,
        breakdown=base.breakdown,
        multistart_records=base.multistart_records,
        alpha_bound=min_subset_eigenvalue(data),
        gamma_bound=max_subset_determinant(data, r - g + 1),
    )


@dataclass(frozen=True)
class SspProbeReport(ProbeReport):
    alpha_bound: float = math.nan
    gamma_bound: float = math.nan

    def to_dict(self) -> dict:
        payload = super().to_dict()
        payload["alpha_bound"] = self.alpha_bound
        payload["gamma_bound"] = self.gamma_bound
        return payload


def min_subset_eigenvalue(data: Dataset) -> float:
    """min over (d+1)-subsets of the smallest scatter eigenvalue: the
    data-only floor for pooled-scatter eigenvalues under few replacements."""
    d = data.d
    best = math.inf
    for subset in itertools.combinations(range(data.n), d + 1):
        pts = data.points[list(subset)]
        centered = pts - pts.mean(axis=0)
        lam, _ = psd_linalg.extreme_eigenvalues(centered.T @ centered)
        best = min(best, lam)
    return best


def max_subset_determinant(data: Dataset, size: int, cap: int = 200_000) -> float:
    """max over `size`-subsets of det of the scatter matrix: the data-only
    ceiling for the optimal cost after replacements leave `size` originals."""
    if math.comb(data.n, size) > cap:
        raise InstanceTooLarge(f"too many {size}-subsets for the determinant bound")
    best = -math.inf
    for subset in itertools.combinations(range(data.n), size):
        pts = data.points[list(subset)]
        centered = pts - pts.mean(axis=0)
        det = float(np.linalg.det(centered.T @ centered))
        best = max(best, det)
    return best


@dataclass(frozen=True)
class SeparationSpec:
    """A candidate partition for the cluster-separation condition.

    `partition` lists the clusters as tuples of 0-based indices; `u` is
    the minimum cluster size the condition is evaluated at.
    """

    partition: tuple[tuple[int, ...], ...]
    u: int

    def __post_init__(self):
        if len(self.partition) < 2:
            raise ValueError("the separation condition needs g >= 2 clusters")
        if any(len(p) < self.u for p in self.partition):
            raise ValueError("every cluster must have at least u elements")


def subset_count_bound(n: int, r: int, g: int, d: int, u: int) -> int:
    """k(g, u): the pigeonhole size guaranteeing a mostly-original cluster."""
    numerator = max(2 * r - n, (g - 1) * g * d + 1, n - u + 1)
    return math.ceil(numerator / ((g - 1) * g))


@dataclass(frozen=True)
class SeparationCheck:
    holds: bool
    lhs: float
    rhs: float
    k: int
    mode: str


def _cluster_ssp(pts: np.ndarray) -> np.ndarray:
    centered = pts - pts.mean(axis=0)
    return centered.T @ centered


def _subset_means(pts: np.ndarray) -> np.ndarray:
    """Means of all nonempty subsets of the rows of pts."""
    m = pts.shape[0]
    means = []
    for mask in range(1, 1 << m):
        rows = [i for i in range(m) if mask >> i & 1]
        means.append(pts[rows].mean(axis=0))
    return np.array(means)


def check_separation_property(
    data: Dataset, spec: SeparationSpec, r: int, mode: str = "exact"
) -> SeparationCheck:
    """Evaluate the quantitative cluster-validity condition of the
    partition: smallest cross-cluster subset-mean separation under the
    relevant pooled metrics must exceed twice the worst determinant ratio.

    `mode="exact"` enumerates every subconfiguration (guarded); the
    default-documented shortcut `mode="fast"` uses only the full
    partition's pooled scatter, a narrower but cheaper sufficient check.
    """
    g = len(spec.partition)
    d = data.d
    k = subset_count_bound(data.n, r, g, d, spec.u)
    if k <= d:
        raise ValueError(f"subset bound k={k} must exceed the dimension d={d}")

    cluster_pts = [data.points[list(p)] for p in spec.partition]
    means_per_cluster = [_subset_means(pts) for pts in cluster_pts]

    # Denominator: smallest det over k-subsets within a single cluster.
    min_det_c = math.inf
    for pts in cluster_pts:
        if pts.shape[0] < k:
            continue
        for rows in itertools.combinations(range(pts.shape[0]), k):
            det = float(np.linalg.det(_cluster_ssp(pts[list(rows)])))
            min_det_c = min(min_det_c, det)
    if not math.isfinite(min_det_c):
        raise ValueError(f"no cluster has {k} or more elements")

    if mode == "fast":
        pooled = psd_linalg.factorize(sum(_cluster_ssp(pts) for pts in cluster_pts))
        scatters = [pooled]
        max_det = psd_linalg.det_spd(pooled)
    elif mode == "exact":
        count = 1
        for pts in cluster_pts:
            count *= 1 << pts.shape[0]
        if count > _SEPARATION_GUARD:
            raise InstanceTooLarge(f"{count} subconfigurations exceed the guard")
        scatters = []
        max_det = -math.inf
        sizes = [pts.shape[0] for pts in cluster_pts]
        for masks in itertools.product(*(range(1 << s) for s in sizes)):
            total = 0
            big_cluster = False
            w = np.zeros((d, d))
            for pts, mask in zip(cluster_pts, masks):
                rows = [i for i in range(pts.shape[0]) if mask >> i & 1]
                total += len(rows)
                if len(rows) >= d + 1:
                    big_cluster = True
                if len(rows) >= 2:
                    w += _cluster_ssp(pts[rows])
            if total > r or not big_cluster:
                continue
            spd = psd_linalg.factorize(w)
            scatters.append(spd)
            max_det = max(max_det, psd_linalg.det_spd(spd))
    else:
        raise ValueError("mode must be 'exact' or 'fast'")

    diffs = []
    for j in range(g):
        for l in range(j + 1, g):
            diffs.append(
                (means_per_cluster[l][None, :, :] - means_per_cluster[j][:, None, :]).reshape(-1, d)
            )
    diff_mat = np.vstack(diffs)

    lhs = math.inf
    for spd in scatters:
        z = np.linalg.solve(spd.factor, diff_mat.T)
        lhs = min(lhs, float(np.einsum("dk,dk->k", z, z).min()))

    rhs = 2.0 * max_det / min_det_c
    return SeparationCheck(holds=bool(lhs > rhs), lhs=lhs, rhs=rhs, k=k, mode=mode)
