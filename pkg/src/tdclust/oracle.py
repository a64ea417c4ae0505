"""Brute-force global minimizer over all r-subsets and g-labelings.

Ground truth for the local-search solver and for the breakdown probes, at
desk scale only (the enumeration guard caps the scan at 1e8 configuration
evaluations).  Cluster labelings are enumerated directly; label symmetry
cannot change the minimum cost, so the optimum is unaffected, and the tie
count is reported modulo that symmetry.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .configuration import Configuration, Dataset
from .errors import InstanceTooLarge, NoFeasibleConfiguration

SCAN_GUARD = 100_000_000
TIE_RTOL = 1e-12
_PD_EIG_RTOL = 1e-12
_CHUNK = 1 << 16


@dataclass(frozen=True)
class OracleResult:
    optimum: Configuration
    cost: float
    log_cost: float
    scanned: int
    ties: int


def _labelings(g: int, r: int) -> np.ndarray:
    """All g^r labelings as an (g^r, r) int array."""
    grids = np.unravel_index(np.arange(g**r), (g,) * r)
    return np.stack(grids, axis=1).astype(np.int64)


def _batch_objective(pts: np.ndarray, labels: np.ndarray, g: int, objective: str):
    """Pooled-scatter objective for every labeling of one retained subset.

    Returns (key, feasible): `key` is the log-determinant or the trace,
    `feasible` masks labelings whose pooled scatter is positive definite.
    Means are computed per cluster and the scatter accumulated from
    centered differences (no moment formula) so huge coordinates survive.
    """
    n_lab, r = labels.shape
    d = pts.shape[1]
    sizes = np.zeros((n_lab, g))
    sums = np.zeros((n_lab, g, d))
    for j in range(g):
        mask = labels == j
        sizes[:, j] = mask.sum(axis=1)
        sums[:, j, :] = mask.astype(np.float64) @ pts
    means = sums / np.maximum(sizes, 1.0)[:, :, None]
    centered = pts[None, :, :] - np.take_along_axis(
        means, labels[:, :, None], axis=1
    )
    w = np.einsum("kri,krj->kij", centered, centered)

    if d == 1:
        eig_lo = eig_hi = w[:, 0, 0]
        trace = w[:, 0, 0]
        log_det = np.where(eig_lo > 0, np.log(np.maximum(eig_lo, 1e-300)), np.inf)
    elif d == 2:
        half_tr = (w[:, 0, 0] + w[:, 1, 1]) / 2.0
        disc = np.sqrt(((w[:, 0, 0] - w[:, 1, 1]) / 2.0) ** 2 + w[:, 0, 1] ** 2)
        eig_lo, eig_hi = half_tr - disc, half_tr + disc
        trace = 2.0 * half_tr
        with np.errstate(invalid="ignore", divide="ignore"):
            log_det = np.log(np.maximum(eig_lo, 1e-300)) + np.log(
                np.maximum(eig_hi, 1e-300)
            )
    else:
        eigs = np.linalg.eigvalsh(w)
        eig_lo, eig_hi = eigs[:, 0], eigs[:, -1]
        trace = eigs.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            log_det = np.log(np.maximum(eigs, 1e-300)).sum(axis=1)

    feasible = eig_lo > _PD_EIG_RTOL * np.maximum(trace, 0.0) / d
    key = log_det if objective == "det" else trace
    return key, feasible


def _between_trace(pts: np.ndarray, labels: np.ndarray, g: int) -> float:
    grand = pts.mean(axis=0)
    total = 0.0
    for j in range(g):
        members = pts[labels == j]
        if members.shape[0]:
            diff = members.mean(axis=0) - grand
            total += members.shape[0] * float(diff @ diff)
    return total


def _scan(data: Dataset, g: int, r: int, objective: str) -> OracleResult:
    n, d = data.n, data.d
    if g < 1 or not (g * d + 1 <= r <= n):
        raise ValueError(f"need g*d+1 <= r <= n, got g={g}, d={d}, r={r}, n={n}")
    total = math.comb(n, r) * g**r
    if total > SCAN_GUARD:
        raise InstanceTooLarge(f"{total} configurations exceed the scan guard {SCAN_GUARD}")

    all_labels = _labelings(g, r)
    best_key = np.inf
    # (key, seq, subset, labels, trace_b) for everything near the optimum
    candidates: list[tuple[float, int, tuple[int, ...], np.ndarray]] = []
    scanned = 0
    seq = 0

    def window(value: float) -> float:
        return TIE_RTOL * max(1.0, abs(value))

    for subset in itertools.combinations(range(n), r):
        pts = data.points[list(subset)]
        for lo in range(0, all_labels.shape[0], _CHUNK):
            chunk = all_labels[lo : lo + _CHUNK]
            key, feasible = _batch_objective(pts, chunk, g, objective)
            scanned += chunk.shape[0]
            key = np.where(feasible, key, np.inf)
            kmin = float(key.min())
            if not math.isfinite(kmin) or kmin > best_key + window(best_key):
                continue
            best_key = min(best_key, kmin)
            near = np.nonzero(key <= best_key + window(best_key))[0]
            for idx in near:
                candidates.append((float(key[idx]), seq, subset, chunk[idx]))
                seq += 1
            candidates = [
                c for c in candidates if c[0] <= best_key + window(best_key)
            ]

    if not math.isfinite(best_key):
        raise NoFeasibleConfiguration(
            "every enumerated configuration had a singular pooled scatter"
        )

    ties = len(candidates)

    def rank(cand):
        _, order, subset, labels = cand
        return (
            _between_trace(data.points[list(subset)], labels, g),
            subset,
            order,
        )

    _, _, subset, labels = min(candidates, key=rank)
    optimum = Configuration(np.array(subset), labels, g)
    if objective == "det":
        cost, log_cost = math.exp(best_key), best_key
    else:
        cost, log_cost = best_key, math.log(best_key)
    return OracleResult(
        optimum=optimum, cost=cost, log_cost=log_cost, scanned=scanned, ties=ties
    )


def enumerate_optimum(data: Dataset, g: int, r: int) -> OracleResult:
    """Global minimum of the pooled-scatter determinant over all
    configurations of r retained observations in g clusters."""
    return _scan(data, g, r, "det")


def impartial_trimming_oracle(data: Dataset, g: int, r: int) -> OracleResult:
    """Same enumeration with the trace objective (trimmed trace criterion),
    provided as a cross-method comparison baseline."""
    return _scan(data, g, r, "trace")
