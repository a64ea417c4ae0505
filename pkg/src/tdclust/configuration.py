"""Observations, configurations and the trimmed determinant cost.

A configuration is a retained subset of r observation indices plus a
cluster label in 0..g-1 for each retained index (clusters may be empty).
The cost of a configuration is the determinant of its pooled within-group
scatter matrix; minimizing it over all configurations is the criterion the
whole package revolves around.

Indices are 0-based throughout the Python API.  CSV row order defines the
observations; JSON surfaces emitted by the CLI convert to 1-based.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import psd_linalg
from .errors import (
    CsvParseError,
    DimensionMismatch,
    InstanceTooLarge,
    NotPositiveDefinite,
    SingularSsp,
)

# Exhaustive general-position checks stop at this many candidate subsets.
_GP_EXHAUSTIVE_CAP = 2_000_000
_GP_SAMPLES = 2000
GP_VOLUME_RTOL = 1e-9


class Dataset:
    """Immutable table of n observations in R^d."""

    __slots__ = ("points",)

    def __init__(self, points: np.ndarray):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2:
            raise DimensionMismatch(f"expected an (n, d) array, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("need at least one observation and one coordinate")
        if not np.all(np.isfinite(pts)):
            raise ValueError("observations contain non-finite coordinates")
        pts.setflags(write=False)
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def grand_mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def __repr__(self):  # pragma: no cover
        return f"Dataset(n={self.n}, d={self.d})"


class Configuration:
    """A retained index subset with a cluster label per retained index.

    `indices` is strictly increasing; `labels[k]` is the cluster (0-based)
    of observation `indices[k]`.  Clusters may be empty.
    """

    __slots__ = ("indices", "labels", "g")

    def __init__(self, indices, labels, g: int):
        idx = np.asarray(indices, dtype=np.int64)
        lab = np.asarray(labels, dtype=np.int64)
        if idx.ndim != 1 or lab.shape != idx.shape:
            raise DimensionMismatch("indices and labels must be 1-d and aligned")
        if idx.size == 0:
            raise ValueError("a configuration retains at least one observation")
        if idx[0] < 0:
            raise ValueError("indices must be nonnegative")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("retained indices must be strictly increasing")
        if g < 1 or lab.min() < 0 or lab.max() >= g:
            raise ValueError(f"labels must lie in 0..{g - 1}")
        idx.setflags(write=False)
        lab.setflags(write=False)
        self.indices = idx
        self.labels = lab
        self.g = g

    @property
    def r(self) -> int:
        return self.indices.size

    def key(self) -> bytes:
        return self.indices.tobytes() + self.labels.tobytes()

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.g).astype(np.int64)

    def members(self, j: int) -> np.ndarray:
        return self.indices[self.labels == j]

    def discarded(self, n: int) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        mask[self.indices] = False
        return np.nonzero(mask)[0]

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.g == other.g
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((self.g, self.key()))

    def __repr__(self):  # pragma: no cover
        return f"Configuration(r={self.r}, g={self.g})"


@dataclass(frozen=True)
class PooledStats:
    """Cluster means, sizes and the pooled scatter matrix of a configuration.

    Means of empty clusters are the supplied carried means; `empty` flags
    them.  `pooled_ssp` is the sum over clusters of centered outer products
    (two-pass, never the moment formula, to survive coordinates up to 1e6).
    """

    means: np.ndarray  # (g, d); sample mean or carried mean
    sizes: np.ndarray  # (g,)
    empty: np.ndarray  # (g,) bool
    pooled_ssp: psd_linalg.SpdMatrix
    carried: np.ndarray  # (g, d) carried means supplied by the caller

    @property
    def r(self) -> int:
        return int(self.sizes.sum())

    @property
    def log_det(self) -> float:
        return self.pooled_ssp.log_det


def pooled_stats(
    data: Dataset, cfg: Configuration, carried_means: np.ndarray | None = None
) -> PooledStats:
    """Compute cluster means and the pooled scatter matrix of `cfg`.

    `carried_means` supplies the mean reported for empty clusters (one row
    per cluster).  When omitted, the grand mean of the dataset is used.
    Raises SingularSsp when the pooled matrix fails factorization.
    """
    g, d = cfg.g, data.d
    if cfg.indices[-1] >= data.n:
        raise DimensionMismatch("configuration refers to indices beyond the dataset")
    if carried_means is None:
        carried = np.tile(data.grand_mean(), (g, 1))
    else:
        carried = np.array(carried_means, dtype=np.float64)
        if carried.shape != (g, d):
            raise DimensionMismatch(
                f"carried means must have shape ({g}, {d}), got {carried.shape}"
            )

    pts = data.points[cfg.indices]
    sizes = np.bincount(cfg.labels, minlength=g).astype(np.int64)
    sums = np.zeros((g, d))
    for k in range(d):
        sums[:, k] = np.bincount(cfg.labels, weights=pts[:, k], minlength=g)
    empty = sizes == 0
    means = np.where(empty[:, None], carried, sums / np.maximum(sizes, 1)[:, None])

    centered = pts - means[cfg.labels]
    w = centered.T @ centered
    try:
        ssp = psd_linalg.factorize(w)
    except NotPositiveDefinite as exc:
        raise SingularSsp(f"pooled scatter matrix is singular: {exc}", cfg) from exc
    return PooledStats(means=means, sizes=sizes, empty=empty, pooled_ssp=ssp, carried=carried)


@dataclass(frozen=True)
class TdcCost:
    """Determinant cost of a configuration plus the ML parameter estimates."""

    det: float
    log_det: float
    mle_means: np.ndarray  # cluster means (carried for empty clusters)
    mle_cov: np.ndarray  # pooled scatter / r


def tdc_cost(stats: PooledStats) -> TdcCost:
    """det of the pooled scatter matrix and the derived ML estimates."""
    return TdcCost(
        det=psd_linalg.det_spd(stats.pooled_ssp),
        log_det=stats.pooled_ssp.log_det,
        mle_means=stats.means,
        mle_cov=stats.pooled_ssp.entries / stats.r,
    )


def parallelepiped_volume(points: np.ndarray) -> float:
    """Volume of the parallelepiped spanned by d+1 points in R^d.

    |det(x_1 - x_0, ..., x_d - x_0)|; the scatter matrix of the d+1 points
    has determinant volume^2 / (d+1).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] != pts.shape[1] + 1:
        raise DimensionMismatch(f"expected (d+1, d) points, got shape {pts.shape}")
    return float(abs(np.linalg.det(pts[1:] - pts[0])))


def _coordinate_scale(points: np.ndarray) -> float:
    spread = float((points.max(axis=0) - points.min(axis=0)).max())
    return spread if spread > 0 else 1.0


def check_general_position(
    data: Dataset, exhaustive: bool | None = None, seed: int = 0
) -> list[tuple[int, ...]]:
    """Find (d+1)-subsets that are affinely dependent.

    A subset violates general position when its parallelepiped volume is
    at most 1e-9 * scale^d (scale = largest coordinate spread).  Exhaustive
    enumeration runs when feasible (n <= 25 or d <= 3, subject to a hard
    subset cap); otherwise a seeded random spot check is performed.
    Passing exhaustive=True demands full enumeration and raises
    InstanceTooLarge beyond the cap; exhaustive=False forces sampling.
    """
    n, d = data.n, data.d
    pts = data.points
    tol = GP_VOLUME_RTOL * _coordinate_scale(pts) ** d

    if d == 1:
        order = np.argsort(pts[:, 0], kind="stable")
        vals = pts[order, 0]
        dup = np.nonzero(np.abs(np.diff(vals)) <= tol)[0]
        return [tuple(sorted((int(order[k]), int(order[k + 1])))) for k in dup]

    n_subsets = math.comb(n, d + 1)
    feasible = (n <= 25 or d <= 3) and n_subsets <= _GP_EXHAUSTIVE_CAP
    if exhaustive is True and not feasible:
        raise InstanceTooLarge(
            f"{n_subsets} subsets of size {d + 1} exceed the exhaustive-check cap"
        )
    run_exhaustive = feasible if exhaustive is None else exhaustive

    violations: list[tuple[int, ...]] = []
    if run_exhaustive:
        for subset in itertools.combinations(range(n), d + 1):
            if parallelepiped_volume(pts[list(subset)]) <= tol:
                violations.append(subset)
        return violations

    rng = np.random.default_rng(seed)
    seen = set()
    for _ in range(_GP_SAMPLES):
        subset = tuple(sorted(rng.choice(n, size=d + 1, replace=False).tolist()))
        if subset in seen:
            continue
        seen.add(subset)
        if parallelepiped_volume(pts[list(subset)]) <= tol:
            violations.append(subset)
    return violations


def load_csv(path) -> Dataset:
    """Read observations from CSV: one row per observation, d numeric
    columns, comma-delimited, optional single header row (auto-detected
    by a non-numeric first row).  Row order defines the indices.
    """
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        width = None
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                if lineno == 1 and not rows:
                    continue  # header row
                raise CsvParseError(
                    f"row {lineno}: could not parse numeric values ({exc})", row=lineno
                ) from exc
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise CsvParseError(
                    f"row {lineno}: expected {width} columns, got {len(values)}",
                    row=lineno,
                )
            rows.append(values)
    if not rows:
        raise CsvParseError("no data rows found", row=None)
    return Dataset(np.array(rows, dtype=np.float64))


def save_csv(data: Dataset, path, header: bool = True) -> None:
    """Write observations in the same CSV dialect `load_csv` reads."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow([f"x{k + 1}" for k in range(data.d)])
        for row in data.points:
            writer.writerow([f"{v:.17g}" for v in row])
