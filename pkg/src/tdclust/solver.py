"""Local-search minimization of the trimmed determinant criterion.

The basic move is the reduction step: score every observation against every
cluster by squared Mahalanobis distance under the current pooled scatter
metric, reassign each to its nearest cluster, keep the r best-scoring
observations.  The pooled determinant never increases under this move, so
iterating it converges; multistart over random initial configurations
approximates the global minimum.

All determinant bookkeeping runs in log space.  Tie-breaking is fully
deterministic: nearest-cluster ties go to the smallest cluster index, the
retention sort is stable by observation index, and equal-cost results are
ranked by between-groups scatter trace, then by the lexicographically
smallest retained index set.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernel, psd_linalg
from .configuration import Configuration, Dataset, PooledStats, pooled_stats, tdc_cost
from .errors import AllStartsFailed, InitFailed, NotAFixedPoint, SingularSsp

# Consecutive non-improving starts before multistart stops early.
EARLY_STOP_PATIENCE = 200

_INIT_B_ATTEMPTS = 100
_INIT_A_LABEL_ATTEMPTS = 10_000
CERT_SLACK = 1e-9


class DescentMonitor:
    """Global tally of reduction steps and descent violations.

    Every iterate() records each step here, so the test suite can assert
    that the pooled determinant never increased anywhere.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.steps = 0
        self.violations = 0

    def record(self, steps: int, violations: int) -> None:
        with self._lock:
            self.steps += steps
            self.violations += violations


DESCENT_MONITOR = DescentMonitor()


@dataclass(frozen=True)
class SolverSettings:
    g: int
    r: int
    starts: int = 2000
    max_iters: int = 200
    seed: int = 0
    init_method: str = "a"
    log_det_tol: float = 1e-12

    def validate(self, data: Dataset) -> None:
        if self.g < 1:
            raise ValueError("g must be >= 1")
        if not (self.g * data.d + 1 <= self.r <= data.n):
            raise ValueError(
                f"need g*d+1 <= r <= n, got g={self.g}, d={data.d}, "
                f"r={self.r}, n={data.n}"
            )
        if self.starts < 1:
            raise ValueError("starts must be >= 1")
        if self.init_method not in ("a", "b"):
            raise ValueError("init_method must be 'a' or 'b'")


@dataclass(frozen=True)
class StartRecord:
    start: int
    iterations: int
    log_det: float
    converged: bool


@dataclass(frozen=True)
class PairCheck:
    pair: tuple[int, int]
    margin: float
    midpoint: np.ndarray


@dataclass(frozen=True)
class SeparationCertificate:
    """Geometric separation checks for a fixed-point configuration.

    Each nonempty cluster must be separated from the discarded observations
    by a Mahalanobis ellipsoid, and every nonempty cluster pair by the
    bisecting hyperplane of their means under the pooled metric.
    """

    ellipsoid_ok: bool
    ellipsoid_margin: float
    hyperplane_ok: bool
    hyperplane_margin: float
    pair_checks: tuple[PairCheck, ...]

    @property
    def ok(self) -> bool:
        return self.ellipsoid_ok and self.hyperplane_ok


@dataclass(frozen=True)
class SolveReport:
    best: Configuration
    log_det: float
    det: float
    mle_means: np.ndarray
    mle_cov: np.ndarray
    mixing: np.ndarray
    per_start: tuple[StartRecord, ...]
    certificate: SeparationCertificate | None
    certificate_error: str | None = None


@dataclass
class IterateResult:
    config: Configuration
    stats: PooledStats
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def reduction_step(data: Dataset, stats: PooledStats, g: int, r: int) -> Configuration:
    """One descent move against the metric and means of `stats`.

    Assign every observation to its nearest cluster (smallest index on
    ties), order by distance to that cluster (stable by observation index)
    and retain the first r.  The pooled determinant of the result never
    exceeds that of `stats`.
    """
    dmin, jmin = _kernel.distance_argmin(
        data.points, np.ascontiguousarray(stats.means), stats.pooled_ssp.factor
    )
    order = np.argsort(dmin, kind="stable")
    keep = np.sort(order[:r])
    return Configuration(keep, jmin[keep], g)


def iterate(
    data: Dataset,
    init: Configuration,
    settings: SolverSettings,
    carried0: np.ndarray | None = None,
) -> IterateResult:
    """Apply reduction steps from `init` until the configuration repeats.

    Carried means for empty clusters come from the previous iterate
    (initially the grand mean, or `carried0`).  Stops at the first repeat
    of any previously seen configuration, which covers both fixed points
    and exchange cycles among equal-cost optima; `max_iters` caps the run
    (reported via converged=False, not fatal).
    """
    stats = pooled_stats(data, init, carried0)
    trace = [stats.log_det]
    seen = {init.key()}
    cfg = init
    steps = violations = 0
    converged = False
    try:
        for _ in range(settings.max_iters):
            new_cfg = reduction_step(data, stats, settings.g, settings.r)
            new_stats = pooled_stats(data, new_cfg, carried_means=stats.means)
            steps += 1
            if new_stats.log_det > trace[-1] + settings.log_det_tol * max(
                1.0, abs(trace[-1])
            ):
                violations += 1
            trace.append(new_stats.log_det)
            cfg, stats = new_cfg, new_stats
            if new_cfg.key() in seen:
                converged = True
                break
            seen.add(new_cfg.key())
    finally:
        DESCENT_MONITOR.record(steps, violations)
    return IterateResult(
        config=cfg, stats=stats, trace=trace, iterations=steps, converged=converged
    )


def init_random_a(data: Dataset, settings: SolverSettings, rng: np.random.Generator) -> Configuration:
    """Uniform random r-subset with random labels, every cluster nonempty.

    Labelings are rejection-sampled until all g labels occur; the forced
    bijection is used directly when r == g.  (A constructive fallback kicks
    in if rejection stalls, which only happens for r barely above a large
    g, outside the intended operating range.)
    """
    g, r = settings.g, settings.r
    indices = np.sort(rng.choice(data.n, size=r, replace=False))
    if g == r:
        labels = rng.permutation(g)
    else:
        labels = None
        for _ in range(_INIT_A_LABEL_ATTEMPTS):
            cand = rng.integers(0, g, size=r)
            if np.bincount(cand, minlength=g).min() > 0:
                labels = cand
                break
        if labels is None:
            labels = rng.integers(0, g, size=r)
            pos = rng.choice(r, size=g, replace=False)
            labels[pos] = rng.permutation(g)
    return Configuration(indices, labels, g)


def init_random_b(data: Dataset, settings: SolverSettings, rng: np.random.Generator) -> Configuration:
    """Seed-subset initialization: draw g*d+1 points, partition them at
    random, then expand to a full r-configuration with one reduction step.

    Singular seed scatters are redrawn (up to a fixed attempt budget).
    """
    g, d = settings.g, data.d
    seed_size = g * d + 1
    if data.n < seed_size:
        raise InitFailed(f"need at least {seed_size} observations, have {data.n}")
    carried = np.tile(data.grand_mean(), (g, 1))
    for _ in range(_INIT_B_ATTEMPTS):
        indices = np.sort(rng.choice(data.n, size=seed_size, replace=False))
        labels = rng.integers(0, g, size=seed_size)
        seed_cfg = Configuration(indices, labels, g)
        try:
            stats = pooled_stats(data, seed_cfg, carried)
        except SingularSsp:
            continue
        return reduction_step(data, stats, g, settings.r)
    raise InitFailed(f"no nonsingular seed subset found in {_INIT_B_ATTEMPTS} draws")


def _make_init(data, settings, rng) -> Configuration:
    if settings.init_method == "b":
        return init_random_b(data, settings, rng)
    return init_random_a(data, settings, rng)


def between_groups_trace(data: Dataset, cfg: Configuration) -> float:
    """Trace of the between-groups scatter of the retained observations."""
    pts = data.points[cfg.indices]
    grand = pts.mean(axis=0)
    total = 0.0
    for j in range(cfg.g):
        members = pts[cfg.labels == j]
        if members.shape[0] == 0:
            continue
        diff = members.mean(axis=0) - grand
        total += members.shape[0] * float(diff @ diff)
    return total


@dataclass
class _Candidate:
    start: int
    result: IterateResult
    trace_b: float | None = None


def _better(data: Dataset, cand: _Candidate, incumbent: _Candidate, tol: float) -> bool:
    a, b = cand.result.stats.log_det, incumbent.result.stats.log_det
    window = tol * max(1.0, abs(b))
    if a < b - window:
        return True
    if a > b + window:
        return False
    # Cost tie: smaller between-groups trace, then smallest retained set.
    if cand.trace_b is None:
        cand.trace_b = between_groups_trace(data, cand.result.config)
    if incumbent.trace_b is None:
        incumbent.trace_b = between_groups_trace(data, incumbent.result.config)
    if cand.trace_b < incumbent.trace_b - 1e-12 * max(1.0, incumbent.trace_b):
        return True
    if cand.trace_b > incumbent.trace_b + 1e-12 * max(1.0, incumbent.trace_b):
        return False
    ia = tuple(cand.result.config.indices.tolist())
    ib = tuple(incumbent.result.config.indices.tolist())
    return ia < ib


def multistart(data: Dataset, settings: SolverSettings, threads: int = 1) -> SolveReport:
    """Best-of-many iterate() runs from seeded random initializations.

    Per-start RNG streams are spawned from the settings seed, so the
    outcome is a pure function of (data, settings) regardless of thread
    scheduling.  Stops early once EARLY_STOP_PATIENCE consecutive starts
    fail to improve the incumbent.
    """
    settings.validate(data)
    children = np.random.SeedSequence(settings.seed).spawn(settings.starts)

    def run_start(k: int):
        rng = np.random.default_rng(children[k])
        try:
            init = _make_init(data, settings, rng)
            return _Candidate(start=k, result=iterate(data, init, settings))
        except (SingularSsp, InitFailed) as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_start, range(settings.starts)))
    else:
        outcomes = None  # computed lazily below

    incumbent: _Candidate | None = None
    per_start: list[StartRecord] = []
    failures = 0
    since_improvement = 0
    for k in range(settings.starts):
        outcome = outcomes[k] if outcomes is not None else run_start(k)
        if isinstance(outcome, Exception):
            failures += 1
            if incumbent is not None:
                since_improvement += 1
        else:
            res = outcome.result
            per_start.append(
                StartRecord(
                    start=k,
                    iterations=res.iterations,
                    log_det=res.stats.log_det,
                    converged=res.converged,
                )
            )
            if incumbent is None or _better(data, outcome, incumbent, settings.log_det_tol):
                improved = incumbent is None or (
                    res.stats.log_det
                    < incumbent.result.stats.log_det
                    - settings.log_det_tol
                    * max(1.0, abs(incumbent.result.stats.log_det))
                )
                incumbent = outcome
                since_improvement = 0 if improved else since_improvement + 1
            else:
                since_improvement += 1
        if since_improvement >= EARLY_STOP_PATIENCE:
            break

    if incumbent is None:
        raise AllStartsFailed(f"all {settings.starts} starts failed ({failures} errors)")

    best = incumbent.result
    cost = tdc_cost(best.stats)
    certificate = None
    certificate_error = None
    try:
        certificate = separation_certificate(
            data, best.config, log_det_tol=settings.log_det_tol, stats=best.stats
        )
    except (NotAFixedPoint, SingularSsp) as exc:
        certificate_error = str(exc)
    return SolveReport(
        best=best.config,
        log_det=cost.log_det,
        det=cost.det,
        mle_means=cost.mle_means,
        mle_cov=cost.mle_cov,
        mixing=best.stats.sizes / data.n,
        per_start=tuple(per_start),
        certificate=certificate,
        certificate_error=certificate_error,
    )


def separation_certificate(
    data: Dataset,
    cfg: Configuration,
    log_det_tol: float = 1e-12,
    stats: PooledStats | None = None,
) -> SeparationCertificate:
    """Verify the separation geometry of a fixed-point configuration.

    Ellipsoid check: for each nonempty cluster j with radius-squared
    K_j = max over members of their squared distance to j, every discarded
    observation must be at distance >= K_j (within slack).  Hyperplane
    check: for each ordered nonempty pair (j, l), every member of j lies on
    the nonnegative side of the bisecting linear form of the two means
    under the pooled metric.  Raises NotAFixedPoint when one further
    reduction step changes the pooled log-determinant.
    """
    if stats is None:
        stats = pooled_stats(data, cfg)
    next_cfg = reduction_step(data, stats, cfg.g, cfg.r)
    next_stats = pooled_stats(data, next_cfg, carried_means=stats.means)
    if abs(next_stats.log_det - stats.log_det) > log_det_tol * max(
        1.0, abs(stats.log_det)
    ):
        raise NotAFixedPoint(
            f"a reduction step moves log-det from {stats.log_det:.15g} "
            f"to {next_stats.log_det:.15g}"
        )

    dists = _kernel.distance_matrix(
        data.points, np.ascontiguousarray(stats.means), stats.pooled_ssp.factor
    )
    discarded = cfg.discarded(data.n)
    nonempty = [j for j in range(cfg.g) if not stats.empty[j]]

    ellipsoid_margin = np.inf
    for j in nonempty:
        members = cfg.indices[cfg.labels == j]
        k_j = float(dists[members, j].max())
        if discarded.size:
            margin = float(dists[discarded, j].min()) - k_j
            ellipsoid_margin = min(ellipsoid_margin, margin)

    pair_checks: list[PairCheck] = []
    hyperplane_margin = np.inf
    for j in nonempty:
        members_j = cfg.indices[cfg.labels == j]
        for l in nonempty:
            if l == j:
                continue
            delta = stats.means[j] - stats.means[l]
            winv_delta = psd_linalg.solve_spd(stats.pooled_ssp, delta)
            midpoint = (stats.means[j] + stats.means[l]) / 2.0
            h = 2.0 * (data.points[members_j] - midpoint) @ winv_delta
            margin = float(h.min())
            hyperplane_margin = min(hyperplane_margin, margin)
            pair_checks.append(PairCheck(pair=(j, l), margin=margin, midpoint=midpoint))

    return SeparationCertificate(
        ellipsoid_ok=bool(ellipsoid_margin >= -CERT_SLACK),
        ellipsoid_margin=float(ellipsoid_margin),
        hyperplane_ok=bool(hyperplane_margin >= -CERT_SLACK),
        hyperplane_margin=float(hyperplane_margin),
        pair_checks=tuple(pair_checks),
    )
