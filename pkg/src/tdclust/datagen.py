"""Seeded synthetic data: axial normal clusters with planted outliers.

The layout puts 2d cluster centers on the coordinate axes of R^d (one
pair per axis, opposite signs), scaled so that same-axis center pairs sit
at squared Mahalanobis distance 2*chi2_d(alpha) and cross-axis pairs at
chi2_d(alpha), under a shared diagonal covariance.  Contamination is
either shell outliers at exact Mahalanobis radius sqrt(chi2_d(beta)) from
their nearest center, or diffuse draws from N(mu, v*I).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .configuration import Dataset
from .errors import ShellPlacementFailed
from .stats import NormalParams, chi2_quantile, sample_normal, sample_standard_normal

SHELL_TRIES = 1000


@dataclass(frozen=True)
class GeneratorSpec:
    d: int
    clusters: int | None = None  # default 2d
    per_cluster: int = 100
    alpha: float = 0.999
    outlier_mode: str = "shell"  # "shell" | "diffuse" | "none"
    beta: float = 0.999
    diffuse_mu: tuple[float, ...] | None = None
    diffuse_v: float = 16.0
    outlier_count: int | None = None  # default 22d when mode != none
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.per_cluster < 1:
            raise ValueError("per_cluster must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.outlier_mode not in ("shell", "diffuse", "none"):
            raise ValueError("outlier_mode must be shell, diffuse or none")
        if self.outlier_mode == "shell" and not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.outlier_mode == "diffuse" and self.diffuse_v <= 0:
            raise ValueError("diffuse_v must be positive")
        if self.n_clusters > 2 * self.d:
            raise ValueError("at most 2d axial clusters are available")

    @property
    def n_clusters(self) -> int:
        return 2 * self.d if self.clusters is None else self.clusters

    @property
    def n_outliers(self) -> int:
        if self.outlier_mode == "none":
            return 0
        return 22 * self.d if self.outlier_count is None else self.outlier_count

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "clusters": self.n_clusters,
            "per_cluster": self.per_cluster,
            "alpha": self.alpha,
            "outlier_mode": self.outlier_mode,
            "beta": self.beta,
            "diffuse_mu": list(self.diffuse_mu) if self.diffuse_mu else None,
            "diffuse_v": self.diffuse_v,
            "outlier_count": self.n_outliers,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class LabeledDataset:
    """Generated observations plus ground truth for evaluation.

    `true_labels[i]` is 1..g for regular observations, 0 for outliers.
    """

    dataset: Dataset
    true_labels: np.ndarray
    true_params: list[NormalParams]


def covariance_diagonal(d: int) -> np.ndarray:
    """Shared diagonal covariance: a gentle ramp 1.0, 1.2, ... plus one
    dominant last coordinate at 9.0 (the ramp is empty for d = 1)."""
    if d == 1:
        return np.array([9.0])
    return np.append(1.0 + 0.2 * np.arange(d - 1), 9.0)


def make_centers(d: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """The 2d axial cluster centers and the shared diagonal covariance.

    Center 2k and 2k+1 (0-based) sit on axis k at -/+ sqrt(V_kk *
    chi2_d(alpha) / 2), making same-axis squared Mahalanobis separation
    2*chi2_d(alpha) and cross-axis separation chi2_d(alpha).
    """
    diag = covariance_diagonal(d)
    quantile = chi2_quantile(d, alpha)
    centers = np.zeros((2 * d, d))
    for axis in range(d):
        radius = np.sqrt(diag[axis] * quantile / 2.0)
        centers[2 * axis, axis] = -radius
        centers[2 * axis + 1, axis] = radius
    return centers, np.diag(diag)


def sample_regular(
    spec: GeneratorSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, list[NormalParams]]:
    """Regular observations: per_cluster draws from each cluster law."""
    centers, cov = make_centers(spec.d, spec.alpha)
    centers = centers[: spec.n_clusters]
    factor = np.diag(np.sqrt(np.diag(cov)))
    blocks = []
    labels = []
    for j in range(spec.n_clusters):
        blocks.append(sample_normal(rng, centers[j], factor, spec.per_cluster))
        labels.extend([j + 1] * spec.per_cluster)
    params = [NormalParams.from_arrays(centers[j], cov) for j in range(spec.n_clusters)]
    return np.vstack(blocks), np.array(labels, dtype=np.int64), params


def sample_shell_outliers(
    spec: GeneratorSpec,
    centers: np.ndarray,
    cov: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Outliers on Mahalanobis shells around the centers.

    Each outlier is assigned a center round-robin and placed at exact
    squared Mahalanobis radius chi2_d(beta) in a uniformly random shell
    direction, resampled until the assigned center is the nearest one.
    """
    d = spec.d
    count = spec.n_outliers
    radius = np.sqrt(chi2_quantile(d, spec.beta))
    factor = np.diag(np.sqrt(np.diag(cov)))
    inv_sqrt = np.diag(1.0 / np.sqrt(np.diag(cov)))
    out = np.empty((count, d))
    n_centers = centers.shape[0]
    for k in range(count):
        j = k % n_centers
        for _ in range(SHELL_TRIES):
            z = sample_standard_normal(rng, d)
            norm = np.linalg.norm(z)
            if norm == 0.0:
                continue
            point = centers[j] + radius * (factor @ (z / norm))
            whitened = (point - centers) @ inv_sqrt
            nearest = int(np.argmin(np.einsum("cd,cd->c", whitened, whitened)))
            if nearest == j:
                out[k] = point
                break
        else:
            raise ShellPlacementFailed(
                f"no placement near center {j} after {SHELL_TRIES} tries"
            )
    return out


def sample_diffuse_outliers(
    mu: np.ndarray, v: float, count: int, rng: np.random.Generator
) -> np.ndarray:
    """count i.i.d. draws from N(mu, v * I)."""
    mu = np.asarray(mu, dtype=np.float64)
    return mu + np.sqrt(v) * sample_standard_normal(rng, (count, mu.shape[0]))


def generate(spec: GeneratorSpec) -> LabeledDataset:
    """Full generation pipeline for one spec: regulars plus outliers."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    regular, labels, params = sample_regular(spec, rng)
    parts = [regular]
    label_parts = [labels]
    if spec.n_outliers > 0:
        centers, cov = make_centers(spec.d, spec.alpha)
        centers = centers[: spec.n_clusters]
        if spec.outlier_mode == "shell":
            outliers = sample_shell_outliers(spec, centers, cov, rng)
        else:
            mu = (
                np.zeros(spec.d)
                if spec.diffuse_mu is None
                else np.asarray(spec.diffuse_mu, dtype=np.float64)
            )
            outliers = sample_diffuse_outliers(mu, spec.diffuse_v, spec.n_outliers, rng)
        parts.append(outliers)
        label_parts.append(np.zeros(spec.n_outliers, dtype=np.int64))
    return LabeledDataset(
        dataset=Dataset(np.vstack(parts)),
        true_labels=np.concatenate(label_parts),
        true_params=params,
    )


def truth_payload(labeled: LabeledDataset, spec: GeneratorSpec) -> dict:
    """JSON-ready ground-truth sidecar (1-based observation order)."""
    return {
        "spec": spec.to_dict(),
        "n": labeled.dataset.n,
        "d": labeled.dataset.d,
        "true_labels": labeled.true_labels.tolist(),
        "true_params": [
            {"mean": p.mean.tolist(), "cov": p.cov.entries.tolist()}
            for p in labeled.true_params
        ],
    }


def write_truth(labeled: LabeledDataset, spec: GeneratorSpec, path, manifest=None) -> None:
    payload = truth_payload(labeled, spec)
    if manifest is not None:
        payload["manifest"] = manifest
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
