"""Synthetic benchmarks: spherical Gaussian mixtures plus noisy pairwise
annotations from a simulated expert of accuracy p.

All generation is driven by numpy's default PCG64 generator seeded from the
spec seeds.  Draw orders are fixed and documented per function so outputs
are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AnnotationGraphs, ContractViolation, Dataset

# Generation-time floor on sampled variances; keeps zero-variance settings
# usable (samples land within ~1e-3 of their means).
_VARIANCE_FLOOR = 1.0e-8


@dataclass(frozen=True)
class MixtureSpec:
    """Parameters of a synthetic spherical-Gaussian mixture draw."""

    n_samples: int
    n_features: int
    n_clusters: int
    mean_range: tuple[float, float] = (-1.0, 1.0)
    variance_range: tuple[float, float] = (0.0, 5.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.n_samples < self.n_clusters:
            raise ContractViolation("need n_samples >= n_clusters >= 1")
        if self.n_features < 1:
            raise ContractViolation("n_features must be positive")
        for lo, hi in (self.mean_range, self.variance_range):
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise ContractViolation("ranges must be finite with hi >= lo")
        if self.variance_range[0] < 0.0:
            raise ContractViolation("variances cannot be negative")


@dataclass(frozen=True)
class ExpertSpec:
    """Annotation volume and accuracy of the simulated expert."""

    accuracy: float
    n_annotations: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not np.isfinite(self.accuracy) or not 0.0 <= self.accuracy <= 1.0:
            raise ContractViolation("accuracy must lie in [0, 1]")
        if self.n_annotations < 0:
            raise ContractViolation("n_annotations must be >= 0")


@dataclass(eq=False)
class GroundTruth:
    """Generative labels and parameters behind a synthetic dataset."""

    labels: np.ndarray
    true_means: np.ndarray
    true_variances: np.ndarray


def generate_mixture(spec: MixtureSpec) -> tuple[Dataset, GroundTruth]:
    """Draw a mixture and a dataset from it.

    Draw order (one generator seeded with spec.seed): means as a (K, D)
    uniform block over mean_range, then K uniform variances over
    variance_range (floored at 1e-8), then N uniform labels, then an
    (N, D) standard-normal block scaled and shifted per label.
    """
    rng = np.random.default_rng(spec.seed)
    k, d, n = spec.n_clusters, spec.n_features, spec.n_samples
    means = rng.uniform(spec.mean_range[0], spec.mean_range[1], size=(k, d))
    variances = rng.uniform(spec.variance_range[0], spec.variance_range[1], size=k)
    variances = np.maximum(variances, _VARIANCE_FLOOR)
    labels = rng.integers(0, k, size=n)
    noise = rng.standard_normal((n, d))
    samples = means[labels] + np.sqrt(variances)[labels, None] * noise
    truth = GroundTruth(labels.astype(np.int64), means, variances)
    return Dataset(samples), truth


def _must_link_matrix(matrix, n_clusters: int) -> np.ndarray:
    p = np.asarray(matrix, dtype=np.float64)
    if p.shape != (n_clusters, n_clusters):
        raise ContractViolation("must-link probability matrix must be K x K")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ContractViolation("must-link probabilities must lie in [0, 1]")
    if not np.array_equal(p, p.T):
        raise ContractViolation("must-link probability matrix must be symmetric")
    return p


def generate_annotation_draws(truth: GroundTruth, spec: ExpertSpec,
                              must_link_probs=None) -> np.ndarray:
    """Raw annotation draws as an (m, 3) array of (i, j, t), t in {1, -1}.

    Pairs are unordered, i != j, drawn uniformly with replacement: first all
    i ~ integers(N), then all j ~ integers(N-1) with j incremented past i,
    then all expert coin flips.  A within-cluster pair is labeled must-link
    (t = 1) with probability p, a between-cluster pair with probability
    1 - p.  must_link_probs generalizes this to an arbitrary symmetric K x K
    matrix of per-cluster-pair must-link probabilities; the scalar setting
    equals a matrix with p on the diagonal and 1 - p elsewhere.
    """
    n = truth.labels.shape[0]
    m = spec.n_annotations
    if m > 0 and n < 2:
        raise ContractViolation("need at least two samples to annotate")
    if m == 0:
        return np.zeros((0, 3), dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    i = rng.integers(0, n, size=m)
    j = rng.integers(0, n - 1, size=m)
    j = j + (j >= i)
    if must_link_probs is None:
        same = truth.labels[i] == truth.labels[j]
        p_must = np.where(same, spec.accuracy, 1.0 - spec.accuracy)
    else:
        probs = _must_link_matrix(must_link_probs, truth.true_means.shape[0])
        p_must = probs[truth.labels[i], truth.labels[j]]
    t = np.where(rng.random(m) < p_must, 1, -1)
    return np.column_stack((i, j, t)).astype(np.int64)


def generate_annotations(truth: GroundTruth, spec: ExpertSpec,
                         must_link_probs=None) -> AnnotationGraphs:
    """Annotation graphs built from generate_annotation_draws."""
    draws = generate_annotation_draws(truth, spec, must_link_probs)
    return graphs_from_draws(truth.labels.shape[0], draws)


def graphs_from_draws(n_samples: int, draws: np.ndarray) -> AnnotationGraphs:
    draws = np.asarray(draws, dtype=np.int64).reshape(-1, 3)
    must = [(int(i), int(j), 1) for i, j, t in draws if t == 1]
    cannot = [(int(i), int(j), 1) for i, j, t in draws if t == -1]
    return AnnotationGraphs(n_samples, must, cannot)
