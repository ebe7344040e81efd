"""Evaluation metrics: NMI, matched mixture KL divergence, Centroid Index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractViolation
from .matching import min_cost_matching


@dataclass(eq=False)
class ContingencyTable:
    """Co-occurrence counts between two labelings, with marginals."""

    table: np.ndarray
    row_marginals: np.ndarray
    col_marginals: np.ndarray
    total: int

    @classmethod
    def from_labels(cls, labels_a, labels_b) -> "ContingencyTable":
        a = np.asarray(labels_a).ravel()
        b = np.asarray(labels_b).ravel()
        if a.shape[0] != b.shape[0]:
            raise ContractViolation("labelings differ in length")
        if a.shape[0] == 0:
            raise ContractViolation("labelings must be non-empty")
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
        table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
        np.add.at(table, (ia, ib), 1)
        return cls(table, table.sum(axis=1), table.sum(axis=0), int(a.shape[0]))


def _entropy(marginals: np.ndarray, total: int) -> float:
    p = marginals[marginals > 0] / total
    return float(-(p * np.log(p)).sum())


def nmi(labels_a, labels_b) -> float:
    """Normalized mutual information, symmetric-uncertainty form.

    NMI = 2 I(U;V) / (H(U) + H(V)) with natural logarithms.  Two constant
    labelings have zero entropy and describe the same one-block partition,
    so they score 1; if either (but not both) is constant, I = 0 and the
    score is 0 by convention.
    """
    ct = ContingencyTable.from_labels(labels_a, labels_b)
    h_u = _entropy(ct.row_marginals, ct.total)
    h_v = _entropy(ct.col_marginals, ct.total)
    if h_u + h_v == 0.0:
        return 1.0
    n = ct.total
    nz = ct.table > 0
    joint = ct.table[nz] / n
    outer = np.outer(ct.row_marginals, ct.col_marginals)[nz] / (n * n)
    info = float((joint * np.log(joint / outer)).sum())
    if info <= 0.0:
        return 0.0
    return min(2.0 * info / (h_u + h_v), 1.0)


def kl_spherical_gaussian(mu1, var1, mu2, var2, n_features: int | None = None) -> float:
    """KL(N(mu1, var1 I) || N(mu2, var2 I)) for spherical Gaussians.

    Equals D log(s2/s1) + (D var1 + ||mu1 - mu2||^2) / (2 var2) - D/2.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    if mu1.shape != mu2.shape or mu1.ndim != 1:
        raise ContractViolation("means must be 1-D and share a shape")
    d = mu1.shape[0] if n_features is None else int(n_features)
    if d != mu1.shape[0]:
        raise ContractViolation("n_features disagrees with the mean vectors")
    v1, v2 = float(var1), float(var2)
    if not (np.isfinite(v1) and np.isfinite(v2)) or v1 <= 0.0 or v2 <= 0.0:
        raise ContractViolation("variances must be finite and positive")
    dist2 = float(((mu1 - mu2) ** 2).sum())
    return 0.5 * d * np.log(v2 / v1) + (d * v1 + dist2) / (2.0 * v2) - 0.5 * d


def _check_mixture(mix, name: str):
    means, variances, weights = mix
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if means.ndim != 2:
        raise ContractViolation(f"{name}: means must be K x D")
    k = means.shape[0]
    if variances.shape != (k,) or weights.shape != (k,):
        raise ContractViolation(f"{name}: component count mismatch")
    if np.any(variances <= 0.0):
        raise ContractViolation(f"{name}: variances must be positive")
    if np.any(weights <= 0.0) or abs(float(weights.sum()) - 1.0) > 1.0e-6:
        raise ContractViolation(f"{name}: weights must be positive and sum to 1")
    return means, variances, weights


def kl_mixtures_matched(mixture_a, mixture_b) -> float:
    """Matching-based KL between two mixtures of spherical Gaussians.

    Components are paired by a minimum-cost matching over
    c_rs = KL(a_r || b_s) + log(w_r / w'_s); the result is
    sum_r w_r c[r, pi(r)].  With uniform weights the log terms vanish.
    """
    means_a, vars_a, w_a = _check_mixture(mixture_a, "mixture_a")
    means_b, vars_b, w_b = _check_mixture(mixture_b, "mixture_b")
    if means_a.shape[0] != means_b.shape[0]:
        raise ContractViolation("mixtures must have the same component count")
    if means_a.shape[1] != means_b.shape[1]:
        raise ContractViolation("mixtures must share the feature dimension")
    k = means_a.shape[0]
    costs = np.empty((k, k))
    for r in range(k):
        for s in range(k):
            costs[r, s] = (kl_spherical_gaussian(means_a[r], vars_a[r],
                                                 means_b[s], vars_b[s])
                           + np.log(w_a[r] / w_b[s]))
    perm, _ = min_cost_matching(costs)
    return float((w_a * costs[np.arange(k), perm]).sum())


def _nearest_map(centers_a: np.ndarray, centers_b: np.ndarray) -> np.ndarray:
    d2 = ((centers_a[:, None, :] - centers_b[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def centroid_index(centers_a, centers_b) -> int:
    """Number of structurally misplaced centers between two center sets.

    Each center maps to its nearest counterpart (squared Euclidean, ties to
    the lowest index); a counterpart receiving no mapping is an orphan.
    The index is the larger orphan count of the two directions; 0 means the
    nearest-center map is a bijection both ways.
    """
    a = np.asarray(centers_a, dtype=np.float64)
    b = np.asarray(centers_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
        raise ContractViolation("center sets must be K x D with equal shapes")
    k = a.shape[0]
    orphans_ab = k - np.unique(_nearest_map(a, b)).size
    orphans_ba = k - np.unique(_nearest_map(b, a)).size
    return int(max(orphans_ab, orphans_ba))
