"""Closed-form parameter updates and annotation-rate prior computation.

These are the stationary-point formulas of the joint objective for a fixed
assignment: cluster means and spherical variances for the Gaussian part,
block rates (plain or prior-shrunk) for the annotation graphs, and the
exponential-prior rates derived from the expert accuracy.
"""

from __future__ import annotations

import numpy as np

from .core import (
    AnnotationGraphs,
    Assignment,
    BlockRates,
    ContractViolation,
    Dataset,
    PriorConfig,
    PriorRates,
)

LAMBDA_CAP = 1.0e12


def _counts_checked(assignment: Assignment) -> np.ndarray:
    counts = assignment.cluster_counts()
    if counts.min() == 0:
        raise ContractViolation("assignment has an empty cluster")
    return counts


def estimate_means(dataset: Dataset, assignment: Assignment) -> np.ndarray:
    """Per-cluster sample means, one row per cluster."""
    if assignment.n_samples != dataset.n_samples:
        raise ContractViolation("assignment length does not match dataset")
    counts = _counts_checked(assignment)
    sums = np.zeros((assignment.n_clusters, dataset.n_features))
    np.add.at(sums, assignment.labels, dataset.samples)
    return sums / counts[:, None]


def estimate_variances(dataset: Dataset, assignment: Assignment,
                       means: np.ndarray) -> np.ndarray:
    """Spherical variances s2_r = SS_r / (2 D n_r), floored.

    SS_r sums squared distances of cluster r's samples to means[r]; the
    floor is the dataset-relative variance floor from core.
    """
    if assignment.n_samples != dataset.n_samples:
        raise ContractViolation("assignment length does not match dataset")
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (assignment.n_clusters, dataset.n_features):
        raise ContractViolation("means shape mismatch")
    counts = _counts_checked(assignment)
    diffs = dataset.samples - means[assignment.labels]
    sq = np.einsum("ij,ij->i", diffs, diffs)
    scatter = np.bincount(assignment.labels, weights=sq,
                          minlength=assignment.n_clusters)
    variances = scatter / (2.0 * dataset.n_features * counts)
    return np.maximum(variances, dataset.variance_floor)


def _block_counts(edges: np.ndarray, assignment: Assignment) -> np.ndarray:
    k = assignment.n_clusters
    m = np.zeros((k, k))
    if edges.shape[0]:
        labels = assignment.labels
        r, s = labels[edges[:, 0]], labels[edges[:, 1]]
        c = edges[:, 2].astype(np.float64)
        np.add.at(m, (r, s), c)
        np.add.at(m, (s, r), c)
    return m


def estimate_block_rates(graphs: AnnotationGraphs,
                         assignment: Assignment) -> BlockRates:
    """Maximum-likelihood rates w_rs = m_rs / (n_r n_s), with 0/0 = 0."""
    if graphs.n_samples != assignment.n_samples:
        raise ContractViolation("graphs cover a different sample count")
    counts = assignment.cluster_counts().astype(np.float64)
    q = np.outer(counts, counts)
    rates = []
    for edges in (graphs.must_edges, graphs.cannot_edges):
        m = _block_counts(edges, assignment)
        rates.append(np.divide(m, q, out=np.zeros_like(m), where=m > 0))
    return BlockRates(*rates)


def estimate_block_rates_with_priors(graphs: AnnotationGraphs,
                                     assignment: Assignment,
                                     prior_rates: PriorRates) -> BlockRates:
    """Posterior-mode rates w_rs = m_rs / (n_r n_s + c lambda_rs), c = 2 on
    the diagonal, per graph with its own prior rates."""
    if graphs.n_samples != assignment.n_samples:
        raise ContractViolation("graphs cover a different sample count")
    counts = assignment.cluster_counts().astype(np.float64)
    k = assignment.n_clusters
    q = np.outer(counts, counts)
    rates = []
    for edges, lam_diag, lam_off in (
        (graphs.must_edges, prior_rates.lambda_plus_diag, prior_rates.lambda_plus_offdiag),
        (graphs.cannot_edges, prior_rates.lambda_minus_diag, prior_rates.lambda_minus_offdiag),
    ):
        m = _block_counts(edges, assignment)
        lam = np.full((k, k), lam_off)
        np.fill_diagonal(lam, 2.0 * lam_diag)
        rates.append(np.divide(m, q + lam, out=np.zeros_like(m), where=m > 0))
    return BlockRates(*rates)


def compute_prior_rates(assignment: Assignment, prior_config: PriorConfig,
                        m_plus: int, m_minus: int) -> PriorRates:
    """Exponential-prior rates lambda = 1/f from the expert accuracy.

    With P_in = sum_r n_r (n_r + 1) / 2 and P_out = sum_{r<s} n_r n_s:

        f+_IN = m+ / (P_in + ((1-p)/p) P_out),   f+_OUT = ((1-p)/p) f+_IN
        f-_IN = m- / (P_in + (p/(1-p)) P_out),   f-_OUT = (p/(1-p)) f-_IN

    A graph with zero annotations gets the capped maximum rate 1e12, as do
    rates whose reciprocal would exceed the cap.
    """
    if not prior_config.enabled:
        raise ContractViolation("prior rates requested with priors disabled")
    if m_plus < 0 or m_minus < 0:
        raise ContractViolation("annotation counts must be non-negative")
    if m_plus + m_minus == 0:
        raise ContractViolation("prior rates need at least one annotation")
    counts = assignment.cluster_counts().astype(np.float64)
    p = prior_config.expert_accuracy
    p_in = float((counts * (counts + 1.0)).sum() / 2.0)
    p_out = float((counts.sum() ** 2 - (counts ** 2).sum()) / 2.0)
    ratio = (1.0 - p) / p
    if m_plus > 0:
        f_in = m_plus / (p_in + ratio * p_out)
        lp_diag = min(1.0 / f_in, LAMBDA_CAP)
        lp_off = min(1.0 / (ratio * f_in), LAMBDA_CAP)
    else:
        lp_diag = lp_off = LAMBDA_CAP
    inv = p / (1.0 - p)
    if m_minus > 0:
        f_in = m_minus / (p_in + inv * p_out)
        lm_diag = min(1.0 / f_in, LAMBDA_CAP)
        lm_off = min(1.0 / (inv * f_in), LAMBDA_CAP)
    else:
        lm_diag = lm_off = LAMBDA_CAP
    return PriorRates(lp_diag, lp_off, lm_diag, lm_off)
