"""Domain types and the joint clustering objective.

The model couples a hard-membership spherical Gaussian mixture over the
feature matrix with two Poisson stochastic block models over the must-link
and cannot-link annotation multigraphs.  For an assignment Z with cluster
counts n_r, within-cluster scatters SS_r and ordered-pair block counts
m_rs per graph, the objective is

    Q(Z) = -sum_r [SS_r / s2_r + D n_r log s2_r]
           + sum_rs [m_rs log w_rs - w_rs n_r n_s]     (per graph)

with all parameters at their closed-form maximizers, and the convention
0 log 0 = 0.  In posterior mode the block rates are shrunk by exponential
priors with rates lambda derived from the expert accuracy, and the prior
log-density terms are added (once per unordered cluster pair).

Constants independent of Z are dropped throughout, so objective values are
comparable across assignments of the same instance but not across models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import LAMBDA_CAP


class ContractViolation(ValueError):
    """An argument violates an operation's contract."""


class EmptyClusterError(ValueError):
    """A relocation would leave its source cluster empty.

    Deliberately not a ContractViolation subclass: the local search probes
    moves and must be able to tell "illegal call" from "move unavailable".
    """


def _as_float_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractViolation(f"{name} must be a 2-D array")
    return arr


class Dataset:
    """N samples of D finite real features, read-only after construction."""

    def __init__(self, samples) -> None:
        arr = _as_float_matrix(samples, "samples")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ContractViolation("dataset must have at least one sample and one feature")
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("dataset contains non-finite values")
        arr.flags.writeable = False
        self.samples = arr
        self.n_samples, self.n_features = arr.shape
        norms = np.einsum("ij,ij->i", arr, arr)
        norms.flags.writeable = False
        self.sample_norms = norms
        # Variance floor relative to the overall feature scale, with a tiny
        # absolute guard so constant datasets still yield finite objectives.
        base = float(np.mean(np.var(arr, axis=0)))
        self.variance_floor = max(1.0e-8 * base, 1.0e-12)


def _normalize_edges(edges, n_samples: int, name: str) -> np.ndarray:
    rows = []
    for edge in edges:
        if len(edge) == 2:
            i, j, c = edge[0], edge[1], 1
        elif len(edge) == 3:
            i, j, c = edge
        else:
            raise ContractViolation(f"{name}: edges must be (i, j) or (i, j, count)")
        i, j, c = int(i), int(j), int(c)
        if i == j:
            raise ContractViolation(f"{name}: self-annotation ({i}, {j}) rejected")
        if not (0 <= i < n_samples and 0 <= j < n_samples):
            raise ContractViolation(f"{name}: edge ({i}, {j}) out of range")
        if c < 1:
            raise ContractViolation(f"{name}: edge count must be positive")
        if i > j:
            i, j = j, i
        rows.append((i, j, c))
    if not rows:
        return np.zeros((0, 3), dtype=np.int64)
    arr = np.array(sorted(rows), dtype=np.int64)
    # Fold duplicate pairs into a single row with summed count.
    keys = arr[:, 0] * n_samples + arr[:, 1]
    first = np.concatenate(([True], keys[1:] != keys[:-1]))
    idx = np.flatnonzero(first)
    folded = arr[idx]
    folded[:, 2] = np.add.reduceat(arr[:, 2], idx)
    return folded


def _edges_to_csr(edges: np.ndarray, n_samples: int):
    indptr = np.zeros(n_samples + 1, dtype=np.int64)
    if edges.shape[0] == 0:
        return indptr, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64)
    np.add.at(indptr, edges[:, 0] + 1, 1)
    np.add.at(indptr, edges[:, 1] + 1, 1)
    np.cumsum(indptr, out=indptr)
    indices = np.empty(indptr[-1], dtype=np.int64)
    weights = np.empty(indptr[-1], dtype=np.float64)
    cursor = indptr[:-1].copy()
    for i, j, c in edges:
        indices[cursor[i]] = j
        weights[cursor[i]] = c
        cursor[i] += 1
        indices[cursor[j]] = i
        weights[cursor[j]] = c
        cursor[j] += 1
    return indptr, indices, weights


class AnnotationGraphs:
    """Symmetric must-link / cannot-link annotation multigraphs.

    Edges are stored unordered with i < j and positive integer counts
    (annotations are drawn with replacement, so counts may exceed 1).
    Self-annotations are rejected.
    """

    def __init__(self, n_samples: int, must_edges=(), cannot_edges=()) -> None:
        if n_samples < 1:
            raise ContractViolation("n_samples must be positive")
        self.n_samples = int(n_samples)
        self.must_edges = _normalize_edges(must_edges, n_samples, "must_edges")
        self.cannot_edges = _normalize_edges(cannot_edges, n_samples, "cannot_edges")
        self.m_plus = int(self.must_edges[:, 2].sum())
        self.m_minus = int(self.cannot_edges[:, 2].sum())
        self.must_csr = _edges_to_csr(self.must_edges, n_samples)
        self.cannot_csr = _edges_to_csr(self.cannot_edges, n_samples)
        endpoints = np.concatenate(
            (self.must_edges[:, :2].ravel(), self.cannot_edges[:, :2].ravel())
        )
        self.annotated_samples = np.unique(endpoints).astype(np.int64)
        self.unannotated_samples = np.setdiff1d(
            np.arange(n_samples, dtype=np.int64), self.annotated_samples
        )
        for arr in (self.must_edges, self.cannot_edges):
            arr.flags.writeable = False

    @classmethod
    def empty(cls, n_samples: int) -> "AnnotationGraphs":
        return cls(n_samples)

    @property
    def m_total(self) -> int:
        return self.m_plus + self.m_minus


@dataclass(eq=False)
class Assignment:
    """Hard membership: labels[i] is the cluster of sample i, in [0, K)."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self) -> None:
        labels = np.array(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] < 1:
            raise ContractViolation("labels must be a non-empty 1-D sequence")
        if self.n_clusters < 1:
            raise ContractViolation("n_clusters must be positive")
        if labels.min() < 0 or labels.max() >= self.n_clusters:
            raise ContractViolation("label out of range")
        self.labels = labels

    @property
    def n_samples(self) -> int:
        return int(self.labels.shape[0])

    def cluster_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters).astype(np.int64)


@dataclass(eq=False)
class GaussianParams:
    """Spherical Gaussian component parameters: means (K, D), variances (K,)."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        self.means = _as_float_matrix(self.means, "means")
        self.variances = np.array(self.variances, dtype=np.float64)
        if self.variances.ndim != 1 or self.variances.shape[0] != self.means.shape[0]:
            raise ContractViolation("variances must be one value per component")
        if not np.all(np.isfinite(self.means)):
            raise ContractViolation("means contain non-finite values")
        if not np.all(np.isfinite(self.variances)) or np.any(self.variances <= 0.0):
            raise ContractViolation("variances must be finite and strictly positive")


@dataclass(eq=False)
class BlockRates:
    """Expected ordered-pair annotation rates per cluster pair, one matrix per graph."""

    omega_plus: np.ndarray
    omega_minus: np.ndarray

    def __post_init__(self) -> None:
        for name in ("omega_plus", "omega_minus"):
            m = _as_float_matrix(getattr(self, name), name)
            if m.shape[0] != m.shape[1]:
                raise ContractViolation(f"{name} must be square")
            if not np.all(np.isfinite(m)) or np.any(m < 0.0):
                raise ContractViolation(f"{name} entries must be finite and >= 0")
            if not np.array_equal(m, m.T):
                raise ContractViolation(f"{name} must be symmetric")
            setattr(self, name, m)
        if self.omega_plus.shape != self.omega_minus.shape:
            raise ContractViolation("rate matrices must share a shape")


@dataclass(frozen=True)
class PriorConfig:
    """Whether to add expert-accuracy priors, and the accuracy p itself.

    p is the probability that an annotator labels a within-cluster pair as
    must-link (and a between-cluster pair as cannot-link).  Boundary values
    are clamped to 1e-6 / 1 - 1e-6 so the prior rates stay finite.
    """

    enabled: bool = False
    expert_accuracy: float = 0.9

    def __post_init__(self) -> None:
        p = float(self.expert_accuracy)
        if not np.isfinite(p) or p < 0.0 or p > 1.0:
            raise ContractViolation("expert_accuracy must lie in [0, 1]")
        p = min(max(p, 1.0e-6), 1.0 - 1.0e-6)
        object.__setattr__(self, "expert_accuracy", p)


@dataclass(frozen=True)
class PriorRates:
    """Exponential-prior rates on the block rates, diagonal vs off-diagonal."""

    lambda_plus_diag: float
    lambda_plus_offdiag: float
    lambda_minus_diag: float
    lambda_minus_offdiag: float


@dataclass(eq=False)
class ClusterStats:
    """Per-cluster running sums and ordered-pair block counts.

    counts[r] = n_r, sum_x[r] = sum of samples in r, sum_sq[r] = sum of
    squared sample norms in r; m_plus / m_minus are K x K ordered-pair
    annotation counts (each stored edge counted in both directions).
    """

    counts: np.ndarray
    sum_x: np.ndarray
    sum_sq: np.ndarray
    m_plus: np.ndarray
    m_minus: np.ndarray


@dataclass(eq=False)
class Solution:
    """An assignment with cached statistics, parameters and objective.

    Mutable only through apply_relocation / the local search, which keep the
    caches consistent; everything else should treat it as read-only.  A
    Solution must stay confined to one worker at a time.
    """

    assignment: Assignment
    gaussians: GaussianParams
    rates: BlockRates
    priors: PriorRates | None
    objective: float
    cluster_stats: ClusterStats
    dataset: Dataset = field(repr=False)
    graphs: AnnotationGraphs = field(repr=False)
    prior_config: PriorConfig = field(repr=False)
    sum_x_sq: np.ndarray = field(repr=False)
    gmm_terms: np.ndarray = field(repr=False)
    sbm_total: float = field(repr=False)

    @property
    def n_clusters(self) -> int:
        return self.assignment.n_clusters

    def use_priors(self) -> bool:
        return self.prior_config.enabled

    def refresh_derived(self) -> None:
        """Recompute parameters and objective from the cached statistics."""
        st = self.cluster_stats
        floor = self.dataset.variance_floor
        means, variances = _gaussians_from_stats(st, self.dataset.n_features, floor)
        self.gaussians = GaussianParams(means, variances)
        if self.prior_config.enabled:
            self.priors = _prior_rates_from_counts(
                st.counts, self.prior_config.expert_accuracy,
                self.graphs.m_plus, self.graphs.m_minus,
            )
            omega_p = _shrunk_rates(st.m_plus, st.counts,
                                    self.priors.lambda_plus_diag,
                                    self.priors.lambda_plus_offdiag)
            omega_m = _shrunk_rates(st.m_minus, st.counts,
                                    self.priors.lambda_minus_diag,
                                    self.priors.lambda_minus_offdiag)
        else:
            self.priors = None
            omega_p = _ml_rates(st.m_plus, st.counts)
            omega_m = _ml_rates(st.m_minus, st.counts)
        self.rates = BlockRates(omega_p, omega_m)
        self.objective = float(self.gmm_terms.sum() + self.sbm_total)


def _ml_rates(m: np.ndarray, counts: np.ndarray) -> np.ndarray:
    q = np.outer(counts, counts).astype(np.float64)
    return np.divide(m, q, out=np.zeros_like(m), where=m > 0)


def _shrunk_rates(m: np.ndarray, counts: np.ndarray,
                  lam_diag: float, lam_offdiag: float) -> np.ndarray:
    k = counts.shape[0]
    q = np.outer(counts, counts).astype(np.float64)
    lam = np.full((k, k), lam_offdiag)
    np.fill_diagonal(lam, 2.0 * lam_diag)
    return np.divide(m, q + lam, out=np.zeros_like(m), where=m > 0)


def _gaussians_from_stats(st: ClusterStats, n_features: int, floor: float):
    counts = st.counts.astype(np.float64)
    means = st.sum_x / counts[:, None]
    scatter = st.sum_sq - np.einsum("ij,ij->i", st.sum_x, st.sum_x) / counts
    # Same cancellation-noise snap as the compiled objective path.
    scatter[scatter < _kernels.SCATTER_NOISE * st.sum_sq] = 0.0
    variances = scatter / (2.0 * n_features * counts)
    np.maximum(variances, floor, out=variances)
    return means, variances


def _prior_rates_from_counts(counts: np.ndarray, p: float,
                             m_plus: int, m_minus: int) -> PriorRates:
    p_in, p_out = _kernels.pair_totals(counts, counts.shape[0])
    lp_in, lp_out, lm_in, lm_out = _kernels.prior_lambdas(
        p_in, p_out, p, float(m_plus), float(m_minus), LAMBDA_CAP
    )
    return PriorRates(lp_in, lp_out, lm_in, lm_out)


def gmm_loglik(dataset: Dataset, assignment: Assignment,
               gaussians: GaussianParams) -> float:
    """Gaussian-mixture term: -sum_i [||x_i - mu_{y_i}||^2 / s2_{y_i} + D log s2_{y_i}].

    This is twice the hard-assignment log-likelihood with the additive
    constant dropped; note D log s2 = 2 D log s.
    """
    if assignment.n_samples != dataset.n_samples:
        raise ContractViolation("assignment length does not match dataset")
    if gaussians.means.shape != (assignment.n_clusters, dataset.n_features):
        raise ContractViolation("gaussian parameter shape mismatch")
    diffs = dataset.samples - gaussians.means[assignment.labels]
    sq = np.einsum("ij,ij->i", diffs, diffs)
    v = gaussians.variances[assignment.labels]
    return float(-(sq / v + dataset.n_features * np.log(v)).sum())


def sbm_loglik(graph_edges: np.ndarray, assignment: Assignment,
               rates: np.ndarray) -> float:
    """Block-model term sum_rs [m_rs log w_rs - w_rs n_r n_s] for one graph.

    graph_edges is an (E, 3) array of unordered (i, j, count) rows; m_rs
    counts ordered pairs, so each row contributes to both (r, s) and (s, r).
    Convention: 0 log 0 = 0.
    """
    edges = np.asarray(graph_edges, dtype=np.int64).reshape(-1, 3)
    rates = np.asarray(rates, dtype=np.float64)
    k = assignment.n_clusters
    if rates.shape != (k, k):
        raise ContractViolation("rate matrix shape mismatch")
    if edges.shape[0] and (edges[:, :2].min() < 0
                           or edges[:, :2].max() >= assignment.n_samples):
        raise ContractViolation("edge index out of range")
    labels = assignment.labels
    m = np.zeros((k, k))
    if edges.shape[0]:
        r, s, c = labels[edges[:, 0]], labels[edges[:, 1]], edges[:, 2].astype(np.float64)
        np.add.at(m, (r, s), c)
        np.add.at(m, (s, r), c)
    counts = assignment.cluster_counts().astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_terms = np.where(m > 0, m * np.log(rates), 0.0)
    return float(log_terms.sum() - (rates * np.outer(counts, counts)).sum())


def evaluate_objective(dataset: Dataset, graphs: AnnotationGraphs,
                       assignment: Assignment,
                       prior_config: PriorConfig = PriorConfig()) -> Solution:
    """Estimate all parameters in closed form and build a consistent Solution.

    Rejects assignments with empty clusters and, in posterior mode, graphs
    with no annotations at all (the prior rates would be undefined).
    """
    if assignment.n_samples != dataset.n_samples:
        raise ContractViolation("assignment length does not match dataset")
    if graphs.n_samples != dataset.n_samples:
        raise ContractViolation("annotation graphs cover a different sample count")
    k = assignment.n_clusters
    if k > dataset.n_samples:
        raise ContractViolation("more clusters than samples")
    if prior_config.enabled and graphs.m_total == 0:
        raise ContractViolation("posterior mode requires at least one annotation")
    labels = np.array(assignment.labels, dtype=np.int64)
    counts, sum_x, sum_sq, sum_x_sq = _kernels.stats_from_labels(
        dataset.samples, labels, k
    )
    if counts.min() == 0:
        raise ContractViolation("assignment has an empty cluster")
    m_p = _kernels.edge_blocks(graphs.must_edges[:, 0], graphs.must_edges[:, 1],
                               graphs.must_edges[:, 2], labels, k)
    m_m = _kernels.edge_blocks(graphs.cannot_edges[:, 0], graphs.cannot_edges[:, 1],
                               graphs.cannot_edges[:, 2], labels, k)
    gmm_terms = np.empty(k)
    _kernels.gmm_terms_all(counts, sum_sq, sum_x_sq, dataset.n_features,
                           dataset.variance_floor, gmm_terms)
    sbm_total = _kernels.sbm_prior_total(
        m_p, m_m, counts, k, prior_config.enabled, prior_config.expert_accuracy,
        float(graphs.m_plus), float(graphs.m_minus), LAMBDA_CAP,
    )
    stats = ClusterStats(counts, sum_x, sum_sq, m_p, m_m)
    solution = Solution(
        assignment=Assignment(labels, k),
        gaussians=GaussianParams(np.zeros((k, dataset.n_features)), np.ones(k)),
        rates=BlockRates(np.zeros((k, k)), np.zeros((k, k))),
        priors=None,
        objective=0.0,
        cluster_stats=stats,
        dataset=dataset,
        graphs=graphs,
        prior_config=prior_config,
        sum_x_sq=sum_x_sq,
        gmm_terms=gmm_terms,
        sbm_total=float(sbm_total),
    )
    solution.refresh_derived()
    return solution


def _check_relocation(solution: Solution, sample: int, target_cluster: int) -> int:
    if not (0 <= sample < solution.dataset.n_samples):
        raise ContractViolation("sample index out of range")
    if not (0 <= target_cluster < solution.n_clusters):
        raise ContractViolation("target cluster out of range")
    current = int(solution.assignment.labels[sample])
    if target_cluster == current:
        raise ContractViolation("target cluster equals current cluster")
    if solution.cluster_stats.counts[current] <= 1:
        raise EmptyClusterError(
            f"moving sample {sample} would empty cluster {current}"
        )
    return current


def relocation_delta(solution: Solution, sample: int, target_cluster: int) -> float:
    """Objective change Q(Z with sample moved) - Q(Z), from cached statistics.

    Parameters are re-maximized in closed form on both sides; only the two
    affected clusters' statistics are touched.
    """
    _check_relocation(solution, sample, target_cluster)
    st = solution.cluster_stats
    k = solution.n_clusters
    cfg = solution.prior_config
    graphs = solution.graphs
    return float(_kernels.relocation_delta_kernel(
        sample, target_cluster,
        solution.dataset.samples[sample], solution.dataset.sample_norms[sample],
        solution.assignment.labels, st.counts, st.sum_x, solution.sum_x_sq,
        st.sum_sq, st.m_plus, st.m_minus,
        *graphs.must_csr, *graphs.cannot_csr,
        solution.dataset.n_features, solution.dataset.variance_floor,
        cfg.enabled, cfg.expert_accuracy,
        float(graphs.m_plus), float(graphs.m_minus), LAMBDA_CAP,
        solution.gmm_terms, solution.sbm_total,
        np.empty(k), np.empty(k),
    ))


def apply_relocation(solution: Solution, sample: int, target_cluster: int) -> None:
    """Move a sample to another cluster, updating caches and parameters."""
    _check_relocation(solution, sample, target_cluster)
    st = solution.cluster_stats
    cfg = solution.prior_config
    graphs = solution.graphs
    solution.sbm_total = float(_kernels.apply_move_kernel(
        sample, target_cluster,
        solution.dataset.samples[sample], solution.dataset.sample_norms[sample],
        solution.assignment.labels, st.counts, st.sum_x, solution.sum_x_sq,
        st.sum_sq, st.m_plus, st.m_minus,
        *graphs.must_csr, *graphs.cannot_csr,
        solution.dataset.n_features, solution.dataset.variance_floor,
        cfg.enabled, cfg.expert_accuracy,
        float(graphs.m_plus), float(graphs.m_minus), LAMBDA_CAP,
        solution.gmm_terms,
    ))
    solution.refresh_derived()
