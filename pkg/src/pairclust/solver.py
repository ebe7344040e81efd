"""Hybrid genetic search over assignments.

Each repetition keeps a small population of locally optimal solutions and
iterates crossover (matched parent centers, coin-flip selection), mutation
(replace one center by a random sample) and a two-phase local search:
relocation sweeps over annotated samples, then a K-means fixed point over
unannotated samples.  Repetitions use independent RNG streams seeded with
seed + repetition index and can run in parallel processes; the reduction
picks the best objective with ties to the lowest repetition index.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import LAMBDA_CAP
from .core import (
    AnnotationGraphs,
    Assignment,
    ContractViolation,
    Dataset,
    PriorConfig,
    Solution,
    evaluate_objective,
)
from .matching import min_cost_matching


@dataclass(frozen=True)
class SolverConfig:
    """Search parameters; defaults follow the small-population regime."""

    n_clusters: int
    pi1: int = 10
    pi2: int = 20
    max_iterations: int = 500
    repetitions: int = 50
    seed: int = 0
    prior_config: PriorConfig = field(default_factory=PriorConfig)
    improvement_tolerance: float = 1.0e-9

    def __post_init__(self) -> None:
        if self.n_clusters < 1:
            raise ContractViolation("n_clusters must be positive")
        if not (1 <= self.pi1 < self.pi2):
            raise ContractViolation("population sizes must satisfy 1 <= pi1 < pi2")
        if self.max_iterations < 0:
            raise ContractViolation("max_iterations must be >= 0")
        if self.repetitions < 1:
            raise ContractViolation("repetitions must be >= 1")


class Population:
    """Multiset of solutions with best-objective survivor selection."""

    def __init__(self, pi1: int, pi2: int) -> None:
        self.pi1 = pi1
        self.pi2 = pi2
        self.solutions: list[Solution] = []

    def add(self, solution: Solution) -> None:
        self.solutions.append(solution)

    def select_survivors(self) -> None:
        # Stable sort: among equal objectives the earlier insertion survives.
        self.solutions.sort(key=lambda s: -s.objective)
        del self.solutions[self.pi1:]

    def best(self) -> Solution:
        best = self.solutions[0]
        for sol in self.solutions[1:]:
            if sol.objective > best.objective:
                best = sol
        return best


def _quantize(dataset: Dataset, centers: np.ndarray, k: int) -> np.ndarray:
    """Nearest-center assignment with empty-cluster repair."""
    labels = np.empty(dataset.n_samples, dtype=np.int64)
    _kernels.assign_nearest(dataset.samples, centers, labels)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    if counts.min() == 0:
        _kernels.repair_empty(dataset.samples, labels, counts, centers)
    return labels


def crossover_centers(parent1: Solution, parent2: Solution,
                      rng: np.random.Generator) -> np.ndarray:
    """Child centers: matched parent means, each pair resolved by a coin flip.

    Parent means are paired by minimum-cost matching on squared Euclidean
    distance; pair r contributes parent1's center r or parent2's matched
    center with equal probability (one rng.random(K) block).
    """
    if parent1.n_clusters != parent2.n_clusters:
        raise ContractViolation("parents must have the same cluster count")
    m1 = parent1.gaussians.means
    m2 = parent2.gaussians.means
    costs = ((m1[:, None, :] - m2[None, :, :]) ** 2).sum(axis=2)
    perm, _ = min_cost_matching(costs)
    take_first = rng.random(parent1.n_clusters) < 0.5
    return np.where(take_first[:, None], m1, m2[perm])


def crossover(parent1: Solution, parent2: Solution, rng: np.random.Generator) -> Assignment:
    """Recombine two parents: matched centers, nearest-center assignment
    (ties to the lowest index), empty clusters repaired."""
    centers = crossover_centers(parent1, parent2, rng)
    k = parent1.n_clusters
    labels = _quantize(parent1.dataset, centers, k)
    return Assignment(labels, k)


def mutation(solution: Solution, rng: np.random.Generator) -> Assignment:
    """Replace one center, chosen uniformly, by a uniformly chosen sample.

    Draw order: removed cluster index, then sample index.  All samples are
    reassigned to their nearest center afterwards, with repair.
    """
    k = solution.n_clusters
    dataset = solution.dataset
    removed = int(rng.integers(k))
    new_center = int(rng.integers(dataset.n_samples))
    centers = solution.gaussians.means.copy()
    centers[removed] = dataset.samples[new_center]
    labels = _quantize(dataset, centers, k)
    return Assignment(labels, k)


def fit_annotated(dataset: Dataset, graphs: AnnotationGraphs, solution: Solution,
                  annotated_set, rng: np.random.Generator | None = None,
                  improvement_tolerance: float = 1.0e-9) -> Solution:
    """Relocation local search over annotated samples (in-place).

    Sweeps all (sample, cluster) pairs in a fresh random order per sweep,
    applying every relocation whose delta exceeds the tolerance, until a
    full sweep applies nothing.  Returns the same Solution object.
    """
    annotated = np.asarray(annotated_set, dtype=np.int64)
    if annotated.size == 0:
        return solution
    if rng is None:
        rng = np.random.default_rng(0)
    st = solution.cluster_stats
    cfg = solution.prior_config
    k = solution.n_clusters
    e_p, e_m = np.empty(k), np.empty(k)
    n_pairs = annotated.size * k
    while True:
        order = rng.permutation(n_pairs).astype(np.int64)
        applied, sbm_total = _kernels.sweep_kernel(
            order, annotated, dataset.samples, dataset.sample_norms,
            solution.assignment.labels, st.counts, st.sum_x, solution.sum_x_sq,
            st.sum_sq, st.m_plus, st.m_minus,
            *graphs.must_csr, *graphs.cannot_csr,
            dataset.n_features, dataset.variance_floor,
            cfg.enabled, cfg.expert_accuracy,
            float(graphs.m_plus), float(graphs.m_minus), LAMBDA_CAP,
            solution.gmm_terms, solution.sbm_total, improvement_tolerance,
            e_p, e_m,
        )
        solution.sbm_total = float(sbm_total)
        if applied == 0:
            break
    solution.refresh_derived()
    return solution


def _kmeans_fixed_point(dataset: Dataset, solution: Solution, unannotated: np.ndarray,
                        iteration_limit: int) -> tuple[np.ndarray, int]:
    """Run the unannotated K-means loop on copies; returns (labels, iterations)."""
    labels = np.array(solution.assignment.labels)
    if unannotated.size == 0:
        return labels, 0
    counts = np.array(solution.cluster_stats.counts)
    means = np.array(solution.gaussians.means)
    iters = _kernels.kmeans_unannotated(
        dataset.samples, labels, counts, means, unannotated, iteration_limit
    )
    return labels, int(iters)


def fit_unannotated(dataset: Dataset, graphs: AnnotationGraphs, solution: Solution,
                    unannotated_set, iteration_limit: int = 10_000) -> Solution:
    """K-means fixed point over unannotated samples; returns a fresh Solution.

    Alternates nearest-mean assignment of unannotated samples (ties to the
    lowest index, empty clusters repaired each round) with mean updates over
    all samples until no label changes, then rebuilds a fully consistent
    Solution with all parameters re-estimated.
    """
    unannotated = np.asarray(unannotated_set, dtype=np.int64)
    labels, _ = _kmeans_fixed_point(dataset, solution, unannotated, iteration_limit)
    return evaluate_objective(dataset, graphs,
                              Assignment(labels, solution.n_clusters),
                              solution.prior_config)


def initialize_population(dataset: Dataset, graphs: AnnotationGraphs,
                          config: SolverConfig,
                          rng: np.random.Generator | None = None) -> Population:
    """Build pi1 solutions: random distinct centers, quantize, full local search."""
    if config.n_clusters > dataset.n_samples:
        raise ContractViolation("more clusters than samples")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    pop = Population(config.pi1, config.pi2)
    k = config.n_clusters
    for _ in range(config.pi1):
        center_idx = rng.choice(dataset.n_samples, size=k, replace=False)
        labels = _quantize(dataset, dataset.samples[center_idx], k)
        sol = evaluate_objective(dataset, graphs, Assignment(labels, k),
                                 config.prior_config)
        sol = fit_unannotated(dataset, graphs, sol, graphs.unannotated_samples)
        sol = fit_annotated(dataset, graphs, sol, graphs.annotated_samples, rng,
                            config.improvement_tolerance)
        sol = fit_unannotated(dataset, graphs, sol, graphs.unannotated_samples)
        pop.add(sol)
    return pop


def _run_single_repetition(dataset: Dataset, graphs: AnnotationGraphs,
                           config: SolverConfig, repetition: int) -> Solution:
    rng = np.random.default_rng(config.seed + repetition)
    pop = initialize_population(dataset, graphs, config, rng)
    best = pop.best()
    for _ in range(config.max_iterations):
        if len(pop.solutions) >= 2:
            idx = rng.choice(len(pop.solutions), size=2, replace=False)
        else:
            idx = np.zeros(2, dtype=np.int64)
        child = crossover(pop.solutions[idx[0]], pop.solutions[idx[1]], rng)
        sol = evaluate_objective(dataset, graphs, child, config.prior_config)
        mutated = mutation(sol, rng)
        sol = evaluate_objective(dataset, graphs, mutated, config.prior_config)
        sol = fit_annotated(dataset, graphs, sol, graphs.annotated_samples, rng,
                            config.improvement_tolerance)
        sol = fit_unannotated(dataset, graphs, sol, graphs.unannotated_samples)
        pop.add(sol)
        if len(pop.solutions) >= config.pi2:
            pop.select_survivors()
        if sol.objective > best.objective:
            best = sol
    return best


@dataclass(eq=False)
class RepetitionOutcome:
    repetition: int
    solution: Solution
    wall_ms: float


def _repetition_task(args) -> RepetitionOutcome:
    dataset, graphs, config, repetition = args
    start = time.perf_counter()
    solution = _run_single_repetition(dataset, graphs, config, repetition)
    return RepetitionOutcome(repetition, solution,
                             (time.perf_counter() - start) * 1000.0)


def warm_kernels() -> None:
    """Compile (or load from cache) every jitted kernel on a toy instance.

    Worth calling once before forking worker processes so children inherit
    compiled code instead of racing on the compilation cache.
    """
    dataset = Dataset([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    graphs = AnnotationGraphs(4, [(0, 1)], [(0, 2)])
    config = SolverConfig(n_clusters=2, pi1=2, pi2=3, max_iterations=2,
                          repetitions=1, seed=0,
                          prior_config=PriorConfig(True, 0.9))
    _run_single_repetition(dataset, graphs, config, 0)
    _run_single_repetition(dataset, graphs,
                           SolverConfig(n_clusters=2, pi1=2, pi2=3,
                                        max_iterations=2, repetitions=1, seed=0),
                           0)


def run_repetitions(dataset: Dataset, graphs: AnnotationGraphs,
                    config: SolverConfig, n_workers: int = 1) -> list[RepetitionOutcome]:
    """All repetitions, optionally in parallel; output order is by repetition."""
    if config.n_clusters > dataset.n_samples:
        raise ContractViolation("more clusters than samples")
    tasks = [(dataset, graphs, config, rep) for rep in range(config.repetitions)]
    workers = min(int(n_workers), config.repetitions)
    if workers <= 1:
        return [_repetition_task(t) for t in tasks]
    warm_kernels()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_repetition_task, tasks))


def run(dataset: Dataset, graphs: AnnotationGraphs, config: SolverConfig,
        n_workers: int = 1) -> Solution:
    """Best solution over all repetitions (ties: lowest repetition index)."""
    outcomes = run_repetitions(dataset, graphs, config, n_workers)
    best = outcomes[0]
    for outcome in outcomes[1:]:
        if outcome.solution.objective > best.solution.objective:
            best = outcome
    return best.solution
