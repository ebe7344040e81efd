"""Genetic search: population management, operators, local search, full runs."""

import numpy as np
import pytest

import _oracles
from conftest import random_instance, stored_edges

from pairclust import (
    AnnotationGraphs,
    Assignment,
    ContractViolation,
    Dataset,
    Population,
    PriorConfig,
    SolverConfig,
    crossover,
    crossover_centers,
    evaluate_objective,
    fit_annotated,
    fit_unannotated,
    initialize_population,
    mutation,
    relocation_delta,
    run,
    run_repetitions,
)
from pairclust.solver import _kmeans_fixed_point


class _Coin:
    """rng stub for crossover_centers: fixed coin results."""

    def __init__(self, value):
        self.value = value

    def random(self, n):
        return np.full(n, self.value)


def _solution(dataset, graphs, labels, k, priors=PriorConfig()):
    return evaluate_objective(dataset, graphs, Assignment(labels, k), priors)


def _no_improving_annotated_move(solution, graphs, tol=1.0e-6):
    labels = solution.assignment.labels
    counts = solution.assignment.cluster_counts()
    for i in graphs.annotated_samples:
        if counts[labels[i]] == 1:
            continue
        for r in range(solution.n_clusters):
            if r == labels[i]:
                continue
            if relocation_delta(solution, int(i), r) > tol:
                return False
    return True


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig(n_clusters=3)
        assert cfg.pi1 == 10 and cfg.pi2 == 20
        assert cfg.max_iterations == 500
        assert cfg.repetitions == 50
        assert cfg.seed == 0
        assert cfg.improvement_tolerance == 1.0e-9
        assert not cfg.prior_config.enabled

    @pytest.mark.parametrize("kwargs", [
        {"n_clusters": 0},
        {"n_clusters": 2, "pi1": 0, "pi2": 5},
        {"n_clusters": 2, "pi1": 5, "pi2": 5},
        {"n_clusters": 2, "pi1": 6, "pi2": 5},
        {"n_clusters": 2, "max_iterations": -1},
        {"n_clusters": 2, "repetitions": 0},
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ContractViolation):
            SolverConfig(**kwargs)


class _Member:
    """Objective-only stand-in; Population orders purely by objective."""

    def __init__(self, objective):
        self.objective = objective


class TestPopulation:
    def test_survivors_are_the_best_by_multiset(self):
        rng = np.random.default_rng(3)
        values = list(rng.integers(0, 8, size=30).astype(float))
        pop = Population(pi1=7, pi2=30)
        for v in values:
            pop.add(_Member(v))
        pop.select_survivors()
        kept = sorted((s.objective for s in pop.solutions), reverse=True)
        assert kept == sorted(values, reverse=True)[:7]

    def test_tie_keeps_earlier_insertion(self):
        first, second = _Member(1.0), _Member(1.0)
        pop = Population(pi1=1, pi2=4)
        pop.add(first)
        pop.add(second)
        pop.select_survivors()
        assert len(pop.solutions) == 1
        assert pop.solutions[0] is first

    def test_best_returns_first_strict_maximum(self):
        members = [_Member(2.0), _Member(5.0), _Member(5.0), _Member(1.0)]
        pop = Population(pi1=2, pi2=8)
        for m in members:
            pop.add(m)
        assert pop.best() is members[1]


class TestInitializePopulation:
    def test_saturated_one_sample_per_cluster(self):
        rng = np.random.default_rng(0)
        dataset = Dataset(rng.normal(size=(5, 2)))
        graphs = AnnotationGraphs.empty(5)
        cfg = SolverConfig(n_clusters=5, pi1=1, pi2=2, seed=1)
        pop = initialize_population(dataset, graphs, cfg)
        sol = pop.solutions[0]
        assert np.array_equal(np.sort(sol.assignment.labels), np.arange(5))
        assert np.isfinite(sol.objective)

    def test_fixed_seed_reproduces_population(self, fixture6):
        cfg = SolverConfig(n_clusters=2, pi1=4, pi2=8, seed=11)
        pop_a = initialize_population(fixture6["dataset"], fixture6["graphs"], cfg)
        pop_b = initialize_population(fixture6["dataset"], fixture6["graphs"], cfg)
        assert len(pop_a.solutions) == 4
        for a, b in zip(pop_a.solutions, pop_b.solutions):
            assert np.array_equal(a.assignment.labels, b.assignment.labels)
            assert a.objective == b.objective

    def test_members_have_no_improving_annotated_move(self, fixture6):
        # All six samples are annotated, so the closing K-means pass cannot
        # disturb the relocation optimum reached by the annotated sweep.
        cfg = SolverConfig(n_clusters=2, pi1=5, pi2=10, seed=3)
        pop = initialize_population(fixture6["dataset"], fixture6["graphs"], cfg)
        for sol in pop.solutions:
            assert _no_improving_annotated_move(sol, fixture6["graphs"])

    def test_more_clusters_than_samples_rejected(self):
        dataset = Dataset([[0.0], [1.0]])
        cfg = SolverConfig(n_clusters=3, pi1=1, pi2=2)
        with pytest.raises(ContractViolation):
            initialize_population(dataset, AnnotationGraphs.empty(2), cfg)


class TestCrossover:
    def _fixed_point_solution(self, dataset, k, seed):
        graphs = AnnotationGraphs.empty(dataset.n_samples)
        rng = np.random.default_rng(seed)
        while True:
            labels = rng.integers(0, k, size=dataset.n_samples)
            if np.unique(labels).size == k:
                break
        start = _solution(dataset, graphs, labels, k)
        return fit_unannotated(dataset, graphs, start,
                               graphs.unannotated_samples), graphs

    def test_identical_parents_reproduce_assignment(self, fixture6):
        sol, _ = self._fixed_point_solution(fixture6["dataset"], 2, seed=5)
        child = crossover(sol, sol, np.random.default_rng(9))
        assert np.array_equal(child.labels, sol.assignment.labels)

    def test_child_centers_come_from_parents(self, fixture6):
        dataset = fixture6["dataset"]
        sol_a, _ = self._fixed_point_solution(dataset, 2, seed=5)
        sol_b, _ = self._fixed_point_solution(dataset, 2, seed=17)
        rng = np.random.default_rng(2)
        for _ in range(20):
            centers = crossover_centers(sol_a, sol_b, rng)
            pool = np.vstack([sol_a.gaussians.means, sol_b.gaussians.means])
            for row in centers:
                assert any(np.array_equal(row, cand) for cand in pool)

    def test_forced_coin_returns_one_parent(self, fixture6):
        dataset = fixture6["dataset"]
        sol_a, _ = self._fixed_point_solution(dataset, 2, seed=5)
        sol_b, _ = self._fixed_point_solution(dataset, 2, seed=17)
        all_first = crossover_centers(sol_a, sol_b, _Coin(0.0))
        assert np.array_equal(all_first, sol_a.gaussians.means)
        all_second = crossover_centers(sol_a, sol_b, _Coin(1.0))
        m2 = sol_b.gaussians.means
        costs = [[float(np.sum((a - b) ** 2)) for b in m2]
                 for a in sol_a.gaussians.means]
        _, perm = _oracles.matching_minimum(costs)
        assert np.array_equal(all_second, m2[list(perm)])

    def test_forced_first_parent_is_nearest_center_quantization(self, fixture6):
        dataset = fixture6["dataset"]
        sol, _ = self._fixed_point_solution(dataset, 2, seed=5)
        other, _ = self._fixed_point_solution(dataset, 2, seed=17)
        child = crossover(sol, other, _Coin(0.0))
        means = sol.gaussians.means
        for i in range(dataset.n_samples):
            dists = [sum((dataset.samples[i, t] - means[r, t]) ** 2
                         for t in range(dataset.n_features)) for r in range(2)]
            expect = 0 if dists[0] <= dists[1] else 1
            assert child.labels[i] == expect

    def test_cluster_count_mismatch_rejected(self, fixture6):
        dataset = fixture6["dataset"]
        sol2, graphs = self._fixed_point_solution(dataset, 2, seed=5)
        labels3 = np.array([0, 0, 1, 1, 2, 2])
        sol3 = _solution(dataset, graphs, labels3, 3)
        with pytest.raises(ContractViolation):
            crossover_centers(sol2, sol3, np.random.default_rng(0))


class TestMutation:
    def test_single_cluster_unchanged(self):
        rng = np.random.default_rng(4)
        dataset = Dataset(rng.normal(size=(7, 2)))
        graphs = AnnotationGraphs.empty(7)
        sol = _solution(dataset, graphs, np.zeros(7, dtype=np.int64), 1)
        child = mutation(sol, np.random.default_rng(1))
        assert np.array_equal(child.labels, np.zeros(7, dtype=np.int64))

    def test_all_clusters_nonempty(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            dataset, graphs, assignment = random_instance(rng)
            sol = evaluate_objective(dataset, graphs, assignment)
            child = mutation(sol, rng)
            assert np.bincount(child.labels, minlength=child.n_clusters).min() > 0

    def test_seeded_draws_follow_documented_order(self, fixture6):
        dataset = fixture6["dataset"]
        graphs = fixture6["graphs"]
        sol = _solution(dataset, graphs, np.array([0, 0, 0, 1, 1, 1]), 2)
        child = mutation(sol, np.random.default_rng(5))

        twin = np.random.default_rng(5)
        removed = int(twin.integers(2))
        new_center = int(twin.integers(6))
        centers = sol.gaussians.means.copy()
        centers[removed] = dataset.samples[new_center]
        expect = []
        for i in range(6):
            dists = [sum((dataset.samples[i, t] - centers[r, t]) ** 2
                         for t in range(2)) for r in range(2)]
            expect.append(0 if dists[0] <= dists[1] else 1)
        assert min(np.bincount(expect, minlength=2)) > 0
        assert np.array_equal(child.labels, expect)

    def test_reproducible(self, fixture6):
        sol = _solution(fixture6["dataset"], fixture6["graphs"],
                        np.array([0, 0, 0, 1, 1, 1]), 2)
        a = mutation(sol, np.random.default_rng(33))
        b = mutation(sol, np.random.default_rng(33))
        assert np.array_equal(a.labels, b.labels)


class TestFitAnnotated:
    def test_no_annotated_samples_returns_same_object(self):
        rng = np.random.default_rng(1)
        dataset = Dataset(rng.normal(size=(6, 2)))
        graphs = AnnotationGraphs.empty(6)
        sol = _solution(dataset, graphs, np.array([0, 1, 0, 1, 0, 1]), 2)
        before = sol.assignment.labels.copy()
        out = fit_annotated(dataset, graphs, sol, graphs.annotated_samples)
        assert out is sol
        assert np.array_equal(sol.assignment.labels, before)

    def test_in_place_improvement_and_consistency(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            dataset, graphs, assignment = random_instance(rng, allow_unannotated=False)
            if graphs.annotated_samples.size == 0:
                continue
            sol = evaluate_objective(dataset, graphs, assignment)
            start_objective = sol.objective
            out = fit_annotated(dataset, graphs, sol, graphs.annotated_samples, rng)
            assert out is sol
            assert sol.objective >= start_objective - 1.0e-12
            fresh = evaluate_objective(dataset, graphs, sol.assignment)
            assert sol.objective == pytest.approx(fresh.objective,
                                                  rel=1.0e-8, abs=1.0e-8)

    def test_endpoint_has_no_improving_move(self):
        rng = np.random.default_rng(77)
        for _ in range(8):
            dataset, graphs, assignment = random_instance(rng, allow_unannotated=False)
            sol = evaluate_objective(dataset, graphs, assignment)
            fit_annotated(dataset, graphs, sol, graphs.annotated_samples, rng)
            assert _no_improving_annotated_move(sol, graphs)

    def test_endpoint_is_a_hill_climb_sink(self, fixture6):
        # Every labeling where no single relocation of an annotated sample
        # improves, found by sweeping all 2^6 assignments with the literal
        # objective. The search endpoint must land on one of them.
        dataset = fixture6["dataset"]
        graphs = fixture6["graphs"]
        must, cannot = fixture6["must"], fixture6["cannot"]

        def objective(labels):
            return _oracles.brute_objective(dataset.samples, list(labels), 2,
                                            must, cannot)

        sinks = []
        for code in range(2 ** 6):
            labels = [(code >> b) & 1 for b in range(6)]
            counts = [labels.count(0), labels.count(1)]
            if 0 in counts:
                continue
            base = objective(labels)
            improving = False
            for i in range(6):
                if counts[labels[i]] == 1:
                    continue
                flipped = list(labels)
                flipped[i] = 1 - flipped[i]
                if objective(flipped) > base + 1.0e-9:
                    improving = True
                    break
            if not improving:
                sinks.append(base)

        sol = _solution(dataset, graphs, np.array([0, 1, 0, 1, 0, 1]), 2)
        fit_annotated(dataset, graphs, sol, graphs.annotated_samples,
                      np.random.default_rng(2))
        assert any(sol.objective == pytest.approx(s, rel=1.0e-8) for s in sinks)

    def test_fixed_rng_reproduces_endpoint(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        endpoints = []
        for _ in range(2):
            sol = _solution(dataset, graphs, np.array([0, 1, 0, 1, 0, 1]), 2)
            fit_annotated(dataset, graphs, sol, graphs.annotated_samples,
                          np.random.default_rng(40))
            endpoints.append(sol.assignment.labels.copy())
        assert np.array_equal(endpoints[0], endpoints[1])


class TestFitUnannotated:
    def test_all_annotated_refreshes_without_moving(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        labels = np.array([0, 1, 0, 1, 0, 1])
        sol = _solution(dataset, graphs, labels, 2)
        out = fit_unannotated(dataset, graphs, sol, graphs.unannotated_samples)
        assert out is not sol
        assert np.array_equal(out.assignment.labels, labels)
        assert out.objective == sol.objective

    def test_matches_plain_kmeans_fixed_point(self):
        rng = np.random.default_rng(8)
        checked = 0
        for _ in range(25):
            dataset, graphs, assignment = random_instance(rng, n_draws=0)
            try:
                expect = _oracles.plain_kmeans(
                    dataset.samples, list(assignment.labels),
                    assignment.n_clusters)
            except ValueError:
                continue
            sol = evaluate_objective(dataset, graphs, assignment)
            out = fit_unannotated(dataset, graphs, sol, graphs.unannotated_samples)
            assert np.array_equal(out.assignment.labels, expect)
            checked += 1
        assert checked >= 15

    def test_input_solution_untouched(self):
        rng = np.random.default_rng(14)
        dataset, graphs, assignment = random_instance(rng, n_draws=0)
        sol = evaluate_objective(dataset, graphs, assignment)
        before = sol.assignment.labels.copy()
        fit_unannotated(dataset, graphs, sol, graphs.unannotated_samples)
        assert np.array_equal(sol.assignment.labels, before)

    def test_iteration_count_stays_small(self):
        rng = np.random.default_rng(30)
        dataset = Dataset(rng.normal(size=(400, 3)))
        graphs = AnnotationGraphs.empty(400)
        while True:
            labels = rng.integers(0, 4, size=400)
            if np.unique(labels).size == 4:
                break
        sol = _solution(dataset, graphs, labels, 4)
        _, iters = _kmeans_fixed_point(dataset, sol, graphs.unannotated_samples,
                                       10_000)
        assert iters <= 1_000


class TestRun:
    def test_zero_iterations_equals_initial_best(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        cfg = SolverConfig(n_clusters=2, pi1=3, pi2=6, max_iterations=0,
                           repetitions=1, seed=19)
        got = run(dataset, graphs, cfg)
        pop = initialize_population(dataset, graphs, cfg,
                                    np.random.default_rng(cfg.seed))
        expect = pop.best()
        assert got.objective == expect.objective
        assert np.array_equal(got.assignment.labels, expect.assignment.labels)

    def test_incumbent_monotone_in_iteration_budget(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        objectives = []
        for budget in (0, 5, 20):
            cfg = SolverConfig(n_clusters=2, pi1=3, pi2=6, max_iterations=budget,
                               repetitions=1, seed=2)
            objectives.append(run(dataset, graphs, cfg).objective)
        assert objectives[0] <= objectives[1] <= objectives[2]

    def test_reaches_enumerated_optimum(self, fixture6):
        # Global optimum over all 2^6 labelings, frozen from the literal
        # objective: labels (0,1,0,0,0,0) up to swap.
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        cfg = SolverConfig(n_clusters=2, pi1=4, pi2=8, max_iterations=50,
                           repetitions=3, seed=7)
        sol = run(dataset, graphs, cfg)
        assert sol.objective == pytest.approx(1.3670476654174522, rel=1.0e-9)
        labels = sol.assignment.labels
        expect = np.array([0, 1, 0, 0, 0, 0])
        assert (np.array_equal(labels, expect)
                or np.array_equal(labels, 1 - expect))

    def test_repeat_runs_identical(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        cfg = SolverConfig(n_clusters=2, pi1=3, pi2=6, max_iterations=10,
                           repetitions=2, seed=5)
        a = run(dataset, graphs, cfg)
        b = run(dataset, graphs, cfg)
        assert a.objective == b.objective
        assert np.array_equal(a.assignment.labels, b.assignment.labels)

    def test_priors_mode_runs_and_improves_on_random_start(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        cfg = SolverConfig(n_clusters=2, pi1=3, pi2=6, max_iterations=20,
                           repetitions=1, seed=1,
                           prior_config=PriorConfig(True, 0.9))
        sol = run(dataset, graphs, cfg)
        assert sol.prior_config.enabled
        start = _solution(dataset, graphs, np.array([0, 1, 0, 1, 0, 1]), 2,
                          priors=PriorConfig(True, 0.9))
        assert sol.objective >= start.objective

    def test_ties_resolve_to_lowest_repetition(self, fixture6):
        dataset, graphs = fixture6["dataset"], fixture6["graphs"]
        cfg = SolverConfig(n_clusters=2, pi1=4, pi2=8, max_iterations=50,
                           repetitions=3, seed=7)
        outcomes = run_repetitions(dataset, graphs, cfg)
        best = max(o.solution.objective for o in outcomes)
        first = next(o for o in outcomes if o.solution.objective == best)
        sol = run(dataset, graphs, cfg)
        assert np.array_equal(sol.assignment.labels,
                              first.solution.assignment.labels)


class TestRunRepetitions:
    def test_outcomes_ordered_by_repetition(self, fixture6):
        cfg = SolverConfig(n_clusters=2, pi1=2, pi2=4, max_iterations=3,
                           repetitions=4, seed=0)
        outcomes = run_repetitions(fixture6["dataset"], fixture6["graphs"], cfg)
        assert [o.repetition for o in outcomes] == [0, 1, 2, 3]
        assert all(o.wall_ms >= 0.0 for o in outcomes)

    def test_parallel_matches_sequential(self, fixture6):
        cfg = SolverConfig(n_clusters=2, pi1=3, pi2=6, max_iterations=10,
                           repetitions=3, seed=13)
        seq = run_repetitions(fixture6["dataset"], fixture6["graphs"], cfg,
                              n_workers=1)
        par = run_repetitions(fixture6["dataset"], fixture6["graphs"], cfg,
                              n_workers=2)
        assert len(seq) == len(par) == 3
        for s, p in zip(seq, par):
            assert s.repetition == p.repetition
            assert s.solution.objective == p.solution.objective
            assert np.array_equal(s.solution.assignment.labels,
                                  p.solution.assignment.labels)

    def test_more_clusters_than_samples_rejected(self):
        dataset = Dataset([[0.0], [1.0]])
        cfg = SolverConfig(n_clusters=3, pi1=1, pi2=2, repetitions=1)
        with pytest.raises(ContractViolation):
            run_repetitions(dataset, AnnotationGraphs.empty(2), cfg)
