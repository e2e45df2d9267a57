import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smoothcover.ga_tsp import (
    GaConfig, SequenceError, crossover, distance_matrix, evolve_population, init_population,
    repair_path, roulette_cumulative, route_cost, solve_tsp,
)


def brute_force_optimum(points, ef, tf):
    d = distance_matrix(points)
    n = len(points)
    best = np.inf
    for perm in itertools.permutations(range(1, n - 1)):
        seq = [0, *perm, n - 1]
        best = min(best, sum((ef + tf) * np.hypot(*(points[a] - points[b])) for a, b in zip(seq, seq[1:])))
    return best


class TestDistanceMatrix:
    def test_345(self):
        assert distance_matrix([(0, 0), (3, 4)])[0, 1] == 5.0

    def test_zero_diagonal_and_symmetry(self):
        pts = np.random.default_rng(0).uniform(0, 10, (6, 2))
        d = distance_matrix(pts)
        assert np.all(np.diag(d) == 0)
        np.testing.assert_array_equal(d, d.T)

    def test_matches_pairwise_norms(self):
        pts = np.random.default_rng(1).uniform(0, 10, (6, 2))
        d = distance_matrix(pts)
        for i in range(6):
            for j in range(6):
                assert d[i, j] == pytest.approx(np.linalg.norm(pts[i] - pts[j]), rel=1e-15)


class TestRouteCost:
    def test_single_leg(self):
        d = distance_matrix([(0, 0), (3, 4)])
        assert route_cost([0, 1], d, 1.0, 1.0) == 10.0

    def test_zero_factors(self):
        d = distance_matrix(np.random.default_rng(2).uniform(0, 5, (5, 2)))
        assert route_cost([0, 2, 1, 3, 4], d, 0.0, 0.0) == 0.0

    def test_resummation(self):
        pts = np.random.default_rng(3).uniform(0, 5, (6, 2))
        d = distance_matrix(pts)
        seq = [0, 3, 1, 4, 2, 5]
        length = 0.0
        for a, b in zip(seq, seq[1:]):
            length += np.linalg.norm(pts[a] - pts[b])
        assert route_cost(seq, d, 0.7, 1.9) == pytest.approx(2.6 * length, rel=1e-12)

    @pytest.mark.parametrize("seq", [[1, 0, 2, 3], [0, 1, 1, 3], [0, 2, 1], [0, 1, 3, 2]])
    def test_invalid_sequence(self, seq):
        d = distance_matrix(np.zeros((4, 2)) + np.arange(4)[:, None])
        with pytest.raises(SequenceError):
            route_cost(seq, d, 1, 1)


class TestPopulation:
    def test_single_interior(self):
        pop = init_population(GaConfig(population_size=6), 3)
        assert pop.tolist() == [[1]] * 6

    def test_deterministic(self):
        cfg = GaConfig(population_size=20, rng_seed=42)
        np.testing.assert_array_equal(init_population(cfg, 9), init_population(cfg, 9))

    def test_uniform_first_gene(self):
        pop = init_population(GaConfig(population_size=10_000, rng_seed=1), 10)
        freq = np.bincount(pop[:, 0], minlength=9)[1:] / len(pop)
        assert np.all(np.abs(freq - 1 / 8) <= 0.02)
        # chi-square against the uniform permutation oracle, 7 dof, 99.9% quantile 24.3
        expected = len(pop) / 8
        chi2 = ((freq * len(pop) - expected) ** 2 / expected).sum()
        assert chi2 < 24.3


class TestRoulette:
    def test_symmetric(self):
        np.testing.assert_allclose(roulette_cumulative([1, 1]), [0.5, 1.0])

    def test_singleton(self):
        np.testing.assert_allclose(roulette_cumulative([1]), [1.0])

    def test_hand_evaluation(self):
        np.testing.assert_allclose(roulette_cumulative([1, 2, 4]), [4 / 7, 6 / 7, 1.0], rtol=1e-14)

    @pytest.mark.parametrize("bad", [[1, 0], [-1, 2], [float("nan")]])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            roulette_cumulative(bad)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-3, 1e6), min_size=1, max_size=50))
    def test_sorted_unit_interval(self, costs):
        cum = roulette_cumulative(costs)
        assert np.all(np.diff(cum) >= 0)
        assert np.all((cum >= 0) & (cum <= 1))
        assert abs(cum[-1] - 1) <= 1e-12


class TestRepair:
    def test_valid_unchanged(self):
        assert repair_path([1, 2, 3], 3) == [1, 2, 3]

    def test_second_duplicate_replaced(self):
        assert repair_path([1, 1, 3], 3) == [1, 2, 3]

    def test_smallest_unused_in_order(self):
        assert repair_path([4, 4, 4, 1], 4) == [4, 2, 3, 1]

    def test_wrong_length(self):
        with pytest.raises(SequenceError):
            repair_path([1, 2], 3)

    def test_random_paths_become_permutations(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(1, 12))
            path = rng.integers(1, n + 1, n).tolist()
            out = repair_path(path, n)
            assert sorted(out) == list(range(1, n + 1))
            # genes that were not duplicates keep their position
            for i, v in enumerate(path):
                if path.count(v) == 1:
                    assert out[i] == v


class TestEvolve:
    def test_clones_stay_clones(self):
        pop = np.array([[2, 1, 3, 4]] * 8)
        cfg = GaConfig(population_size=8, mutation_rate=0.0)
        new = evolve_population(pop, np.ones(8), cfg, np.random.default_rng(0))
        assert (new == pop[0]).all()

    def test_crossover_hand_trace(self):
        c1, c2 = crossover([1, 2, 3], [3, 2, 1], 1)
        assert c1 == [1, 2, 3]
        assert c2 == [3, 2, 1]

    def test_survivors_kept(self):
        rng = np.random.default_rng(4)
        cfg = GaConfig(population_size=10, mutation_rate=0.3)
        pop = init_population(cfg, 8, rng)
        costs = rng.uniform(1, 2, 10)
        new = evolve_population(pop, costs, cfg, rng)
        best_half = pop[np.argsort(costs, kind="stable")[:5]]
        np.testing.assert_array_equal(new[:5], best_half)
        assert new.shape == pop.shape

    def test_too_small(self):
        with pytest.raises(ValueError):
            evolve_population(np.array([[1, 2]]), [1.0], GaConfig(), np.random.default_rng())

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 12), st.sampled_from([2, 4, 6, 10, 20]), st.floats(0, 1),
           st.sampled_from(["truncation", "roulette"]), st.integers(0, 2 ** 31))
    def test_offspring_always_valid(self, n, size, rate, selection, seed):
        cfg = GaConfig(population_size=size, mutation_rate=rate, selection=selection, rng_seed=seed)
        rng = np.random.default_rng(seed)
        pop = init_population(cfg, n, rng)
        costs = rng.uniform(1, 5, size)
        new = evolve_population(pop, costs, cfg, rng)
        assert new.shape == pop.shape
        for row in new:
            assert sorted(row) == list(range(1, n - 1))


class TestSolve:
    def test_two_points(self):
        res = solve_tsp([(0, 0), (3, 4)], GaConfig(energy_factor=2, time_factor=1))
        assert res.sequence == [0, 1]
        assert res.cost == 15.0

    def test_three_points(self):
        pts = [(0, 0), (1, 1), (2, 0)]
        res = solve_tsp(pts, GaConfig())
        assert res.sequence == [0, 1, 2]
        assert res.cost == route_cost([0, 1, 2], distance_matrix(pts), 1, 1)

    def test_best_so_far_nonincreasing(self):
        pts = np.random.default_rng(5).uniform(0, 10, (12, 2))
        res = solve_tsp(pts, GaConfig(rng_seed=3))
        best = [b for _, b, _ in res.trace]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert res.cost == route_cost(res.sequence, distance_matrix(pts), 1, 1)

    def test_deterministic(self):
        pts = np.random.default_rng(6).uniform(0, 10, (10, 2))
        a = solve_tsp(pts, GaConfig(rng_seed=9))
        b = solve_tsp(pts, GaConfig(rng_seed=9))
        assert a.sequence == b.sequence and a.trace == b.trace

    def test_roulette_mode_runs(self):
        pts = np.random.default_rng(7).uniform(0, 10, (8, 2))
        res = solve_tsp(pts, GaConfig(selection="roulette", rng_seed=1))
        assert res.cost >= brute_force_optimum(pts, 1, 1) - 1e-9

    @pytest.mark.parametrize("k", [0.5, 3.0, 7.25])
    def test_scaling_factors_keeps_sequence(self, k):
        pts = np.random.default_rng(8).uniform(0, 10, (9, 2))
        a = solve_tsp(pts, GaConfig(rng_seed=2, energy_factor=1.0, time_factor=0.5))
        b = solve_tsp(pts, GaConfig(rng_seed=2, energy_factor=k, time_factor=0.5 * k))
        assert a.sequence == b.sequence
        assert b.cost == pytest.approx(k * a.cost, rel=1e-12)

    def test_config_validation(self):
        assert GaConfig(population_size=7).validate()
        assert GaConfig(mutation_rate=1.5).validate()
        assert not GaConfig().validate()


def test_ga_matches_brute_force_small_n():
    start = time.perf_counter()
    hits = 0
    for seed in range(50):
        pts = np.random.default_rng(1000 + seed).uniform(0, 10, (8, 2))
        res = solve_tsp(pts, GaConfig(rng_seed=seed))
        opt = brute_force_optimum(pts, 1, 1)
        assert res.cost >= opt - 1e-9
        hits += res.cost <= opt + 1e-9
    assert hits >= 45
    assert time.perf_counter() - start < 60
