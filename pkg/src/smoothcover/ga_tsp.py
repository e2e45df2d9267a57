"""Genetic algorithm for the open visiting-order problem with fixed endpoints.

Index 0 is the start, index N-1 the end; individuals in the population only
carry the interior indices 1..N-2.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SequenceError(ValueError):
    pass


@dataclass
class GaConfig:
    population_size: int = 100
    max_generations: int = 200
    energy_factor: float = 1.0
    time_factor: float = 1.0
    rng_seed: int = 0
    mutation_rate: float = 0.05
    selection: str = "truncation"  # or "roulette"

    def validate(self) -> list[str]:
        errors = []
        if self.population_size < 2 or self.population_size % 2:
            errors.append("population_size must be an even number >= 2")
        if self.max_generations < 1:
            errors.append("max_generations must be >= 1")
        if self.energy_factor < 0:
            errors.append("energy_factor must be >= 0")
        if self.time_factor < 0:
            errors.append("time_factor must be >= 0")
        if not 0.0 <= self.mutation_rate <= 1.0:
            errors.append("mutation_rate must lie in [0, 1]")
        if self.selection not in ("truncation", "roulette"):
            errors.append("selection must be 'truncation' or 'roulette'")
        return errors


@dataclass
class GaResult:
    sequence: list[int]
    cost: float
    trace: list[tuple[int, float, float]] = field(default_factory=list)  # (generation, best, mean)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best_cost", "mean_cost"])
            for g, best, mean in self.trace:
                w.writerow([g, f"{best:.9g}", f"{mean:.9g}"])


def distance_matrix(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[0] < 2:
        raise ValueError("need at least two points")
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def validate_sequence(seq: Sequence[int], n: int) -> None:
    seq = list(seq)
    if len(seq) != n:
        raise SequenceError(f"sequence has {len(seq)} entries, expected {n}")
    if seq[0] != 0 or seq[-1] != n - 1:
        raise SequenceError(f"sequence must start at 0 and end at {n - 1}: {seq}")
    if sorted(seq[1:-1]) != list(range(1, n - 1)):
        raise SequenceError(f"interior of {seq} is not a permutation of 1..{n - 2}")


def route_cost(seq: Sequence[int], d: np.ndarray, energy_factor: float, time_factor: float) -> float:
    """Energy plus time cost of a route; both terms are proportional to leg length."""
    validate_sequence(seq, d.shape[0])
    energy = 0.0
    time = 0.0
    for a, b in zip(seq[:-1], seq[1:]):
        energy += energy_factor * d[a, b]
        time += time_factor * d[a, b]
    return energy + time


def _population_costs(pop: np.ndarray, d: np.ndarray, ef: float, tf: float) -> np.ndarray:
    n = d.shape[0]
    k = pop.shape[0]
    full = np.hstack([np.zeros((k, 1), dtype=int), pop, np.full((k, 1), n - 1)])
    legs = d[full[:, :-1], full[:, 1:]]
    energy = np.zeros(k)
    time = np.zeros(k)
    # column-wise accumulation keeps the same summation order as route_cost
    for c in range(legs.shape[1]):
        energy += ef * legs[:, c]
        time += tf * legs[:, c]
    return energy + time


def init_population(config: GaConfig, n_pois: int, rng: np.random.Generator | None = None) -> np.ndarray:
    if n_pois < 3:
        raise ValueError("a population needs at least one interior point (N >= 3)")
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    interior = np.arange(1, n_pois - 1)
    return np.array([rng.permutation(interior) for _ in range(config.population_size)], dtype=int)


def roulette_cumulative(costs: Sequence[float]) -> np.ndarray:
    """Cumulative selection probabilities proportional to inverse cost."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0 or np.any(~(c > 0)):
        raise ValueError("roulette selection needs strictly positive costs")
    fitness = 1.0 / c
    cum = np.cumsum(fitness / fitness.sum())
    cum[-1] = 1.0
    return np.maximum.accumulate(cum)


def repair_path(path: Sequence[int], n_interior: int) -> list[int]:
    """Replace repeated genes by the smallest interior index not yet used.

    The first occurrence of a value is kept; later repeats are overwritten in
    left-to-right order.
    """
    path = [int(v) for v in path]
    if len(path) != n_interior:
        raise SequenceError(f"path has {len(path)} genes, expected {n_interior}")
    for v in path:
        if not 1 <= v <= n_interior:
            raise SequenceError(f"gene {v} outside interior range 1..{n_interior}")
    seen = set()
    dup_positions = []
    for i, v in enumerate(path):
        if v in seen:
            dup_positions.append(i)
        else:
            seen.add(v)
    unused = sorted(set(range(1, n_interior + 1)) - seen)
    for i, v in zip(dup_positions, unused):
        path[i] = v
    return path


def crossover(a: Sequence[int], b: Sequence[int], cut: int) -> tuple[list[int], list[int]]:
    n = len(a)
    c1 = repair_path(list(a[:cut]) + list(b[cut:]), n)
    c2 = repair_path(list(b[:cut]) + list(a[cut:]), n)
    return c1, c2


def _mutate(child: list[int], rate: float, rng: np.random.Generator) -> list[int]:
    n = len(child)
    if rate <= 0 or n < 2:
        return child
    for i in range(n):
        if rng.random() < rate:
            j = int(rng.integers(n))
            child[i], child[j] = child[j], child[i]
    return child


def evolve_population(population: np.ndarray, costs: Sequence[float], config: GaConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """Keep the cheaper half, refill with repaired one-point crossover children."""
    pop = np.asarray(population, dtype=int)
    size = pop.shape[0]
    if size < 2:
        raise ValueError("population must hold at least two individuals")
    costs = np.asarray(costs, dtype=float)
    n_interior = pop.shape[1]
    order = np.argsort(costs, kind="stable")
    survivors = pop[order[: size // 2]]
    new = [list(ind) for ind in survivors]

    if config.selection == "roulette":
        cum = roulette_cumulative(costs)
        parents = pop

        def pick():
            return int(min(np.searchsorted(cum, rng.random(), side="right"), size - 1))
    else:
        parents = survivors

        def pick():
            return int(rng.integers(len(survivors)))

    if n_interior < 2 or len(parents) < 2:
        # crossover is meaningless here; clone the survivors
        while len(new) < size:
            new.append(list(survivors[len(new) % len(survivors)]))
        return np.array(new[:size], dtype=int)

    while len(new) < size:
        i, j = pick(), pick()
        if i == j:
            continue
        cut = int(rng.integers(1, n_interior))
        c1, c2 = crossover(parents[i], parents[j], cut)
        new.append(_mutate(c1, config.mutation_rate, rng))
        new.append(_mutate(c2, config.mutation_rate, rng))
    return np.array(new[:size], dtype=int)


def solve_tsp(points, config: GaConfig) -> GaResult:
    """Best visiting order found over all generations and its cost."""
    errors = config.validate()
    if errors:
        raise ValueError("; ".join(errors))
    d = distance_matrix(points)
    n = d.shape[0]
    ef, tf = config.energy_factor, config.time_factor
    if n == 2:
        seq = [0, 1]
        return GaResult(seq, route_cost(seq, d, ef, tf))

    rng = np.random.default_rng(config.rng_seed)
    pop = init_population(config, n, rng)
    best = [0, *pop[0].tolist(), n - 1]
    best_cost = route_cost(best, d, ef, tf)
    trace = []
    for gen in range(config.max_generations):
        costs = _population_costs(pop, d, ef, tf)
        idx = int(np.argmin(costs))
        if costs[idx] < best_cost:
            best_cost = float(costs[idx])
            best = [0, *pop[idx].tolist(), n - 1]
        trace.append((gen, best_cost, float(costs.mean())))
        pop = evolve_population(pop, costs, config, rng)
    return GaResult(best, route_cost(best, d, ef, tf), trace)
