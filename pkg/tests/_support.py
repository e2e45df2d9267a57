"""Shared builders and oracles for the test modules."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from smoothcover.bspline import init_from_waypoints
from smoothcover.obstacle_map import Obstacle, WorldBounds, build_occupancy, compute_edt
from smoothcover.traj_opt import CostWeights, ObstaclePenaltyConfig, OptProblem, assemble

DEMO = Path(__file__).resolve().parents[1] / "src" / "smoothcover" / "scenarios" / "demo.json"


def random_field(rng, size=10.0, step=0.1, n_obs=4):
    bounds = WorldBounds(0.0, size, 0.0, size)
    obs = [Obstacle(tuple(rng.uniform(1, size - 1, 2)), float(rng.uniform(0.3, 1.0))) for _ in range(n_obs)]
    return compute_edt(build_occupancy(obs, bounds, step))


def random_problem(rng, field=None, shape="hinge", n_pois=3):
    """A problem whose control points wander near obstacles, with a random time scale."""
    field = field if field is not None else random_field(rng)
    way = rng.uniform(1.0, 9.0, (n_pois + 2, 2))
    init = init_from_waypoints(way, float(rng.uniform(0.3, 1.0)), spacing=1.0)
    init.control_points = init.control_points + rng.normal(0, 0.2, init.control_points.shape)
    weights = CostWeights(*rng.uniform(0.1, 10.0, 5))
    return OptProblem(initial=init, field=field, pois=way[1:-1], coverage_radius=1.0,
                      start=way[0], end=way[-1], weights=weights,
                      penalty=ObstaclePenaltyConfig(safe_distance=float(rng.uniform(0.5, 1.5)), shape=shape))


def fd_jacobian(problem, x, h=1e-6):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((assemble(problem, x + e).vector - assemble(problem, x - e).vector) / (2 * h))
    return np.stack(cols, axis=1)


def jacobian_mismatch(J, fd):
    """Entries violating max(1e-4 absolute, 1e-3 relative)."""
    tol = np.maximum(1e-4, 1e-3 * np.abs(fd))
    return np.argwhere(np.abs(J - fd) > tol)
