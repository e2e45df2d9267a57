"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line and the terminal summary repeats them.
"""
import math
import time

import numpy as np
import pytest

from smoothcover.bspline import SplineTrajectory, basis_weights, evaluate_from_left, evaluate_many
from smoothcover.ga_tsp import GaConfig, solve_tsp
from smoothcover.obstacle_map import OccupancyGrid, WorldBounds, compute_edt
from smoothcover.quad_sim import (
    VehicleParams, _fast_derivative, mix_motors, rk4_step, wrench_to_body,
)
from smoothcover.traj_opt import jacobian

from _support import fd_jacobian, jacobian_mismatch, random_field, random_problem
from test_ga_tsp import brute_force_optimum
from test_obstacle_map import brute_force_edt

ARTIFACTS = ("ga_trace.csv", "opt_trace.csv", "planned_traj.csv", "state_log.csv", "report.json")


def report(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


@pytest.mark.criterion(1, "GA matches brute force on >= 90% of 50 instances with N = 8, never below, < 60 s")
def test_ga_optimality_small_n():
    start = time.perf_counter()
    hits = 0
    below = 0
    for seed in range(50):
        pts = np.random.default_rng(20_000 + seed).uniform(0, 20, (8, 2))
        res = solve_tsp(pts, GaConfig(rng_seed=seed))
        opt = brute_force_optimum(pts, 1.0, 1.0)
        below += res.cost < opt - 1e-9
        hits += res.cost <= opt + 1e-9
    took = time.perf_counter() - start
    ok = hits >= 45 and below == 0 and took < 60
    assert report(1, ok, f"{hits}/50 optimal, {below} below optimum, {took:.1f} s")


@pytest.mark.criterion(2, "EDT equals the brute-force oracle on 100 random grids up to 64x64, < 30 s")
def test_edt_exact():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatched = 0
    for _ in range(100):
        nx, ny = (int(v) for v in rng.integers(1, 65, 2))
        step = float(rng.choice([0.05, 0.1, 0.25, 1.0]))
        cells = rng.random((nx, ny)) < rng.uniform(0.002, 0.2)
        cells[rng.integers(nx), rng.integers(ny)] = True
        grid = OccupancyGrid(cells, step, (0.0, 0.0), WorldBounds(0, nx * step, 0, ny * step))
        mismatched += not np.array_equal(compute_edt(grid).distances, brute_force_edt(cells, step))
    took = time.perf_counter() - start
    ok = mismatched == 0 and took < 30
    assert report(2, ok, f"{mismatched} mismatching grids, {took:.1f} s")


@pytest.mark.criterion(3, "spline partition of unity, C2 joins (1e-9) and FD derivatives (1e-5 rel) on 100 splines")
def test_spline_correctness():
    rng = np.random.default_rng(33)
    worst_unity = worst_join = worst_fd = 0.0
    h = 1e-6
    for _ in range(100):
        m = int(rng.integers(4, 16))
        traj = SplineTrajectory(rng.uniform(-10, 10, (m, 2)), float(rng.uniform(0.1, 3.0)))
        u = rng.uniform(0, 1, 20)
        worst_unity = max(worst_unity, np.abs(basis_weights(u).sum(axis=1) - 1).max())
        for i in range(traj.n_segments - 1):
            t = (i + 1) * traj.knot_interval
            for k in range(3):
                gap = np.abs(evaluate_from_left(traj, i, k) - evaluate_many(traj, [t], k)[0]).max()
                worst_join = max(worst_join, gap)
        # interior points of segments so the stencil never straddles a knot
        seg = rng.integers(0, traj.n_segments, 20)
        times = (seg + rng.uniform(0.05, 0.95, 20)) * traj.knot_interval
        dt = h * traj.knot_interval
        for k in (1, 2, 3):
            fd = (evaluate_many(traj, times + dt, k - 1) - evaluate_many(traj, times - dt, k - 1)) / (2 * dt)
            exact = evaluate_many(traj, times, k)
            scale = np.maximum(np.linalg.norm(exact, axis=1), 1e-3 * np.abs(exact).max())
            worst_fd = max(worst_fd, (np.linalg.norm(fd - exact, axis=1) / scale).max())
    ok = worst_unity <= 1e-12 and worst_join <= 1e-9 and worst_fd <= 1e-5
    assert report(3, ok, f"unity {worst_unity:.1e}, join {worst_join:.1e}, FD rel {worst_fd:.1e}")


@pytest.mark.criterion(4, "Jacobian matches central FD on 20 problems; demo cost trace strictly decreasing")
def test_gradient_check_and_monotone_trace(demo_run):
    rng = np.random.default_rng(44)
    bad_problems = 0
    for i in range(20):
        field = random_field(rng)
        p = random_problem(rng, field, shape="hinge" if i % 2 else "cubic")
        x = p.x0()
        x[-1] = rng.uniform(-0.5, 0.5)
        J = jacobian(p, x).toarray()
        bad_problems += len(jacobian_mismatch(J, fd_jacobian(p, x, 1e-6))) > 0
    trace = np.asarray(demo_run.report.optimizer["cost_trace"])
    increases = int(np.sum(np.diff(trace) >= 0))
    ok = bad_problems == 0 and increases == 0
    assert report(4, ok, f"{bad_problems}/20 problems off tolerance, "
                         f"{len(trace)} accepted costs with {increases} non-decreases")


@pytest.mark.criterion(5, "demo covers every POI, clearance >= d_safe - step, optimizer < 10 s")
def test_demo_coverage_and_clearance(demo_run):
    sc = demo_run.scenario
    rep = demo_run.report
    cov = rep.coverage
    floor = sc.obstacle_penalty.safe_distance - sc.step
    opt_time = rep.timings["optimize"]
    ok = (len(sc.pois) >= 8 and len(sc.obstacles) >= 6 and rep.optimizer["converged"]
          and max(cov["poi_miss_distance"]) <= sc.coverage_radius
          and cov["min_clearance"] >= floor and opt_time < 10)
    assert report(5, ok, f"max miss {max(cov['poi_miss_distance']):.3f} m <= {sc.coverage_radius} m, "
                         f"clearance {cov['min_clearance']:.3f} m >= {floor:.2f} m, optimizer {opt_time:.1f} s")


@pytest.mark.criterion(6, "demo flight: attitude variation < 20 deg, altitude error < 0.05 m")
def test_demo_attitude_and_altitude(demo_run):
    sim = demo_run.report.simulation
    peak = max(sim["max_abs_attitude_deg"].values())
    spread = max(sim["attitude_range_deg"].values())
    alt = sim["max_altitude_error"]
    ok = not sim["aborted"] and peak < 20 and spread < 20 and alt < 0.05
    assert report(6, ok, f"max |angle| {peak:.2f} deg, peak-to-peak {spread:.2f} deg, altitude error {alt:.2e} m")


@pytest.mark.criterion(7, "executed velocity has no steps: max |dv| per 1 ms < a * dt")
def test_demo_smooth_velocity(demo_run):
    sc = demo_run.scenario
    log = demo_run.report.state_log
    dv = np.linalg.norm(np.diff(log.inertial_velocity(), axis=0), axis=1).max()
    limit = sc.simulation.acceleration_cap * sc.simulation.dt
    ok = sc.simulation.dt == 1e-3 and dv < limit
    assert report(7, ok, f"max |dv| {dv:.2e} m/s < {limit:.2e} m/s (a = {sc.simulation.acceleration_cap} m/s^2)")


@pytest.mark.criterion(8, "hover drift < 1e-6 over 10 s; hover rotor speed 4480 +- 1 rpm")
def test_hover_physics():
    params = VehicleParams()
    mix = mix_motors([params.mass * params.gravity, 0, 0, 0], params)
    wrench = wrench_to_body(mix.applied).tolist()
    s0 = np.zeros(12)
    s0[2] = -5.0
    s = s0.copy()
    for _ in range(10_000):
        s = rk4_step(lambda y: _fast_derivative(y, wrench, params), s, 1e-3)
    drift = np.abs(s - s0).max()
    rpm_err = np.abs(mix.rpm - 4480.0).max()
    ok = drift < 1e-6 and rpm_err <= 1.0 and math.isclose(mix.rpm.min(), mix.rpm.max())
    assert report(8, ok, f"drift {drift:.1e}, rotor speed {mix.rpm[0]:.3f} rpm")


@pytest.mark.criterion(9, "two demo runs produce byte-identical CSV and JSON artifacts")
def test_determinism(demo_run, demo_rerun):
    differing = [n for n in ARTIFACTS if (demo_run.out / n).read_bytes() != (demo_rerun.out / n).read_bytes()]
    ok = not differing
    assert report(9, ok, f"{len(ARTIFACTS) - len(differing)}/{len(ARTIFACTS)} artifacts identical"
                         + (f", differing: {differing}" if differing else ""))
