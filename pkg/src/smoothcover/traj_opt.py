"""Least-squares refinement of a visiting-order polyline into a smooth, safe spline.

Decision vector ``x = [P00, P01, P10, P11, ..., sigma]``: control points
flattened row by row, then the log time scale.  The effective knot interval is
``knot_interval * exp(sigma)``.  Every residual block carries the square root
of its weight so that the cost ``0.5 * |r|^2`` is linear in the weights.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bspline import SplineTrajectory, basis_weights, evaluate_many, sample_times
from .obstacle_map import DistanceField

BLOCKS = ("smoothness", "boundary", "obstacle", "time", "poi")


class NumericalError(FloatingPointError):
    pass


class AssignmentError(ValueError):
    pass


class InitializationError(RuntimeError):
    pass


@dataclass
class CostWeights:
    w_s: float = 1.0
    w_b: float = 100.0
    w_e: float = 50.0
    w_t: float = 0.1
    w_p: float = 100.0

    def validate(self) -> list[str]:
        vals = asdict(self)
        errors = [f"{k} must be >= 0" for k, v in vals.items() if not v >= 0]
        if not any(v > 0 for v in vals.values()):
            errors.append("at least one weight must be positive")
        return errors

    def scaled(self, k: float) -> "CostWeights":
        return CostWeights(**{n: v * k for n, v in asdict(self).items()})


@dataclass
class ObstaclePenaltyConfig:
    safe_distance: float = 0.8
    shape: str = "hinge"  # "hinge" or "cubic"

    def validate(self) -> list[str]:
        errors = []
        if not self.safe_distance > 0:
            errors.append("safe_distance must be > 0")
        if self.shape not in ("hinge", "cubic"):
            errors.append("shape must be 'hinge' or 'cubic'")
        return errors

    def penalty(self, depth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Penalty value and slope for penetration depth ``d_safe - d``."""
        x = np.maximum(depth, 0.0)
        if self.shape == "cubic":
            ds2 = self.safe_distance ** 2
            return x ** 3 / ds2, 3 * x ** 2 / ds2
        return x, (depth > 0).astype(float)


@dataclass
class SolverOptions:
    max_iterations: int = 1000
    tolerance: float = 1e-8
    damping_init: float = 1e-3
    damping_cap: float = 1e12
    max_outer: int = 10

    def validate(self) -> list[str]:
        errors = []
        if self.max_iterations < 1:
            errors.append("max_iterations must be >= 1")
        if not self.tolerance > 0:
            errors.append("tolerance must be > 0")
        if not 0 < self.damping_init < self.damping_cap:
            errors.append("damping_init must lie in (0, damping_cap)")
        if self.max_outer < 1:
            errors.append("max_outer must be >= 1")
        return errors


@dataclass
class OptProblem:
    initial: SplineTrajectory
    field: DistanceField
    pois: np.ndarray
    coverage_radius: float
    start: np.ndarray
    end: np.ndarray
    start_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    end_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    weights: CostWeights = field(default_factory=CostWeights)
    penalty: ObstaclePenaltyConfig = field(default_factory=ObstaclePenaltyConfig)
    obstacle_samples_per_segment: int = 4
    assignment_samples_per_segment: int = 20
    monotone_assignment: bool = True
    # parameter values (s in [0, n_segments]) binding each POI to the curve
    assignment: Optional[np.ndarray] = None

    def __post_init__(self):
        self.pois = np.asarray(self.pois, dtype=float).reshape(-1, 2)
        self.start = np.asarray(self.start, dtype=float)
        self.end = np.asarray(self.end, dtype=float)
        self.start_velocity = np.asarray(self.start_velocity, dtype=float)
        self.end_velocity = np.asarray(self.end_velocity, dtype=float)
        if not self.coverage_radius > 0:
            raise ValueError("coverage_radius must be positive")
        if self.assignment is None:
            self.assignment = refresh_assignment(self.initial, self.pois,
                                                 self.assignment_samples_per_segment,
                                                 self.monotone_assignment)

    @property
    def n_ctrl(self) -> int:
        return self.initial.control_points.shape[0]

    @property
    def n_segments(self) -> int:
        return self.n_ctrl - 3

    def x0(self) -> np.ndarray:
        return pack(self.initial.control_points, 0.0)

    def trajectory(self, x: np.ndarray) -> SplineTrajectory:
        P, sigma = unpack(x)
        return SplineTrajectory(P, self.initial.knot_interval * math.exp(sigma))

    def obstacle_params(self) -> np.ndarray:
        n = self.n_segments * self.obstacle_samples_per_segment
        return np.linspace(0.0, self.n_segments, n + 1)


@dataclass
class ResidualVector:
    blocks: dict  # block name -> 1D array

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.blocks[b] for b in BLOCKS])

    @property
    def cost(self) -> float:
        return 0.5 * float(sum(np.dot(v, v) for v in self.blocks.values()))

    def block_costs(self) -> dict:
        return {b: 0.5 * float(np.dot(v, v)) for b, v in self.blocks.items()}


@dataclass
class SolveReport:
    iterations: int
    termination: str
    cost_trace: list
    block_costs: dict
    final_cost: float
    time_scale: float
    duration: float
    min_clearance: float
    poi_miss_distances: list
    boundary_violations: int

    @property
    def converged(self) -> bool:
        return self.termination != "max_iterations"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["converged"] = self.converged
        return d

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "cost"])
            for i, c in enumerate(self.cost_trace):
                w.writerow([i, f"{c:.12g}"])


def pack(control_points: np.ndarray, sigma: float) -> np.ndarray:
    return np.append(np.asarray(control_points, dtype=float).ravel(), sigma)


def unpack(x: np.ndarray) -> tuple[np.ndarray, float]:
    return x[:-1].reshape(-1, 2), float(x[-1])


# -- sparse helpers -----------------------------------------------------------

def _sampling_sparse(n_ctrl: int, s: np.ndarray, order: int = 0) -> sp.csr_matrix:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    seg = np.clip(np.floor(s).astype(int), 0, n_ctrl - 4)
    w = basis_weights(s - seg, order)
    rows = np.repeat(np.arange(s.size), 4)
    cols = (seg[:, None] + np.arange(4)[None, :]).ravel()
    return sp.csr_matrix((w.ravel(), (rows, cols)), shape=(s.size, n_ctrl))


def _difference_sparse(n_ctrl: int, order: int) -> sp.csr_matrix:
    coeffs = {2: [1.0, -2.0, 1.0], 3: [-1.0, 3.0, -3.0, 1.0]}[order]
    n = n_ctrl - order
    diags = [np.full(n, c) for c in coeffs]
    return sp.diags(diags, list(range(order + 1)), shape=(n, n_ctrl), format="csr")


def _points(mat: sp.csr_matrix, P: np.ndarray) -> np.ndarray:
    return np.asarray(mat @ P)


# -- residual blocks ----------------------------------------------------------

def smoothness_residuals(traj: SplineTrajectory, w_s: float) -> np.ndarray:
    """Scaled acceleration and jerk control points, flattened."""
    if w_s == 0:
        return np.zeros(0)
    P = traj.control_points
    dt = traj.knot_interval
    acc = np.diff(P, 2, axis=0) / dt ** 2
    jerk = np.diff(P, 3, axis=0) / dt ** 3
    return math.sqrt(w_s) * np.concatenate([acc.ravel(), jerk.ravel()])


def boundary_residuals(traj: SplineTrajectory, start, end, w_b: float,
                       start_velocity=(0.0, 0.0), end_velocity=(0.0, 0.0)) -> np.ndarray:
    """Start/end position and velocity mismatches: [p0, pT, v0, vT]."""
    if w_b == 0:
        return np.zeros(0)
    P = traj.control_points
    dt = traj.knot_interval
    w0 = basis_weights(0.0)[0]
    w1 = basis_weights(1.0)[0]
    d0 = basis_weights(0.0, 1)[0]
    d1 = basis_weights(1.0, 1)[0]
    rows = [
        w0 @ P[:4] - np.asarray(start, dtype=float),
        w1 @ P[-4:] - np.asarray(end, dtype=float),
        d0 @ P[:4] / dt - np.asarray(start_velocity, dtype=float),
        d1 @ P[-4:] / dt - np.asarray(end_velocity, dtype=float),
    ]
    return math.sqrt(w_b) * np.concatenate(rows)


def obstacle_residuals(traj: SplineTrajectory, field: DistanceField, cfg: ObstaclePenaltyConfig,
                       w_e: float, samples_per_segment: int = 4) -> np.ndarray:
    """Safety-margin penalty at uniformly spaced curve samples."""
    if w_e == 0:
        return np.zeros(0)
    n = traj.n_segments * samples_per_segment
    s = np.linspace(0.0, traj.n_segments, n + 1)
    pts = _points(_sampling_sparse(traj.control_points.shape[0], s), traj.control_points)
    d, _, _ = field.sample(pts)
    val, _ = cfg.penalty(cfg.safe_distance - d)
    return math.sqrt(w_e) * val


def poi_residuals(traj: SplineTrajectory, pois, times, w_p: float) -> np.ndarray:
    """Offset from each POI to the curve point at its assigned time."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise AssignmentError("POI assignment times must be nondecreasing in visiting order")
    if w_p == 0:
        return np.zeros(0)
    pts = evaluate_many(traj, times) if times.size else np.zeros((0, 2))
    return math.sqrt(w_p) * (pts - np.asarray(pois, dtype=float).reshape(-1, 2)).ravel()


def time_residual(traj: SplineTrajectory, sigma: float, w_t: float) -> np.ndarray:
    """Total duration under time scale ``exp(sigma)`` applied to ``traj``."""
    if w_t == 0:
        return np.zeros(0)
    return np.array([math.sqrt(w_t) * traj.duration * math.exp(sigma)])


def refresh_assignment(traj: SplineTrajectory, pois, per_segment: int = 20,
                       monotone: bool = True) -> np.ndarray:
    """Curve parameters closest to each POI on a uniform parameter grid.

    With ``monotone`` the parameters are nondecreasing in POI order and
    minimize the summed squared distance (dynamic program over the grid).
    Returns parameter values ``s`` in [0, n_segments]; multiply by the knot
    interval to get times.
    """
    pois = np.asarray(pois, dtype=float).reshape(-1, 2)
    grid = np.linspace(0.0, traj.n_segments, traj.n_segments * per_segment + 1)
    if pois.shape[0] == 0:
        return np.zeros(0)
    pts = _points(_sampling_sparse(traj.control_points.shape[0], grid), traj.control_points)
    d2 = ((pois[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)  # (K, G)
    if not monotone:
        return grid[np.argmin(d2, axis=1)]
    k, g = d2.shape
    acc = d2[0].copy()
    back = np.zeros((k, g), dtype=int)
    for i in range(1, k):
        best_prev = np.minimum.accumulate(acc)
        arg_prev = _running_argmin(acc)
        acc = d2[i] + best_prev
        back[i] = arg_prev
    idx = np.empty(k, dtype=int)
    idx[-1] = int(np.argmin(acc))
    for i in range(k - 1, 0, -1):
        idx[i - 1] = back[i, idx[i]]
    return grid[idx]


def _running_argmin(a: np.ndarray) -> np.ndarray:
    out = np.empty(a.size, dtype=int)
    best = 0
    for i in range(a.size):
        if a[i] < a[best]:
            best = i
        out[i] = best
    return out


# -- assembly -----------------------------------------------------------------

class _Operators:
    """Sparse linear maps that only depend on the problem dimensions."""

    def __init__(self, problem: OptProblem):
        m = problem.n_ctrl
        self.obs_params = problem.obstacle_params()
        self.obs = _sampling_sparse(m, self.obs_params)
        self.d2 = _difference_sparse(m, 2)
        self.d3 = _difference_sparse(m, 3)
        self.key = (m, problem.obstacle_samples_per_segment)


def _ops(problem: OptProblem) -> _Operators:
    ops = getattr(problem, "_ops_cache", None)
    if ops is None or ops.key != (problem.n_ctrl, problem.obstacle_samples_per_segment):
        ops = _Operators(problem)
        problem._ops_cache = ops
    return ops


def assemble(problem: OptProblem, x: Optional[np.ndarray] = None) -> ResidualVector:
    if x is None:
        x = problem.x0()
    sigma = float(x[-1])
    try:
        traj = problem.trajectory(x)
        math.exp(sigma)
    except OverflowError as exc:
        raise NumericalError(f"time scale exp({sigma:g}) overflows the time residual block") from exc
    w = problem.weights
    blocks = {
        "smoothness": smoothness_residuals(traj, w.w_s),
        "boundary": boundary_residuals(traj, problem.start, problem.end, w.w_b,
                                       problem.start_velocity, problem.end_velocity),
        "obstacle": obstacle_residuals(traj, problem.field, problem.penalty, w.w_e,
                                       problem.obstacle_samples_per_segment),
        "time": time_residual(problem.initial, sigma, w.w_t),
        "poi": poi_residuals(traj, problem.pois, problem.assignment * traj.knot_interval, w.w_p),
    }
    for name, v in blocks.items():
        if not np.all(np.isfinite(v)):
            raise NumericalError(f"non-finite values in the {name} residual block")
    return ResidualVector(blocks)


def _kron2(mat) -> sp.csr_matrix:
    return sp.kron(mat, sp.identity(2), format="csr")


def jacobian(problem: OptProblem, x: np.ndarray) -> sp.csr_matrix:
    """Sparse derivative of the stacked residual with respect to ``x``."""
    ops = _ops(problem)
    P, sigma = unpack(x)
    dt = problem.initial.knot_interval * math.exp(sigma)
    w = problem.weights
    m = problem.n_ctrl
    parts = []

    def with_sigma(block, col):
        col = np.asarray(col, dtype=float).reshape(-1, 1)
        parts.append(sp.hstack([block, sp.csr_matrix(col)], format="csr"))

    if w.w_s:
        k = math.sqrt(w.w_s)
        acc = k * _kron2(ops.d2) / dt ** 2
        jerk = k * _kron2(ops.d3) / dt ** 3
        lin = sp.vstack([acc, jerk], format="csr")
        r = lin @ P.ravel()
        n_acc = acc.shape[0]
        dsig = np.concatenate([-2 * r[:n_acc], -3 * r[n_acc:]])
        with_sigma(lin, dsig)
    if w.w_b:
        k = math.sqrt(w.w_b)
        rows = np.zeros((4, m))
        rows[0, :4] = basis_weights(0.0)[0]
        rows[1, -4:] = basis_weights(1.0)[0]
        rows[2, :4] = basis_weights(0.0, 1)[0] / dt
        rows[3, -4:] = basis_weights(1.0, 1)[0] / dt
        lin = k * _kron2(sp.csr_matrix(rows))
        vel = np.asarray(lin[4:] @ P.ravel()).ravel()
        dsig = np.concatenate([np.zeros(4), -vel])
        with_sigma(lin, dsig)
    if w.w_e:
        pts = _points(ops.obs, P)
        d, grad, _ = problem.field.sample(pts)
        _, slope = problem.penalty.penalty(problem.penalty.safe_distance - d)
        coef = -math.sqrt(w.w_e) * slope
        gx = sp.diags(coef * grad[:, 0]) @ ops.obs
        gy = sp.diags(coef * grad[:, 1]) @ ops.obs
        lin = sp.kron(gx, sp.csr_matrix([[1.0, 0.0]])) + sp.kron(gy, sp.csr_matrix([[0.0, 1.0]]))
        with_sigma(lin.tocsr(), np.zeros(len(ops.obs_params)))
    if w.w_t:
        val = math.sqrt(w.w_t) * problem.initial.duration * math.exp(sigma)
        with_sigma(sp.csr_matrix((1, 2 * m)), [val])
    if w.w_p and problem.pois.shape[0]:
        samp = _sampling_sparse(m, problem.assignment)
        lin = math.sqrt(w.w_p) * _kron2(samp)
        with_sigma(lin, np.zeros(lin.shape[0]))
    if not parts:
        return sp.csr_matrix((0, 2 * m + 1))
    return sp.vstack(parts, format="csr")


# -- diagnostics --------------------------------------------------------------

def min_clearance(traj: SplineTrajectory, field: DistanceField, rate_hz: float = 100.0) -> float:
    pts = evaluate_many(traj, sample_times(traj, rate_hz))
    d, _, _ = field.sample(pts)
    return float(d.min())


def poi_miss_distances(traj: SplineTrajectory, pois, per_segment: int = 200) -> np.ndarray:
    pois = np.asarray(pois, dtype=float).reshape(-1, 2)
    s = np.linspace(0.0, traj.n_segments, traj.n_segments * per_segment + 1)
    pts = _points(_sampling_sparse(traj.control_points.shape[0], s), traj.control_points)
    if pois.shape[0] == 0:
        return np.zeros(0)
    return np.sqrt(((pois[:, None, :] - pts[None, :, :]) ** 2).sum(-1).min(axis=1))


# -- solver -------------------------------------------------------------------

def _lm_step(J: sp.csr_matrix, r: np.ndarray, mu: float) -> Optional[np.ndarray]:
    A = (J.T @ J).tocsc()
    g = J.T @ r
    diag = A.diagonal()
    scale = diag + 1e-9 * max(float(diag.max(initial=0.0)), 1.0)
    try:
        step = spla.spsolve(A + mu * sp.diags(scale, format="csc"), -g)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(step)):
        return None
    return step


def _inner_lm(problem: OptProblem, x: np.ndarray, opts: SolverOptions, trace: list,
              budget: int) -> tuple[np.ndarray, str, int]:
    res = assemble(problem, x)
    cost = res.cost
    mu = opts.damping_init
    it = 0
    while it < budget:
        r = res.vector
        J = jacobian(problem, x)
        g = J.T @ r
        if np.linalg.norm(g, np.inf) < opts.tolerance:
            return x, "gradient", it
        it += 1
        while True:
            step = _lm_step(J, r, mu)
            if step is not None:
                x_new = x + step
                try:
                    res_new = assemble(problem, x_new)
                    cost_new = res_new.cost
                except NumericalError:
                    cost_new = math.inf
                if cost_new < cost:
                    break
            mu *= 2.0
            if mu > opts.damping_cap:
                return x, "damping_cap", it
        rel = (cost - cost_new) / max(cost, 1e-300)
        x, res, cost = x_new, res_new, cost_new
        trace.append(cost)
        mu = max(mu / 3.0, 1e-15)
        if rel < opts.tolerance:
            return x, "cost_decrease", it
        if np.linalg.norm(step) < opts.tolerance * (np.linalg.norm(x) + opts.tolerance):
            return x, "step", it
    return x, "max_iterations", it


def solve(problem: OptProblem, options: Optional[SolverOptions] = None) -> tuple[SplineTrajectory, SolveReport]:
    """Damped Gauss-Newton with periodic refresh of the POI-to-curve binding.

    The binding is held fixed inside each Levenberg-Marquardt run and only
    replaced when the replacement does not raise the cost, so the recorded
    cost trace never increases.
    """
    opts = options or SolverOptions()
    x = problem.x0()
    try:
        res = assemble(problem, x)
    except NumericalError as exc:
        raise InitializationError(str(exc)) from exc
    if not math.isfinite(res.cost):
        raise InitializationError("initial cost is not finite")
    trace = [res.cost]
    total = 0
    reason = "max_iterations"
    for outer in range(opts.max_outer):
        x, reason, used = _inner_lm(problem, x, opts, trace, opts.max_iterations - total)
        total += used
        if reason == "max_iterations" or total >= opts.max_iterations:
            break
        old = problem.assignment
        cost_old = assemble(problem, x).cost
        problem.assignment = refresh_assignment(problem.trajectory(x), problem.pois,
                                                problem.assignment_samples_per_segment,
                                                problem.monotone_assignment)
        if np.array_equal(old, problem.assignment):
            break
        cost_new = assemble(problem, x).cost
        if cost_new > cost_old:
            problem.assignment = old
            break
        if cost_new < cost_old:
            trace.append(cost_new)

    traj = problem.trajectory(x)
    final = assemble(problem, x)
    pts = evaluate_many(traj, sample_times(traj))
    report = SolveReport(
        iterations=total,
        termination=reason,
        cost_trace=[float(c) for c in trace],
        block_costs=final.block_costs(),
        final_cost=final.cost,
        time_scale=math.exp(float(x[-1])),
        duration=traj.duration,
        min_clearance=min_clearance(traj, problem.field),
        poi_miss_distances=[float(v) for v in poi_miss_distances(traj, problem.pois)],
        boundary_violations=int((~problem.field.contains(pts)).sum()),
    )
    return traj, report
