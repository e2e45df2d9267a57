"""Uniform cubic B-splines in the plane.

A trajectory with M control points has M-3 segments of duration ``knot_interval``.
Segment ``i`` is driven by control points ``i..i+3``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

# rows: coefficients of 1, u, u^2, u^3
BASIS = np.array([
    [1.0, 4.0, 1.0, 0.0],
    [-3.0, 0.0, 3.0, 0.0],
    [3.0, -6.0, 3.0, 0.0],
    [-1.0, 3.0, -3.0, 1.0],
]) / 6.0


class DomainError(ValueError):
    pass


@dataclass
class CurveSample:
    time: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray


@dataclass
class SplineTrajectory:
    control_points: np.ndarray  # (M, 2)
    knot_interval: float

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=float).reshape(-1, 2)
        if self.control_points.shape[0] < 4:
            raise ValueError("a cubic B-spline needs at least 4 control points")
        if not self.knot_interval > 0:
            raise ValueError("knot_interval must be positive")

    @property
    def n_segments(self) -> int:
        return self.control_points.shape[0] - 3

    @property
    def duration(self) -> float:
        return self.n_segments * self.knot_interval

    def copy(self) -> "SplineTrajectory":
        return SplineTrajectory(self.control_points.copy(), self.knot_interval)

    def transformed(self, rotation, translation) -> "SplineTrajectory":
        rot = np.asarray(rotation, dtype=float)
        return SplineTrajectory(self.control_points @ rot.T + np.asarray(translation, dtype=float),
                                self.knot_interval)


def basis_weights(u, order: int = 0) -> np.ndarray:
    """Blending weights of the 4 active control points (and derivatives in u).

    ``u`` may be an array; the result has shape (len(u), 4).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    ones = np.ones_like(u)
    zeros = np.zeros_like(u)
    if order == 0:
        powers = [ones, u, u * u, u ** 3]
    elif order == 1:
        powers = [zeros, ones, 2 * u, 3 * u * u]
    elif order == 2:
        powers = [zeros, zeros, 2 * ones, 6 * u]
    elif order == 3:
        powers = [zeros, zeros, zeros, 6 * ones]
    else:
        raise ValueError(f"unsupported derivative order {order}")
    return np.stack(powers, axis=1) @ BASIS


def locate(n_segments: int, s):
    """Split a global parameter ``s`` in [0, n_segments] into segment and local u."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    seg = np.minimum(np.floor(s).astype(int), n_segments - 1)
    seg = np.maximum(seg, 0)
    return seg, s - seg


def sampling_matrix(n_ctrl: int, s, order: int = 0) -> np.ndarray:
    """Dense (len(s), n_ctrl) matrix mapping control points to curve values.

    Derivatives are with respect to the global parameter (not time).
    """
    seg, u = locate(n_ctrl - 3, s)
    w = basis_weights(u, order)
    mat = np.zeros((seg.size, n_ctrl))
    rows = np.arange(seg.size)
    for k in range(4):
        mat[rows, seg + k] += w[:, k]
    return mat


def evaluate_many(traj: SplineTrajectory, times, order: int = 0) -> np.ndarray:
    """Position (or a time derivative) at an array of times, shape (n, 2)."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    dt = traj.knot_interval
    tol = 1e-9 * max(1.0, traj.duration)
    if np.any(t < -tol) or np.any(t > traj.duration + tol):
        raise DomainError(f"time outside curve domain [0, {traj.duration}]")
    s = np.clip(t / dt, 0.0, traj.n_segments)
    seg, u = locate(traj.n_segments, s)
    w = basis_weights(u, order)
    P = traj.control_points
    idx = seg[:, None] + np.arange(4)[None, :]
    out = np.einsum("nk,nkd->nd", w, P[idx])
    return out / dt ** order


def evaluate(traj: SplineTrajectory, t: float) -> CurveSample:
    t = float(t)
    vals = [evaluate_many(traj, [t], k)[0] for k in range(4)]
    return CurveSample(t, *vals)


def evaluate_from_left(traj: SplineTrajectory, segment_end: int, order: int = 0) -> np.ndarray:
    """Value at the end (u=1) of a segment, i.e. the left limit at a knot."""
    w = basis_weights([1.0], order)[0]
    P = traj.control_points[segment_end:segment_end + 4]
    return w @ P / traj.knot_interval ** order


def derivative_control_points(traj: SplineTrajectory, order: int) -> np.ndarray:
    """Control points of the k-th derivative spline (degree 3-k, same knot spacing)."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    P = traj.control_points
    if P.shape[0] - order < 1:
        raise ValueError("too few control points for this derivative order")
    return np.diff(P, n=order, axis=0) / traj.knot_interval ** order


def init_from_waypoints(waypoints, knot_interval: float, spacing: float = math.inf) -> SplineTrajectory:
    """Control polygon through the waypoints with tripled endpoints.

    Legs longer than ``spacing`` are split into equal linear pieces.
    """
    w = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if w.shape[0] < 2:
        raise ValueError("need at least two waypoints")
    pts = [w[0]]
    for a, b in zip(w[:-1], w[1:]):
        length = float(np.linalg.norm(b - a))
        pieces = 1 if not math.isfinite(spacing) else max(1, math.ceil(length / spacing - 1e-12))
        for k in range(1, pieces + 1):
            pts.append(a + (b - a) * (k / pieces))
    ctrl = np.vstack([w[0], w[0], *pts, w[-1], w[-1]])
    return SplineTrajectory(ctrl, knot_interval)


def write_samples_csv(traj: SplineTrajectory, path, rate_hz: float = 100.0) -> np.ndarray:
    times = sample_times(traj, rate_hz)
    cols = [evaluate_many(traj, times, k) for k in range(4)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "vx", "vy", "ax", "ay", "jx", "jy"])
        for i, t in enumerate(times):
            row = [t] + [c[i, j] for c in cols for j in range(2)]
            w.writerow([f"{v:.6f}" for v in row])
    return times


def sample_times(traj: SplineTrajectory, rate_hz: float = 100.0) -> np.ndarray:
    n = int(math.floor(traj.duration * rate_hz + 1e-9))
    times = np.arange(n + 1) / rate_hz
    if times[-1] < traj.duration - 1e-12:
        times = np.append(times, traj.duration)
    return times
