"""Six-DOF quadrotor model in the NED frame and a cascaded PD tracker.

State layout (12 floats): pose ``eta = [x, y, z, phi, theta, psi]`` in the
inertial frame followed by body velocities ``nu = [u, v, w, p, q, r]``.
Wrench inputs use ``[thrust, roll_moment, pitch_moment, yaw_moment]``; thrust
points along body -z.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bspline import SplineTrajectory, evaluate_many

GIMBAL_MARGIN = 1e-3


class SingularityError(ArithmeticError):
    pass


@dataclass
class VehicleParams:
    mass: float = 0.5
    inertia: tuple = (2.93e-3, 2.32e-3, 4.0e-3)
    wheelbase: float = 0.3
    thrust_coefficient: float = 6.11e-8  # N / rpm^2
    moment_coefficient: float = 1.50e-9  # N m / rpm^2
    gravity: float = 9.81
    max_rpm: float = 9000.0

    def validate(self) -> list[str]:
        errors = []
        for name in ("mass", "wheelbase", "thrust_coefficient", "moment_coefficient", "gravity", "max_rpm"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if len(self.inertia) != 3 or not all(v > 0 for v in self.inertia):
            errors.append("inertia must be three positive diagonal entries")
        return errors


@dataclass
class ControllerGains:
    kp_xy: float = 3.0
    kd_xy: float = 3.5
    kp_z: float = 6.0
    kd_z: float = 5.0
    kp_att: float = 150.0
    kd_att: float = 25.0
    kp_yaw: float = 20.0
    kd_yaw: float = 9.0
    max_tilt_deg: float = 15.0

    def validate(self) -> list[str]:
        errors = [f"{k} must be >= 0" for k, v in self.__dict__.items() if not v >= 0]
        if not 0 < self.max_tilt_deg < 90:
            errors.append("max_tilt_deg must lie in (0, 90)")
        return errors


@dataclass
class Reference:
    position: np.ndarray  # (x, y)
    velocity: np.ndarray
    acceleration: np.ndarray
    altitude: float  # meters above ground; z_ref = -altitude in NED
    yaw: float = 0.0


# -- kinematics ---------------------------------------------------------------

def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-inertial rotation for Z-Y-X Euler angles."""
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, spsi = math.cos(psi), math.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - spsi * cf, cp * st * cf + spsi * sf],
        [spsi * ct, spsi * st * sf + cp * cf, spsi * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def euler_rate_matrix(phi: float, theta: float) -> np.ndarray:
    """Maps body rates (p, q, r) to Euler angle rates."""
    if abs(theta) >= math.pi / 2 - GIMBAL_MARGIN:
        raise SingularityError(f"pitch {theta:.6f} rad too close to +-pi/2")
    cf, sf = math.cos(phi), math.sin(phi)
    ct, tt = math.cos(theta), math.tan(theta)
    return np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])


def kinematic_transform(eta) -> np.ndarray:
    """6x6 block-diagonal map from body velocities to pose rates."""
    J = np.zeros((6, 6))
    J[:3, :3] = rotation_matrix(eta[3], eta[4], eta[5])
    J[3:, 3:] = euler_rate_matrix(eta[3], eta[4])
    return J


# -- dynamics -----------------------------------------------------------------

def wrench_to_body(wrench) -> np.ndarray:
    w = np.asarray(wrench, dtype=float)
    if w.shape == (6,):
        return w
    return np.array([0.0, 0.0, -w[0], w[1], w[2], w[3]])


def mass_matrix(params: VehicleParams) -> np.ndarray:
    m = params.mass
    return np.diag([m, m, m, *params.inertia])


def coriolis_term(nu, params: VehicleParams) -> np.ndarray:
    """C(nu) nu for a rigid body with diagonal inertia about its CG."""
    v = np.asarray(nu[:3], dtype=float)
    w = np.asarray(nu[3:], dtype=float)
    inertia = np.asarray(params.inertia, dtype=float)
    return np.concatenate([params.mass * np.cross(w, v), np.cross(w, inertia * w)])


def restoring_term(eta, params: VehicleParams) -> np.ndarray:
    """Gravity wrench moved to the left-hand side, in body axes."""
    R = rotation_matrix(eta[3], eta[4], eta[5])
    weight_body = R.T @ np.array([0.0, 0.0, params.mass * params.gravity])
    return np.concatenate([-weight_body, np.zeros(3)])


def dynamics_derivative(state, tau, tau_d, params: VehicleParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    eta, nu = state[:6], state[6:]
    rhs = (wrench_to_body(tau) + wrench_to_body(tau_d)
           - coriolis_term(nu, params) - restoring_term(eta, params))
    m = params.mass
    ix, iy, iz = params.inertia
    nu_dot = rhs / np.array([m, m, m, ix, iy, iz])
    eta_dot = kinematic_transform(eta) @ nu
    return np.concatenate([eta_dot, nu_dot])


def _fast_derivative(s, wrench6, params: VehicleParams) -> np.ndarray:
    """Scalar-math twin of :func:`dynamics_derivative` used in the RK4 loop."""
    x, y, z, phi, theta, psi, u, v, w, p, q, r = s
    if abs(theta) >= math.pi / 2 - GIMBAL_MARGIN:
        raise SingularityError(f"pitch {theta:.6f} rad too close to +-pi/2")
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, spsi = math.cos(psi), math.sin(psi)
    tt = st / ct
    m = params.mass
    g = params.gravity
    ix, iy, iz = params.inertia
    fx, fy, fz, mx, my, mz = wrench6
    # weight in body axes is R^T [0, 0, m g]
    u_dot = (fx - m * (q * w - r * v) - m * g * st) / m
    v_dot = (fy - m * (r * u - p * w) + m * g * ct * sf) / m
    w_dot = (fz - m * (p * v - q * u) + m * g * ct * cf) / m
    p_dot = (mx - (q * iz * r - r * iy * q)) / ix
    q_dot = (my - (r * ix * p - p * iz * r)) / iy
    r_dot = (mz - (p * iy * q - q * ix * p)) / iz
    x_dot = cp * ct * u + (cp * st * sf - spsi * cf) * v + (cp * st * cf + spsi * sf) * w
    y_dot = spsi * ct * u + (spsi * st * sf + cp * cf) * v + (spsi * st * cf - cp * sf) * w
    z_dot = -st * u + ct * sf * v + ct * cf * w
    phi_dot = p + sf * tt * q + cf * tt * r
    theta_dot = cf * q - sf * r
    psi_dot = (sf * q + cf * r) / ct
    return np.array([x_dot, y_dot, z_dot, phi_dot, theta_dot, psi_dot,
                     u_dot, v_dot, w_dot, p_dot, q_dot, r_dot])


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


# -- motor allocation ---------------------------------------------------------

def allocation_matrix(params: VehicleParams) -> np.ndarray:
    """Per-rotor thrusts (N) to [thrust, roll, pitch, yaw].

    X layout, rotors ordered front-right, rear-left, front-left, rear-right;
    the diagonal pairs share a spin direction.
    """
    a = params.wheelbase / 2 / math.sqrt(2)
    xs = np.array([a, -a, a, -a])
    ys = np.array([a, -a, -a, a])
    spin = np.array([1.0, 1.0, -1.0, -1.0])
    c = params.moment_coefficient / params.thrust_coefficient
    return np.vstack([np.ones(4), -ys, xs, spin * c])


@dataclass
class MixResult:
    rpm: np.ndarray
    applied: np.ndarray  # wrench actually produced by the clamped speeds
    saturated: bool


def mix_motors(wrench, params: VehicleParams) -> MixResult:
    A = allocation_matrix(params)
    f = np.linalg.solve(A, np.asarray(wrench, dtype=float))
    f_max = params.thrust_coefficient * params.max_rpm ** 2
    clamped = np.clip(f, 0.0, f_max)
    saturated = bool(np.any(clamped != f))
    rpm = np.sqrt(clamped / params.thrust_coefficient)
    return MixResult(rpm, rotor_wrench(rpm, params), saturated)


def rotor_wrench(rpm, params: VehicleParams) -> np.ndarray:
    f = params.thrust_coefficient * np.asarray(rpm, dtype=float) ** 2
    return allocation_matrix(params) @ f


# -- control ------------------------------------------------------------------

def controller_step(state, ref: Reference, gains: ControllerGains, params: VehicleParams) -> tuple[np.ndarray, bool]:
    """Position PD -> tilt and thrust, attitude PD -> moments.

    Returns the wrench and whether the tilt command hit its limit.
    """
    s = np.asarray(state, dtype=float)
    x, y, z, phi, theta, psi = s[:6]
    rates = s[9:]
    vel = rotation_matrix(phi, theta, psi) @ s[6:9]
    g = params.gravity
    m = params.mass

    ax = ref.acceleration[0] + gains.kp_xy * (ref.position[0] - x) + gains.kd_xy * (ref.velocity[0] - vel[0])
    ay = ref.acceleration[1] + gains.kp_xy * (ref.position[1] - y) + gains.kd_xy * (ref.velocity[1] - vel[1])
    az = gains.kp_z * (-ref.altitude - z) - gains.kd_z * vel[2]
    lift = max(g - az, 0.1 * g)

    # rotate the horizontal demand into the heading frame
    ah = math.cos(psi) * ax + math.sin(psi) * ay
    al = -math.sin(psi) * ax + math.cos(psi) * ay
    limit = math.radians(gains.max_tilt_deg)
    theta_d = math.atan2(-ah, lift)
    phi_d = math.atan2(al * math.cos(theta_d), lift)
    clamped = abs(theta_d) > limit or abs(phi_d) > limit
    theta_d = min(max(theta_d, -limit), limit)
    phi_d = min(max(phi_d, -limit), limit)

    thrust = m * lift / (math.cos(phi) * math.cos(theta))
    ix, iy, iz = params.inertia
    yaw_err = math.remainder(ref.yaw - psi, 2 * math.pi)
    roll_m = ix * (gains.kp_att * (phi_d - phi) - gains.kd_att * rates[0])
    pitch_m = iy * (gains.kp_att * (theta_d - theta) - gains.kd_att * rates[1])
    yaw_m = iz * (gains.kp_yaw * yaw_err - gains.kd_yaw * rates[2])
    return np.array([thrust, roll_m, pitch_m, yaw_m]), clamped


# -- disturbances -------------------------------------------------------------

@dataclass
class Disturbance:
    """Body-frame disturbance wrench (6 entries: force xyz, moment xyz)."""

    kind: str = "none"  # none | constant | noise
    bias: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    noise_std: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    bandwidth_hz: float = 2.0
    seed: int = 0
    _rng: Optional[np.random.Generator] = field(default=None, repr=False)
    _state: Optional[np.ndarray] = field(default=None, repr=False)

    def validate(self) -> list[str]:
        errors = []
        if self.kind not in ("none", "constant", "noise"):
            errors.append("kind must be none, constant or noise")
        if len(self.bias) != 6 or len(self.noise_std) != 6:
            errors.append("bias and noise_std need 6 entries")
        if not self.bandwidth_hz > 0:
            errors.append("bandwidth_hz must be > 0")
        return errors

    def reset(self) -> None:
        self._rng = np.random.default_rng(self.seed)
        self._state = np.zeros(6)

    def sample(self, dt: float) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(6)
        bias = np.asarray(self.bias, dtype=float)
        if self.kind == "constant":
            return bias
        if self._rng is None:
            self.reset()
        # first-order low-pass filtered white noise with unit-variance scaling
        a = math.exp(-2 * math.pi * self.bandwidth_hz * dt)
        white = self._rng.standard_normal(6) * np.asarray(self.noise_std, dtype=float)
        self._state = a * self._state + math.sqrt(1 - a * a) * white
        return bias + self._state


# -- simulation ---------------------------------------------------------------

LOG_COLUMNS = ["t", "x", "y", "z", "phi", "theta", "psi", "u", "v", "w", "p", "q", "r",
               "x_ref", "y_ref", "z_ref", "psi_ref", "vx_ref", "vy_ref",
               "rpm1", "rpm2", "rpm3", "rpm4"]


@dataclass
class StateLog:
    t: np.ndarray
    states: np.ndarray  # (n, 12)
    refs: np.ndarray  # (n, 6): x, y, z, psi, vx, vy
    rpm: np.ndarray  # (n, 4)
    saturation_steps: int = 0
    tilt_clamp_steps: int = 0
    aborted: bool = False
    abort_reason: str = ""

    def inertial_velocity(self) -> np.ndarray:
        out = np.empty((len(self.t), 3))
        for k, s in enumerate(self.states):
            out[k] = rotation_matrix(s[3], s[4], s[5]) @ s[6:9]
        return out

    def summary(self) -> dict:
        ang = np.degrees(self.states[:, 3:6])
        pos_err = np.hypot(self.states[:, 0] - self.refs[:, 0], self.states[:, 1] - self.refs[:, 1])
        alt_err = np.abs(self.states[:, 2] - self.refs[:, 2])
        vel = self.inertial_velocity()
        dv = np.linalg.norm(np.diff(vel, axis=0), axis=1) if len(vel) > 1 else np.zeros(1)
        return {
            "steps": int(len(self.t)),
            "duration": float(self.t[-1]) if len(self.t) else 0.0,
            "max_abs_attitude_deg": {k: float(np.abs(ang[:, i]).max()) for i, k in enumerate(("roll", "pitch", "yaw"))},
            "attitude_range_deg": {k: float(np.ptp(ang[:, i])) for i, k in enumerate(("roll", "pitch", "yaw"))},
            "max_tracking_error": float(pos_err.max()),
            "max_altitude_error": float(alt_err.max()),
            "max_velocity_step": float(dv.max()),
            "saturation_steps": int(self.saturation_steps),
            "tilt_clamp_steps": int(self.tilt_clamp_steps),
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
        }

    def write_csv(self, path, stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for k in range(0, len(self.t), stride):
                row = [self.t[k], *self.states[k], *self.refs[k], *self.rpm[k]]
                w.writerow([f"{v:.6f}" for v in row])


def simulate_tracking(traj: SplineTrajectory, altitude: float, params: VehicleParams,
                      gains: ControllerGains, dt: float = 1e-3,
                      disturbance: Optional[Disturbance] = None, hold: float = 2.0) -> StateLog:
    """Fly the trajectory at constant altitude with fixed-step RK4.

    The controller output goes through the motor mixer and back so rotor
    limits shape the applied wrench.  The wrench is held constant over each
    step.  After the trajectory ends the final point is held for ``hold``
    seconds.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    dist = disturbance or Disturbance()
    dist.reset()
    n_steps = int(round((traj.duration + hold) / dt))
    times = np.arange(n_steps + 1) * dt
    tq = np.minimum(times, traj.duration)
    ref_pos = evaluate_many(traj, tq, 0)
    ref_vel = evaluate_many(traj, tq, 1)
    ref_acc = evaluate_many(traj, tq, 2)
    after = times > traj.duration
    ref_vel[after] = 0.0
    ref_acc[after] = 0.0

    state = np.zeros(12)
    state[0:2] = ref_pos[0]
    state[2] = -altitude
    states = np.empty((n_steps + 1, 12))
    refs = np.empty((n_steps + 1, 6))
    rpms = np.empty((n_steps + 1, 4))
    sat = clamps = 0
    aborted = False
    reason = ""
    last = n_steps
    for k in range(n_steps + 1):
        ref = Reference(ref_pos[k], ref_vel[k], ref_acc[k], altitude)
        wrench, clamped = controller_step(state, ref, gains, params)
        mix = mix_motors(wrench, params)
        states[k] = state
        refs[k] = (ref_pos[k, 0], ref_pos[k, 1], -altitude, 0.0, ref_vel[k, 0], ref_vel[k, 1])
        rpms[k] = mix.rpm
        sat += mix.saturated
        clamps += clamped
        if k == n_steps:
            break
        tau_d = dist.sample(dt)
        wrench6 = (wrench_to_body(mix.applied) + tau_d).tolist()
        try:
            new = rk4_step(lambda y: _fast_derivative(y, wrench6, params), state, dt)
        except SingularityError as exc:
            aborted, reason, last = True, str(exc), k
            break
        if not np.all(np.isfinite(new)):
            aborted, reason, last = True, "non-finite state", k
            break
        if max(abs(new[3]), abs(new[4])) >= math.pi / 2 - GIMBAL_MARGIN:
            aborted, reason, last = True, "attitude approached gimbal lock", k
            break
        state = new
    n = last + 1
    return StateLog(times[:n], states[:n], refs[:n], rpms[:n], sat, clamps, aborted, reason)
