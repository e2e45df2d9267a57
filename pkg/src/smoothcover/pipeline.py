"""Two-stage planning pipeline: GA visiting order, spline refinement, flight check."""
from __future__ import annotations

import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import bspline, ga_tsp, obstacle_map, quad_sim, traj_opt
from .scenario import Scenario

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NOT_CONVERGED = 3
EXIT_SIM_ABORT = 4


@dataclass
class RunReport:
    scenario: str
    stages: dict = field(default_factory=dict)  # stage -> "ok" | "failed" | "skipped"
    errors: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # seconds; kept out of report.json
    defaults_applied: list = field(default_factory=list)
    ga: Optional[dict] = None
    optimizer: Optional[dict] = None
    coverage: Optional[dict] = None
    simulation: Optional[dict] = None
    exit_code: int = EXIT_OK
    # in-memory products for callers and rendering
    field_: Optional[obstacle_map.DistanceField] = field(default=None, repr=False)
    sequence: Optional[list] = None
    trajectory: Optional[bspline.SplineTrajectory] = field(default=None, repr=False)
    state_log: Optional[quad_sim.StateLog] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "stages": self.stages,
            "errors": self.errors,
            "defaults_applied": self.defaults_applied,
            "ga": self.ga,
            "optimizer": self.optimizer,
            "coverage": self.coverage,
            "simulation": self.simulation,
            "exit_code": self.exit_code,
        }


STAGES = ("map", "ga", "optimize", "simulate", "render")


def run_pipeline(scenario: Scenario, out_dir=None, *, skip_sim: bool = False,
                 emit_edt_csv: bool = False, svg: bool = True) -> RunReport:
    """Run every stage in order and write artifacts to ``out_dir``.

    A failing stage is recorded in the report and all later stages are
    skipped; artifacts from earlier stages stay on disk.
    """
    out = Path(out_dir if out_dir is not None else scenario.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = RunReport(scenario=scenario.name, defaults_applied=list(scenario.defaults_applied))
    failed = False

    def stage(name, fn):
        nonlocal failed
        if failed:
            rep.stages[name] = "skipped"
            return
        t0 = time.perf_counter()
        try:
            fn()
            rep.stages[name] = "ok"
        except Exception as exc:  # stage isolation: record and stop downstream
            failed = True
            rep.stages[name] = "failed"
            rep.errors[name] = f"{type(exc).__name__}: {exc}"
            log.debug("stage %s failed\n%s", name, traceback.format_exc())
            if rep.exit_code == EXIT_OK:
                rep.exit_code = {"optimize": EXIT_NOT_CONVERGED, "simulate": EXIT_SIM_ABORT}.get(name, EXIT_FAILURE)
        finally:
            rep.timings[name] = time.perf_counter() - t0

    def build_map():
        grid = obstacle_map.build_occupancy(scenario.obstacles, scenario.bounds, scenario.step)
        rep.field_ = obstacle_map.compute_edt(grid)
        if emit_edt_csv:
            rep.field_.to_csv(out / "edt.csv")

    def run_ga():
        res = ga_tsp.solve_tsp(scenario.points, scenario.ga)
        res.write_trace(out / "ga_trace.csv")
        rep.sequence = res.sequence
        rep.ga = {"sequence": res.sequence, "cost": res.cost, "generations": len(res.trace)}

    def run_opt():
        pts = scenario.points
        waypoints = pts[rep.sequence]
        spacing = scenario.spacing
        init = bspline.init_from_waypoints(waypoints, spacing / scenario.spline.nominal_speed, spacing)
        sp = scenario.spline
        problem = traj_opt.OptProblem(
            initial=init, field=rep.field_, pois=pts[rep.sequence[1:-1]],
            coverage_radius=scenario.coverage_radius, start=scenario.start, end=scenario.end,
            weights=scenario.weights, penalty=scenario.obstacle_penalty,
            obstacle_samples_per_segment=sp.obstacle_samples_per_segment,
            assignment_samples_per_segment=sp.assignment_samples_per_segment,
            monotone_assignment=sp.monotone_assignment,
        )
        traj, opt_rep = traj_opt.solve(problem, scenario.optimizer)
        rep.trajectory = traj
        opt_rep.write_trace(out / "opt_trace.csv")
        bspline.write_samples_csv(traj, out / "planned_traj.csv", sp.sample_rate_hz)
        rep.optimizer = opt_rep.to_dict()
        # map back to file order so POI i of the scenario is entry i here
        miss = np.empty(len(scenario.pois))
        miss[np.asarray(rep.sequence[1:-1], dtype=int) - 1] = opt_rep.poi_miss_distances
        rep.coverage = {
            "coverage_radius": scenario.coverage_radius,
            "poi_miss_distance": [float(v) for v in miss],
            "all_covered": bool(np.all(miss <= scenario.coverage_radius)),
            "min_clearance": opt_rep.min_clearance,
            "clearance_floor": scenario.obstacle_penalty.safe_distance - scenario.step,
        }
        if not opt_rep.converged:
            raise traj_opt.NumericalError(f"optimizer stopped without converging ({opt_rep.termination})")

    def run_sim():
        slog = quad_sim.simulate_tracking(rep.trajectory, scenario.altitude, scenario.vehicle,
                                          scenario.controller, scenario.simulation.dt,
                                          scenario.disturbance, scenario.simulation.hold)
        rep.state_log = slog
        slog.write_csv(out / "state_log.csv", scenario.simulation.log_stride)
        summary = slog.summary()
        d, _, _ = rep.field_.sample(slog.states[:, :2])
        summary["min_clearance"] = float(d.min())
        summary["acceleration_cap"] = scenario.simulation.acceleration_cap
        summary["smooth_velocity"] = summary["max_velocity_step"] < scenario.simulation.acceleration_cap * scenario.simulation.dt
        rep.simulation = summary
        if slog.aborted:
            raise RuntimeError(f"simulation aborted: {slog.abort_reason}")

    def render():
        (out / "scene.svg").write_text(render_svg(scenario, rep.sequence, rep.trajectory, rep.state_log))

    stage("map", build_map)
    stage("ga", run_ga)
    stage("optimize", run_opt)
    if skip_sim:
        rep.stages["simulate"] = "skipped"
    else:
        stage("simulate", run_sim)
    if svg:
        # the drawing shows whatever stages completed
        was_failed, failed = failed, False
        stage("render", render)
        failed = failed or was_failed

    with open(out / "report.json", "w") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rep


# -- rendering ----------------------------------------------------------------

class Viewport:
    """World-to-pixel transform with equal x/y scale and y pointing up."""

    def __init__(self, bounds: obstacle_map.WorldBounds, size: float = 800.0, margin: float = 40.0):
        self.bounds = bounds
        self.scale = (size - 2 * margin) / max(bounds.width, bounds.height)
        self.margin = margin
        self.width = bounds.width * self.scale + 2 * margin
        self.height = bounds.height * self.scale + 2 * margin

    def __call__(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        x = (p[:, 0] - self.bounds.x_min) * self.scale + self.margin
        y = (self.bounds.y_max - p[:, 1]) * self.scale + self.margin
        return np.stack([x, y], axis=1)

    def inverse(self, px) -> np.ndarray:
        q = np.atleast_2d(np.asarray(px, dtype=float))
        x = (q[:, 0] - self.margin) / self.scale + self.bounds.x_min
        y = self.bounds.y_max - (q[:, 1] - self.margin) / self.scale
        return np.stack([x, y], axis=1)


def _polyline(px: np.ndarray, **attrs) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in px)
    extra = " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in attrs.items())
    return f'<polyline points="{pts}" fill="none" {extra}/>'


def render_svg(scenario: Scenario, ga_sequence=None, planned: Optional[bspline.SplineTrajectory] = None,
               executed: Optional[quad_sim.StateLog] = None) -> str:
    vp = Viewport(scenario.bounds)
    s = vp.scale
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{vp.width:.0f}" height="{vp.height:.0f}" '
             f'viewBox="0 0 {vp.width:.2f} {vp.height:.2f}">']
    lo = vp([[scenario.bounds.x_min, scenario.bounds.y_max]])[0]
    lines.append(f'<rect id="world" x="{lo[0]:.2f}" y="{lo[1]:.2f}" width="{scenario.bounds.width * s:.2f}" '
                 f'height="{scenario.bounds.height * s:.2f}" fill="white" stroke="black"/>')

    lines.append('<g id="obstacles" fill="#d62728" fill-opacity="0.8">')
    for ob in scenario.obstacles:
        c = vp([ob.center])[0]
        lines.append(f'<circle cx="{c[0]:.2f}" cy="{c[1]:.2f}" r="{ob.radius * s:.2f}"/>')
    lines.append("</g>")

    lines.append('<g id="coverage" fill="none" stroke="#1f77b4" stroke-dasharray="4,3">')
    for p in vp(scenario.pois) if len(scenario.pois) else []:
        lines.append(f'<circle cx="{p[0]:.2f}" cy="{p[1]:.2f}" r="{scenario.coverage_radius * s:.2f}"/>')
    lines.append("</g>")
    lines.append('<g id="pois" fill="#1f77b4">')
    for p in vp(scenario.pois) if len(scenario.pois) else []:
        lines.append(f'<circle cx="{p[0]:.2f}" cy="{p[1]:.2f}" r="4"/>')
    lines.append("</g>")

    lines.append('<g id="ga_order">')
    if ga_sequence is not None:
        lines.append(_polyline(vp(scenario.points[list(ga_sequence)]), stroke="#d62728",
                               stroke_dasharray="8,5", stroke_width="1.5"))
    lines.append("</g>")

    lines.append('<g id="planned">')
    if planned is not None:
        pts = bspline.evaluate_many(planned, bspline.sample_times(planned, scenario.spline.sample_rate_hz))
        lines.append(_polyline(vp(pts), stroke="#2ca02c", stroke_width="2"))
    lines.append("</g>")

    lines.append('<g id="executed">')
    if executed is not None and len(executed.t):
        stride = scenario.simulation.log_stride
        lines.append(_polyline(vp(executed.states[::stride, :2]), stroke="#1f3fb4", stroke_width="1"))
    lines.append("</g>")

    lines.append('<g id="markers">')
    for label, p, color in (("start", scenario.start, "#000000"), ("end", scenario.end, "#7f7f7f")):
        c = vp([p])[0]
        lines.append(f'<rect id="{label}" x="{c[0] - 6:.2f}" y="{c[1] - 6:.2f}" width="12" height="12" fill="{color}"/>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
