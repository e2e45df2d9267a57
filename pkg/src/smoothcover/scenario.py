"""Scenario files: one JSON document with a section per pipeline stage."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .ga_tsp import GaConfig
from .obstacle_map import Obstacle, WorldBounds
from .quad_sim import ControllerGains, Disturbance, VehicleParams
from .traj_opt import CostWeights, ObstaclePenaltyConfig, SolverOptions


class ScenarioError(ValueError):
    """Raised with every problem found, one per line in ``errors``."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


@dataclass
class SplineSettings:
    nominal_speed: float = 1.0
    spacing: Optional[float] = None  # None -> twice the map step
    obstacle_samples_per_segment: int = 4
    assignment_samples_per_segment: int = 20
    monotone_assignment: bool = True
    sample_rate_hz: float = 100.0

    def validate(self) -> list[str]:
        errors = []
        if not self.nominal_speed > 0:
            errors.append("nominal_speed must be > 0")
        if self.spacing is not None and not self.spacing > 0:
            errors.append("spacing must be > 0")
        if self.obstacle_samples_per_segment < 1:
            errors.append("obstacle_samples_per_segment must be >= 1")
        if self.assignment_samples_per_segment < 1:
            errors.append("assignment_samples_per_segment must be >= 1")
        if not self.sample_rate_hz > 0:
            errors.append("sample_rate_hz must be > 0")
        return errors


@dataclass
class SimSettings:
    dt: float = 1e-3
    hold: float = 2.0
    log_stride: int = 10
    acceleration_cap: float = 5.0  # m/s^2, bound on per-step velocity change

    def validate(self) -> list[str]:
        errors = []
        if not self.dt > 0:
            errors.append("dt must be > 0")
        if self.hold < 0:
            errors.append("hold must be >= 0")
        if self.log_stride < 1:
            errors.append("log_stride must be >= 1")
        if not self.acceleration_cap > 0:
            errors.append("acceleration_cap must be > 0")
        return errors


@dataclass
class Scenario:
    name: str
    bounds: WorldBounds
    step: float
    obstacles: list
    start: np.ndarray
    end: np.ndarray
    pois: np.ndarray
    coverage_radius: float = 1.0
    altitude: float = 5.0
    ga: GaConfig = field(default_factory=GaConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    obstacle_penalty: ObstaclePenaltyConfig = field(default_factory=ObstaclePenaltyConfig)
    spline: SplineSettings = field(default_factory=SplineSettings)
    optimizer: SolverOptions = field(default_factory=SolverOptions)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    controller: ControllerGains = field(default_factory=ControllerGains)
    simulation: SimSettings = field(default_factory=SimSettings)
    disturbance: Disturbance = field(default_factory=Disturbance)
    output_dir: str = "out"
    defaults_applied: list = field(default_factory=list)

    @property
    def points(self) -> np.ndarray:
        """Start, POIs, end stacked in file order."""
        return np.vstack([self.start, self.pois.reshape(-1, 2), self.end])

    @property
    def spacing(self) -> float:
        return self.spline.spacing if self.spline.spacing is not None else 2.0 * self.step


SECTIONS = {
    "ga": GaConfig,
    "weights": CostWeights,
    "obstacle_penalty": ObstaclePenaltyConfig,
    "spline": SplineSettings,
    "optimizer": SolverOptions,
    "vehicle": VehicleParams,
    "controller": ControllerGains,
    "simulation": SimSettings,
    "disturbance": Disturbance,
}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _point(value, path: str, errors: list) -> Optional[np.ndarray]:
    if (isinstance(value, (list, tuple)) and len(value) == 2 and all(_is_number(v) for v in value)):
        return np.array(value, dtype=float)
    errors.append(f"{path}: expected [x, y] numbers, got {value!r}")
    return None


def _section(cls, data: Any, path: str, errors: list):
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return cls()
    known = {f.name: f for f in dataclasses.fields(cls) if not f.name.startswith("_")}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            errors.append(f"{path}.{key}: unknown field")
            continue
        default = getattr(cls(), key)
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float) or default is None:
            ok = value is None and default is None or _is_number(value)
        elif isinstance(default, str):
            ok = isinstance(value, str)
        elif isinstance(default, tuple):
            ok = isinstance(value, list) and len(value) == len(default) and all(_is_number(v) for v in value)
            if ok:
                value = tuple(float(v) for v in value)
        else:
            ok = True
        if not ok:
            errors.append(f"{path}.{key}: invalid value {value!r}")
            continue
        kwargs[key] = value
    obj = cls(**kwargs)
    errors.extend(f"{path}: {msg}" for msg in obj.validate())
    return obj


def parse_scenario(doc: dict) -> Scenario:
    """Validate a decoded scenario document, collecting every error."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioError(["<root>: expected a JSON object"])
    allowed = {"name", "world", "mission", "output", *SECTIONS}
    for key in doc:
        if key not in allowed:
            errors.append(f"{key}: unknown section")

    world = doc.get("world")
    bounds = None
    step = 0.1
    obstacles = []
    if not isinstance(world, dict):
        errors.append("world: required section missing or not an object")
    else:
        b = world.get("bounds")
        keys = ("x_min", "x_max", "y_min", "y_max")
        if not isinstance(b, dict) or not all(_is_number(b.get(k)) for k in keys):
            errors.append("world.bounds: expected numbers x_min, x_max, y_min, y_max")
        else:
            try:
                bounds = WorldBounds(*(float(b[k]) for k in keys))
            except ValueError as exc:
                errors.append(f"world.bounds: {exc}")
        step = world.get("step", 0.1)
        if not _is_number(step) or step <= 0:
            errors.append(f"world.step: must be a positive number, got {step!r}")
            step = 0.1
        for i, ob in enumerate(world.get("obstacles", [])):
            p = f"world.obstacles[{i}]"
            if not isinstance(ob, dict):
                errors.append(f"{p}: expected an object")
                continue
            c = _point(ob.get("center"), f"{p}.center", errors)
            r = ob.get("radius")
            if not _is_number(r) or r <= 0:
                errors.append(f"{p}.radius: must be a positive number, got {r!r}")
                continue
            if c is not None:
                if bounds is not None and not bounds.contains(c):
                    errors.append(f"{p}.center: outside world bounds")
                obstacles.append(Obstacle(tuple(c), float(r)))

    mission = doc.get("mission")
    start = end = None
    pois = np.zeros((0, 2))
    coverage = 1.0
    altitude = 5.0
    if not isinstance(mission, dict):
        errors.append("mission: required section missing or not an object")
    else:
        start = _point(mission.get("start"), "mission.start", errors)
        end = _point(mission.get("end"), "mission.end", errors)
        raw = mission.get("pois", [])
        pts = []
        if not isinstance(raw, list):
            errors.append("mission.pois: expected a list of [x, y]")
            raw = []
        for i, v in enumerate(raw):
            p = _point(v, f"mission.pois[{i}]", errors)
            if p is not None:
                if bounds is not None and not bounds.contains(p):
                    errors.append(f"mission.pois[{i}]: {list(p)} outside world bounds")
                pts.append(p)
        pois = np.array(pts, dtype=float).reshape(-1, 2)
        for name, p in (("start", start), ("end", end)):
            if p is not None and bounds is not None and not bounds.contains(p):
                errors.append(f"mission.{name}: {list(p)} outside world bounds")
        coverage = mission.get("coverage_radius", 1.0)
        if not _is_number(coverage) or coverage <= 0:
            errors.append(f"mission.coverage_radius: must be positive, got {coverage!r}")
            coverage = 1.0
        altitude = mission.get("altitude", 5.0)
        if not _is_number(altitude) or altitude <= 0:
            errors.append(f"mission.altitude: must be positive, got {altitude!r}")
            altitude = 5.0

    sections = {}
    defaults = []
    for key, cls in SECTIONS.items():
        if key in doc:
            sections[key] = _section(cls, doc[key], key, errors)
        else:
            sections[key] = cls()
            defaults.append(key)

    out = doc.get("output", {})
    out_dir = "out"
    if isinstance(out, dict) and isinstance(out.get("dir", "out"), str):
        out_dir = out.get("dir", "out")
    else:
        errors.append("output.dir: expected a string path")
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        errors.append("name: expected a string")
        name = "scenario"

    if errors:
        raise ScenarioError(errors)
    return Scenario(name=name, bounds=bounds, step=float(step), obstacles=obstacles,
                    start=start, end=end, pois=pois, coverage_radius=float(coverage),
                    altitude=float(altitude), output_dir=out_dir, defaults_applied=defaults,
                    **sections)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    JSON syntax problems raise :class:`ScenarioError` naming line and
    column; schema problems raise it with every violation listed.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from exc
    return parse_scenario(doc)
