"""Scenario configuration: JSON schema, defaults and conversion to physics parameters."""

import json
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import dynamics
from .errors import ConfigParseError, ConfigValidationError
from .ugv import UgvGeometry

SCENARIO_DIR = Path(__file__).parent / "scenarios"

Vec3 = List[float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


def _check_len(v, n, what):
    if len(v) != n:
        raise ValueError(f"{what} must have {n} components, got {len(v)}")
    if not all(np.isfinite(v)):
        raise ValueError(f"{what} must be finite")
    return v


class BalloonConfig(_Strict):
    diameter: float = Field(2.2, gt=0)
    structural_mass: float = Field(3.6, gt=0)
    gas_density: float = Field(0.1786, ge=0)
    drag_coeff: float = Field(0.47, ge=0)
    added_mass_coeff: float = Field(0.5, ge=0)
    inertia: Optional[List[List[float]]] = None
    attach_elevation_deg: float = Field(30.0, gt=-90, lt=90)
    attach_azimuth_offset_deg: float = 0.0

    @field_validator("inertia")
    @classmethod
    def _spd(cls, v):
        if v is None:
            return v
        m = np.asarray(v, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("inertia must be 3x3")
        if not np.allclose(m, m.T):
            raise ValueError("inertia must be symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise ValueError("inertia must be positive definite")
        return v


class PayloadConfig(_Strict):
    mass: float = Field(1.0, gt=0)
    tether_length: float = Field(0.8, gt=0)
    drag_area: float = Field(0.01, ge=0)


class TetherConfig(_Strict):
    l_R: float = Field(2.0, gt=0)
    n: int = Field(3, ge=1)


class UgvConfig(_Strict):
    wheel_radius: float = Field(0.05, gt=0)
    half_length: float = Field(0.1, gt=0)
    half_width: float = Field(0.1, gt=0)


class EnvironmentConfig(_Strict):
    air_density: float = Field(1.225, gt=0)
    gravity: float = Field(9.81, gt=0)
    wind: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])

    @field_validator("wind")
    @classmethod
    def _wind(cls, v):
        return _check_len(v, 3, "wind")


class InitialConfig(_Strict):
    payload_position: Vec3 = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    swing: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    swing_rate: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    rover_velocity: Optional[List[List[float]]] = None

    @field_validator("payload_position")
    @classmethod
    def _pos(cls, v):
        return _check_len(v, 3, "payload_position")

    @field_validator("swing", "swing_rate")
    @classmethod
    def _pair(cls, v):
        _check_len(v, 2, "value")
        return v

    @field_validator("swing")
    @classmethod
    def _swing_range(cls, v):
        if any(abs(a) >= np.pi / 2 for a in v):
            raise ValueError("swing angles must lie in (-pi/2, pi/2)")
        return v


class MpcConfig(_Strict):
    enabled: bool = True
    sample_time: float = Field(1.0, gt=0)
    horizon: int = Field(15, ge=1)
    w_y: List[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0, 10.0, 10.0])
    c_y: List[float] = Field(default_factory=lambda: [0.5, 0.5, 0.5, 1.0, 1.0])
    # per-kind weights expanded to n tensions + 3n accelerations; explicit vectors override
    w_du_tension: float = Field(10.0, ge=0)
    w_du_accel: float = Field(1.0, ge=0)
    c_u_tension: float = Field(1.0 / 20.0, gt=0)
    c_u_accel: float = Field(1.0 / 0.1, gt=0)
    w_du: Optional[List[float]] = None
    c_u: Optional[List[float]] = None
    a_u: float = 0.1
    rover_position_bound: float = Field(5.0, gt=0)
    rover_speed_bound: float = Field(0.5, gt=0)
    payload_position_bound: float = Field(3.0, gt=0)
    relinearize: bool = False
    max_iter: int = Field(200, ge=1)
    tol: float = Field(1e-6, gt=0)
    regularization: float = Field(1e-8, ge=0)

    @field_validator("w_y")
    @classmethod
    def _wy(cls, v):
        _check_len(v, 5, "w_y")
        if min(v) < 0:
            raise ValueError("weights must be >= 0")
        return v

    @field_validator("c_y")
    @classmethod
    def _cy(cls, v):
        _check_len(v, 5, "c_y")
        if min(v) <= 0:
            raise ValueError("scales must be > 0")
        return v

    def input_weights(self, n):
        if self.w_du is not None:
            return np.asarray(self.w_du, dtype=float)
        return np.concatenate([np.full(n, self.w_du_tension), np.full(3 * n, self.w_du_accel)])

    def input_scales(self, n):
        if self.c_u is not None:
            return np.asarray(self.c_u, dtype=float)
        return np.concatenate([np.full(n, self.c_u_tension), np.full(3 * n, self.c_u_accel)])


class Waypoint(_Strict):
    t: float = Field(ge=0)
    position: Vec3
    swing_rate: List[float] = Field(default_factory=lambda: [0.0, 0.0])

    @field_validator("position")
    @classmethod
    def _pos(cls, v):
        return _check_len(v, 3, "position")

    @field_validator("swing_rate")
    @classmethod
    def _rate(cls, v):
        return _check_len(v, 2, "swing_rate")


class Gust(_Strict):
    start: float
    duration: float = Field(gt=0)
    velocity: Vec3

    @field_validator("velocity")
    @classmethod
    def _vel(cls, v):
        return _check_len(v, 3, "velocity")


class SimConfig(_Strict):
    dt: float = Field(1e-3, gt=0, le=0.01)
    duration: float = Field(40.0, gt=0)
    telemetry_rate: float = Field(50.0, gt=0)
    seed: int = 0
    turbulence: float = Field(0.0, ge=0)
    baumgarte_alpha: float = Field(5.0, ge=0)
    baumgarte_beta: float = Field(5.0, ge=0)


class OutputConfig(_Strict):
    telemetry: Optional[str] = None
    trace: Optional[str] = None
    wheels: Optional[str] = None


class ScenarioConfig(_Strict):
    balloon: BalloonConfig = Field(default_factory=BalloonConfig)
    payload: PayloadConfig = Field(default_factory=PayloadConfig)
    tether: TetherConfig = Field(default_factory=TetherConfig)
    ugv: UgvConfig = Field(default_factory=UgvConfig)
    environment: EnvironmentConfig = Field(default_factory=EnvironmentConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    mpc: MpcConfig = Field(default_factory=MpcConfig)
    references: List[Waypoint] = Field(default_factory=list)
    gusts: List[Gust] = Field(default_factory=list)
    sim: SimConfig = Field(default_factory=SimConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.balloon.gas_density >= self.environment.air_density:
            raise ValueError("balloon.gas_density must be below environment.air_density")
        times = [w.t for w in self.references]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("references: activation times must be strictly increasing")
        if self.mpc.a_u <= 0:
            raise ValueError("mpc.a_u must be positive")
        n = self.tether.n
        if self.mpc.w_du is not None and len(self.mpc.w_du) != 4 * n:
            raise ValueError(f"mpc.w_du must have {4 * n} entries")
        if self.mpc.c_u is not None and (len(self.mpc.c_u) != 4 * n or min(self.mpc.c_u) <= 0):
            raise ValueError(f"mpc.c_u must have {4 * n} positive entries")
        rv = self.initial.rover_velocity
        if rv is not None and (len(rv) != n or any(len(r) != 2 for r in rv)):
            raise ValueError(f"initial.rover_velocity must be {n} pairs")
        return self

    # -- conversion to physics objects ------------------------------------

    def system_params(self):
        b = self.balloon
        bp = dynamics.BalloonParams.sphere(
            diameter=b.diameter,
            structural_mass=b.structural_mass,
            gas_density=b.gas_density,
            n=self.tether.n,
            elevation_deg=b.attach_elevation_deg,
            azimuth_offset_deg=b.attach_azimuth_offset_deg,
            drag_coeff=b.drag_coeff,
            added_mass_coeff=b.added_mass_coeff,
            inertia=b.inertia,
        )
        pp = dynamics.PayloadParams(self.payload.mass, self.payload.tether_length, self.payload.drag_area)
        tp = dynamics.TetherParams(self.tether.l_R, self.tether.n)
        return dynamics.SystemParams(bp, pp, tp, self.sim.baumgarte_alpha, self.sim.baumgarte_beta)

    def environment_base(self):
        e = self.environment
        return dynamics.Environment(e.air_density, e.gravity, np.asarray(e.wind, dtype=float))

    def ugv_geometry(self):
        return UgvGeometry(self.ugv.wheel_radius, self.ugv.half_length, self.ugv.half_width)


def _format_loc(loc):
    return ".".join(str(p) for p in loc) if loc else "<root>"


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigValidationError("<root>", "top-level JSON value must be an object")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        msg = err["msg"].removeprefix("Value error, ")
        loc = _format_loc(err["loc"])
        if loc == "<root>":
            # cross-field checks lead their message with the field name
            loc = msg.split(" ", 1)[0].rstrip(":")
        raise ConfigValidationError(loc, msg) from exc


def resolve_path(path):
    """Return ``path`` if it exists, else a bundled scenario of that name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = SCENARIO_DIR / p.name
    if bundled.exists():
        return bundled
    return p


def load_config(path):
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{p}: {exc.msg} at line {exc.lineno} column {exc.colno}",
                               exc.lineno, exc.colno) from exc
    return config_from_dict(data)


def dump_config(config):
    return config.model_dump(mode="json")
