"""Declarative scenario configuration.

Configs are nested dataclasses serialised as YAML. Keys carry their units
(``dt_s``, ``mass_kg``, ``wind_m_s``) so a config file is self-describing.
Loading is strict: unknown keys and wrong shapes raise
:class:`fxtadapt.errors.ConfigError`.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import yaml

from fxtadapt.errors import ConfigError


@dataclass
class ModelSpec:
    kind: str = "single_integrator"  # single_integrator | quadrotor
    variant: str = "full_rank"  # single integrator only: full_rank | rank_deficient
    k_delta: float = 1.0
    f1_hz: float = 0.05
    f2_hz: float = 0.05
    a_rank: float = 0.5
    theta_true: List[float] = field(default_factory=lambda: [0.5, -0.5])
    theta_box: List[List[float]] = field(default_factory=lambda: [[-1.0, 1.0], [-1.0, 1.0]])
    input_bounds: List[List[float]] = field(default_factory=lambda: [[-5.0, 5.0], [-5.0, 5.0]])
    mass_kg: float = 1.0
    inertia_kg_m2: List[float] = field(default_factory=lambda: [0.25e-2, 0.25e-2, 0.5e-2])
    gravity_m_s2: float = 9.81


@dataclass
class EstimatorSpec:
    scheme: str = "rate"  # rate | predictor | none
    law: str = "fxt"  # fxt | es
    method: str = "implicit"  # implicit | explicit
    gamma: List[float] = field(default_factory=lambda: [5.0, 5.0])
    a: float = 1.0
    b: float = 1.0
    mu: float = 5.0
    k_e: float = 10.0
    warmup_s: float = 0.0
    sigma_lb: Optional[float] = 1.0  # rate scheme: a-priori lower bound on the regressor
    rate_source: str = "exact"  # exact | central_difference
    theta_hat0: List[float] = field(default_factory=lambda: [0.0, 0.0])
    k_robust: float = 0.9
    clamp_to_box: bool = True
    convergence_tol: float = 1e-3
    envelope_form: str = "sound"  # sound | standard; the standard closed form can undercut the error flow


@dataclass
class EllipseSpec:
    center_m: List[float]
    semi_axes_m: List[float]
    name: str = "ellipse"


@dataclass
class GapControllerSpec:
    goal_m: List[float] = field(default_factory=lambda: [0.0, 0.0])
    clf_k_v: float = 1.0
    clf_c1: float = 1.0
    clf_c2: float = 1.0
    clf_gamma1: float = 1.5
    clf_gamma2: float = 0.5
    ellipses: List[EllipseSpec] = field(default_factory=list)
    weight_q: List[float] = field(default_factory=lambda: [1.0, 1.0])
    weight_q0: float = 10.0
    weight_p: List[float] = field(default_factory=lambda: [10.0, 10.0])
    delta_lb: float = 1.0
    goal_tol_m: float = 0.1


@dataclass
class TrackingControllerSpec:
    amplitude_m: float = 2.0
    period_s: float = 10.0
    altitude_m: float = 2.5
    c_z_m: float = 2.5
    p_z_m: float = 2.5
    n_z: int = 2
    alpha_max_rad: float = math.pi / 2
    weight_p1: float = 100.0
    weight_p2: float = 100.0
    delta_lb: float = 1e-3
    kp_pos: List[float] = field(default_factory=lambda: [4.0, 4.0, 6.0])
    kd_pos: List[float] = field(default_factory=lambda: [4.0, 4.0, 5.0])
    kp_att: List[float] = field(default_factory=lambda: [150.0, 150.0, 40.0])
    kd_att: List[float] = field(default_factory=lambda: [25.0, 25.0, 12.0])
    tilt_max_rad: float = 0.6
    compensate_drag: bool = True


@dataclass
class ControllerSpec:
    kind: str = "gap"  # gap | tracking
    gap: Optional[GapControllerSpec] = None
    tracking: Optional[TrackingControllerSpec] = None


@dataclass
class DisturbanceSpec:
    kind: str = "none"  # none | constant_wind | gusty_wind
    wind_m_s: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    gust_sigma_m_s: float = 0.0
    gust_tau_s: float = 0.5
    sup_bound: float = 0.0
    seed: int = 0


@dataclass
class ScenarioConfig:
    name: str
    model: ModelSpec
    estimator: EstimatorSpec
    controller: ControllerSpec
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    x0: List[float] = field(default_factory=lambda: [-4.0, 4.0])
    horizon_s: float = 6.0
    dt_s: float = 5e-3
    log_every: int = 1

    def __post_init__(self):
        validate(self)


def validate(cfg: ScenarioConfig) -> None:
    if not cfg.dt_s > 0:
        raise ConfigError("dt_s must be positive")
    if not cfg.horizon_s >= cfg.dt_s:
        raise ConfigError("horizon_s must be at least dt_s")
    if cfg.log_every < 1:
        raise ConfigError("log_every must be >= 1")
    m = cfg.model
    if m.kind not in ("single_integrator", "quadrotor"):
        raise ConfigError(f"unknown model kind {m.kind!r}")
    n = 2 if m.kind == "single_integrator" else 12
    p = 2 if m.kind == "single_integrator" else 3
    if len(cfg.x0) != n:
        raise ConfigError(f"x0 must have {n} entries")
    if len(m.theta_true) != p or len(m.theta_box) != p:
        raise ConfigError(f"theta_true and theta_box must have {p} entries")
    e = cfg.estimator
    if e.scheme not in ("rate", "predictor", "none"):
        raise ConfigError(f"unknown estimator scheme {e.scheme!r}")
    if e.law not in ("fxt", "es") or e.method not in ("implicit", "explicit"):
        raise ConfigError("law must be fxt|es and method implicit|explicit")
    if e.rate_source not in ("exact", "central_difference"):
        raise ConfigError(f"unknown rate_source {e.rate_source!r}")
    if len(e.gamma) != p or len(e.theta_hat0) != p:
        raise ConfigError(f"gamma and theta_hat0 must have {p} entries")
    if min(e.gamma) <= 0 or not e.mu > 2 or e.a <= 0 or e.b <= 0:
        raise ConfigError("estimator gains out of range")
    if e.scheme == "rate" and not (e.sigma_lb and e.sigma_lb > 0):
        raise ConfigError("rate scheme needs a positive sigma_lb")
    if e.envelope_form not in ("standard", "sound"):
        raise ConfigError(f"unknown envelope_form {e.envelope_form!r}")
    if not 0 < e.k_robust < 1:
        raise ConfigError("k_robust must lie in (0, 1)")
    c = cfg.controller
    if c.kind == "gap":
        if c.gap is None or len(c.gap.ellipses) == 0:
            raise ConfigError("gap controller needs at least one ellipse")
        if m.kind != "single_integrator":
            raise ConfigError("gap controller requires the single integrator")
    elif c.kind == "tracking":
        if c.tracking is None:
            raise ConfigError("tracking controller spec missing")
        if m.kind != "quadrotor":
            raise ConfigError("tracking controller requires the quadrotor")
    else:
        raise ConfigError(f"unknown controller kind {c.kind!r}")
    d = cfg.disturbance
    if d.kind not in ("none", "constant_wind", "gusty_wind"):
        raise ConfigError(f"unknown disturbance kind {d.kind!r}")


# ---------------------------------------------------------------------------
# (de)serialisation
# ---------------------------------------------------------------------------

def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def _build(tp, data, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:  # Optional[X]
        if data is None:
            return None
        inner = [a for a in args if a is not type(None)][0]
        return _build(inner, data, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        kwargs = {k: _build(hints[k], v, f"{path}.{k}") for k, v in data.items()}
        try:
            return tp(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if origin in (list, List):
        if not isinstance(data, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return [_build(args[0], v, f"{path}[{i}]") for i, v in enumerate(data)]
    if tp is float:
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(data)
    if tp is int:
        if isinstance(data, bool) or not isinstance(data, int):
            raise ConfigError(f"{path}: expected an integer")
        return int(data)
    if tp is bool:
        if not isinstance(data, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return data
    if tp is str:
        if not isinstance(data, str):
            raise ConfigError(f"{path}: expected a string")
        return data
    raise ConfigError(f"{path}: unsupported type {tp}")


def from_dict(data: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, data, "config")


def dumps(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def save(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))
