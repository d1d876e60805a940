"""Control-affine systems with a parameter-affine uncertainty.

A model is ``xdot = f(x) + g(x) u + Delta(x) theta (+ d(t, x))``. The two
concrete families shipped here are a planar single integrator with a
full-rank or rank-deficient regressor, and a 12-state quadrotor whose
regressor captures aerodynamic drag against a (possibly gusty) wind.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from fxtadapt._backend import kernels
from fxtadapt.errors import (
    BadVariantParams,
    DimensionMismatch,
    NonFiniteOutput,
    PitchSingularity,
)

PITCH_GUARD = 1e-3

# state indices of the quadrotor
IX, IY, IZ, IU, IV, IW, IPHI, ITHETA, IPSI, IP, IQ, IR = range(12)


def _as_box(box, p):
    box = np.asarray(box, dtype=float).reshape(p, 2)
    if np.any(box[:, 0] > box[:, 1]):
        raise ValueError("box lower bounds must not exceed upper bounds")
    return box


@dataclass
class SystemModel:
    """Evaluators and metadata of an uncertain control-affine system.

    ``true_params`` is simulation ground truth. Controllers and estimators
    never read it; only the plant integrator and the oracle diagnostics do.
    """

    n: int
    m: int
    p: int
    drift: Callable[[np.ndarray], np.ndarray]
    control_matrix: Callable[[np.ndarray], np.ndarray]
    regressor: Callable[[np.ndarray], np.ndarray]
    input_bounds: np.ndarray
    param_box: np.ndarray
    true_params: np.ndarray
    name: str = "model"
    # optional fused evaluator returning (f, g, Delta) in one call
    terms: Optional[Callable[[np.ndarray], tuple]] = None

    def __post_init__(self):
        self.input_bounds = _as_box(self.input_bounds, self.m)
        self.param_box = _as_box(self.param_box, self.p)
        self.true_params = np.asarray(self.true_params, dtype=float).reshape(self.p)
        lo, hi = self.param_box[:, 0], self.param_box[:, 1]
        if np.any(self.true_params < lo) or np.any(self.true_params > hi):
            raise BadVariantParams("true parameters lie outside the parameter box")

    def evaluate_terms(self, x):
        """Return ``(f(x), g(x), Delta(x))``."""
        if self.terms is not None:
            return self.terms(x)
        return self.drift(x), self.control_matrix(x), self.regressor(x)

    @property
    def box_diameter(self) -> float:
        """Sup-norm diameter of the parameter box."""
        return float(np.max(self.param_box[:, 1] - self.param_box[:, 0]))


@dataclass
class DisturbanceSignal:
    """Additive disturbance ``d(t, x)`` with a declared sup-norm bound."""

    eval: Callable[[float, np.ndarray], np.ndarray]
    sup_bound: float

    def __call__(self, t, x):
        return self.eval(t, x)


def eval_dynamics(model: SystemModel, x, u, theta, d: Optional[DisturbanceSignal] = None, t: float = 0.0):
    """Right-hand side ``f + g u + Delta theta + d``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if x.shape != (model.n,) or u.shape != (model.m,) or theta.shape != (model.p,):
        raise DimensionMismatch(
            f"expected x:{model.n}, u:{model.m}, theta:{model.p}; "
            f"got {x.shape}, {u.shape}, {theta.shape}"
        )
    f, g, D = model.evaluate_terms(x)
    out = f + g @ u + D @ theta
    if d is not None:
        out = out + d(t, x)
    if not np.all(np.isfinite(out)):
        raise NonFiniteOutput("dynamics produced a non-finite value")
    return out


# ---------------------------------------------------------------------------
# single integrator
# ---------------------------------------------------------------------------

def single_integrator_model(
    variant: str = "full_rank",
    k_delta: float = 1.0,
    f1_hz: float = 0.05,
    f2_hz: float = 0.05,
    a: float = 0.5,
    theta_true=(0.0, 0.0),
    theta_box=((-1.0, 1.0), (-1.0, 1.0)),
    input_bound: float = 10.0,
) -> SystemModel:
    """Planar single integrator ``zdot = u + Delta(z) theta``.

    ``full_rank`` uses a diagonal regressor whose entries oscillate between
    ``k_delta`` and ``2 k_delta`` across the arena. ``rank_deficient`` uses a
    rank-one regressor proportional to the first coordinate whose nullspace
    is spanned by ``(-2, 1)`` everywhere.
    """
    if variant == "full_rank":
        if not k_delta > 0:
            raise BadVariantParams("full_rank variant needs k_delta > 0")
        w1 = 2.0 * math.pi * f1_hz
        w2 = 2.0 * math.pi * f2_hz

        def regressor(z):
            return np.array(
                [
                    [k_delta * (1.0 + math.sin(w1 * z[0]) ** 2), 0.0],
                    [0.0, k_delta * (1.0 + math.cos(w2 * z[1]) ** 2)],
                ]
            )

    elif variant == "rank_deficient":
        if a == 0:
            raise BadVariantParams("rank_deficient variant needs a != 0")
        shape = np.array([[1.0, 2.0], [0.5, 1.0]])

        def regressor(z):
            return -a * z[0] * shape

    else:
        raise BadVariantParams(f"unknown variant {variant!r}")

    zero = np.zeros(2)
    eye = np.eye(2)

    def terms(z):
        return zero.copy(), eye.copy(), regressor(z)

    return SystemModel(
        n=2,
        m=2,
        p=2,
        drift=lambda z: zero.copy(),
        control_matrix=lambda z: eye.copy(),
        regressor=regressor,
        input_bounds=[[-input_bound, input_bound]] * 2,
        param_box=theta_box,
        true_params=theta_true,
        name=f"single_integrator_{variant}",
        terms=terms,
    )


# ---------------------------------------------------------------------------
# quadrotor
# ---------------------------------------------------------------------------

def rotation_body_to_inertial(phi, theta, psi):
    """ZYX rotation taking body-frame vectors to north-east-down axes."""
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cth * cps, sph * sth * cps - cph * sps, cph * sth * cps + sph * sps],
            [cth * sps, sph * sth * sps + cph * cps, cph * sth * sps - sph * cps],
            [-sth, sph * cth, cph * cth],
        ]
    )


class OUGust:
    """Seeded per-axis Ornstein-Uhlenbeck gust velocity.

    Samples live on a fixed grid of spacing ``step_s`` and are linearly
    interpolated in between, so the gust is a deterministic function of time
    that can be evaluated at Runge-Kutta stage times. The table is extended
    lazily; a given seed always produces the same sequence.
    """

    def __init__(self, sigma_m_s: float, tau_s: float, seed: int, step_s: float = 1e-3):
        if tau_s <= 0 or step_s <= 0 or sigma_m_s < 0:
            raise ValueError("gust needs tau_s > 0, step_s > 0 and sigma_m_s >= 0")
        self.sigma = float(sigma_m_s)
        self.tau = float(tau_s)
        self.step = float(step_s)
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._rho = math.exp(-self.step / self.tau)
        self._table = np.zeros((1, 3))

    def _extend(self, k):
        have = self._table.shape[0]
        if k < have:
            return
        count = max(k + 1 - have, 1024)
        noise = self._rng.standard_normal((count, 3)) * self.sigma * math.sqrt(1.0 - self._rho**2)
        new = np.empty((count, 3))
        prev = self._table[-1]
        for i in range(count):
            prev = self._rho * prev + noise[i]
            new[i] = prev
        self._table = np.vstack([self._table, new])

    def __call__(self, t: float) -> np.ndarray:
        if t <= 0:
            return self._table[0].copy()
        s = t / self.step
        k = int(s)
        self._extend(k + 1)
        frac = s - k
        return (1.0 - frac) * self._table[k] + frac * self._table[k + 1]


@dataclass
class WindField:
    """Steady wind (inertial NED axes, m/s) plus an optional gust generator."""

    steady: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust: Optional[OUGust] = None
    seed: int = 0

    def __post_init__(self):
        self.steady = np.asarray(self.steady, dtype=float).reshape(3)


def wind_gust(t: float, chi, wind: WindField) -> np.ndarray:
    """Gust velocity ``v_G(t)``; zero when the field has no gust component."""
    if wind.gust is None:
        return np.zeros(3)
    return wind.gust(t)


@dataclass(frozen=True)
class QuadrotorParams:
    mass_kg: float = 1.0
    inertia_kg_m2: tuple = (0.25e-2, 0.25e-2, 0.5e-2)
    gravity_m_s2: float = 9.81
    k_delta: float = 1.0

    def __post_init__(self):
        if not self.mass_kg > 0:
            raise BadVariantParams("mass must be positive")
        if len(self.inertia_kg_m2) != 3 or min(self.inertia_kg_m2) <= 0:
            raise BadVariantParams("inertia must have three positive entries")

    def kernel_vector(self, wind_vec) -> np.ndarray:
        jx, jy, jz = self.inertia_kg_m2
        return np.array(
            [self.mass_kg, jx, jy, jz, self.gravity_m_s2, self.k_delta, wind_vec[0], wind_vec[1], wind_vec[2]],
            dtype=float,
        )


def _check_pitch(chi):
    if abs(chi[ITHETA]) >= math.pi / 2 - PITCH_GUARD:
        raise PitchSingularity(f"pitch {chi[ITHETA]:.6f} rad too close to +-pi/2")


def quadrotor_terms(chi, params: QuadrotorParams, wind_vec) -> tuple:
    """``(f, g, Delta)`` of the quadrotor for a given inertial wind vector."""
    chi = np.asarray(chi, dtype=float)
    _check_pitch(chi)
    f, G, dvec = kernels.quadrotor_terms(chi, params.kernel_vector(wind_vec))
    D = np.zeros((12, 3))
    D[IU, 0] = dvec[0]
    D[IV, 1] = dvec[1]
    D[IW, 2] = dvec[2]
    return f, G, D


def relative_wind(chi, wind_vec) -> np.ndarray:
    """Wind relative to the airframe, expressed in body axes."""
    R = rotation_body_to_inertial(chi[IPHI], chi[ITHETA], chi[IPSI])
    return R.T @ np.asarray(wind_vec, dtype=float) - np.asarray(chi[IU:IW + 1], dtype=float)


def quadrotor_model(
    params: QuadrotorParams = QuadrotorParams(),
    wind: Optional[WindField] = None,
    cd_true=(0.5, 0.5, 0.5),
    theta_box=((0.0, 1.5),) * 3,
    input_bounds=((0.0, 40.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
) -> SystemModel:
    """12-state quadrotor with drag regressor acting on the body velocities."""
    wind = wind if wind is not None else WindField()
    steady = wind.steady

    def terms(chi):
        return quadrotor_terms(chi, params, steady)

    model = SystemModel(
        n=12,
        m=4,
        p=3,
        drift=lambda chi: terms(chi)[0],
        control_matrix=lambda chi: terms(chi)[1],
        regressor=lambda chi: terms(chi)[2],
        input_bounds=input_bounds,
        param_box=theta_box,
        true_params=cd_true,
        name="quadrotor",
        terms=terms,
    )
    model.quad_params = params
    model.wind = wind
    return model


def gust_disturbance(model: SystemModel, sup_bound: float) -> DisturbanceSignal:
    """Disturbance from gusts: drag at the gusty relative wind minus the steady drag.

    The result is radially saturated at ``sup_bound`` so that the declared
    bound holds by construction; the gust amplitude is calibrated so the
    saturation is rarely active.
    """
    params = model.quad_params
    wind = model.wind
    cd = model.true_params

    scale = params.k_delta / params.mass_kg

    def d(t, chi):
        chi = np.asarray(chi, dtype=float)
        vg = wind_gust(t, chi, wind)
        out = np.zeros(12)
        if not np.any(vg):
            return out
        vr = relative_wind(chi, wind.steady)
        vr_star = vr + rotation_body_to_inertial(chi[IPHI], chi[ITHETA], chi[IPSI]).T @ vg
        dv = scale * (np.linalg.norm(vr_star) * vr_star - np.linalg.norm(vr) * vr)
        out[IU:IW + 1] = dv * cd
        nrm = float(np.linalg.norm(out))
        if nrm > sup_bound > 0:
            out *= sup_bound / nrm
        return out

    return DisturbanceSignal(eval=d, sup_bound=float(sup_bound))
