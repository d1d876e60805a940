"""Barrier and Lyapunov constraint ingredients.

Barriers are plain value/gradient pairs. The shrunken barrier subtracts the
quadratic uncertainty budget ``1/2 eta(t)^2 tr(Gamma^-1)`` so that keeping it
nonnegative keeps the true barrier nonnegative while the parameter error is
still large; its margin term accounts for the shrinking envelope and for the
worst-case drift over the admissible parameter set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from fxtadapt.estimation import ErrorEnvelope, error_envelope, error_envelope_rate


def linear_alpha(kappa: float = 1.0) -> Callable[[float], float]:
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return lambda s: kappa * s


@dataclass(frozen=True)
class BarrierFunction:
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    alpha: Callable[[float], float] = linear_alpha(1.0)
    name: str = "h"


@dataclass(frozen=True)
class EnvelopeSchedule:
    """Envelope value and rate on the controller clock.

    Without an envelope the value is held at ``eta_hold``. With one, the
    envelope clock starts at ``warmup``; before that the value is the
    envelope's initial value and the rate is zero.
    """

    envelope: Optional[ErrorEnvelope] = None
    warmup: float = 0.0
    eta_hold: float = 0.0

    def eta(self, t: float) -> float:
        if self.envelope is None:
            return self.eta_hold
        return error_envelope(max(t - self.warmup, 0.0), self.envelope)

    def eta_rate(self, t: float) -> float:
        if self.envelope is None or t < self.warmup:
            return 0.0
        return error_envelope_rate(t - self.warmup, self.envelope)


@dataclass(frozen=True)
class ShrunkenBarrier:
    base: BarrierFunction
    gamma: tuple
    schedule: EnvelopeSchedule

    @property
    def trace_inv(self) -> float:
        return float(sum(1.0 / g for g in self.gamma))


@dataclass(frozen=True)
class ClfSpec:
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    c1: float
    c2: float
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not self.gamma1 > 1 or not 0 < self.gamma2 < 1:
            raise ValueError("need gamma1 > 1 and 0 < gamma2 < 1")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")


def quadratic_clf(k_v: float = 1.0, goal=(0.0, 0.0), c1: float = 1.0, c2: float = 1.0,
                  gamma1: float = 1.5, gamma2: float = 0.5) -> ClfSpec:
    """``V(z) = k_v |z - goal|^2`` with the fixed-time decrease parameters."""
    goal = np.asarray(goal, dtype=float)

    def value(z):
        d = np.asarray(z, dtype=float)[: goal.shape[0]] - goal
        return k_v * float(d @ d)

    def gradient(z):
        d = np.asarray(z, dtype=float)[: goal.shape[0]] - goal
        return 2.0 * k_v * d

    return ClfSpec(value, gradient, c1, c2, gamma1, gamma2)


def ellipse_cbf(center, semi_axes, name: str = "ellipse") -> BarrierFunction:
    """Exterior of an axis-aligned ellipse: ``((x-xc)/a)^2 + ((y-yc)/b)^2 - 1``."""
    c = np.asarray(center, dtype=float)
    ax = np.asarray(semi_axes, dtype=float)
    if np.any(ax <= 0):
        raise ValueError("semi-axes must be positive")

    def value(z):
        d = (np.asarray(z, dtype=float)[:2] - c) / ax
        return float(d @ d) - 1.0

    def gradient(z):
        z = np.asarray(z, dtype=float)
        g = np.zeros(z.shape[0])
        g[:2] = 2.0 * (z[:2] - c) / ax**2
        return g

    return BarrierFunction(value, gradient, name=name)


def altitude_cbf(c_z: float = 2.5, p_z: float = 2.5, n_z: int = 2, index: int = 2, n: int = 12) -> BarrierFunction:
    """Altitude band ``1 - ((z - c_z)/p_z)^n_z``."""
    if not p_z > 0 or n_z < 2 or n_z % 2:
        raise ValueError("need p_z > 0 and an even n_z >= 2")

    def value(chi):
        return 1.0 - ((chi[index] - c_z) / p_z) ** n_z

    def gradient(chi):
        g = np.zeros(n)
        g[index] = -n_z * (chi[index] - c_z) ** (n_z - 1) / p_z**n_z
        return g

    return BarrierFunction(value, gradient, name="altitude")


def attitude_cbf(alpha_max: float = math.pi / 2, i_phi: int = 6, i_theta: int = 7, n: int = 12) -> BarrierFunction:
    """Tilt limit ``cos(phi) cos(theta) - cos(alpha_max)``."""
    if not 0 < alpha_max <= math.pi / 2:
        raise ValueError("alpha_max must lie in (0, pi/2]")
    ca = math.cos(alpha_max)

    def value(chi):
        return math.cos(chi[i_phi]) * math.cos(chi[i_theta]) - ca

    def gradient(chi):
        g = np.zeros(n)
        g[i_phi] = -math.sin(chi[i_phi]) * math.cos(chi[i_theta])
        g[i_theta] = -math.cos(chi[i_phi]) * math.sin(chi[i_theta])
        return g

    return BarrierFunction(value, gradient, name="attitude")


def shrunken_value(sb: ShrunkenBarrier, x, t: float) -> float:
    eta = sb.schedule.eta(t)
    return sb.base.value(x) - 0.5 * eta * eta * sb.trace_inv


def _clamped_endpoints(theta_hat, eta, box):
    lo = np.asarray(theta_hat, dtype=float) - eta
    hi = np.asarray(theta_hat, dtype=float) + eta
    if box is not None:
        box = np.asarray(box, dtype=float)
        lo = np.minimum(np.maximum(lo, box[:, 0]), box[:, 1])
        hi = np.minimum(np.maximum(hi, box[:, 0]), box[:, 1])
    return lo, hi


def nu_projection(C, theta_hat, eta: float, box=None) -> float:
    """Lower bound of ``C . theta`` over the eta-box around ``theta_hat`` (clamped to ``box``).

    ``box=None`` skips the clamp. That is required whenever the regressor has
    a nontrivial nullspace: the bound is then taken over ``theta_hat`` plus the
    learnable error only, and that point need not lie in the box.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    C = np.asarray(C, dtype=float)
    lo, hi = _clamped_endpoints(theta_hat, eta, box)
    return float(np.sum(np.minimum(C * lo, C * hi)))


def worst_case_projection(C, theta_hat, eta: float, box=None) -> float:
    """Upper bound counterpart of :func:`nu_projection`."""
    C = np.asarray(C, dtype=float)
    lo, hi = _clamped_endpoints(theta_hat, eta, box)
    return float(np.sum(np.maximum(C * lo, C * hi)))


def racbf_margin(sb: ShrunkenBarrier, model, x, t: float, theta_hat, box=None) -> float:
    """Right-hand-side margin ``r`` of ``L_f h + L_g h u >= -alpha(h_r) + r``.

    ``r = tr(Gamma^-1) eta eta_dot - nu`` with ``nu`` the lower bound of the
    uncertain drift ``L_Delta h . theta``. The envelope term is nonpositive, so
    the margin relaxes as learning progresses.
    """
    D = model.regressor(np.asarray(x, dtype=float))
    C = sb.base.gradient(x) @ D
    eta = sb.schedule.eta(t)
    nu = nu_projection(C, theta_hat, eta, box)
    return sb.trace_inv * eta * sb.schedule.eta_rate(t) - nu


def nagumo_check(h: BarrierFunction, model, x, u, theta) -> bool:
    """Sign of the true barrier derivative at ``x`` (ground-truth diagnostic)."""
    f, g, D = model.evaluate_terms(np.asarray(x, dtype=float))
    hdot = float(h.gradient(x) @ (f + g @ np.asarray(u, dtype=float) + D @ np.asarray(theta, dtype=float)))
    return hdot >= 0.0
