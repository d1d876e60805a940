"""Parameter estimation: measurement schemes, adaptation laws and their bounds.

Two measurement schemes produce a pair ``(M, v)`` with ``M theta_err = v``
where ``theta_err = theta_true - theta_hat``:

* the rate scheme, using a measured (or differenced) state derivative;
* the state predictor, which integrates an auxiliary state ``z`` and filter
  matrix ``W`` so that ``e = x - z`` satisfies ``e = W theta_err``.

The fixed-time law drives ``M theta_err`` to zero within a time bound that
does not depend on the initial error; the same module evaluates that bound,
the resulting envelope on the learnable part of the error, and the robust
counterparts under a bounded perturbation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from fxtadapt._backend import kernels
from fxtadapt.errors import (
    DimensionMismatch,
    InvalidK,
    NonFiniteOutput,
    NonPositiveSigma,
    PreconditionViolated,
)
from fxtadapt.linalg import nullspace_basis, rowspace_basis

V_GUARD = 1e-12
ENVELOPE_FORMS = ("standard", "sound")


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementPair:
    M: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if M.shape[0] != v.shape[0]:
            raise DimensionMismatch(f"M has {M.shape[0]} rows but v has {v.shape[0]}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class AdaptationGains:
    """Gains of the fixed-time law and the state predictor.

    Attributes:
        gamma: diagonal of the positive-definite gain matrix.
        a, b: weights of the super- and sub-linear terms.
        mu: exponent parameter, must exceed 2.
        k_e: predictor error-injection gain.
        warmup: time before the envelope clock starts.
    """

    gamma: tuple
    a: float = 1.0
    b: float = 1.0
    mu: float = 5.0
    k_e: float = 10.0
    warmup: float = 0.0

    def __post_init__(self):
        g = tuple(float(x) for x in np.asarray(self.gamma, dtype=float).reshape(-1))
        object.__setattr__(self, "gamma", g)
        if len(g) == 0 or min(g) <= 0:
            raise ValueError("gamma must have strictly positive entries")
        if not self.mu > 2:
            raise ValueError(f"mu must exceed 2, got {self.mu}")
        if self.a <= 0 or self.b <= 0 or self.k_e <= 0:
            raise ValueError("a, b and k_e must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be nonnegative")

    @property
    def Gamma(self) -> np.ndarray:
        return np.diag(self.gamma)

    @property
    def lam_max(self) -> float:
        return max(self.gamma)

    @property
    def lam_min(self) -> float:
        return min(self.gamma)

    @property
    def trace_inv(self) -> float:
        return float(sum(1.0 / g for g in self.gamma))


@dataclass
class EstimatorState:
    """Mutable-by-replacement estimator memory.

    ``x`` is the most recent state measurement; the predictor pair is
    formed from it and ``z``.
    """

    theta_hat: np.ndarray
    z: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    clock: float = 0.0
    eta: float = 0.0
    sigma_lb: Optional[float] = None
    x: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ErrorEnvelope:
    """Closed-form bound on the learnable parameter error after warmup."""

    eta0: float
    c1: float
    c2: float
    mu: float
    xi: float
    lam_max: float
    form: str = "standard"

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("envelope rates must be positive")
        if self.form not in ENVELOPE_FORMS:
            raise ValueError(f"unknown envelope form {self.form!r}")
        if not 0.0 <= self.xi < math.pi / 2:
            raise ValueError("phase constant must lie in [0, pi/2)")

    @property
    def root(self) -> float:
        """Time at which the envelope reaches zero."""
        return self.xi * self.mu / math.sqrt(self.c1 * self.c2)

    @property
    def ratio(self) -> float:
        """Scale between ``tan A`` and ``V^(1/mu)``.

        The ``standard`` form uses ``sqrt(c1/c2)``. The ``sound`` form uses
        ``sqrt(c2/c1)``, which is the exact solution of the comparison
        equation ``x' = -(c1 x^2 + c2)/mu`` for ``x = V^(1/mu)``.
        """
        if self.form == "standard":
            return math.sqrt(self.c1 / self.c2)
        return math.sqrt(self.c2 / self.c1)


class CrossTermBound(NamedTuple):
    P: float
    bound: float


@dataclass(frozen=True)
class RobustBounds:
    regime: str
    Y: float
    alpha1: float
    alpha2: float
    alpha3: float
    D0_level: Optional[float]
    T: float
    k_V: float


# ---------------------------------------------------------------------------
# measurement schemes
# ---------------------------------------------------------------------------

def rate_measurement(model, x, xdot_measured, u, theta_hat) -> MeasurementPair:
    """Pair built from a state-derivative measurement."""
    f, g, D = model.evaluate_terms(np.asarray(x, dtype=float))
    v = np.asarray(xdot_measured, dtype=float) - f - g @ np.asarray(u, dtype=float) - D @ np.asarray(theta_hat, dtype=float)
    return MeasurementPair(D, v)


def difference_rate(x_prev, x_next, dt: float) -> np.ndarray:
    """One-step difference quotient of two consecutive state samples."""
    return (np.asarray(x_next, dtype=float) - np.asarray(x_prev, dtype=float)) / dt


def predictor_init(x0, p: int, theta_hat0, sigma_lb: Optional[float] = None) -> EstimatorState:
    x0 = np.asarray(x0, dtype=float).copy()
    return EstimatorState(
        theta_hat=np.asarray(theta_hat0, dtype=float).copy(),
        z=x0.copy(),
        W=np.zeros((x0.shape[0], p)),
        clock=0.0,
        sigma_lb=sigma_lb,
        x=x0,
    )


def predictor_step(st: EstimatorState, model, x, u, theta_hat_dot, gains: AdaptationGains, dt: float,
                   quadrature=None, x_next=None) -> EstimatorState:
    """Advance the predictor ``(z, W)`` and the estimate by one step.

    The update is the exact discrete counterpart of the continuous predictor:
    with ``rho = exp(-k_e dt)``, ``F`` and ``G`` the step integrals of
    ``f + g u`` and ``Delta`` along the plant path,

        W+ = rho W + G
        z+ = z + F + G theta_hat + (1 - rho)(x - z) + W+ (theta_hat+ - theta_hat)

    which keeps ``e - W theta_err`` decaying by exactly ``rho`` per step in the
    absence of disturbances, whatever the estimate does. Without a supplied
    quadrature the integrals fall back to a left-point (Euler) rule.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    if quadrature is None:
        f, g, D = model.evaluate_terms(x)
        F = dt * (f + g @ np.asarray(u, dtype=float))
        G = dt * D
    else:
        F, G = quadrature
    rho = math.exp(-gains.k_e * dt)
    dth = dt * np.asarray(theta_hat_dot, dtype=float)
    e = x - st.z
    W_new = rho * st.W + G
    z_new = st.z + F + G @ st.theta_hat + (1.0 - rho) * e + W_new @ dth
    th_new = st.theta_hat + dth
    if not (np.all(np.isfinite(W_new)) and np.all(np.isfinite(z_new)) and np.all(np.isfinite(th_new))):
        raise NonFiniteOutput("predictor produced a non-finite value")
    return replace(st, z=z_new, W=W_new, theta_hat=th_new, clock=st.clock + dt,
                   x=None if x_next is None else np.asarray(x_next, dtype=float))


def predictor_measurement(st: EstimatorState, x=None) -> MeasurementPair:
    """Pair ``(W, x - z)`` from the predictor memory."""
    xm = st.x if x is None else np.asarray(x, dtype=float)
    if xm is None:
        raise ValueError("no state measurement available; pass x")
    return MeasurementPair(st.W, xm - st.z)


# ---------------------------------------------------------------------------
# adaptation laws
# ---------------------------------------------------------------------------

def fxt_update(pair: MeasurementPair, gains: AdaptationGains) -> np.ndarray:
    """Fixed-time adaptation rate ``Gamma M' v (a|v|^(2/mu) + b |v|^(-2/mu))``."""
    nv = float(np.linalg.norm(pair.v))
    p = pair.M.shape[1]
    if nv < V_GUARD:
        return np.zeros(p)
    ex = 2.0 / gains.mu
    scale = gains.a * nv**ex + gains.b / nv**ex
    return np.asarray(gains.gamma) * (pair.M.T @ pair.v) * scale


def es_update(pair: MeasurementPair, Gamma) -> np.ndarray:
    """Gradient-form exponentially stable law ``Gamma M' v``."""
    G = np.asarray(Gamma, dtype=float)
    g = np.diag(G) if G.ndim == 2 else G
    return g * (pair.M.T @ pair.v)


def adaptation_step(theta_hat, pair: MeasurementPair, gains: AdaptationGains, dt: float,
                    law: str = "fxt", method: str = "implicit") -> np.ndarray:
    """One discrete step of an adaptation law; returns the new estimate.

    ``method='explicit'`` is forward Euler on the law. ``method='implicit'``
    evaluates the law at the end-of-step error ``q = v - M (theta+ - theta)``,
    i.e. backward Euler with the regressor frozen over the step. The implicit
    form does not chatter when the law's effective gain exceeds ``2/dt``,
    which explicit stepping of a non-Lipschitz law cannot avoid.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if law not in ("fxt", "es"):
        raise ValueError(f"unknown law {law!r}")
    if method == "explicit":
        rate = fxt_update(pair, gains) if law == "fxt" else es_update(pair, gains.gamma)
        return theta_hat + dt * rate
    if method != "implicit":
        raise ValueError(f"unknown method {method!r}")
    v = pair.v
    nv = float(np.linalg.norm(v))
    if law == "fxt" and nv < V_GUARD:
        return theta_hat.copy()
    sg = np.sqrt(np.asarray(gains.gamma))
    B = pair.M * sg
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return theta_hat.copy()
    keep = s > 1e-12 * s[0]
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    c = U.T @ v
    lam = s * s
    if law == "es":
        phi = 1.0
    else:
        vperp2 = max(nv * nv - float(c @ c), 0.0)
        phi = kernels.implicit_gain(c, lam, vperp2, dt, gains.a, gains.b, gains.mu)
    q = c / (1.0 + dt * phi * lam)
    # Gamma M' U q = Gamma^(1/2) V S q
    return theta_hat + dt * phi * sg * (Vt.T @ (s * q))


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def k_V_gain(sigma_lb: float, Gamma, which: str = "max") -> float:
    """Gain ``sigma_lb * sqrt(2 lambda(Gamma))``.

    ``which='max'`` is the default convention. ``which='min'`` gives the
    conservative gain for which ``|M e| >= k_V sqrt(V)`` holds for every
    diagonal ``Gamma``; the two coincide for scalar gain matrices.
    """
    if not sigma_lb > 0:
        raise NonPositiveSigma(f"sigma_lb must be positive, got {sigma_lb}")
    G = np.asarray(Gamma, dtype=float)
    d = np.diag(G) if G.ndim == 2 else G
    if which not in ("max", "min"):
        raise ValueError(f"which must be 'max' or 'min', got {which!r}")
    lam = float(np.max(d)) if which == "max" else float(np.min(d))
    return float(sigma_lb * math.sqrt(2.0 * lam))


def fxts_rates(gains: AdaptationGains, sigma_lb: float, which: str = "max") -> tuple:
    """Coefficients ``(c1, c2)`` of the two-power Lyapunov decrease."""
    kv = k_V_gain(sigma_lb, gains.gamma, which)
    c1 = gains.a * kv ** (2.0 + 2.0 / gains.mu)
    c2 = gains.b * kv ** (2.0 - 2.0 / gains.mu)
    return c1, c2


def settling_time_nominal(gains: AdaptationGains, sigma_lb: float) -> float:
    """Upper bound ``mu pi / (2 k_V^2 sqrt(ab))`` on the convergence time (warmup excluded)."""
    kv = k_V_gain(sigma_lb, gains.gamma)
    return gains.mu * math.pi / (2.0 * kv * kv * math.sqrt(gains.a * gains.b))


def make_envelope(gains: AdaptationGains, sigma_lb: float, eta0: float, form: str = "standard") -> ErrorEnvelope:
    """Envelope started from the a-priori sup-norm bound ``eta0`` on every coordinate.

    ``form='standard'`` (default) is the usual closed form. ``form='sound'``
    swaps the roles of ``c1`` and ``c2`` inside the tangent and uses the
    ``lambda_min`` gain, which makes the envelope a true upper bound on the
    error flow for any diagonal gain matrix.
    """
    if form not in ENVELOPE_FORMS:
        raise ValueError(f"unknown envelope form {form!r}")
    c1, c2 = fxts_rates(gains, sigma_lb, "max" if form == "standard" else "min")
    V0 = 0.5 * eta0 * eta0 * gains.trace_inv
    ratio = math.sqrt(c1 / c2) if form == "standard" else math.sqrt(c2 / c1)
    xi = math.atan(V0 ** (1.0 / gains.mu) / ratio)
    return ErrorEnvelope(eta0=float(eta0), c1=c1, c2=c2, mu=gains.mu, xi=xi,
                         lam_max=gains.lam_max, form=form)


def _phase(t, env):
    return max(env.xi - math.sqrt(env.c1 * env.c2) / env.mu * t, 0.0)


def error_envelope(t: float, env: ErrorEnvelope) -> float:
    A = _phase(t, env)
    if A == 0.0:
        return 0.0
    X = env.ratio * math.tan(A)
    return math.sqrt(2.0 * env.lam_max * X**env.mu)


def error_envelope_rate(t: float, env: ErrorEnvelope) -> float:
    A = _phase(t, env)
    if A == 0.0:
        return 0.0
    X = env.ratio * math.tan(A)
    # d/dt of ratio*tan(A) is -ratio*sqrt(c1 c2)/mu * sec^2(A); for the standard form ratio*sqrt(c1 c2) = c1
    lead = env.ratio * math.sqrt(env.c1 * env.c2)
    return -lead * math.sqrt(env.lam_max / 2.0) * X ** (env.mu / 2.0 - 1.0) / math.cos(A) ** 2


def lyapunov_value(theta_err_R, gains: AdaptationGains) -> float:
    """``1/2 e' Gamma^-1 e`` for the learnable error component."""
    e = np.asarray(theta_err_R, dtype=float)
    return 0.5 * float(np.sum(e * e / np.asarray(gains.gamma)))


def settling_constants(c1: float, c2: float, c3: float) -> tuple:
    """``(k1, k2)`` of the sub-threshold case; requires ``c3 < 2 sqrt(c1 c2)``."""
    disc = 4.0 * c1 * c2 - c3 * c3
    if disc <= 0:
        raise PreconditionViolated("c3 must be below 2 sqrt(c1 c2)")
    return math.sqrt(disc / (4.0 * c1 * c1)), (2.0 * c1 - c3) / math.sqrt(disc)


def settling_bound_small(c1, c2, c3, mu) -> float:
    """Bound on the time to reach ``V = 1`` from any ``V0 > 1`` when ``c3 < 2 sqrt(c1 c2)``."""
    k1, k2 = settling_constants(c1, c2, c3)
    return mu / (c1 * k1) * (math.pi / 2.0 - math.atan(k2))


def settling_bound_large(c1, c2, mu, k) -> float:
    """Bound valid for ``c3 >= 2 sqrt(c1 c2)`` and initial values inside the k-scaled basin."""
    if not 0.0 < k < 1.0:
        raise InvalidK(f"k must lie in (0, 1), got {k}")
    return mu * k / ((1.0 - k) * math.sqrt(c1 * c2))


def settling_basin_level(c1, c2, c3, k) -> float:
    """Upper end of admissible ``V0^(1/mu)`` in the large-disturbance case."""
    return k * (c3 - math.sqrt(max(c3 * c3 - 4.0 * c1 * c2, 0.0))) / (2.0 * c1)


def robust_bounds(gains: AdaptationGains, sigma_lb: float, upsilon: float, k: float = 0.9) -> RobustBounds:
    """Convergence bound of the fixed-time law under a perturbation of size ``upsilon``."""
    if not 0.0 < k < 1.0:
        raise InvalidK(f"k must lie in (0, 1), got {k}")
    if upsilon < 0:
        raise ValueError("upsilon must be nonnegative")
    a, b, mu = gains.a, gains.b, gains.mu
    kv = k_V_gain(sigma_lb, gains.gamma)
    p2 = 2.0 ** (2.0 / mu)
    alpha1 = a * kv ** (2.0 + 2.0 / mu) / p2
    alpha2 = p2 * b * kv ** (2.0 - 2.0 / mu)
    lin = a * kv ** (1.0 + 2.0 / mu) + p2 * b * kv ** (1.0 - 2.0 / mu)
    alpha3 = upsilon * lin
    Y = 2.0 * kv * kv * math.sqrt(a * b) / lin
    if upsilon < Y:
        T = settling_bound_small(alpha1, alpha2, alpha3, mu)
        return RobustBounds("small_disturbance", Y, alpha1, alpha2, alpha3, None, T, kv)
    T = settling_bound_large(alpha1, alpha2, mu, k)
    level = settling_basin_level(alpha1, alpha2, alpha3, k) ** mu
    return RobustBounds("large_disturbance", Y, alpha1, alpha2, alpha3, level, T, kv)


def robust_gain_check(Gamma, upsilon: float, sigma_lb: float) -> bool:
    if not sigma_lb > 0:
        raise NonPositiveSigma("sigma_lb must be positive")
    G = np.asarray(Gamma, dtype=float)
    lam_min = float(np.min(np.diag(G))) if G.ndim == 2 else float(np.min(G))
    return lam_min >= 2.0 * (upsilon / sigma_lb) ** 2


def cross_term_bound(x, y, a: float, b: float, m: float, B_y: float) -> CrossTermBound:
    """Cross term ``P`` between a large vector and a bounded perturbation, and its lower bound."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = float(np.linalg.norm(x))
    if not m > 2:
        raise PreconditionViolated("m must exceed 2")
    if float(np.linalg.norm(y)) > B_y * (1 + 1e-12):
        raise PreconditionViolated("|y| exceeds B_y")
    if nx <= 2.0 * B_y:
        raise PreconditionViolated("|x| must exceed 2 B_y")
    ns = float(np.linalg.norm(x + y))
    ex = 2.0 / m
    P = float(x @ y) * (a * ns**ex + b * ns ** (-ex))
    bound = -B_y * (a * nx ** (1.0 + ex) + 2.0**ex * b * nx ** (1.0 - ex))
    return CrossTermBound(P, bound)


def cross_term_bound_batch(X, Yv, a, b, m, B_y):
    """Vectorised ``cross_term_bound`` over rows of ``X`` and ``Yv``; returns ``(P, bound)`` arrays."""
    X = np.asarray(X, dtype=float)
    Yv = np.asarray(Yv, dtype=float)
    nx = np.linalg.norm(X, axis=1)
    ns = np.linalg.norm(X + Yv, axis=1)
    ex = 2.0 / np.asarray(m, dtype=float)
    P = np.einsum("ij,ij->i", X, Yv) * (a * ns**ex + b * ns ** (-ex))
    bound = -B_y * (a * nx ** (1.0 + ex) + 2.0**ex * b * nx ** (1.0 - ex))
    return P, bound


# ---------------------------------------------------------------------------
# admissible parameter set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibleSet:
    """``{lam in box : |P_R (lam - theta_hat)|_inf <= eta}``.

    ``row_basis`` and ``null_basis`` hold orthonormal bases of the rowspace and
    nullspace of the regressor; the nullspace directions are unconstrained
    apart from the box.
    """

    theta_hat: np.ndarray
    eta: float
    box: np.ndarray
    row_basis: np.ndarray
    null_basis: np.ndarray

    def _proj(self):
        return self.row_basis @ self.row_basis.T

    def contains(self, lam, tol: float = 1e-12) -> bool:
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < self.box[:, 0] - tol) or np.any(lam > self.box[:, 1] + tol):
            return False
        return bool(np.max(np.abs(self._proj() @ (lam - self.theta_hat)), initial=0.0) <= self.eta + tol)

    @property
    def is_singleton(self) -> bool:
        return self.eta == 0.0 and self.null_basis.shape[1] == 0

    @property
    def covers_box(self) -> bool:
        """True when every point of the box is admissible (checked on the box vertices)."""
        p = self.box.shape[0]
        for bits in range(2**p):
            vert = np.array([self.box[i, (bits >> i) & 1] for i in range(p)])
            if not self.contains(vert, tol=1e-12):
                return False
        return True

    def null_segment(self):
        """End points of ``{theta_hat + s n} cap box`` for a one-dimensional nullspace."""
        if self.null_basis.shape[1] != 1:
            raise ValueError("null_segment needs a one-dimensional nullspace")
        nvec = self.null_basis[:, 0]
        lo, hi = -math.inf, math.inf
        for i, ni in enumerate(nvec):
            if abs(ni) < 1e-15:
                continue
            s1 = (self.box[i, 0] - self.theta_hat[i]) / ni
            s2 = (self.box[i, 1] - self.theta_hat[i]) / ni
            lo = max(lo, min(s1, s2))
            hi = min(hi, max(s1, s2))
        return self.theta_hat + lo * nvec, self.theta_hat + hi * nvec


def admissible_set(theta_hat, eta: float, box, Delta, tol=None) -> AdmissibleSet:
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    theta_hat = np.asarray(theta_hat, dtype=float)
    box = np.asarray(box, dtype=float).reshape(theta_hat.shape[0], 2)
    return AdmissibleSet(
        theta_hat=theta_hat.copy(),
        eta=float(eta),
        box=box,
        row_basis=rowspace_basis(Delta, tol),
        null_basis=nullspace_basis(Delta, tol),
    )
