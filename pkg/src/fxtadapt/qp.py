"""Small dense convex QPs and the controller assemblies built on them.

The solver is a dual active-set method (Goldfarb-Idnani) operating on a
Cholesky factor of the Hessian; see :mod:`fxtadapt._kernels_py` for the
reference implementation. Problems here have at most a handful of variables,
so the priority is exact, reproducible active sets rather than speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from fxtadapt._backend import kernels
from fxtadapt.errors import DimensionMismatch, PitchSingularity
from fxtadapt.safety import (
    BarrierFunction,
    ClfSpec,
    ShrunkenBarrier,
    nu_projection,
    racbf_margin,
    shrunken_value,
    worst_case_projection,
)
from fxtadapt.systems import IPHI, IPSI, IP, ITHETA, IU, IW, IZ, PITCH_GUARD, QuadrotorParams, rotation_body_to_inertial

STATUS_NAMES = {0: "optimal", 1: "infeasible", 2: "max_iter"}


@dataclass
class QuadraticProgram:
    """``min 1/2 w'Hw + c'w  s.t.  A_ineq w <= b_ineq,  lb <= w <= ub``."""

    H: np.ndarray
    c: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    #: barrier margins ``r_i`` used by the controller builders (for logging)
    margins: tuple = ()

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        if self.H.shape != (n, n):
            raise DimensionMismatch("H must be square")
        if np.abs(self.H - self.H.T).max() > 1e-12 * max(1.0, np.abs(self.H).max()):
            raise ValueError("H must be symmetric")
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        self.A_ineq = np.asarray(self.A_ineq, dtype=float).reshape(-1, n)
        self.b_ineq = np.asarray(self.b_ineq, dtype=float).reshape(-1)
        if self.A_ineq.shape[0] != self.b_ineq.shape[0]:
            raise DimensionMismatch("A_ineq and b_ineq row counts differ")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(n)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def stacked(self):
        """All constraints as rows ``A w <= b`` plus the index each row reports as."""
        n, m = self.n, self.A_ineq.shape[0]
        rows = [self.A_ineq]
        rhs = [self.b_ineq]
        ids = list(range(m))
        eye = np.eye(n)
        lo = np.flatnonzero(np.isfinite(self.lb))
        hi = np.flatnonzero(np.isfinite(self.ub))
        rows.append(-eye[lo])
        rhs.append(-self.lb[lo])
        ids.extend(m + j for j in lo)
        rows.append(eye[hi])
        rhs.append(self.ub[hi])
        ids.extend(m + n + j for j in hi)
        return np.vstack(rows), np.concatenate(rhs), np.asarray(ids, dtype=np.intp)


@dataclass
class QpSolution:
    """Solver output.

    ``active_set`` indexes rows of ``A_ineq`` as ``0..m-1``; lower bound ``j`` is
    reported as ``m + j`` and upper bound ``j`` as ``m + n + j``.
    """

    w: np.ndarray
    status: str
    kkt_residual: float
    active_set: tuple
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


def kkt_residual(A, b, H, c, w, lam) -> float:
    """Max of stationarity, primal violation, dual violation and complementarity."""
    stat = H @ w + c + A.T @ lam
    slack = A @ w - b
    parts = [
        float(np.max(np.abs(stat), initial=0.0)),
        float(np.max(slack, initial=0.0)),
        float(np.max(-lam, initial=0.0)),
        float(np.max(np.abs(lam * slack), initial=0.0)),
    ]
    return max(parts)


def solve_qp(qp: QuadraticProgram, tol: float = 1e-10, max_iter: int = 500) -> QpSolution:
    A, b, ids = qp.stacked()
    w, status, active, lam, iters = kernels.gi_solve(
        np.ascontiguousarray(qp.H), np.ascontiguousarray(qp.c), np.ascontiguousarray(A), np.ascontiguousarray(b),
        float(tol), int(max_iter)
    )
    w = np.asarray(w)
    lam = np.asarray(lam)
    res = kkt_residual(A, b, qp.H, qp.c, w, lam)
    return QpSolution(
        w=w,
        status=STATUS_NAMES[int(status)],
        kkt_residual=res,
        active_set=tuple(sorted(int(ids[i]) for i in np.asarray(active))),
        multipliers=lam,
        iterations=int(iters),
    )


# ---------------------------------------------------------------------------
# gap scenario: fixed-time CLF + CBF QP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapWeights:
    Q: tuple = (1.0, 1.0)
    q0: float = 10.0
    p: tuple = (10.0, 10.0)


def build_gap_qp(model, x, theta_hat, eta: float, cbfs: Sequence[BarrierFunction], clf: ClfSpec,
                 weights: GapWeights, ubar, delta_lb: float = 1.0, eta_rate: float = 0.0,
                 trace_inv: float = 0.0, box=None) -> QuadraticProgram:
    """Decision vector ``(u, delta0, delta_1..delta_k)``.

    Barrier rows use the shrunken value ``h - 1/2 eta^2 trace_inv`` and the
    margin ``tr(Gamma^-1) eta eta_dot - nu``; the CLF row uses the largest value
    of the uncertain drift over the admissible set. ``box=None`` disables the
    clamp to the parameter box (needed for rank-deficient regressors).
    """
    if len(cbfs) == 0:
        raise ValueError("at least one barrier is required")
    x = np.asarray(x, dtype=float)
    f, g, D = model.evaluate_terms(x)
    m = model.m
    k = len(cbfs)
    nvar = m + 1 + k
    H = np.zeros((nvar, nvar))
    H[:m, :m] = np.diag(np.asarray(weights.Q, dtype=float).reshape(m))
    H[m, m] = 2.0 * weights.q0
    pw = np.asarray(weights.p, dtype=float).reshape(k)
    for i in range(k):
        H[m + 1 + i, m + 1 + i] = 2.0 * pw[i]

    A = np.zeros((1 + k, nvar))
    b = np.zeros(1 + k)
    V = clf.value(x)
    dV = clf.gradient(x)
    phi_V = worst_case_projection(dV @ D, theta_hat, eta, box)
    A[0, :m] = dV @ g
    A[0, m] = -1.0
    b[0] = -clf.c1 * V**clf.gamma1 - clf.c2 * V**clf.gamma2 - float(dV @ f) - phi_V
    shrink = 0.5 * eta * eta * trace_inv
    margins = []
    for i, h in enumerate(cbfs):
        dh = h.gradient(x)
        hr = h.value(x) - shrink
        nu = nu_projection(dh @ D, theta_hat, eta, box)
        r = trace_inv * eta * eta_rate - nu
        margins.append(r)
        A[1 + i, :m] = -(dh @ g)
        A[1 + i, m + 1 + i] = -hr
        b[1 + i] = float(dh @ f) - r

    ubar = np.broadcast_to(np.asarray(ubar, dtype=float), (m,))
    lb = np.concatenate([-ubar, [-np.inf], np.full(k, delta_lb)])
    ub = np.concatenate([ubar, [np.inf], np.full(k, np.inf)])
    return QuadraticProgram(H, np.zeros(nvar), A, b, lb, ub, tuple(margins))


# ---------------------------------------------------------------------------
# quadrotor: tracking CBF filter and nominal cascade controller
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackingWeights:
    p1: float = 100.0
    p2: float = 100.0


def build_tracking_qp(model, chi, u_nom, cbfs: Sequence[ShrunkenBarrier], t: float, theta_hat, box,
                      weights: TrackingWeights, bounds, delta_lb: float = 1e-3) -> QuadraticProgram:
    """Minimal-deviation filter: decision vector ``(u, delta_1, delta_2)``.

    Each row reads ``L_f h + L_g h u >= -delta_i h_r,i + r_i`` with ``r_i`` from
    :func:`fxtadapt.safety.racbf_margin`.
    """
    if len(cbfs) != 2:
        raise ValueError("tracking filter expects exactly two barriers")
    chi = np.asarray(chi, dtype=float)
    f, g, _ = model.evaluate_terms(chi)
    m = model.m
    nvar = m + 2
    H = np.eye(nvar)
    H[m, m] = 2.0 * weights.p1
    H[m + 1, m + 1] = 2.0 * weights.p2
    c = np.zeros(nvar)
    c[:m] = -np.asarray(u_nom, dtype=float)
    A = np.zeros((2, nvar))
    b = np.zeros(2)
    margins = []
    for i, sb in enumerate(cbfs):
        dh = sb.base.gradient(chi)
        hr = shrunken_value(sb, chi, t)
        r = racbf_margin(sb, model, chi, t, theta_hat, box)
        margins.append(r)
        A[i, :m] = -(dh @ g)
        A[i, m + i] = -hr
        b[i] = float(dh @ f) - r
    bounds = np.asarray(bounds, dtype=float).reshape(m, 2)
    lb = np.concatenate([bounds[:, 0], [delta_lb, delta_lb]])
    ub = np.concatenate([bounds[:, 1], [np.inf, np.inf]])
    return QuadraticProgram(H, c, A, b, lb, ub, tuple(margins))


@dataclass(frozen=True)
class ReferencePoint:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0


@dataclass(frozen=True)
class TrackingGains:
    """Cascade PD gains; position gains per axis (x, y, altitude)."""

    kp_pos: tuple = (4.0, 4.0, 6.0)
    kd_pos: tuple = (4.0, 4.0, 5.0)
    kp_att: tuple = (150.0, 150.0, 40.0)
    kd_att: tuple = (25.0, 25.0, 12.0)
    tilt_max: float = 0.6


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def outer_loop(chi, ref: ReferencePoint, params: QuadrotorParams, gains: TrackingGains, drag_body=None):
    """Thrust magnitude and desired Euler angles from a position PD law.

    ``drag_body`` is an estimate of the drag acceleration in body axes; it is
    cancelled in the commanded force vector.
    """
    chi = np.asarray(chi, dtype=float)
    if abs(chi[ITHETA]) >= math.pi / 2 - PITCH_GUARD:
        raise PitchSingularity("pitch too close to +-pi/2")
    R = rotation_body_to_inertial(chi[IPHI], chi[ITHETA], chi[IPSI])
    v_ned = R @ chi[IU:IW + 1]
    vel = np.array([v_ned[0], v_ned[1], -v_ned[2]])
    pos = chi[:IZ + 1]
    acc = (np.asarray(ref.acceleration, dtype=float)
           + np.asarray(gains.kp_pos) * (np.asarray(ref.position, dtype=float) - pos)
           + np.asarray(gains.kd_pos) * (np.asarray(ref.velocity, dtype=float) - vel))
    a_ned = np.array([acc[0], acc[1], -acc[2]])
    fvec = np.array([0.0, 0.0, params.gravity_m_s2]) - a_ned
    if drag_body is not None:
        fvec = fvec + R @ np.asarray(drag_body, dtype=float)
    # tilt saturation: the commanded force must point down within tilt_max
    vz = max(fvec[2], 0.1 * params.gravity_m_s2)
    horiz = fvec[:2]
    hn = float(np.linalg.norm(horiz))
    lim = vz * math.tan(gains.tilt_max)
    if hn > lim:
        horiz = horiz * (lim / hn)
    fvec = np.array([horiz[0], horiz[1], vz])
    b3 = fvec / np.linalg.norm(fvec)
    thrust = params.mass_kg * float(fvec @ R[:, 2])
    cy, sy = math.cos(ref.yaw), math.sin(ref.yaw)
    bx = cy * b3[0] + sy * b3[1]
    by = -sy * b3[0] + cy * b3[1]
    phi_d = math.asin(max(-1.0, min(1.0, -by)))
    theta_d = math.atan2(bx, b3[2])
    return max(thrust, 0.0), phi_d, theta_d, ref.yaw


def nominal_tracking_control(chi, ref: ReferencePoint, params: QuadrotorParams = QuadrotorParams(),
                             gains: TrackingGains = TrackingGains(), bounds=None, drag_body=None) -> np.ndarray:
    """Cascade PD tracker returning ``[F, tau_phi, tau_theta, tau_psi]``."""
    chi = np.asarray(chi, dtype=float)
    thrust, phi_d, theta_d, psi_d = outer_loop(chi, ref, params, gains, drag_body)
    err = np.array([phi_d - chi[IPHI], theta_d - chi[ITHETA], _wrap(psi_d - chi[IPSI])])
    rates = chi[IP:IP + 3]
    J = np.asarray(params.inertia_kg_m2)
    tau = J * (np.asarray(gains.kp_att) * err - np.asarray(gains.kd_att) * rates)
    u = np.concatenate([[thrust], tau])
    if bounds is not None:
        bounds = np.asarray(bounds, dtype=float).reshape(4, 2)
        u = np.clip(u, bounds[:, 0], bounds[:, 1])
    return u
