"""Pure-Python reference implementations of the hot kernels.

The compiled module ``fxtadapt._kernels`` exposes the same functions with
the same signatures; :mod:`fxtadapt._backend` picks whichever is available.
Keep the two in lock-step: the test-suite runs every kernel test against
both backends.
"""
from __future__ import annotations

import math

import numpy as np

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAX_ITER = 2

_EPS = 1e-14
_Y_FLOOR = -700.0  # log of the smallest step norm searched by implicit_gain


def _givens(a, b):
    h = math.hypot(a, b)
    if h == 0.0:
        return 1.0, 0.0, 0.0
    return a / h, b / h, h


def gi_solve(H, c, A, b, tol=1e-10, max_iter=500):
    """Dual active-set (Goldfarb-Idnani) solve of ``min 1/2 w'Hw + c'w s.t. A w <= b``.

    Returns ``(w, status, active, lam, iterations)`` where ``active`` lists the
    indices of rows of ``A`` in the final working set and ``lam`` holds one
    nonnegative multiplier per row of ``A`` (zero for inactive rows).
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, H.shape[0])
    b = np.asarray(b, dtype=float)
    n = H.shape[0]
    m = A.shape[0]
    lam = np.zeros(m)

    L = np.linalg.cholesky(H)
    # J = L^{-T}, so that J' H J = I
    J = np.linalg.solve(L, np.eye(n)).T.copy()
    w = -(J @ (J.T @ c))

    norms = np.sqrt(np.einsum("ij,ij->i", A, A))
    usable = norms > _EPS
    for i in range(m):
        if not usable[i] and b[i] < -tol:
            return w, STATUS_INFEASIBLE, np.zeros(0, dtype=np.intp), lam, 0
    # GI form: N_i' w >= bb_i
    N = np.zeros_like(A)
    bb = np.zeros(m)
    N[usable] = -A[usable] / norms[usable, None]
    bb[usable] = -b[usable] / norms[usable]

    R = np.zeros((n, n))
    u = np.zeros(n + 1)
    active = []
    is_active = np.zeros(m, dtype=bool)
    iters = 0

    while True:
        # step 1: most violated constraint
        s = N @ w - bb
        worst = 0.0
        p = -1
        for i in range(m):
            if usable[i] and not is_active[i] and s[i] < worst:
                worst = s[i]
                p = i
        if p < 0 or worst >= -tol:
            break
        npl = N[p]
        u_new = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                return _finish(w, STATUS_MAX_ITER, active, u, norms, lam, iters)
            q = len(active)
            d = J.T @ npl
            z = J[:, q:] @ d[q:]
            r = np.zeros(q)
            for j in range(q - 1, -1, -1):
                acc = d[j]
                for k in range(j + 1, q):
                    acc -= R[j, k] * r[k]
                r[j] = acc / R[j, j]
            t1 = math.inf
            drop = -1
            for j in range(q):
                if r[j] > _EPS:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        drop = j
            zn = float(z @ npl)
            if math.sqrt(float(z @ z)) > _EPS and zn > _EPS:
                t2 = -(float(npl @ w) - bb[p]) / zn
            else:
                t2 = math.inf
            if t1 == math.inf and t2 == math.inf:
                return _finish(w, STATUS_INFEASIBLE, active, u, norms, lam, iters)
            if t2 == math.inf:
                # dual-only step, then drop a blocking constraint
                for j in range(q):
                    u[j] -= t1 * r[j]
                u_new += t1
                _drop(J, R, active, u, is_active, drop)
                continue
            t = min(t1, t2)
            w = w + t * z
            for j in range(q):
                u[j] -= t * r[j]
            u_new += t
            if t2 <= t1:
                # full step: add p to the working set
                for j in range(n - 1, q, -1):
                    cc, ss, h = _givens(d[j - 1], d[j])
                    d[j - 1] = h
                    d[j] = 0.0
                    col_a = J[:, j - 1].copy()
                    col_b = J[:, j].copy()
                    J[:, j - 1] = cc * col_a + ss * col_b
                    J[:, j] = -ss * col_a + cc * col_b
                R[: q + 1, q] = d[: q + 1]
                active.append(p)
                is_active[p] = True
                u[q] = u_new
                break
            _drop(J, R, active, u, is_active, drop)

    return _finish(w, STATUS_OPTIMAL, active, u, norms, lam, iters)


def _drop(J, R, active, u, is_active, pos):
    q = len(active)
    is_active[active[pos]] = False
    for k in range(pos, q - 1):
        R[:q, k] = R[:q, k + 1]
        u[k] = u[k + 1]
    R[:, q - 1] = 0.0
    u[q - 1] = 0.0
    for j in range(pos, q - 1):
        cc, ss, h = _givens(R[j, j], R[j + 1, j])
        R[j, j] = h
        R[j + 1, j] = 0.0
        for k in range(j + 1, q - 1):
            ra = R[j, k]
            rb = R[j + 1, k]
            R[j, k] = cc * ra + ss * rb
            R[j + 1, k] = -ss * ra + cc * rb
        col_a = J[:, j].copy()
        col_b = J[:, j + 1].copy()
        J[:, j] = cc * col_a + ss * col_b
        J[:, j + 1] = -ss * col_a + cc * col_b
    active.pop(pos)


def _finish(w, status, active, u, norms, lam, iters):
    for j, idx in enumerate(active):
        lam[idx] = u[j] / norms[idx]
    return w, status, np.asarray(active, dtype=np.intp), lam, iters


def quadrotor_terms(chi, params):
    """Drift, input matrix and drag-regressor diagonal of the quadrotor.

    ``params`` is ``[mass, Jx, Jy, Jz, g, K_delta, wind_x, wind_y, wind_z]``
    with the wind expressed in the inertial (north-east-down) axes used by
    the rotation matrix. Returns ``(f, G, dvec)`` where ``dvec`` is the
    diagonal of the 3x3 drag block.
    """
    (px, py, pz, u, v, w, phi, th, psi, p, q, r) = (float(s) for s in chi)
    mass, jx, jy, jz, grav, kd, wx, wy, wz = (float(s) for s in params)
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(th), math.sin(th)
    cps, sps = math.cos(psi), math.sin(psi)
    tth = sth / cth
    r11 = cth * cps
    r12 = sph * sth * cps - cph * sps
    r13 = cph * sth * cps + sph * sps
    r21 = cth * sps
    r22 = sph * sth * sps + cph * cps
    r23 = cph * sth * sps - sph * cps
    r31 = -sth
    r32 = sph * cth
    r33 = cph * cth

    f = np.empty(12)
    f[0] = r11 * u + r12 * v + r13 * w
    f[1] = r21 * u + r22 * v + r23 * w
    f[2] = -(r31 * u + r32 * v + r33 * w)
    f[3] = r * v - q * w - grav * sth
    f[4] = p * w - r * u + grav * cth * sph
    f[5] = q * u - p * v + grav * cth * cph
    f[6] = p + sph * tth * q + cph * tth * r
    f[7] = cph * q - sph * r
    f[8] = (sph * q + cph * r) / cth
    f[9] = (jy - jz) / jx * q * r
    f[10] = (jz - jx) / jy * p * r
    f[11] = (jx - jy) / jz * p * q

    G = np.zeros((12, 4))
    G[5, 0] = -1.0 / mass
    G[9, 1] = 1.0 / jx
    G[10, 2] = 1.0 / jy
    G[11, 3] = 1.0 / jz

    vr1 = r11 * wx + r21 * wy + r31 * wz - u
    vr2 = r12 * wx + r22 * wy + r32 * wz - v
    vr3 = r13 * wx + r23 * wy + r33 * wz - w
    k = kd * math.sqrt(vr1 * vr1 + vr2 * vr2 + vr3 * vr3) / mass
    dvec = np.array([k * vr1, k * vr2, k * vr3])
    return f, G, dvec


def implicit_gain(c, lam, vperp2, dt, a, b, mu):
    """Scalar weight ``phi(s*)`` of one backward-Euler step of the fixed-time law.

    With ``N = M Gamma M'`` diagonalised as ``U diag(lam) U'`` and ``c = U' v``,
    the implicit step requires ``s = ||q||`` where
    ``q = (I + dt phi(s) N)^{-1} v`` and ``phi(s) = a s^(2/mu) + b s^(-2/mu)``.
    The fixed point is unique (the step is a proximal map of a convex
    potential); it is found by a bracketed Newton iteration on
    ``log s - log ||q(s)||``. Roots below ``exp(-700)`` are clipped to that floor.
    """
    r = len(c)
    lam = [float(lam[i]) for i in range(r)]
    # work with inputs scaled by their largest magnitude so no square underflows
    vp = math.sqrt(vperp2)
    cmax = max([abs(float(c[i])) for i in range(r)] + [vp])
    if cmax == 0.0:
        return 0.0
    cs = [float(c[i]) / cmax for i in range(r)]
    vps = vp / cmax
    nv = cmax * math.sqrt(vps * vps + sum(x * x for x in cs))
    ex = 2.0 / mu
    log_cmax = math.log(cmax)

    def resid(y):
        s = math.exp(y)
        sp = s**ex
        phi = a * sp + b / sp
        dphi = ex * (a * sp - b / sp)  # s * dphi/ds
        dens = [1.0 + dt * phi * lam[i] for i in range(r)]
        ts = [cs[i] / dens[i] for i in range(r)]
        m = max([abs(t) for t in ts] + [vps])
        if m == 0.0:  # the step norm underflowed: s is certainly above it
            return math.inf, 1.0, phi
        g2 = (vps / m) ** 2
        acc = 0.0
        for i in range(r):
            t2 = (ts[i] / m) ** 2
            g2 += t2
            acc += t2 * lam[i] / dens[i]
        # residual in log form, y - log g(y), stays well scaled far from the root
        h = y - log_cmax - math.log(m) - 0.5 * math.log(g2)
        dh = 1.0 + dt * dphi * acc / g2
        return h, dh, phi

    yhi = math.log(nv)
    ylo = min(max(yhi - 69.0, math.log(vp) if vp > 0.0 else _Y_FLOOR, _Y_FLOOR), yhi)
    hlo, _, phi_lo = resid(ylo)
    # the root can lie far below nv for tiny residuals; widen the bracket downwards
    while hlo > 0.0 and ylo > _Y_FLOOR:
        ylo = max(ylo - 69.0, _Y_FLOOR)
        hlo, _, phi_lo = resid(ylo)
    if hlo >= 0.0:
        return phi_lo
    y = yhi
    for _ in range(200):
        h, dh, phi = resid(y)
        if h == 0.0:
            return phi
        if h > 0.0:
            yhi = y
        else:
            ylo = y
        step = h / dh if dh > 0.0 else 0.0
        ynew = y - step
        if not (ylo < ynew < yhi) or step == 0.0:
            ynew = 0.5 * (ylo + yhi)
        if abs(ynew - y) <= 1e-15 * max(1.0, abs(y)) or yhi - ylo <= 1e-15 * max(1.0, abs(y)):
            y = ynew
            break
        y = ynew
    return resid(y)[2]
