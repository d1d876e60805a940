# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same functions and signatures as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, sin, cos, exp, log, fabs, INFINITY

cnp.import_array()

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_MAX_ITER = 2

cdef double _EPS = 1e-14


cdef inline void _rot_cols(double[:, ::1] J, Py_ssize_t a, Py_ssize_t b, double cc, double ss) noexcept nogil:
    cdef Py_ssize_t i
    cdef double xa, xb
    for i in range(J.shape[0]):
        xa = J[i, a]
        xb = J[i, b]
        J[i, a] = cc * xa + ss * xb
        J[i, b] = -ss * xa + cc * xb


cdef void _drop(double[:, ::1] J, double[:, ::1] R, Py_ssize_t[::1] active, Py_ssize_t q,
                double[::1] u, char[::1] is_active, Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t j, k, i
    cdef double h, cc, ss, ra, rb
    is_active[active[pos]] = 0
    for k in range(pos, q - 1):
        for i in range(q):
            R[i, k] = R[i, k + 1]
        u[k] = u[k + 1]
        active[k] = active[k + 1]
    for i in range(R.shape[0]):
        R[i, q - 1] = 0.0
    u[q - 1] = 0.0
    for j in range(pos, q - 1):
        h = hypot(R[j, j], R[j + 1, j])
        if h == 0.0:
            cc = 1.0
            ss = 0.0
        else:
            cc = R[j, j] / h
            ss = R[j + 1, j] / h
        R[j, j] = h
        R[j + 1, j] = 0.0
        for k in range(j + 1, q - 1):
            ra = R[j, k]
            rb = R[j + 1, k]
            R[j, k] = cc * ra + ss * rb
            R[j + 1, k] = -ss * ra + cc * rb
        _rot_cols(J, j, j + 1, cc, ss)


def gi_solve(H, c, A, b, double tol=1e-10, int max_iter=500):
    """Dual active-set solve of ``min 1/2 w'Hw + c'w s.t. A w <= b``.

    Returns ``(w, status, active, lam, iterations)``.
    """
    cdef double[:, ::1] Hm = np.ascontiguousarray(H, dtype=np.float64)
    cdef Py_ssize_t n = Hm.shape[0]
    cdef double[:, ::1] Am = np.ascontiguousarray(np.asarray(A, dtype=np.float64).reshape(-1, n))
    cdef double[::1] bm = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[::1] cm = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t m = Am.shape[0]
    lam_arr = np.zeros(m)
    cdef double[::1] lam = lam_arr
    cdef Py_ssize_t i, j, k, p, q, drop
    cdef double s, worst, acc, t1, t2, t, zn, zz, nw, u_new, h, cc, ss, ratio

    # Cholesky H = L L', then J = L^{-T} (upper triangular), so J' H J = I
    L_arr = np.zeros((n, n))
    cdef double[:, ::1] L = L_arr
    for j in range(n):
        acc = Hm[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if not acc > 0.0:
            raise np.linalg.LinAlgError("Matrix is not positive definite")
        L[j, j] = sqrt(acc)
        for i in range(j + 1, n):
            acc = Hm[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    J_arr = np.zeros((n, n))
    cdef double[:, ::1] J = J_arr
    # columns of L^{-1} by forward substitution; J = (L^{-1})'
    for j in range(n):
        for i in range(j, n):
            acc = 1.0 if i == j else 0.0
            for k in range(j, i):
                acc -= L[i, k] * J[j, k]
            J[j, i] = acc / L[i, i]
    w_arr = np.zeros(n)
    cdef double[::1] w = w_arr
    tmp_arr = np.zeros(n)
    cdef double[::1] tmp = tmp_arr
    for j in range(n):
        acc = 0.0
        for k in range(n):
            acc += J[k, j] * cm[k]
        tmp[j] = acc
    for k in range(n):
        acc = 0.0
        for j in range(n):
            acc += J[k, j] * tmp[j]
        w[k] = -acc

    norms_arr = np.zeros(m)
    cdef double[::1] norms = norms_arr
    N_arr = np.zeros((m, n))
    bb_arr = np.zeros(m)
    cdef double[:, ::1] N = N_arr
    cdef double[::1] bb = bb_arr
    usable_arr = np.zeros(m, dtype=np.int8)
    cdef char[::1] usable = usable_arr
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += Am[i, j] * Am[i, j]
        norms[i] = sqrt(acc)
        if norms[i] > _EPS:
            usable[i] = 1
            for j in range(n):
                N[i, j] = -Am[i, j] / norms[i]
            bb[i] = -bm[i] / norms[i]
        elif bm[i] < -tol:
            return w_arr, STATUS_INFEASIBLE, np.zeros(0, dtype=np.intp), lam_arr, 0

    R_arr = np.zeros((n, n))
    cdef double[:, ::1] R = R_arr
    u_arr = np.zeros(n + 1)
    cdef double[::1] u = u_arr
    active_arr = np.zeros(n + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] active = active_arr
    is_active_arr = np.zeros(m, dtype=np.int8)
    cdef char[::1] is_active = is_active_arr
    d_arr = np.zeros(n)
    z_arr = np.zeros(n)
    r_arr = np.zeros(n + 1)
    cdef double[::1] d = d_arr
    cdef double[::1] z = z_arr
    cdef double[::1] r = r_arr
    cdef int iters = 0
    cdef int status = STATUS_OPTIMAL
    q = 0

    while True:
        worst = 0.0
        p = -1
        for i in range(m):
            if usable[i] and not is_active[i]:
                s = -bb[i]
                for j in range(n):
                    s += N[i, j] * w[j]
                if s < worst:
                    worst = s
                    p = i
        if p < 0 or worst >= -tol:
            break
        u_new = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                status = STATUS_MAX_ITER
                break
            # d = J' n_p
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc += J[k, j] * N[p, k]
                d[j] = acc
            # z = J[:, q:] d[q:]
            for k in range(n):
                acc = 0.0
                for j in range(q, n):
                    acc += J[k, j] * d[j]
                z[k] = acc
            for j in range(q - 1, -1, -1):
                acc = d[j]
                for k in range(j + 1, q):
                    acc -= R[j, k] * r[k]
                r[j] = acc / R[j, j]
            t1 = INFINITY
            drop = -1
            for j in range(q):
                if r[j] > _EPS:
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1 = ratio
                        drop = j
            zn = 0.0
            zz = 0.0
            nw = 0.0
            for k in range(n):
                zn += z[k] * N[p, k]
                zz += z[k] * z[k]
                nw += N[p, k] * w[k]
            if sqrt(zz) > _EPS and zn > _EPS:
                t2 = -(nw - bb[p]) / zn
            else:
                t2 = INFINITY
            if t1 == INFINITY and t2 == INFINITY:
                status = STATUS_INFEASIBLE
                break
            if t2 == INFINITY:
                for j in range(q):
                    u[j] -= t1 * r[j]
                u_new += t1
                _drop(J, R, active, q, u, is_active, drop)
                q -= 1
                continue
            t = t1 if t1 < t2 else t2
            for k in range(n):
                w[k] += t * z[k]
            for j in range(q):
                u[j] -= t * r[j]
            u_new += t
            if t2 <= t1:
                for j in range(n - 1, q, -1):
                    h = hypot(d[j - 1], d[j])
                    if h == 0.0:
                        cc = 1.0
                        ss = 0.0
                    else:
                        cc = d[j - 1] / h
                        ss = d[j] / h
                    d[j - 1] = h
                    d[j] = 0.0
                    _rot_cols(J, j - 1, j, cc, ss)
                for j in range(q + 1):
                    R[j, q] = d[j]
                active[q] = p
                is_active[p] = 1
                u[q] = u_new
                q += 1
                break
            _drop(J, R, active, q, u, is_active, drop)
            q -= 1
        if status != STATUS_OPTIMAL:
            break

    for j in range(q):
        lam[active[j]] = u[j] / norms[active[j]]
    return w_arr, status, active_arr[:q].copy(), lam_arr, iters


def quadrotor_terms(chi, params):
    """Drift, input matrix and drag-regressor diagonal of the quadrotor."""
    cdef double[::1] x = np.ascontiguousarray(chi, dtype=np.float64)
    cdef double[::1] pr = np.ascontiguousarray(params, dtype=np.float64)
    cdef double u = x[3], v = x[4], w = x[5], phi = x[6], th = x[7], psi = x[8]
    cdef double p = x[9], q = x[10], r = x[11]
    cdef double mass = pr[0], jx = pr[1], jy = pr[2], jz = pr[3], grav = pr[4], kd = pr[5]
    cdef double wx = pr[6], wy = pr[7], wz = pr[8]
    cdef double cph = cos(phi), sph = sin(phi), cth = cos(th), sth = sin(th), cps = cos(psi), sps = sin(psi)
    cdef double tth = sth / cth
    cdef double r11 = cth * cps, r12 = sph * sth * cps - cph * sps, r13 = cph * sth * cps + sph * sps
    cdef double r21 = cth * sps, r22 = sph * sth * sps + cph * cps, r23 = cph * sth * sps - sph * cps
    cdef double r31 = -sth, r32 = sph * cth, r33 = cph * cth
    f_arr = np.empty(12)
    cdef double[::1] f = f_arr
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
    G_arr = np.zeros((12, 4))
    cdef double[:, ::1] G = G_arr
    G[5, 0] = -1.0 / mass
    G[9, 1] = 1.0 / jx
    G[10, 2] = 1.0 / jy
    G[11, 3] = 1.0 / jz
    cdef double vr1 = r11 * wx + r21 * wy + r31 * wz - u
    cdef double vr2 = r12 * wx + r22 * wy + r32 * wz - v
    cdef double vr3 = r13 * wx + r23 * wy + r33 * wz - w
    cdef double k = kd * sqrt(vr1 * vr1 + vr2 * vr2 + vr3 * vr3) / mass
    return f_arr, G_arr, np.array([k * vr1, k * vr2, k * vr3])


cdef double _resid(double y, double[::1] cs, double[::1] lam, Py_ssize_t rk, double vps, double log_cmax,
                   double dt, double a, double b, double ex, double* dh_out, double* phi_out) noexcept nogil:
    cdef double s = exp(y)
    cdef double sp = s ** ex
    cdef double phi = a * sp + b / sp
    cdef double dphi = ex * (a * sp - b / sp)
    cdef double m = vps, g2, acc = 0.0, den, t
    cdef Py_ssize_t i
    phi_out[0] = phi
    for i in range(rk):
        m = max(m, fabs(cs[i] / (1.0 + dt * phi * lam[i])))
    if m == 0.0:
        dh_out[0] = 1.0
        return INFINITY
    g2 = (vps / m) * (vps / m)
    for i in range(rk):
        den = 1.0 + dt * phi * lam[i]
        t = cs[i] / den / m
        g2 += t * t
        acc += t * t * lam[i] / den
    dh_out[0] = 1.0 + dt * dphi * acc / g2
    return y - log_cmax - log(m) - 0.5 * log(g2)


def implicit_gain(c, lam, double vperp2, double dt, double a, double b, double mu):
    """Scalar weight ``phi(s*)`` of one backward-Euler step of the fixed-time law."""
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t rk = cv.shape[0], i
    cdef double vp = sqrt(vperp2)
    cdef double cmax = vp
    for i in range(rk):
        cmax = max(cmax, fabs(cv[i]))
    if cmax == 0.0:
        return 0.0
    cs_arr = np.empty(rk)
    cdef double[::1] cs = cs_arr
    cdef double vps = vp / cmax
    cdef double tot = vps * vps
    for i in range(rk):
        cs[i] = cv[i] / cmax
        tot += cs[i] * cs[i]
    cdef double nv = cmax * sqrt(tot)
    cdef double ex = 2.0 / mu
    cdef double log_cmax = log(cmax)
    cdef double yhi = log(nv)
    cdef double ylo = max(yhi - 69.0, -700.0)
    if vp > 0.0:
        ylo = max(ylo, log(vp))
    ylo = min(ylo, yhi)
    cdef double h, dh, phi, y, step, ynew
    h = _resid(ylo, cs, lv, rk, vps, log_cmax, dt, a, b, ex, &dh, &phi)
    # the root can lie far below nv for tiny residuals; widen the bracket downwards
    while h > 0.0 and ylo > -700.0:
        ylo = max(ylo - 69.0, -700.0)
        h = _resid(ylo, cs, lv, rk, vps, log_cmax, dt, a, b, ex, &dh, &phi)
    if h >= 0.0:
        return phi
    y = yhi
    cdef int it
    for it in range(200):
        h = _resid(y, cs, lv, rk, vps, log_cmax, dt, a, b, ex, &dh, &phi)
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
        if fabs(ynew - y) <= 1e-15 * max(1.0, fabs(y)) or yhi - ylo <= 1e-15 * max(1.0, fabs(y)):
            y = ynew
            break
        y = ynew
    _resid(y, cs, lv, rk, vps, log_cmax, dt, a, b, ex, &dh, &phi)
    return phi
