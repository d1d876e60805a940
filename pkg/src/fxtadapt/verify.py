"""Randomized property suites behind ``fxtadapt verify``.

Each suite draws instances from a seeded generator, checks one inequality or
equivalence per instance against an independent oracle and returns a
:class:`SuiteReport`. A report with ``violations > 0`` carries the first
counterexample so it can be serialized and replayed.

Suites
------
``lemmas``
    The cross-term bound used in the robustness analysis (vectorized, any
    sample count) and the settling-time integral bounds for both disturbance
    regimes (adaptive quadrature in ``ln V``).
``envelopes``
    The closed-form error envelope against a numerical solution of its
    comparison equation and against the true continuous error flow, plus
    monotonicity, its derivative, and containment of random initial errors.
``qp``
    The active-set solver against brute-force enumeration of active sets,
    plus bitwise repeatability.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from fxtadapt import estimation
from fxtadapt.estimation import (
    AdaptationGains,
    error_envelope,
    error_envelope_rate,
    settling_basin_level,
    settling_bound_large,
    settling_bound_small,
    make_envelope,
)
from fxtadapt.qp import QuadraticProgram, solve_qp

SUITES = ("lemmas", "envelopes", "qp")


@dataclass
class SuiteReport:
    suite: str
    checks: dict = field(default_factory=dict)  # name -> {"samples": n, "violations": k}
    counterexample: Optional[dict] = None
    seconds: float = 0.0
    notes: dict = field(default_factory=dict)  # diagnostics that never count as violations

    @property
    def violations(self) -> int:
        return sum(c["violations"] for c in self.checks.values())

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["violations"] = self.violations
        out["ok"] = self.ok
        return out

    def _record(self, name, samples, bad_mask, make_example):
        bad = np.flatnonzero(np.asarray(bad_mask))
        self.checks[name] = {"samples": int(samples), "violations": int(bad.size)}
        if bad.size and self.counterexample is None:
            self.counterexample = {"check": name, **_plain(make_example(int(bad[0])))}


def _plain(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        else:
            out[k] = v
    return out


# ---------------------------------------------------------------------------
# lemmas
# ---------------------------------------------------------------------------

def _bound_fn():
    # looked up at call time so a test can substitute a deliberately broken bound
    return estimation.cross_term_bound_batch


def cross_term_instances(rng: np.random.Generator, n: int):
    """Random ``(x, y, a, b, m, B_y)`` with ``|y| <= B_y < |x| / 2`` and ``m > 2``.

    A third of the perturbations are drawn anti-parallel to ``x`` at full
    length, which is where the inequality is tightest.
    """
    dim = rng.integers(1, 7)
    B = 10.0 ** rng.uniform(-3, 2, n)
    X = rng.standard_normal((n, dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X *= (B * (2.0 + 10.0 ** rng.uniform(-6, 2, n)))[:, None]
    Y = rng.standard_normal((n, dim))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    Y *= (B * rng.uniform(0.0, 1.0, n))[:, None]
    anti = rng.random(n) < 1.0 / 3.0
    Y[anti] = -X[anti] / np.linalg.norm(X[anti], axis=1, keepdims=True) * B[anti, None]
    a = 10.0 ** rng.uniform(-2, 2, n)
    b = 10.0 ** rng.uniform(-2, 2, n)
    m = 2.0 + 10.0 ** rng.uniform(-2, 1.5, n)
    return X, Y, a, b, m, B


def check_cross_term(report: SuiteReport, samples: int, rng: np.random.Generator, chunk: int = 20000):
    done = 0
    total_bad = 0
    bound_fn = _bound_fn()
    while done < samples:
        n = min(chunk, samples - done)
        X, Y, a, b, m, B = cross_term_instances(rng, n)
        P, bound = bound_fn(X, Y, a, b, m, B)
        bad = ~(P >= bound - 1e-12 * np.abs(bound))
        if bad.any() and report.counterexample is None:
            i = int(np.flatnonzero(bad)[0])
            report.counterexample = {"check": "cross_term", **_plain(
                {"x": X[i], "y": Y[i], "a": a[i], "b": b[i], "m": m[i], "B_y": B[i], "P": P[i], "bound": bound[i]})}
        total_bad += int(bad.sum())
        done += n
    report.checks["cross_term"] = {"samples": samples, "violations": total_bad}


def settling_integral(c1, c2, c3, mu, V0) -> float:
    """``int_1^V0 dV / (c1 V^(1+1/mu) - c3 V + c2 V^(1-1/mu))`` by quadrature in ``u = ln V``."""
    def integrand(u):
        return 1.0 / (c1 * math.exp(u / mu) - c3 + c2 * math.exp(-u / mu))

    upper = math.log(V0)
    val, _ = quad(integrand, 0.0, upper, epsabs=0.0, epsrel=1e-12, limit=500)
    return val


def check_settling_small(report: SuiteReport, samples: int, rng: np.random.Generator):
    """Sub-threshold regime: the integral from any ``V0 > 1`` stays below the closed form."""
    rows = []
    bad = np.zeros(samples, dtype=bool)
    for i in range(samples):
        c1 = 10.0 ** rng.uniform(-2, 2)
        c2 = 10.0 ** rng.uniform(-2, 2)
        c3 = rng.uniform(0.0, 0.999) * 2.0 * math.sqrt(c1 * c2)
        mu = 2.0 + 10.0 ** rng.uniform(-1, 1.3)
        V0 = 1.0 + 10.0 ** rng.uniform(-3, 12)
        val = settling_integral(c1, c2, c3, mu, V0)
        bound = settling_bound_small(c1, c2, c3, mu)
        rows.append(dict(c1=c1, c2=c2, c3=c3, mu=mu, V0=V0, integral=val, bound=bound))
        bad[i] = not val <= bound * (1.0 + 1e-6)
    report._record("settling_small", samples, bad, lambda i: rows[i])


def check_settling_large(report: SuiteReport, samples: int, rng: np.random.Generator):
    """Above-threshold regime: initial values inside the k-scaled basin.

    Instances are drawn through the two positive roots ``r_lo < r_hi`` of the
    denominator's quadratic in ``V^(1/mu)``; the basin edge is ``k r_lo``.
    """
    rows = []
    bad = np.zeros(samples, dtype=bool)
    for i in range(samples):
        k = rng.uniform(0.05, 0.99)
        r_lo = (1.0 + 10.0 ** rng.uniform(-3, 2)) / k
        r_hi = r_lo * (1.0 + 10.0 ** rng.uniform(-3, 2))
        c1 = 10.0 ** rng.uniform(-2, 2)
        c3 = c1 * (r_lo + r_hi)
        c2 = c1 * r_lo * r_hi
        mu = 2.0 + 10.0 ** rng.uniform(-1, 1.3)
        edge = settling_basin_level(c1, c2, c3, k)
        x0 = 1.0 + rng.uniform(0.0, 1.0) * (edge - 1.0)
        V0 = x0**mu
        val = settling_integral(c1, c2, c3, mu, V0) if V0 > 1.0 else 0.0
        bound = settling_bound_large(c1, c2, mu, k)
        rows.append(dict(c1=c1, c2=c2, c3=c3, mu=mu, k=k, V0=V0, integral=val, bound=bound))
        bad[i] = not val <= bound * (1.0 + 1e-6)
    report._record("settling_large", samples, bad, lambda i: rows[i])


def run_lemmas(samples: int = 100_000, settling_samples: int = 1000, seed: int = 0) -> SuiteReport:
    rng = np.random.default_rng(seed)
    rep = SuiteReport("lemmas")
    t0 = time.perf_counter()
    check_cross_term(rep, samples, rng)
    check_settling_small(rep, settling_samples, rng)
    check_settling_large(rep, settling_samples, rng)
    rep.seconds = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------

def _random_gains(rng) -> AdaptationGains:
    p = int(rng.integers(1, 5))
    gamma = 10.0 ** rng.uniform(-1, 2.5, p)
    if rng.random() < 0.3:
        gamma = np.full(p, gamma[0])
    return AdaptationGains(tuple(gamma), 10.0 ** rng.uniform(-1, 1), 10.0 ** rng.uniform(-1, 1),
                           2.0 + 10.0 ** rng.uniform(-1, 1), 10.0, 0.0)


def _random_regressor(rng, p: int, sigma: float) -> np.ndarray:
    """Symmetric regressor whose smallest singular value is exactly ``sigma``."""
    U, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = 10.0 ** rng.uniform(0, 1, p)
    s[0] = 1.0
    return sigma * (U * s) @ U.T


def error_flow(M, gains: AdaptationGains, e0, t_end: float):
    """Integrate the continuous parameter-error flow of the fixed-time law.

    Stops once the weighted error energy falls below ``1e-12`` of its start,
    where the envelope comparison stops being informative.
    """
    G = np.asarray(gains.gamma)
    MtM = M.T @ M
    ex = 2.0 / gains.mu
    V0 = 0.5 * e0 @ (e0 / G)

    def rhs(t, e):
        nv = float(np.linalg.norm(M @ e))
        if nv < 1e-300:
            return np.zeros_like(e)
        return -G * (MtM @ e) * (gains.a * nv**ex + gains.b * nv ** (-ex))

    def small(t, e):
        return 0.5 * e @ (e / G) - 1e-12 * V0

    small.terminal = True
    scale = float(np.max(np.abs(e0)))
    return solve_ivp(rhs, (0.0, t_end), e0, method="Radau", rtol=1e-10, atol=1e-14 * scale,
                     events=small, dense_output=True)


def run_envelopes(samples: int = 100, seed: int = 0, form: str = "sound") -> SuiteReport:
    """Envelope checks on random gains, regressors and parameter-box sizes.

    For the selected ``form`` every instance must pass: the closed form
    dominates a numerical solution of its comparison equation, dominates the
    sup-norm of the true continuous error flow, is non-increasing, matches
    its analytic derivative and contains random initial errors from the box.
    The number of flow-containment failures of the other form is reported
    under ``notes`` without counting as a violation.
    """
    if form not in estimation.ENVELOPE_FORMS:
        raise ValueError(f"unknown envelope form {form!r}")
    other = "standard" if form == "sound" else "sound"
    rng = np.random.default_rng(seed)
    rep = SuiteReport("envelopes")
    t0 = time.perf_counter()
    rows = []
    bad = {k: np.zeros(samples, dtype=bool)
           for k in ("comparison_solution", "flow_containment", "monotone", "derivative", "initial_containment")}
    other_fail = 0
    for i in range(samples):
        g = _random_gains(rng)
        p = len(g.gamma)
        sigma = 10.0 ** rng.uniform(-1, 0.5)
        vartheta = 10.0 ** rng.uniform(-1, 1)
        M = _random_regressor(rng, p, sigma)
        e0 = rng.uniform(-vartheta, vartheta, p)
        e0[rng.integers(p)] = vartheta * (1.0 if rng.random() < 0.5 else -1.0)
        rows.append(dict(gamma=list(g.gamma), a=g.a, b=g.b, mu=g.mu, sigma_lb=sigma,
                         vartheta=vartheta, M=M, e0=e0, form=form))

        env = make_envelope(g, sigma, vartheta, form)
        alt = make_envelope(g, sigma, vartheta, other)
        c1, c2, mu = env.c1, env.c2, g.mu
        V0 = 0.5 * vartheta**2 * g.trace_inv
        T = env.root
        ts = np.linspace(0.0, 1.2 * T, 241)
        eta = np.array([error_envelope(t, env) for t in ts])

        # comparison equation dV/dt = -c1 V^(1+1/mu) - c2 V^(1-1/mu), integrated in ln V
        def rhs(t, y):
            V = math.exp(y[0])
            return [-c1 * V ** (1.0 / mu) - c2 * V ** (-1.0 / mu)]

        def hit(t, y):
            return y[0] - math.log(1e-30)

        hit.terminal = True
        sol = solve_ivp(rhs, (0.0, 1.2 * T), [math.log(V0)], rtol=1e-11, atol=1e-13,
                        dense_output=True, events=hit)
        inside = ts <= sol.t[-1]
        eta_num = np.sqrt(2.0 * g.lam_max * np.exp(sol.sol(ts[inside])[0]))
        bad["comparison_solution"][i] = np.any(eta_num > eta[inside] * (1 + 1e-6) + 1e-9 * eta[0])

        # true error flow for a regressor whose smallest singular value is sigma
        flow = error_flow(M, g, e0, 2.0 * max(T, alt.root))
        tf = np.linspace(0.0, flow.t[-1], 400)
        sup = np.max(np.abs(flow.sol(tf)), axis=0)
        for e_, is_main in ((env, True), (alt, False)):
            bound = np.array([error_envelope(t, e_) for t in tf])
            over = np.any(sup > bound * (1 + 1e-6) + 1e-9 * vartheta)
            if is_main:
                bad["flow_containment"][i] = over
            else:
                other_fail += int(over)

        bad["monotone"][i] = np.any(np.diff(eta) > 1e-12 * max(1.0, eta[0]))
        tm = ts[1:-1][ts[1:-1] < 0.95 * T]
        h = 1e-6 * T
        tm = tm[tm > h]
        if tm.size:
            fd = np.array([(error_envelope(t + h, env) - error_envelope(t - h, env)) / (2 * h) for t in tm])
            an = np.array([error_envelope_rate(t, env) for t in tm])
            bad["derivative"][i] = np.any(np.abs(fd - an) > 1e-4 * (1.0 + np.abs(an)))
        E = rng.uniform(-vartheta, vartheta, (64, p))
        bad["initial_containment"][i] = np.any(np.max(np.abs(E), axis=1) > eta[0] * (1 + 1e-12))
    for name, mask in bad.items():
        rep._record(name, samples, mask, lambda j: rows[j])
    rep.notes[f"{other}_form_flow_failures"] = other_fail
    rep.seconds = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# qp
# ---------------------------------------------------------------------------

def enumerate_qp(H, c, A, b, tol: float = 1e-9):
    """Brute-force oracle: try every active set, keep the KKT-consistent one.

    Returns the minimizer, or ``None`` when no subset yields a primal and dual
    feasible point (the problem is infeasible).
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    A = np.asarray(A, dtype=float).reshape(-1, n)
    m = A.shape[0]
    best = None
    best_val = math.inf
    for k in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            K = np.zeros((n + k, n + k))
            K[:n, :n] = H
            K[:n, n:] = A[S].T
            K[n:, :n] = A[S]
            rhs = np.concatenate([-np.asarray(c, dtype=float), np.asarray(b, dtype=float)[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            w, lam = sol[:n], sol[n:]
            if np.all(A @ w - b <= tol) and np.all(lam >= -tol):
                val = 0.5 * w @ H @ w + c @ w
                if val < best_val:
                    best, best_val = w, val
    return best


def random_qp(rng: np.random.Generator, feasible: bool = True):
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, 11))
    L = rng.standard_normal((n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    c = rng.standard_normal(n) * 3
    A = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n)
    b = A @ x0 + (rng.uniform(0, 1, m) if feasible else rng.uniform(-1, 1, m))
    return H, c, A, b


def run_qp(samples: int = 1000, seed: int = 0) -> SuiteReport:
    rng = np.random.default_rng(seed)
    rep = SuiteReport("qp")
    t0 = time.perf_counter()
    rows = []
    bad_match = np.zeros(samples, dtype=bool)
    bad_repeat = np.zeros(samples, dtype=bool)
    for i in range(samples):
        H, c, A, b = random_qp(rng, feasible=bool(rng.random() < 0.8))
        qp = QuadraticProgram(H, c, A, b)
        s1 = solve_qp(qp)
        s2 = solve_qp(QuadraticProgram(H.copy(), c.copy(), A.copy(), b.copy()))
        ref = enumerate_qp(H, c, A, b)
        if ref is None:
            bad_match[i] = s1.status != "infeasible"
        else:
            bad_match[i] = s1.status != "optimal" or np.max(np.abs(s1.w - ref)) > 1e-6
        bad_repeat[i] = not (np.array_equal(s1.w, s2.w) and s1.active_set == s2.active_set and s1.status == s2.status)
        rows.append(dict(H=H, c=c, A=A, b=b, solver=s1.w, oracle=ref, status=s1.status))
    rep._record("oracle_match", samples, bad_match, lambda i: rows[i])
    rep._record("repeatable", samples, bad_repeat, lambda i: rows[i])
    rep.seconds = time.perf_counter() - t0
    return rep


RUNNERS: dict[str, Callable[..., SuiteReport]] = {
    "lemmas": run_lemmas,
    "envelopes": run_envelopes,
    "qp": run_qp,
}


def run_suite(name: str, samples: int, seed: int = 0, **options) -> SuiteReport:
    """Dispatch used by the CLI; ``samples`` sizes the suite's main check.

    Extra keyword options are forwarded to the suite runner (for example
    ``form`` for the envelope suite).
    """
    if name not in RUNNERS:
        raise ValueError(f"unknown suite {name!r}")
    if samples < 1:
        raise ValueError("samples must be positive")
    return RUNNERS[name](samples=samples, seed=seed, **options)
