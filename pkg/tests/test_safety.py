import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxtadapt.estimation import AdaptationGains, make_envelope
from fxtadapt.safety import (
    BarrierFunction,
    EnvelopeSchedule,
    ShrunkenBarrier,
    altitude_cbf,
    attitude_cbf,
    ellipse_cbf,
    linear_alpha,
    nagumo_check,
    nu_projection,
    quadratic_clf,
    racbf_margin,
    shrunken_value,
    worst_case_projection,
)
from fxtadapt.systems import IPHI, ITHETA, IZ, single_integrator_model


def fd_gradient(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def held(eta):
    return EnvelopeSchedule(None, 0.0, eta)


class TestBarriers:
    def test_ellipse_examples(self):
        h = ellipse_cbf((0.0, 0.0), (1.0, 1.0))
        assert h.value(np.array([2.0, 0.0])) == pytest.approx(3.0)
        assert np.allclose(h.gradient(np.array([2.0, 0.0])), [4.0, 0.0])
        e = ellipse_cbf((1.0, -2.0), (0.5, 2.0))
        assert e.value(np.array([1.5, -2.0])) == pytest.approx(0.0, abs=1e-15)
        assert e.value(np.array([1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)

    def test_altitude_examples(self):
        h = altitude_cbf(2.5, 2.5, 2)
        chi = np.zeros(12)
        for z, want in ((0.0, 0.0), (5.0, 0.0), (2.5, 1.0), (3.0, 0.96)):
            chi[IZ] = z
            assert h.value(chi) == pytest.approx(want, abs=1e-14)

    def test_attitude_examples(self):
        h = attitude_cbf(math.pi / 2)
        chi = np.zeros(12)
        assert h.value(chi) == pytest.approx(1.0)
        chi[IPHI] = math.pi / 2
        assert h.value(chi) == pytest.approx(0.0, abs=1e-15)
        chi[IPHI] = chi[ITHETA] = math.pi / 4
        assert h.value(chi) == pytest.approx(0.5)

    @pytest.mark.parametrize("make", [
        lambda: ellipse_cbf((-2.5, 1.0), (0.8, 0.8)),
        lambda: altitude_cbf(2.5, 2.5, 4),
        lambda: attitude_cbf(1.2),
    ])
    def test_gradients_match_central_differences(self, make, rng):
        h = make()
        n = 2 if h.name == "ellipse" else 12
        for _ in range(100):
            x = rng.uniform(-1.2, 1.2, n) + (2.0 if n == 12 else 0.0) * (np.arange(n) == IZ)
            g = h.gradient(x)
            fd = fd_gradient(h.value, x)
            assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1.0)

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            ellipse_cbf((0, 0), (1.0, 0.0))
        with pytest.raises(ValueError):
            altitude_cbf(n_z=3)
        with pytest.raises(ValueError):
            attitude_cbf(2.0)

    def test_alpha(self):
        a = linear_alpha(2.0)
        grid = np.linspace(-3, 3, 61)
        vals = np.array([a(s) for s in grid])
        assert a(0.0) == 0.0 and np.all(np.diff(vals) > 0)
        with pytest.raises(ValueError):
            linear_alpha(0.0)


class TestClf:
    def test_goal_is_minimum(self):
        clf = quadratic_clf(1.0, (0.0, 0.0))
        assert clf.value(np.zeros(2)) == 0.0
        assert clf.value(np.array([1.0, -2.0])) == pytest.approx(5.0)
        assert np.allclose(clf.gradient(np.array([1.0, -2.0])), [2.0, -4.0])

    def test_exponent_validation(self):
        with pytest.raises(ValueError):
            quadratic_clf(gamma1=1.0)
        with pytest.raises(ValueError):
            quadratic_clf(gamma2=1.0)


class TestShrunken:
    base = BarrierFunction(lambda x: 1.0, lambda x: np.zeros(2))

    def test_examples(self):
        assert shrunken_value(ShrunkenBarrier(self.base, (1.0, 1.0), held(0.0)), np.zeros(2), 0.0) == 1.0
        assert shrunken_value(ShrunkenBarrier(self.base, (1.0, 1.0), held(1.0)), np.zeros(2), 0.0) == pytest.approx(0.0)

    def test_non_decreasing_in_time_and_below_base(self):
        g = AdaptationGains((1.0, 2.0), 1.0, 1.0, 4.0)
        env = make_envelope(g, 0.8, 1.0)
        sb = ShrunkenBarrier(self.base, g.gamma, EnvelopeSchedule(env, 0.3))
        ts = np.linspace(0, 1.5 * env.root + 0.3, 400)
        vals = np.array([shrunken_value(sb, np.zeros(2), t) for t in ts])
        assert np.all(np.diff(vals) >= 0.0)
        assert np.all(vals <= 1.0)
        etas = np.array([sb.schedule.eta(t) for t in ts])
        assert np.all((vals == 1.0) == (etas == 0.0))

    def test_schedule_holds_before_warmup(self):
        g = AdaptationGains((1.0, 2.0))
        env = make_envelope(g, 0.8, 1.0)
        sch = EnvelopeSchedule(env, 0.5)
        assert sch.eta(0.1) == sch.eta(0.5)
        assert sch.eta_rate(0.1) == 0.0 and sch.eta_rate(0.6) < 0.0


class TestProjection:
    def test_degenerate_box(self):
        C = np.array([0.3, -1.2])
        th = np.array([0.2, 0.4])
        assert nu_projection(C, th, 0.0, [[-1, 1], [-1, 1]]) == pytest.approx(C @ th)

    def test_worked_example(self):
        assert nu_projection([1.0], [0.5], 0.2, [[-1.0, 1.0]]) == pytest.approx(0.3)

    def test_zero_coefficient(self):
        assert nu_projection([0.0], [0.5], 0.2, [[-1.0, 1.0]]) == 0.0

    def test_negative_eta(self):
        with pytest.raises(ValueError):
            nu_projection([1.0], [0.0], -0.1)

    def test_grid_oracle(self):
        r = np.random.default_rng(7)
        for _ in range(10_000 // 100):
            p = int(r.integers(1, 4))
            lo = r.uniform(-2, 0, p)
            box = np.column_stack([lo, lo + r.uniform(0.1, 3, p)])
            th = r.uniform(box[:, 0], box[:, 1])
            eta = r.uniform(0, 1.5)
            C = r.standard_normal(p)
            nu = nu_projection(C, th, eta, box)
            up = worst_case_projection(C, th, eta, box)
            flo = np.maximum(th - eta, box[:, 0])
            fhi = np.minimum(th + eta, box[:, 1])
            samples = r.uniform(flo, fhi, (100, p))
            vals = samples @ C
            assert nu <= vals.min() + 1e-9
            assert up >= vals.max() - 1e-9
            assert nu <= C @ th <= up

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-3, 3), st.floats(-1, 1), st.floats(0, 2))
    def test_scalar_exact(self, c, th, eta):
        lo, hi = max(th - eta, -1.0), min(th + eta, 1.0)
        assert nu_projection([c], [th], eta, [[-1.0, 1.0]]) == pytest.approx(min(c * lo, c * hi), abs=1e-12)


class TestMargin:
    def test_no_uncertainty_channel(self):
        m = single_integrator_model("rank_deficient", a=0.5)
        sb = ShrunkenBarrier(ellipse_cbf((1.0, 1.0), (0.5, 0.5)), (1.0, 1.0), held(0.0))
        assert racbf_margin(sb, m, np.array([0.0, 0.0]), 0.0, np.zeros(2)) == 0.0

    def test_envelope_term_relaxes(self):
        m = single_integrator_model("full_rank")
        g = AdaptationGains((2.0, 2.0))
        env = make_envelope(g, 1.0, 1.0)
        h = ellipse_cbf((1.0, 1.0), (0.5, 0.5))
        x = np.array([-1.0, 0.3])
        th = np.array([0.1, -0.2])
        frozen = ShrunkenBarrier(h, g.gamma, held(env.eta0))
        moving = ShrunkenBarrier(h, g.gamma, EnvelopeSchedule(env, 0.0))
        t = 0.2 * env.root
        r_move = racbf_margin(moving, m, x, t, th)
        eta = moving.schedule.eta(t)
        nu = nu_projection(h.gradient(x) @ m.regressor(x), th, eta)
        assert r_move == pytest.approx(moving.trace_inv * eta * moving.schedule.eta_rate(t) - nu)
        assert r_move <= -nu
        assert racbf_margin(frozen, m, x, t, th) == pytest.approx(
            -nu_projection(h.gradient(x) @ m.regressor(x), th, env.eta0))


class TestNagumo:
    def setup_method(self):
        self.m = single_integrator_model("full_rank")
        self.h = BarrierFunction(lambda x: x[0], lambda x: np.array([1.0, 0.0]))

    def test_zero_gradient(self):
        flat = BarrierFunction(lambda x: 0.0, lambda x: np.zeros(2))
        assert nagumo_check(flat, self.m, np.zeros(2), np.array([-5.0, 0.0]), np.zeros(2))

    def test_sign(self):
        assert nagumo_check(self.h, self.m, np.zeros(2), np.array([1.0, 0.0]), np.zeros(2))
        assert not nagumo_check(self.h, self.m, np.zeros(2), np.array([-1.0, 0.0]), np.zeros(2))
