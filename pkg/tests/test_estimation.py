import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fxtadapt.errors import DimensionMismatch, InvalidK, NonPositiveSigma, PreconditionViolated
from fxtadapt.estimation import (
    AdaptationGains,
    MeasurementPair,
    adaptation_step,
    admissible_set,
    difference_rate,
    error_envelope,
    error_envelope_rate,
    es_update,
    fxt_update,
    fxts_rates,
    k_V_gain,
    settling_bound_small,
    settling_constants,
    cross_term_bound,
    cross_term_bound_batch,
    lyapunov_value,
    make_envelope,
    predictor_init,
    predictor_measurement,
    predictor_step,
    rate_measurement,
    robust_bounds,
    robust_gain_check,
    settling_time_nominal,
)
from fxtadapt.sim import _plant_step, rk4_step
from fxtadapt.systems import eval_dynamics, single_integrator_model

QUAD_GAMMA = (63.16, 150.0, 308.0)


def gains(gamma=(1.0, 1.0), a=1.0, b=1.0, mu=4.0, **kw):
    return AdaptationGains(gamma, a, b, mu, **kw)


# ---------------------------------------------------------------------------
# measurement schemes
# ---------------------------------------------------------------------------

class TestRateMeasurement:
    def setup_method(self):
        self.model = single_integrator_model("full_rank", f1_hz=0.2, f2_hz=0.1, theta_true=(0.6, -0.4))
        self.x = np.array([1.1, -0.7])
        self.u = np.array([0.3, 0.2])

    def test_exact_rate_gives_linear_pair(self):
        th_hat = np.array([0.1, 0.2])
        xdot = eval_dynamics(self.model, self.x, self.u, self.model.true_params)
        pair = rate_measurement(self.model, self.x, xdot, self.u, th_hat)
        assert np.allclose(pair.v, pair.M @ (self.model.true_params - th_hat), atol=1e-14)

    def test_exact_estimate_gives_zero(self):
        xdot = eval_dynamics(self.model, self.x, self.u, self.model.true_params)
        pair = rate_measurement(self.model, self.x, xdot, self.u, self.model.true_params)
        assert np.allclose(pair.v, 0.0, atol=1e-15)

    def test_difference_residual_is_first_order(self):
        th = self.model.true_params
        f = lambda t, s: eval_dynamics(self.model, s, self.u, th)
        res = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            x1 = rk4_step(f, self.x, 0.0, dt)
            pair = rate_measurement(self.model, self.x, difference_rate(self.x, x1, dt), self.u, np.zeros(2))
            res.append(np.linalg.norm(pair.v - pair.M @ th))
        assert res[0] / res[1] == pytest.approx(2.0, rel=0.05)
        assert res[1] / res[2] == pytest.approx(2.0, rel=0.05)

    def test_pair_dimension_check(self):
        with pytest.raises(DimensionMismatch):
            MeasurementPair(np.eye(2), np.ones(3))


class TestPredictor:
    def setup_method(self):
        self.model = single_integrator_model("full_rank", f1_hz=0.2, f2_hz=0.1, theta_true=(0.6, -0.4))
        self.g = gains((5.0, 5.0), k_e=10.0)

    def test_matched_model_keeps_zero_error(self):
        x = np.array([1.0, 2.0])
        th = self.model.true_params
        st_ = predictor_init(x, 2, th)
        u = np.array([0.5, -0.2])
        for k in range(200):
            x_new, F, G = _plant_step(self.model, x, u, k * 1e-3, 1e-3, th, None)
            st_ = predictor_step(st_, self.model, x, u, np.zeros(2), self.g, 1e-3, quadrature=(F, G))
            x = x_new
        assert np.max(np.abs(x - st_.z)) < 1e-12

    def test_euler_quadrature_matches_euler_plant(self):
        x = np.array([1.0, 2.0])
        th = self.model.true_params
        st_ = predictor_init(x, 2, th)
        u = np.array([0.5, -0.2])
        for _ in range(200):
            x_new = x + 1e-3 * eval_dynamics(self.model, x, u, th)
            st_ = predictor_step(st_, self.model, x, u, np.zeros(2), self.g, 1e-3)
            x = x_new
        assert np.max(np.abs(x - st_.z)) < 1e-12

    def test_first_step_filter(self):
        x0 = np.array([0.4, -1.2])
        st_ = predictor_init(x0, 2, np.zeros(2))
        assert np.all(st_.W == 0.0) and np.array_equal(st_.z, x0)
        st_ = predictor_step(st_, self.model, x0, np.zeros(2), np.zeros(2), self.g, 1e-3)
        assert np.allclose(st_.W, 1e-3 * self.model.regressor(x0), rtol=1e-15)

    def test_initial_pair_is_zero(self):
        st_ = predictor_init(np.array([0.4, -1.2]), 2, np.zeros(2))
        pair = predictor_measurement(st_, np.array([0.4, -1.2]))
        assert np.all(pair.M == 0.0) and np.all(pair.v == 0.0)

    def test_rejects_bad_dt(self):
        st_ = predictor_init(np.zeros(2), 2, np.zeros(2))
        with pytest.raises(ValueError):
            predictor_step(st_, self.model, np.zeros(2), np.zeros(2), np.zeros(2), self.g, 0.0)


# ---------------------------------------------------------------------------
# laws
# ---------------------------------------------------------------------------

class TestLaws:
    def test_fxt_zero(self):
        assert np.all(fxt_update(MeasurementPair(np.eye(2), np.zeros(2)), gains()) == 0.0)

    def test_fxt_unit_vector(self):
        out = fxt_update(MeasurementPair(np.eye(2), np.array([1.0, 0.0])), gains())
        assert np.allclose(out, [2.0, 0.0])

    def test_fxt_linear_in_gamma(self, rng):
        pair = MeasurementPair(rng.standard_normal((3, 2)), rng.standard_normal(3))
        g1 = gains((0.7, 2.0))
        g2 = gains((1.4, 4.0))
        assert np.allclose(fxt_update(pair, g2), 2.0 * fxt_update(pair, g1), rtol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_fxt_row_permutation(self, seed):
        r = np.random.default_rng(seed)
        M = r.standard_normal((5, 3))
        v = r.standard_normal(5)
        perm = r.permutation(5)
        g = gains((1.0, 2.0, 3.0), mu=3.0)
        a = fxt_update(MeasurementPair(M, v), g)
        b = fxt_update(MeasurementPair(M[perm], v[perm]), g)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_es_examples(self):
        assert np.all(es_update(MeasurementPair(np.eye(2), np.zeros(2)), np.eye(2)) == 0.0)
        assert np.allclose(es_update(MeasurementPair(np.eye(2), np.array([3.0, -1.0])), np.eye(2)), [3.0, -1.0])

    def test_implicit_step_matches_explicit_for_small_dt(self, backend, rng):
        M = rng.standard_normal((3, 2))
        th_err = np.array([0.3, -0.2])
        g = gains((2.0, 3.0), mu=5.0)
        pair = MeasurementPair(M, M @ th_err)
        dt = 1e-7
        imp = adaptation_step(np.zeros(2), pair, g, dt)
        exp = adaptation_step(np.zeros(2), pair, g, dt, method="explicit")
        assert np.allclose(imp, exp, rtol=1e-5)

    def test_implicit_step_does_not_overshoot(self, backend):
        # a huge step must not cross the target the way forward Euler does
        g = gains((50.0,), mu=5.0)
        pair = MeasurementPair(np.eye(1), np.array([1e-3]))
        new = adaptation_step(np.zeros(1), pair, g, 1.0)
        assert 0.0 < new[0] <= 1e-3
        exp = adaptation_step(np.zeros(1), pair, g, 1.0, method="explicit")
        assert exp[0] > 1e-3

    def test_update_stays_in_rowspace(self, backend, rng):
        D = np.array([[1.0, 2.0], [0.5, 1.0]])
        g = gains((3.0, 3.0))
        th = np.zeros(2)
        for _ in range(50):
            th = adaptation_step(th, MeasurementPair(D, D @ (np.array([0.4, -0.3]) - th)), g, 1e-2)
        assert abs(th @ np.array([-2.0, 1.0])) < 1e-12
        assert np.allclose(D @ th, D @ np.array([0.4, -0.3]), atol=1e-10)

    def test_unknown_law_and_method(self):
        pair = MeasurementPair(np.eye(1), np.ones(1))
        with pytest.raises(ValueError):
            adaptation_step(np.zeros(1), pair, gains((1.0,)), 1e-3, law="rls")
        with pytest.raises(ValueError):
            adaptation_step(np.zeros(1), pair, gains((1.0,)), 1e-3, method="trapezoid")


class TestGains:
    def test_validation(self):
        with pytest.raises(ValueError):
            AdaptationGains((1.0, 0.0))
        with pytest.raises(ValueError):
            AdaptationGains((1.0,), mu=2.0)
        with pytest.raises(ValueError):
            AdaptationGains((1.0,), a=-1.0)

    def test_k_v_examples(self):
        assert k_V_gain(1.0, np.eye(2)) == pytest.approx(math.sqrt(2.0))
        assert k_V_gain(0.38, QUAD_GAMMA) == pytest.approx(2.0 * k_V_gain(0.19, QUAD_GAMMA))
        assert k_V_gain(0.19, QUAD_GAMMA) == pytest.approx(0.19 * math.sqrt(2 * 308.0))
        assert k_V_gain(0.19, QUAD_GAMMA, "min") == pytest.approx(0.19 * math.sqrt(2 * 63.16))
        with pytest.raises(NonPositiveSigma):
            k_V_gain(0.0, np.eye(2))

    def test_settling_examples(self):
        g = gains((0.5, 0.5), mu=4.0)  # k_V = 1 with sigma = 1
        assert settling_time_nominal(g, 1.0) == pytest.approx(2 * math.pi)
        g4 = gains((0.5, 0.5), a=4.0, b=4.0, mu=4.0)
        assert settling_time_nominal(g4, 1.0) == pytest.approx(2 * math.pi / 4)
        quad_g = AdaptationGains(QUAD_GAMMA, 5.0, 5.0, 5.0, 10.0, 0.1)
        assert math.isfinite(settling_time_nominal(quad_g, 0.19))


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------

@pytest.fixture(params=["standard", "sound"])
def form(request):
    return request.param


class TestEnvelope:
    def setup_method(self):
        self.g = AdaptationGains((2.0, 7.0), 1.5, 0.8, 4.0)

    def test_zero_past_root(self, form):
        env = make_envelope(self.g, 0.7, 2.0, form)
        assert error_envelope(env.root * 1.0001, env) == 0.0
        assert error_envelope(10 * env.root, env) == 0.0
        assert error_envelope_rate(10 * env.root, env) == 0.0

    def test_initial_value_inverts_phase(self, form):
        vartheta = 2.0
        env = make_envelope(self.g, 0.7, vartheta, form)
        V0 = error_envelope(0.0, env) ** 2 / (2 * self.g.lam_max)
        assert V0 == pytest.approx(0.5 * vartheta**2 * self.g.trace_inv, rel=1e-9)
        assert 0.0 < env.xi < math.pi / 2

    def test_single_parameter_starts_at_vartheta(self, form):
        env = make_envelope(AdaptationGains((3.0,)), 0.5, 1.7, form)
        assert error_envelope(0.0, env) == pytest.approx(1.7, rel=1e-12)

    def test_monotone_grid(self, form):
        env = make_envelope(self.g, 0.7, 2.0, form)
        ts = np.linspace(0.0, 1.1 * env.root, 1000)
        eta = np.array([error_envelope(t, env) for t in ts])
        assert np.all(np.diff(eta) <= 0.0)

    def test_rate_matches_central_difference(self, form, rng):
        env = make_envelope(self.g, 0.7, 2.0, form)
        h = 1e-6
        for t in rng.uniform(2 * h, 0.95 * env.root, 100):
            fd = (error_envelope(t + h, env) - error_envelope(t - h, env)) / (2 * h)
            an = error_envelope_rate(t, env)
            assert an <= 0.0
            assert abs(an - fd) <= 1e-4 * abs(an)

    def test_sound_form_solves_comparison_equation(self):
        env = make_envelope(self.g, 0.7, 2.0, "sound")
        c1, c2, mu = env.c1, env.c2, self.g.mu
        # x = V^(1/mu) obeys x' = -(c1 x^2 + c2)/mu
        for t in np.linspace(0.05, 0.9, 7) * env.root:
            V = lambda s: (error_envelope(s, env) ** 2 / (2 * self.g.lam_max))
            h = 1e-7 * env.root
            x = V(t) ** (1 / mu)
            dx = (V(t + h) ** (1 / mu) - V(t - h) ** (1 / mu)) / (2 * h)
            assert dx == pytest.approx(-(c1 * x * x + c2) / mu, rel=1e-5)

    def test_unknown_form(self):
        with pytest.raises(ValueError):
            make_envelope(self.g, 1.0, 1.0, "other")

    def test_lyapunov_value(self):
        assert lyapunov_value([2.0, 7.0], self.g) == pytest.approx(0.5 * (4 / 2 + 49 / 7))


# ---------------------------------------------------------------------------
# robust bounds and lemmas
# ---------------------------------------------------------------------------

class TestRobust:
    def test_zero_disturbance(self):
        g = AdaptationGains((2.0, 2.0), 1.0, 1.0, 5.0)
        rb = robust_bounds(g, 1.0, 0.0)
        assert rb.alpha3 == 0.0 and rb.regime == "small_disturbance" and rb.D0_level is None
        assert math.isfinite(rb.T) and rb.T > 0
        # the bound moves continuously as the disturbance vanishes
        assert robust_bounds(g, 1.0, 1e-9).T == pytest.approx(rb.T, rel=1e-6)

    def test_quadrotor_threshold(self):
        g = AdaptationGains(QUAD_GAMMA, 5.0, 5.0, 5.0, 10.0, 0.1)
        rb = robust_bounds(g, 0.19, 0.69)
        assert rb.Y == pytest.approx(3.65, rel=0.10)
        assert rb.regime == "small_disturbance" and rb.D0_level is None

    def test_large_regime(self):
        g = AdaptationGains((2.0, 2.0), 1.0, 1.0, 5.0)
        rb = robust_bounds(g, 1.0, 100.0)
        assert rb.regime == "large_disturbance"
        assert rb.D0_level is not None and rb.D0_level > 0

    def test_invalid_k(self):
        g = AdaptationGains((2.0, 2.0))
        for k in (0.0, 1.0, 1.5):
            with pytest.raises(InvalidK):
                robust_bounds(g, 1.0, 0.1, k)

    def test_gain_check(self):
        assert robust_gain_check(np.eye(2), 0.0, 0.3)
        assert robust_gain_check(QUAD_GAMMA, 0.69, 0.19)
        assert 2 * (0.69 / 0.19) ** 2 == pytest.approx(26.36, rel=0.05)
        assert not robust_gain_check(np.eye(2), 1.0, 1.0)

    def test_settling_constants_numeric(self):
        k1, k2 = settling_constants(1.0, 1.0, 0.0)
        assert (k1, k2) == pytest.approx((1.0, 1.0))
        bound = settling_bound_small(1.0, 1.0, 0.0, 3.0)
        assert bound == pytest.approx(3 * math.pi / 4)
        integral, _ = quad(lambda V: 1.0 / (V ** (1 + 1 / 3) + V ** (1 - 1 / 3)), 1.0, 100.0, epsrel=1e-12)
        assert integral <= bound

    def test_settling_constants_precondition(self):
        with pytest.raises(PreconditionViolated):
            settling_constants(1.0, 1.0, 2.0)


class TestCrossTermBound:
    def test_zero_perturbation(self):
        r = cross_term_bound([3.0, 1.0], [0.0, 0.0], 1.0, 1.0, 3.0, 0.0 + 1e-3)
        assert r.P == 0.0 and r.P >= r.bound

    def test_worked_example(self):
        r = cross_term_bound([3.0, 0.0], [1.0, 0.0], 1.0, 1.0, 3.0, 1.0)
        assert r.P == pytest.approx(3 * (4 ** (2 / 3) + 4 ** (-2 / 3)), rel=1e-12)
        assert r.P == pytest.approx(8.750, abs=5e-4)
        assert r.bound == pytest.approx(-(3 ** (5 / 3) + 2 ** (2 / 3) * 3 ** (1 / 3)), rel=1e-12)
        assert r.bound == pytest.approx(-8.529, abs=1e-3)

    def test_preconditions(self):
        with pytest.raises(PreconditionViolated):
            cross_term_bound([1.0, 0.0], [0.1, 0.0], 1.0, 1.0, 3.0, 1.0)
        with pytest.raises(PreconditionViolated):
            cross_term_bound([5.0, 0.0], [2.0, 0.0], 1.0, 1.0, 3.0, 1.0)
        with pytest.raises(PreconditionViolated):
            cross_term_bound([5.0, 0.0], [0.5, 0.0], 1.0, 1.0, 2.0, 1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 2**31 - 1))
    def test_random_instances(self, p, seed):
        r = np.random.default_rng(seed)
        By = 10 ** r.uniform(-2, 1)
        y = r.standard_normal(p)
        y *= By * r.uniform(0, 1) / max(np.linalg.norm(y), 1e-300)
        x = r.standard_normal(p)
        x *= 2 * By * (1 + 10 ** r.uniform(-6, 2)) / np.linalg.norm(x)
        res = cross_term_bound(x, y, 10 ** r.uniform(-2, 2), 10 ** r.uniform(-2, 2), 2 + 10 ** r.uniform(-2, 1), By)
        assert res.P >= res.bound - 1e-12 * abs(res.bound)

    def test_batch_matches_scalar(self, rng):
        X = rng.standard_normal((20, 3)) * 5
        Y = rng.standard_normal((20, 3)) * 0.1
        P, B = cross_term_bound_batch(X, Y, 1.3, 0.7, 3.5, 0.5)
        for i in range(20):
            r = cross_term_bound(X[i], Y[i], 1.3, 0.7, 3.5, 0.5)
            assert (P[i], B[i]) == pytest.approx((r.P, r.bound), rel=1e-13)


class TestAdmissibleSet:
    box = np.array([[-1.0, 1.0], [-1.0, 1.0]])

    def test_singleton(self):
        s = admissible_set([0.2, 0.3], 0.0, self.box, np.eye(2))
        assert s.is_singleton
        assert s.contains([0.2, 0.3]) and not s.contains([0.2, 0.31])

    def test_covers_box(self):
        s = admissible_set([0.2, 0.3], 2.0, self.box, np.eye(2))
        assert s.covers_box

    def test_null_segment(self):
        D = -0.5 * np.array([[1.0, 2.0], [0.5, 1.0]])
        th = np.array([0.2, 0.1])
        s = admissible_set(th, 0.0, self.box, D)
        assert not s.is_singleton
        a, b = s.null_segment()
        n = np.array([-2.0, 1.0]) / math.sqrt(5.0)
        for end in (a, b):
            d = end - th
            assert abs(d @ np.array([1.0, 2.0])) < 1e-12  # along (-2, 1)
            assert np.all(end >= -1 - 1e-12) and np.all(end <= 1 + 1e-12)
            assert s.contains(end)
        assert np.isclose(abs((b - a) @ n), np.linalg.norm(b - a))

    def test_negative_eta(self):
        with pytest.raises(ValueError):
            admissible_set([0.0, 0.0], -1.0, self.box, np.eye(2))


def test_fxts_rates_positive():
    c1, c2 = fxts_rates(AdaptationGains((2.0, 3.0)), 0.5)
    assert c1 > 0 and c2 > 0
