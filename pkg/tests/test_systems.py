import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxtadapt.errors import BadVariantParams, DimensionMismatch, NonFiniteOutput, PitchSingularity
from fxtadapt.linalg import numerical_rank
from fxtadapt.sim import rk4_step
from fxtadapt.systems import (
    IPHI,
    IPSI,
    ITHETA,
    IU,
    IW,
    OUGust,
    QuadrotorParams,
    WindField,
    eval_dynamics,
    gust_disturbance,
    quadrotor_model,
    rotation_body_to_inertial,
    single_integrator_model,
    wind_gust,
)

WIND = np.array([10.0, -8.0, -5.0])


def hover_state():
    return np.zeros(12)


class TestSingleIntegrator:
    def test_zero_input_zero_params_is_at_rest(self):
        m = single_integrator_model("full_rank")
        assert np.allclose(eval_dynamics(m, [1.3, -2.0], [0, 0], [0, 0]), 0.0)

    def test_full_rank_at_origin(self):
        m = single_integrator_model("full_rank", k_delta=1.0, f1_hz=0.3, f2_hz=0.7, theta_true=(0.5, 0.5))
        xdot = eval_dynamics(m, [0.0, 0.0], [0.0, 0.0], [1.0, 2.0])
        assert np.allclose(xdot, [1.0, 4.0])

    def test_full_rank_diagonal_range(self, rng):
        m = single_integrator_model("full_rank", k_delta=1.0)
        for z in rng.uniform(-5, 5, (200, 2)):
            d = np.diag(m.regressor(z))
            assert np.all(d >= 1.0 - 1e-15) and np.all(d <= 2.0 + 1e-15)

    def test_rank_deficient_rank_one(self, rng):
        m = single_integrator_model("rank_deficient", a=0.5)
        for z in rng.uniform(-5, 5, (50, 2)):
            if abs(z[0]) > 1e-6:
                assert numerical_rank(m.regressor(z)) == 1

    def test_rank_deficient_zero_at_origin(self):
        m = single_integrator_model("rank_deficient", a=0.5)
        assert np.all(m.regressor(np.zeros(2)) == 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_constant_nullspace_direction(self, x, y):
        m = single_integrator_model("rank_deficient", a=0.5)
        assert np.allclose(m.regressor(np.array([x, y])) @ np.array([-2.0, 1.0]), 0.0)

    def test_bad_variants(self):
        with pytest.raises(BadVariantParams):
            single_integrator_model("full_rank", k_delta=0.0)
        with pytest.raises(BadVariantParams):
            single_integrator_model("rank_deficient", a=0.0)
        with pytest.raises(BadVariantParams):
            single_integrator_model("sideways")

    def test_true_params_outside_box(self):
        with pytest.raises(BadVariantParams):
            single_integrator_model(theta_true=(2.0, 0.0))

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatch):
            eval_dynamics(single_integrator_model(), [0.0, 0.0, 0.0], [0, 0], [0, 0])

    def test_non_finite(self):
        m = single_integrator_model()
        with pytest.raises(NonFiniteOutput), np.errstate(invalid="ignore"):
            eval_dynamics(m, [0.0, 0.0], [np.inf, 0.0], [0, 0])


class TestAffinity:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_affine_in_u_and_theta_quadrotor(self, seed):
        r = np.random.default_rng(seed)
        m = quadrotor_model(wind=WindField(WIND))
        x = r.normal(0, 0.3, 12)
        u1, u2 = r.normal(size=4), r.normal(size=4)
        th = r.uniform(0, 1, 3)
        e = lambda u, t: eval_dynamics(m, x, u, t)
        assert np.allclose(e(u1 + u2, th) - e(u1, th) - e(u2, th) + e(np.zeros(4), th), 0.0, atol=1e-11)
        t1, t2 = r.uniform(0, 1, 3), r.uniform(0, 1, 3)
        assert np.allclose(e(u1, t1 + t2) - e(u1, t1) - e(u1, t2) + e(u1, np.zeros(3)), 0.0, atol=1e-11)


class TestQuadrotor:
    def test_hover_equilibrium(self, backend):
        p = QuadrotorParams()
        m = quadrotor_model(p)
        xdot = eval_dynamics(m, hover_state(), [p.mass_kg * p.gravity_m_s2, 0, 0, 0], np.zeros(3))
        assert np.allclose(xdot, 0.0, atol=1e-12)

    def test_no_relative_wind_no_drag(self, backend):
        m = quadrotor_model(wind=WindField(WIND))
        x = np.zeros(12)
        x[IPHI], x[ITHETA], x[IPSI] = 0.1, -0.2, 0.3
        R = rotation_body_to_inertial(0.1, -0.2, 0.3)
        x[IU:IW + 1] = R.T @ WIND
        assert np.allclose(m.regressor(x), 0.0, atol=1e-12)

    def test_drag_regressor_at_hover(self, backend):
        p = QuadrotorParams(k_delta=0.7, mass_kg=1.3)
        m = quadrotor_model(p, wind=WindField(WIND))
        D = m.regressor(hover_state())
        expected = p.k_delta * math.sqrt(189.0) / p.mass_kg * WIND
        assert np.allclose(np.diag(D[IU:IW + 1]), expected)
        assert np.count_nonzero(D) == 3
        assert numerical_rank(D) == 3

    def test_rotation_orthonormal(self, rng):
        for ang in rng.uniform(-1.4, 1.4, (100, 3)):
            R = rotation_body_to_inertial(*ang)
            assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)

    def test_pitch_guard(self):
        m = quadrotor_model()
        x = hover_state()
        x[ITHETA] = math.pi / 2 - 1e-4
        with pytest.raises(PitchSingularity):
            m.regressor(x)

    def test_horizontal_momentum_direction(self):
        m = quadrotor_model()
        x = hover_state()
        x[IU:IW + 1] = [1.0, 0.5, 0.0]
        f = lambda t, s: eval_dynamics(m, s, np.zeros(4), np.zeros(3))
        for k in range(200):
            x = rk4_step(f, x, k * 1e-3, 1e-3)
        R = rotation_body_to_inertial(x[IPHI], x[ITHETA], x[IPSI])
        v = R @ x[IU:IW + 1]
        assert abs(v[0] * 0.5 - v[1] * 1.0) < 1e-9
        assert np.allclose(x[IPHI:IPSI + 1], 0.0)

    def test_bad_params(self):
        with pytest.raises(BadVariantParams):
            QuadrotorParams(mass_kg=0.0)
        with pytest.raises(BadVariantParams):
            QuadrotorParams(inertia_kg_m2=(1.0, 0.0, 1.0))


class TestGust:
    def test_disabled_gust_is_zero(self):
        wind = WindField(WIND)
        assert np.all(wind_gust(1.0, hover_state(), wind) == 0.0)
        m = quadrotor_model(wind=wind)
        d = gust_disturbance(m, 0.69)
        assert np.all(d(1.0, hover_state()) == 0.0)

    def test_seeded_determinism(self):
        a = OUGust(0.85, 0.5, seed=3)
        b = OUGust(0.85, 0.5, seed=3)
        ts = np.linspace(0, 5, 777)
        assert np.array_equal(np.array([a(t) for t in ts]), np.array([b(t) for t in ts]))
        c = OUGust(0.85, 0.5, seed=4)
        assert not np.array_equal(a(2.0), c(2.0))

    def test_disturbance_respects_bound(self, rng):
        wind = WindField(WIND, gust=OUGust(3.0, 0.5, seed=1))
        m = quadrotor_model(wind=wind, cd_true=(0.1, 0.1, 0.3))
        d = gust_disturbance(m, 0.69)
        for t in rng.uniform(0, 10, 300):
            assert np.linalg.norm(d(t, rng.normal(0, 0.2, 12))) <= 0.69 * (1 + 1e-12)

    def test_disturbance_is_drag_difference(self):
        wind = WindField(WIND, gust=OUGust(0.5, 0.5, seed=2))
        m = quadrotor_model(wind=wind, cd_true=(0.1, 0.1, 0.3))
        d = gust_disturbance(m, 1e9)
        x = hover_state()
        t = 1.234
        gust_model = quadrotor_model(wind=WindField(WIND + wind.gust(t)), cd_true=(0.1, 0.1, 0.3))
        expected = (gust_model.regressor(x) - m.regressor(x)) @ m.true_params
        assert np.allclose(d(t, x), expected, atol=1e-12)
