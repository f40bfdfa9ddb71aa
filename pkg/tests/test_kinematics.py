from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eprcollide.errors import PreconditionError, SecondCollisionError, ValidationError
from eprcollide.kinematics import (PhaseSample, contact_time, elastic_velocity_map, optimal_mass_ratio,
                                   propagate_arrays, propagate_sample)


def exact_oracle(x_a, p_a, x_b, p_b, m_a, m_b, t1):
    """Rational-arithmetic propagation using the centre-of-mass reflection rule."""
    x_a, p_a, x_b, p_b, m_a, m_b, t1 = map(Fraction, (x_a, p_a, x_b, p_b, m_a, m_b, t1))
    v_a, v_b = p_a / m_a, p_b / m_b
    if v_b <= v_a:
        return x_a + v_a * t1, p_a, x_b + v_b * t1, p_b, None
    tc = (x_a - x_b) / (v_b - v_a)
    if tc >= t1:
        return x_a + v_a * t1, p_a, x_b + v_b * t1, p_b, None
    v_cm = (p_a + p_b) / (m_a + m_b)
    u_a, u_b = 2 * v_cm - v_a, 2 * v_cm - v_b
    xc = x_a + v_a * tc
    return xc + u_a * (t1 - tc), m_a * u_a, xc + u_b * (t1 - tc), m_b * u_b, tc


def test_velocity_map_ratio_three():
    # [PAPER] m_B = 3 m_A, A at rest: A leaves with 3v/2, B with v/2
    u_a, u_b = elastic_velocity_map(1.0, 3.0, 0.0, 1.0)
    assert u_a == pytest.approx(1.5)
    assert u_b == pytest.approx(0.5)
    # half the momentum is transferred
    assert 1.0 * u_a == pytest.approx(0.5 * 3.0)


def test_velocity_map_ratio_third():
    # [PAPER] m_B = m_A / 3: B bounces back with -v/2 and A takes v/2
    u_a, u_b = elastic_velocity_map(1.0, 1 / 3, 0.0, 1.0)
    assert u_b == pytest.approx(-0.5)
    assert 1.0 * u_a == pytest.approx(0.5)


def test_equal_masses_swap():
    u_a, u_b = elastic_velocity_map(2.0, 2.0, 0.3, 1.7)
    assert (u_a, u_b) == pytest.approx((1.7, 0.3))


def test_optimal_mass_ratio():
    assert optimal_mass_ratio("light-target") == 3.0
    assert optimal_mass_ratio("ii") == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        optimal_mass_ratio("iii")


@settings(max_examples=200, deadline=None)
@given(
    x_a=st.floats(-5, 5), gap=st.floats(0.01, 20), p_a=st.floats(-2, 2), p_b=st.floats(-2, 6),
    m_a=st.floats(0.1, 10), m_b=st.floats(0.1, 10), t1=st.floats(0, 50),
)
def test_propagation_matches_rational_oracle(x_a, gap, p_a, p_b, m_a, m_b, t1):
    x_b = x_a - gap
    exp = exact_oracle(x_a, p_a, x_b, p_b, m_a, m_b, t1)
    out = propagate_sample(PhaseSample(x_a, p_a, x_b, p_b), m_a, m_b, t1)
    got = (out.sample.x_a, out.sample.p_a, out.sample.x_b, out.sample.p_b)
    scale = 1 + abs(x_a) + gap + t1 * (abs(p_a) / m_a + abs(p_b) / m_b)
    for g, e in zip(got, exp[:4]):
        assert abs(g - float(e)) <= 1e-12 * scale * 10
    assert out.collided == (exp[4] is not None)


@settings(max_examples=200, deadline=None)
@given(p_a=st.floats(-1, 1), p_b=st.floats(0.1, 10), m_a=st.floats(0.1, 10), m_b=st.floats(0.1, 10))
def test_conservation_per_sample(p_a, p_b, m_a, m_b):
    res = propagate_arrays(1.0, p_a, -1.0, p_b, m_a, m_b, 0.0, 1e6)
    if not res.collided:
        return
    assert float(res.p_a + res.p_b) == pytest.approx(p_a + p_b, rel=1e-12, abs=1e-12)
    e0 = p_a**2 / m_a + p_b**2 / m_b
    assert float(res.p_a**2 / m_a + res.p_b**2 / m_b) == pytest.approx(e0, rel=1e-12)


def test_fig1_mean_point():
    # [PAPER] at t1 = 2 x0 / v: x_A = 3 x0/2, x_B = x0/2, contact at x0/v
    x0 = 10.0
    out = propagate_sample(PhaseSample(0.0, 0.0, -x0, 3.0), 1.0, 3.0, 2 * x0)
    assert out.t_coll == pytest.approx(x0)
    assert out.sample.x_a == pytest.approx(15.0)
    assert out.sample.x_b == pytest.approx(5.0)
    assert out.sample.p_a == pytest.approx(1.5)
    assert out.sample.p_b == pytest.approx(1.5)
    assert out.pre_collision.x_a == out.pre_collision.x_b == pytest.approx(0.0)


def test_no_collision_before_t1():
    out = propagate_sample(PhaseSample(0.0, 0.0, -10.0, 3.0), 1.0, 3.0, 5.0)
    assert not out.collided
    assert out.t_coll == pytest.approx(10.0)
    assert out.sample.x_b == pytest.approx(-5.0)


def test_receding_pair_flies_freely():
    out = propagate_sample(PhaseSample(0.0, 1.0, -1.0, -1.0), 1.0, 1.0, 3.0)
    assert out.t_coll is None and not out.collided
    assert out.sample.x_a == pytest.approx(3.0)


def test_preconditions():
    with pytest.raises(PreconditionError):
        contact_time(PhaseSample(0.0, 0.0, 1.0, 1.0), 1.0, 1.0)
    with pytest.raises(ValidationError):
        PhaseSample(float("nan"), 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        propagate_sample(PhaseSample(0.0, 0.0, -1.0, 1.0, time=2.0), 1.0, 1.0, 1.0)


def test_vectorised_matches_scalar(rng):
    n = 500
    x_a = rng.normal(0, 1, n)
    x_b = x_a - rng.uniform(0.1, 5, n)
    p_a, p_b = rng.normal(0, 0.5, n), rng.normal(3, 0.5, n)
    res = propagate_arrays(x_a, p_a, x_b, p_b, 1.0, 3.0, 0.0, 4.0)
    for i in range(0, n, 37):
        one = propagate_sample(PhaseSample(x_a[i], p_a[i], x_b[i], p_b[i]), 1.0, 3.0, 4.0)
        assert res.x_a[i] == pytest.approx(one.sample.x_a)
        assert res.p_b[i] == pytest.approx(one.sample.p_b)
        assert bool(res.collided[i]) == one.collided


def test_second_collision_impossible_for_elastic_contact():
    # outgoing relative velocity always reverses, so the guard never fires for valid input
    res = propagate_arrays(np.array([0.0]), np.array([0.0]), np.array([-1.0]), np.array([1.0]), 1.0, 5.0, 0.0, 10.0)
    assert res.collided[0]
    assert res.p_a[0] / 1.0 >= res.p_b[0] / 5.0
    assert issubclass(SecondCollisionError, RuntimeError)
