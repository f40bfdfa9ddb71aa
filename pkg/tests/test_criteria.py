import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eprcollide.criteria import (correlation_coefficients, duan_inseparability, evaluate, reid_epr)


def tmsv(r, hbar=1.0):
    """Two-mode squeezed vacuum with x anti-correlated and p correlated."""
    c, s = hbar * math.cosh(2 * r) / 2, hbar * math.sinh(2 * r) / 2
    return np.array([[c, 0, -s, 0], [0, c, 0, s], [-s, 0, c, 0], [0, s, 0, c]])


def simon_ppt_entangled(cov, hbar=1.0):
    """Oracle: smallest symplectic eigenvalue of the partial transpose below hbar/2."""
    flip = np.diag([1, 1, 1, -1])
    pt = flip @ cov @ flip
    omega = np.kron(np.eye(2), np.array([[0, 1], [-1, 0]]))
    nu = np.sort(np.abs(np.linalg.eigvals(1j * omega @ pt)))
    return nu[0] < hbar / 2 * (1 - 1e-9)


def single_mode(r, phi, n=0.0, hbar=1.0):
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    return (1 + 2 * n) * hbar / 2 * rot @ np.diag([math.exp(-2 * r), math.exp(2 * r)]) @ rot.T


def product(ca, cb):
    cov = np.zeros((4, 4))
    cov[:2, :2], cov[2:, 2:] = ca, cb
    return cov


def test_reid_matches_schur_complement(rng):
    a = rng.normal(size=(4, 4))
    cov = a @ a.T + np.eye(4)
    res = reid_epr(cov)
    assert res.reid_x == pytest.approx(cov[2, 2] - cov[0, 2] ** 2 / cov[0, 0])
    assert res.reid_p == pytest.approx(cov[3, 3] - cov[1, 3] ** 2 / cov[1, 1])
    assert res.gain_x == pytest.approx(cov[0, 2] / cov[0, 0])
    rev = reid_epr(cov, direction="a|b")
    assert rev.reid_x == pytest.approx(cov[0, 0] - cov[0, 2] ** 2 / cov[2, 2])
    with pytest.raises(ValueError):
        reid_epr(cov, direction="b")


def test_reid_tmsv_closed_form():
    for r in (0.0, 0.5, 1.5):
        res = reid_epr(tmsv(r))
        assert res.product == pytest.approx(1 / (4 * math.cosh(2 * r) ** 2))
        assert res.epr_flag == (r > 0)


def test_reid_no_information_when_source_is_constant():
    cov = np.diag([0.0, 0.0, 2.0, 3.0])
    res = reid_epr(cov)
    assert (res.reid_x, res.reid_p) == (2.0, 3.0)


def test_duan_tmsv_unity():
    for r in (0.2, 1.0, 2.0):
        d = duan_inseparability(tmsv(r), gain_mode="unity")
        assert d.duan_sum == pytest.approx(2 * math.exp(-2 * r))
        assert d.bound == 2.0
        assert d.ratio == pytest.approx(math.exp(-2 * r))
        assert d.inseparable


def test_duan_ground_states_sit_on_bound():
    cov = product(single_mode(0, 0), single_mode(0, 0))
    for mode in ("unity", "optimized"):
        d = duan_inseparability(cov, gain_mode=mode)
        assert d.ratio == pytest.approx(1.0, rel=1e-9)
        assert not d.inseparable


def test_duan_hbar_scaling():
    hbar = 1.054571817e-34
    d1 = duan_inseparability(tmsv(1.0), gain_mode="optimized")
    d2 = duan_inseparability(tmsv(1.0, hbar), hbar=hbar, gain_mode="optimized")
    assert d2.ratio == pytest.approx(d1.ratio, rel=1e-6)
    assert d2.inseparable


@settings(max_examples=60, deadline=None)
@given(ra=st.floats(-3, 3), rb=st.floats(-3, 3), pa=st.floats(0, math.pi), pb=st.floats(0, math.pi),
       na=st.floats(0, 2), nb=st.floats(0, 2))
def test_duan_never_flags_product_states(ra, rb, pa, pb, na, nb):
    cov = product(single_mode(ra, pa, na), single_mode(rb, pb, nb))
    d = duan_inseparability(cov, gain_mode="optimized")
    assert not d.inseparable
    assert d.ratio >= 1 - 1e-9
    assert not reid_epr(cov).epr_flag


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0.05, 2.5), n=st.floats(0, 0.5), ra=st.floats(-1, 1))
def test_duan_flag_implies_ppt_violation(r, n, ra):
    # local squeezing of a noisy two-mode squeezed state
    s = np.diag([math.exp(-ra), math.exp(ra), 1, 1])
    cov = s @ (tmsv(r) + n * np.eye(4)) @ s
    d = duan_inseparability(cov, gain_mode="optimized")
    if d.inseparable:
        assert simon_ppt_entangled(cov)


def test_optimized_never_worse_than_unity(rng):
    for _ in range(20):
        r = rng.uniform(0, 2)
        s = np.diag(np.exp(rng.uniform(-1, 1, 4)))
        cov = s @ tmsv(r) @ s
        assert duan_inseparability(cov).ratio <= duan_inseparability(cov, gain_mode="unity").ratio * (1 + 1e-12)


def test_epr_implies_inseparable_with_optimized_gains(rng):
    for _ in range(30):
        r = rng.uniform(0.01, 2)
        s = np.diag(np.exp(rng.uniform(-2, 2, 4)))
        cov = s @ (tmsv(r) + rng.uniform(0, 0.3) * np.eye(4)) @ s
        rep = evaluate(cov)
        if rep.epr_flag:
            assert rep.inseparable_flag


def test_correlation_coefficients():
    c = correlation_coefficients(tmsv(1.0))
    assert c.corr_x == pytest.approx(-math.tanh(2.0))
    assert c.corr_p == pytest.approx(math.tanh(2.0))
    deg = correlation_coefficients(np.diag([0.0, 1.0, 1.0, 1.0]))
    assert math.isnan(deg.corr_x) and deg.degenerate_x and not deg.degenerate_p


def test_evaluate_report_fields():
    rep = evaluate(tmsv(1.0))
    v = rep.values()
    assert v["reid_product"] == rep.reid_product
    assert rep.reid_ratio == pytest.approx(rep.reid_product / 0.25)
    assert rep.duan_ratio < 1 and rep.epr_flag and rep.inseparable_flag
    assert rep.reid_product_rev == pytest.approx(rep.reid_product)
    assert v["epr_flag"] == 1.0


def test_rejects_bad_shapes():
    with pytest.raises(ValueError):
        reid_epr(np.eye(3))
    with pytest.raises(ValueError):
        duan_inseparability(np.eye(4), gain_mode="fixed")
