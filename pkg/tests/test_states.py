import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eprcollide.errors import DomainError, ValidationError
from eprcollide.states import (ATOMIC_MASS_UNIT_KG, HBAR_SI, GaussianState, ParticleSpec, UnitSystem,
                               assemble, check_covariance, free_evolve, free_flight_matrix, ground_state,
                               heisenberg_check, squeeze)


def test_ground_state_variances():
    # [PAPER] Var x = hbar/(2 m Omega), Var p = hbar m Omega / 2
    g = ground_state(2.0, 0.5)
    assert g.position_variance == pytest.approx(0.5)
    assert g.momentum_variance == pytest.approx(0.5)
    g = ground_state(1.0, 4.0, UnitSystem.natural(2.0))
    assert g.position_variance == pytest.approx(2.0 / 8.0)
    assert g.momentum_variance == pytest.approx(4.0)


def test_ground_state_rejects_bad_inputs():
    with pytest.raises(DomainError):
        ground_state(-1.0, 1.0)
    with pytest.raises(DomainError):
        ground_state(1.0, 0.0)


@given(r=st.floats(-6, 6), m=st.floats(1e-3, 1e3), w=st.floats(1e-6, 1e6))
def test_squeeze_keeps_minimum_uncertainty(r, m, w):
    g = ground_state(m, w)
    s = squeeze(g, r)
    assert s.uncertainty_product == pytest.approx(0.25, rel=1e-12)
    assert s.position_variance == pytest.approx(g.position_variance * math.exp(-2 * r), rel=1e-12)


def test_squeeze_zero_is_identity():
    g = ground_state(3.0, 2.0)
    assert squeeze(g, 0.0) == g


def test_particle_spec_heisenberg():
    with pytest.raises(ValidationError, match="Heisenberg"):
        ParticleSpec(1.0, position_variance=0.4, momentum_variance=0.4)
    # within the relative tolerance the bound itself is accepted
    ParticleSpec(1.0, position_variance=0.5, momentum_variance=0.5 * (1 - 1e-12))


def test_unit_system_roundtrip():
    u = UnitSystem.canonical(39 * ATOMIC_MASS_UNIT_KG, 1e4)
    assert u.to_si(1.0, "action") == pytest.approx(HBAR_SI, rel=1e-12)
    assert u.to_si(1.0, "velocity") == pytest.approx(1e4, rel=1e-12)
    assert u.from_si(u.to_si(3.7, "momentum2"), "momentum2") == pytest.approx(3.7, rel=1e-14)
    with pytest.raises(ValueError):
        u.scale("charge")


def test_ground_state_si_matches_canonical():
    m = 133 * ATOMIC_MASS_UNIT_KG
    omega = 2 * math.pi * 1e6
    si = ground_state(m, omega, UnitSystem.si())
    u = UnitSystem.canonical(m, 1e4)
    nat = ground_state(1.0, u.from_si(omega, "frequency"))
    assert u.to_si(nat.position_variance, "length2") == pytest.approx(si.position_variance, rel=1e-12)


def test_assemble_is_product_state():
    a = squeeze(ground_state(1.0, 1.0), -1.0)
    b = ParticleSpec(3.0, -10.0, 3.0, 0.2, 2.0)
    s = assemble(a, b, 0.0)
    assert s.cov[0, 2] == 0 and s.cov[1, 3] == 0
    assert s.mean.tolist() == [0.0, 0.0, -10.0, 3.0]
    assert s.masses == (1.0, 3.0)
    with pytest.raises(ValueError):
        s.cov[0, 0] = 1.0


def test_gaussian_state_rejects_unphysical():
    with pytest.raises(ValidationError, match="particle A"):
        GaussianState(0.0, np.zeros(4), np.diag([0.1, 0.1, 1.0, 1.0]))
    with pytest.raises(ValidationError, match="symmetric"):
        c = np.eye(4)
        c[0, 1] = 0.3
        GaussianState(0.0, np.zeros(4), c)
    with pytest.raises(ValidationError, match="semidefinite"):
        c = np.eye(4)
        c[0, 2] = c[2, 0] = 1.5
        check_covariance(c)
    GaussianState(0.0, np.zeros(4), np.diag([0.1, 0.1, 1.0, 1.0]), physical=False)


def test_heisenberg_check_reports_products():
    s = assemble(ground_state(1.0, 1.0), ParticleSpec(2.0, -5.0, 1.0, 1.0, 2.0))
    rep = heisenberg_check(s)
    assert rep.products == pytest.approx((0.25, 2.0))
    assert rep.ok


def test_free_evolve_oracle():
    # Var x(t) = Var x + t^2 Var p / m^2 for an uncorrelated packet
    a, b = ParticleSpec(2.0, 0, 0, 0.3, 1.5), ParticleSpec(0.5, -1, 1, 0.7, 0.4)
    s = free_evolve(assemble(a, b), 2.0, 0.5, 3.0)
    assert s.cov[0, 0] == pytest.approx(0.3 + 9 * 1.5 / 4)
    assert s.cov[2, 2] == pytest.approx(0.7 + 9 * 0.4 / 0.25)
    assert s.cov[0, 1] == pytest.approx(3 * 1.5 / 2)
    assert s.mean[2] == pytest.approx(-1 + 3 * 1 / 0.5)
    assert s.time == 3.0
    assert heisenberg_check(s).products[0] == pytest.approx(0.45)


def test_free_flight_matrix_is_symplectic():
    f = free_flight_matrix(1.0, 3.0, 7.0)
    omega = np.kron(np.eye(2), np.array([[0, 1], [-1, 0]]))
    assert np.allclose(f @ omega @ f.T, omega)
