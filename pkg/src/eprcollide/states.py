"""Units, single-particle squeezed states and two-particle Gaussian states.

Phase-space ordering is fixed to ``(x_a, p_a, x_b, p_b)`` everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ValidationError

HBAR_SI = 1.054571817e-34  # J s
ATOMIC_MASS_UNIT_KG = 1.66053906660e-27

REL_TOL = 1e-9
ABS_TOL = 1e-15
SYM_TOL = 1e-12

COORDS = ("x_a", "p_a", "x_b", "p_b")

# (mass, length, time) exponents of the quantities that cross the I/O boundary
DIMENSIONS = {
    "dimensionless": (0, 0, 0),
    "mass": (1, 0, 0),
    "length": (0, 1, 0),
    "time": (0, 0, 1),
    "velocity": (0, 1, -1),
    "momentum": (1, 1, -1),
    "frequency": (0, 0, -1),
    "action": (1, 2, -1),
    "length2": (0, 2, 0),
    "momentum2": (2, 2, -2),
    "action2": (2, 4, -2),
}


@dataclass(frozen=True)
class UnitSystem:
    """Value of hbar plus the SI size of one internal unit of mass, length and time.

    The natural system has every scale equal to one and ``hbar = 1``; SI values
    are then meaningless. :meth:`canonical` builds the system used for SI input:
    hbar, the mass of particle A and the mean velocity of B are all 1.
    """

    hbar: float = 1.0
    mass_unit: float = 1.0
    length_unit: float = 1.0
    time_unit: float = 1.0
    name: str = "natural"

    def __post_init__(self):
        for key in ("hbar", "mass_unit", "length_unit", "time_unit"):
            value = getattr(self, key)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"UnitSystem.{key} must be positive and finite, got {value!r}")

    @classmethod
    def natural(cls, hbar: float = 1.0) -> "UnitSystem":
        return cls(hbar=hbar)

    @classmethod
    def si(cls) -> "UnitSystem":
        """Compute directly in SI units (hbar in J s)."""
        return cls(hbar=HBAR_SI, name="si")

    @classmethod
    def canonical(cls, mass_kg: float, velocity_m_s: float) -> "UnitSystem":
        """hbar = 1 with ``mass_kg`` as mass unit and ``velocity_m_s`` as velocity unit."""
        if mass_kg <= 0 or velocity_m_s <= 0:
            raise DomainError("reference mass and velocity must be positive")
        length = HBAR_SI / (mass_kg * velocity_m_s)
        return cls(hbar=1.0, mass_unit=mass_kg, length_unit=length,
                   time_unit=length / velocity_m_s, name="canonical")

    def scale(self, dimension: str) -> float:
        """SI value of one internal unit of ``dimension``."""
        try:
            a, b, c = DIMENSIONS[dimension]
        except KeyError:
            raise ValueError(f"unknown dimension {dimension!r}") from None
        return self.mass_unit**a * self.length_unit**b * self.time_unit**c

    def to_si(self, value, dimension: str):
        return value * self.scale(dimension)

    def from_si(self, value, dimension: str):
        return value / self.scale(dimension)


NATURAL = UnitSystem()


def _tolerance(bound: float) -> float:
    return REL_TOL * abs(bound) + ABS_TOL


@dataclass(frozen=True)
class ParticleSpec:
    """Mass, mean phase-space point and (uncorrelated) variances of one particle."""

    mass: float
    mean_position: float = 0.0
    mean_momentum: float = 0.0
    position_variance: float = 0.5
    momentum_variance: float = 0.5
    hbar: float = 1.0

    def __post_init__(self):
        values = (self.mass, self.mean_position, self.mean_momentum,
                  self.position_variance, self.momentum_variance, self.hbar)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"non-finite particle parameters: {self}")
        if self.mass <= 0:
            raise ValidationError(f"mass must be positive, got {self.mass!r}")
        if self.position_variance <= 0 or self.momentum_variance <= 0:
            raise ValidationError("position and momentum variances must be positive")
        bound = self.hbar**2 / 4
        if self.uncertainty_product < bound - _tolerance(bound):
            raise ValidationError(
                f"Heisenberg violation: var_x*var_p = {self.uncertainty_product:.6g} "
                f"< hbar^2/4 = {bound:.6g}"
            )

    @property
    def uncertainty_product(self) -> float:
        return self.position_variance * self.momentum_variance


def ground_state(mass: float, omega: float, units: UnitSystem = NATURAL) -> ParticleSpec:
    """Motional ground state of a harmonic trap with angular frequency ``omega``."""
    if not (mass > 0 and math.isfinite(mass)):
        raise DomainError(f"mass must be positive, got {mass!r}")
    if not (omega > 0 and math.isfinite(omega)):
        raise DomainError(f"omega must be positive, got {omega!r}")
    hbar = units.hbar
    return ParticleSpec(
        mass=mass,
        position_variance=hbar / (2 * mass * omega),
        momentum_variance=hbar * mass * omega / 2,
        hbar=hbar,
    )


def squeeze(spec: ParticleSpec, r: float) -> ParticleSpec:
    """Scale variances by ``exp(-2r)`` (position) and ``exp(2r)`` (momentum).

    Positive ``r`` squeezes position, negative ``r`` squeezes momentum.
    """
    if not math.isfinite(r):
        raise DomainError(f"squeeze parameter must be finite, got {r!r}")
    return replace(
        spec,
        position_variance=spec.position_variance * math.exp(-2 * r),
        momentum_variance=spec.momentum_variance * math.exp(2 * r),
    )


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance of ``(x_a, p_a, x_b, p_b)`` at ``time``.

    Arrays are copied and made read-only. ``physical=True`` additionally
    enforces the uncertainty relation on both single-particle blocks.
    """

    time: float
    mean: np.ndarray
    cov: np.ndarray
    hbar: float = 1.0
    physical: bool = True
    masses: tuple[float, float] | None = field(default=None)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (4,) or cov.shape != (4, 4):
            raise ValidationError(f"expected mean (4,) and cov (4, 4), got {mean.shape} and {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("state contains non-finite entries")
        check_covariance(cov)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if self.physical:
            report = heisenberg_check(self)
            for name, ok, product in zip("AB", report.passed, report.products):
                if not ok:
                    raise ValidationError(
                        f"particle {name} block violates Heisenberg: det = {product:.6g} "
                        f"< hbar^2/4 = {report.bound:.6g}"
                    )

    def block(self, particle: str) -> np.ndarray:
        i = {"a": 0, "b": 2}[particle.lower()]
        return self.cov[i:i + 2, i:i + 2]

    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))


def check_covariance(cov: np.ndarray) -> None:
    """Raise :class:`ValidationError` unless ``cov`` is symmetric positive semidefinite.

    The eigenvalue test runs on the correlation-normalised matrix so that
    mixed length/momentum scales do not hide a negative direction.
    """
    cov = np.asarray(cov, dtype=float)
    scale = np.max(np.abs(cov)) if cov.size else 0.0
    if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * scale:
        raise ValidationError("covariance matrix is not symmetric")
    d = np.diag(cov).copy()
    if np.any(d < -ABS_TOL * max(scale, 1.0)):
        raise ValidationError("covariance matrix has negative variances")
    d[d <= 0] = 1.0
    s = 1.0 / np.sqrt(d)
    normed = cov * np.outer(s, s)
    eig = np.linalg.eigvalsh((normed + normed.T) / 2)
    if eig[0] < -REL_TOL * max(1.0, eig[-1]):
        raise ValidationError(f"covariance matrix is not positive semidefinite (min eigenvalue {eig[0]:.3g})")


def assemble(a: ParticleSpec, b: ParticleSpec, t0: float = 0.0) -> GaussianState:
    """Product state of two independent particles (zero cross-covariance)."""
    if not math.isclose(a.hbar, b.hbar, rel_tol=1e-12):
        raise ValidationError("particles were prepared with different values of hbar")
    for name, spec in (("A", a), ("B", b)):
        bound = spec.hbar**2 / 4
        if spec.uncertainty_product < bound - _tolerance(bound):
            raise ValidationError(f"particle {name} violates Heisenberg")
    mean = [a.mean_position, a.mean_momentum, b.mean_position, b.mean_momentum]
    cov = np.diag([a.position_variance, a.momentum_variance,
                   b.position_variance, b.momentum_variance])
    return GaussianState(time=t0, mean=mean, cov=cov, hbar=a.hbar, masses=(a.mass, b.mass))


class HeisenbergReport(NamedTuple):
    products: tuple[float, float]
    bound: float
    passed: tuple[bool, bool]

    @property
    def ok(self) -> bool:
        return all(self.passed)


def heisenberg_check(state: GaussianState, units: UnitSystem | None = None) -> HeisenbergReport:
    """Determinant of each particle's 2x2 block compared against hbar^2/4."""
    hbar = units.hbar if units is not None else state.hbar
    bound = hbar**2 / 4
    blocks = (state.cov[0:2, 0:2], state.cov[2:4, 2:4])
    products = tuple(float(np.linalg.det(b)) for b in blocks)
    # strongly x-p correlated blocks lose digits to cancellation in the determinant
    scales = tuple(max(bound, abs(b[0, 0] * b[1, 1])) for b in blocks)
    passed = tuple(p >= bound - _tolerance(s) for p, s in zip(products, scales))
    return HeisenbergReport(products, bound, passed)


def free_flight_matrix(m_a: float, m_b: float, duration: float) -> np.ndarray:
    f = np.eye(4)
    f[0, 1] = duration / m_a
    f[2, 3] = duration / m_b
    return f


def free_evolve(state: GaussianState, m_a: float, m_b: float, duration: float) -> GaussianState:
    """Force-free evolution of both particles for ``duration``."""
    f = free_flight_matrix(m_a, m_b, duration)
    cov = f @ state.cov @ f.T
    return replace(state, time=state.time + duration, mean=f @ state.mean,
                   cov=(cov + cov.T) / 2)
