"""First-order model of the collision map around the ensemble mean.

The Jacobian is that of the exact map, so it holds for any mass ratio. :func:`paper_coefficients` gives the closed-form values
for the 1:3 case, which serve as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SimulationError, ValidationError
from .kinematics import propagate_arrays
from .states import GaussianState

REGIME_THRESHOLD = 1e-2


@dataclass(frozen=True, eq=False)
class LinearMap:
    jacobian: np.ndarray    # d(final coords) / d(initial coords)
    offset: np.ndarray      # image of the mean point
    t1: float
    steps: np.ndarray       # finite-difference step per coordinate


def _propagate_points(points: np.ndarray, m_a: float, m_b: float, t0: float, t1: float):
    res = propagate_arrays(points[:, 0], points[:, 1], points[:, 2], points[:, 3], m_a, m_b, t0, t1)
    return np.column_stack([res.x_a, res.p_a, res.x_b, res.p_b]), res.collided


def collision_jacobian(m_a: float, m_b: float, duration: float) -> np.ndarray:
    """Jacobian of the exact map over ``duration`` for points that collide in that window.

    On that domain ``x_a' = x_a + u_a T - 2 m_b (x_a - x_b) / M`` and
    ``x_b' = x_b + u_b T + 2 m_a (x_a - x_b) / M``, both affine in the initial
    coordinates, so this matrix is exact rather than a first-order estimate.
    """
    total = m_a + m_b
    t = duration
    return np.array([
        [1 - 2 * m_b / total, t * (m_a - m_b) / (m_a * total), 2 * m_b / total, 2 * t / total],
        [0.0, (m_a - m_b) / total, 0.0, 2 * m_a / total],
        [2 * m_a / total, 2 * t / total, 1 - 2 * m_a / total, t * (m_b - m_a) / (m_b * total)],
        [0.0, 2 * m_b / total, 0.0, (m_b - m_a) / total],
    ])


def linearize(state: GaussianState, m_a: float, m_b: float, t1: float,
              method: str = "analytic", rel_step: float = 1e-6, abs_floor: float = 1e-12) -> LinearMap:
    """First-order map of the exact propagation around the state mean.

    ``method="fd"`` uses central differences with steps of ``rel_step`` times each
    coordinate's standard deviation (never below ``abs_floor``). With positions
    around 1e9 and momentum spreads around 1e-8 those differences carry rounding
    errors near 1e-9 relative, so the default uses the closed-form Jacobian, which
    the exact map admits wherever a collision happens.
    """
    if method not in ("analytic", "fd"):
        raise ValueError("method must be 'analytic' or 'fd'")
    mean = np.asarray(state.mean, dtype=float)
    if not mean[2] < mean[0]:
        raise ValidationError("mean point must have B to the left of A")
    steps = np.maximum(rel_step * state.std(), abs_floor)
    if method == "analytic":
        image, hit = _propagate_points(mean[None, :], m_a, m_b, state.time, t1)
        if not hit[0]:
            raise SimulationError("mean trajectory does not collide before t1; nothing to linearize")
        return LinearMap(collision_jacobian(m_a, m_b, t1 - state.time), image[0], t1, steps)
    points = np.vstack([mean, mean + np.diag(steps), mean - np.diag(steps)])
    images, hit = _propagate_points(points, m_a, m_b, state.time, t1)
    if not hit[0]:
        raise SimulationError("mean trajectory does not collide before t1; nothing to linearize")
    if not hit.all():
        raise SimulationError("finite-difference stencil straddles the no-collision boundary")
    jac = (images[1:5] - images[5:9]).T / (2 * steps)
    return LinearMap(jac, images[0], t1, steps)


def propagate_cov(state: GaussianState, lmap: LinearMap) -> GaussianState:
    """``cov' = J cov J^T`` and ``mean' = offset`` at ``lmap.t1``."""
    j = lmap.jacobian
    cov = j @ state.cov @ j.T
    return GaussianState(time=lmap.t1, mean=lmap.offset, cov=(cov + cov.T) / 2,
                         hbar=state.hbar, physical=state.physical, masses=state.masses)


@dataclass(frozen=True)
class PaperPrediction:
    """Closed-form 1:3 predictions with A at rest at the origin and B at ``-x0``."""

    mean: tuple[float, float, float, float]     # (x_a, p_a, x_b, p_b) at t1
    t_coll: float
    t1: float
    position_coeffs: tuple[float, float]        # d x_a(t1), d x_b(t1) per d x_a(t0)
    momentum_coeffs: tuple[float, float]        # d p_a(t1), d p_b(t1) per d p_b(t0)
    collision_time_coeff: float                 # d t_coll per d x_a(t0)

    def jacobian_entries(self) -> dict[tuple[int, int], float]:
        return {
            (0, 0): self.position_coeffs[0],
            (2, 0): self.position_coeffs[1],
            (1, 3): self.momentum_coeffs[0],
            (3, 3): self.momentum_coeffs[1],
        }


def paper_coefficients(m_a: float, m_b: float, x0: float, v_mean: float) -> PaperPrediction:
    if not math.isclose(m_b, 3 * m_a, rel_tol=1e-12):
        raise DomainError(f"closed-form coefficients need m_b = 3 m_a, got m_b/m_a = {m_b / m_a:.6g}")
    if v_mean <= 0 or x0 <= 0:
        raise DomainError("x0 and v_mean must be positive")
    p = m_b * v_mean / 2
    return PaperPrediction(
        mean=(1.5 * x0, p, 0.5 * x0, p),
        t_coll=x0 / v_mean,
        t1=2 * x0 / v_mean,
        position_coeffs=(-0.5, 0.5),
        momentum_coeffs=(0.5, 0.5),
        collision_time_coeff=1.0 / v_mean,
    )


@dataclass(frozen=True)
class RegimeReport:
    eps_v: float                  # spread of v_B over its mean
    eps_pa: float                 # spread of p_A over mean p_B
    eps_xb: float                 # spread of x_B over spread of x_A
    neglected_term_ratio: float   # dropped velocity-spread term over the kept timing term
    threshold: float = REGIME_THRESHOLD

    @property
    def max_ratio(self) -> float:
        return max(self.eps_v, self.eps_pa, self.eps_xb, self.neglected_term_ratio)

    @property
    def in_paper_regime(self) -> bool:
        return self.max_ratio < self.threshold


def regime_report(state: GaussianState, m_a: float, m_b: float,
                  x0: float | None = None, v_mean: float | None = None,
                  threshold: float = REGIME_THRESHOLD) -> RegimeReport:
    """Dimensionless smallness parameters of the first-order treatment.

    ``x0`` and ``v_mean`` default to the separation of the means and the mean
    velocity of B.
    """
    mean, sd = state.mean, state.std()
    if x0 is None:
        x0 = mean[0] - mean[2]
    if v_mean is None:
        v_mean = mean[3] / m_b
    p_b = m_b * v_mean
    eps_v = sd[3] / m_b / abs(v_mean)
    eps_pa = sd[1] / abs(p_b)
    eps_xb = sd[2] / sd[0]
    # 3 dv x0 / (2 v) compared with dx_A / 2
    neglected = 3 * eps_v * abs(x0) / sd[0]
    return RegimeReport(float(eps_v), float(eps_pa), float(eps_xb), float(neglected), threshold)
