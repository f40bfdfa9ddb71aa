"""Exact classical propagation of phase-space points through one elastic collision.

Particles are points on a line; B starts to the left of A and contact means
equal coordinates. No approximation is made here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import PreconditionError, SecondCollisionError, ValidationError


@dataclass(frozen=True)
class PhaseSample:
    x_a: float
    p_a: float
    x_b: float
    p_b: float
    time: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x_a, self.p_a, self.x_b, self.p_b, self.time)):
            raise ValidationError(f"non-finite phase sample {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x_a, self.p_a, self.x_b, self.p_b])


@dataclass(frozen=True)
class CollisionOutcome:
    sample: PhaseSample
    t_coll: float | None
    collided: bool
    pre_collision: PhaseSample | None = None


def elastic_velocity_map(m_a, m_b, v_a, v_b):
    """Outgoing velocities of a 1D elastic collision. Works on scalars and arrays."""
    total = m_a + m_b
    u_a = ((m_a - m_b) * v_a + 2 * m_b * v_b) / total
    u_b = ((m_b - m_a) * v_b + 2 * m_a * v_a) / total
    return u_a, u_b


def optimal_mass_ratio(case: str = "light-target") -> float:
    """m_B/m_A giving 50% momentum transfer onto a resting particle A.

    ``"light-target"`` (case i): the resting particle is the lighter one, ratio 3.
    ``"heavy-target"`` (case ii): the resting particle is the heavier one and the
    incoming particle bounces back, ratio 1/3.
    """
    key = case.lower().strip()
    if key in ("light-target", "i", "1", "case-i"):
        return 3.0
    if key in ("heavy-target", "ii", "2", "case-ii"):
        return 1.0 / 3.0
    raise ValueError(f"unknown case {case!r}; use 'light-target' or 'heavy-target'")


class Propagated(NamedTuple):
    x_a: np.ndarray
    p_a: np.ndarray
    x_b: np.ndarray
    p_b: np.ndarray
    t_coll: np.ndarray      # nan where no collision happened before t1
    collided: np.ndarray
    x_coll: np.ndarray      # contact coordinate, nan where no collision


def propagate_arrays(x_a, p_a, x_b, p_b, m_a: float, m_b: float, t0: float, t1: float) -> Propagated:
    """Vectorised exact propagation from ``t0`` to ``t1``.

    Callers must have removed points with ``x_b >= x_a``; non-closing pairs
    and contacts at or after ``t1`` fly freely.
    """
    x_a, p_a, x_b, p_b = (np.asarray(v, dtype=float) for v in (x_a, p_a, x_b, p_b))
    if t1 < t0:
        raise ValueError("t1 must not precede the sample time")
    v_a = p_a / m_a
    v_b = p_b / m_b
    closing = v_b - v_a
    gap = x_a - x_b
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.where(closing > 0, gap / np.where(closing > 0, closing, 1.0), np.inf)
    hit = dt < (t1 - t0)
    dt = np.where(hit, dt, 0.0)
    t_c = t0 + dt
    x_c = x_a + v_a * dt

    u_a, u_b = elastic_velocity_map(m_a, m_b, v_a, v_b)
    if np.any(hit & (u_b - u_a > 0)):
        raise SecondCollisionError("particles are still approaching after the collision")

    after = np.where(hit, t1 - t_c, 0.0)
    span = t1 - t0
    out_xa = np.where(hit, x_c + u_a * after, x_a + v_a * span)
    out_xb = np.where(hit, x_c + u_b * after, x_b + v_b * span)
    out_pa = np.where(hit, m_a * u_a, p_a)
    out_pb = np.where(hit, m_b * u_b, p_b)
    return Propagated(out_xa, out_pa, out_xb, out_pb,
                      np.where(hit, t_c, np.nan), hit, np.where(hit, x_c, np.nan))


def contact_time(sample: PhaseSample, m_a: float, m_b: float) -> float | None:
    """Time at which B reaches A, or ``None`` if they are not closing in."""
    if sample.x_b >= sample.x_a:
        raise PreconditionError(f"B must start left of A (x_b={sample.x_b!r}, x_a={sample.x_a!r})")
    closing = sample.p_b / m_b - sample.p_a / m_a
    if closing <= 0:
        return None
    return sample.time + (sample.x_a - sample.x_b) / closing


def propagate_sample(sample: PhaseSample, m_a: float, m_b: float, t1: float) -> CollisionOutcome:
    """Free flight, elastic contact, free flight up to ``t1`` for one point."""
    if t1 < sample.time:
        raise ValueError("t1 must not precede the sample time")
    t_coll = contact_time(sample, m_a, m_b)
    res = propagate_arrays(sample.x_a, sample.p_a, sample.x_b, sample.p_b, m_a, m_b, sample.time, t1)
    final = PhaseSample(float(res.x_a), float(res.p_a), float(res.x_b), float(res.p_b), t1)
    if not bool(res.collided):
        return CollisionOutcome(final, t_coll, False, None)
    x_c = float(res.x_coll)
    pre = PhaseSample(x_c, sample.p_a, x_c, sample.p_b, float(res.t_coll))
    return CollisionOutcome(final, float(res.t_coll), True, pre)
