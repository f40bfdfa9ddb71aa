"""Continuous-variable entanglement measures on a 4x4 covariance matrix.

Both criteria only consume the covariance, so they apply equally to
analytic (linearized) and empirical (ensemble) second moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .states import check_covariance

GAIN_MODES = ("unity", "optimized")
# minimum-uncertainty states sit exactly on the bounds; rounding must not flip a flag
FLAG_MARGIN = 1e-9


def _checked(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (4, 4):
        raise ValueError(f"expected a 4x4 covariance, got shape {cov.shape}")
    check_covariance(cov)
    return cov


def _conditional(var_target: float, var_source: float, cross: float) -> tuple[float, float]:
    """Residual variance of the best linear estimate of target from source, and its gain."""
    if var_source <= 0:
        return var_target, 0.0
    gain = cross / var_source
    return max(var_target - cross * gain, 0.0), gain


class ReidResult(NamedTuple):
    reid_x: float
    reid_p: float
    product: float
    bound: float
    epr_flag: bool
    gain_x: float
    gain_p: float


def reid_epr(cov, hbar: float = 1.0, direction: str = "b|a") -> ReidResult:
    """Product of inference variances of B's x and p from measurements on A.

    ``direction="a|b"`` infers A from B instead. EPR entanglement is flagged
    when the product drops below hbar^2/4.
    """
    c = _checked(cov)
    if direction == "b|a":
        tx, sx, tp, sp = 2, 0, 3, 1
    elif direction == "a|b":
        tx, sx, tp, sp = 0, 2, 1, 3
    else:
        raise ValueError("direction must be 'b|a' or 'a|b'")
    rx, gx = _conditional(c[tx, tx], c[sx, sx], c[sx, tx])
    rp, gp = _conditional(c[tp, tp], c[sp, sp], c[sp, tp])
    bound = hbar**2 / 4
    product = rx * rp
    return ReidResult(rx, rp, product, bound, bool(product < bound * (1 - FLAG_MARGIN)), gx, gp)


class DuanResult(NamedTuple):
    duan_sum: float
    bound: float
    inseparable: bool
    gain_x: float
    gain_p: float

    @property
    def ratio(self) -> float:
        return self.duan_sum / self.bound


def _duan_terms(c: np.ndarray, gx: float, gp: float) -> tuple[float, float]:
    var_u = gx * gx * c[0, 0] + 2 * gx * c[0, 2] + c[2, 2]
    var_v = gp * gp * c[1, 1] - 2 * gp * c[1, 3] + c[3, 3]
    return max(var_u, 0.0), max(var_v, 0.0)


def _duan_value(c: np.ndarray, gx: float, gp: float, hbar: float) -> tuple[float, float]:
    var_u, var_v = _duan_terms(c, gx, gp)
    return 2 * math.sqrt(var_u * var_v), hbar * (1 + abs(gx * gp))


def duan_inseparability(cov, hbar: float = 1.0, gain_mode: str = "optimized") -> DuanResult:
    """Duan-type test on ``u = g_x x_A + x_B`` and ``v = g_p p_A - p_B``.

    Separable states satisfy ``Var(u) Var(v) >= (hbar/2)^2 (1 + |g_x g_p|)^2``.
    That is the sum form ``Var(u)/l^2 + l^2 Var(v)/hbar^2 >= 1 + |g_x g_p|``
    at its optimal quadrature scale ``l``, reported here as
    ``duan_sum = 2 sqrt(Var(u) Var(v))`` against ``bound = hbar (1 + |g_x g_p|)``.
    Unity gains give the bound ``2 hbar``. Optimized mode searches the gains
    of both signs, seeded with the regression gains.
    """
    if gain_mode not in GAIN_MODES:
        raise ValueError(f"gain_mode must be one of {GAIN_MODES}")
    c = _checked(cov)
    if gain_mode == "unity":
        s, b = _duan_value(c, 1.0, 1.0, hbar)
        return DuanResult(s, b, bool(s < b * (1 - FLAG_MARGIN)), 1.0, 1.0)

    def ratio(gx, gp):
        s, b = _duan_value(c, gx, gp, hbar)
        return s / b

    candidates = [(1.0, 1.0), (-1.0, -1.0)]
    if c[0, 0] > 0 and c[1, 1] > 0:
        rgx, rgp = -c[0, 2] / c[0, 0], c[1, 3] / c[1, 1]
        if rgx * rgp > 0:
            candidates.append((rgx, rgp))
    best = min(candidates, key=lambda g: ratio(*g))
    def gains(a, sign):
        # log-gains beyond +-40 only overflow; no useful optimum lies there
        return sign * math.exp(min(max(a[0], -40.0), 40.0)), sign * math.exp(min(max(a[1], -40.0), 40.0))

    for sign in (1.0, -1.0):
        start = [math.log(abs(g)) for g in best] if best[0] * sign > 0 else [0.0, 0.0]
        res = minimize(lambda a: ratio(*gains(a, sign)), start,
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        g = gains(res.x, sign)
        if ratio(*g) < ratio(*best):
            best = g
    s, b = _duan_value(c, *best, hbar)
    return DuanResult(s, b, bool(s < b * (1 - FLAG_MARGIN)), best[0], best[1])


class Correlations(NamedTuple):
    corr_x: float
    corr_p: float
    degenerate_x: bool
    degenerate_p: bool


def correlation_coefficients(cov) -> Correlations:
    """Pearson coefficients of the position pair and of the momentum pair.

    A zero variance yields ``nan`` with the matching degenerate flag set.
    """
    c = np.asarray(cov, dtype=float)

    def pearson(i, j):
        d = c[i, i] * c[j, j]
        if not d > 0:
            return math.nan, True
        return float(np.clip(c[i, j] / math.sqrt(d), -1.0, 1.0)), False

    cx, dx = pearson(0, 2)
    cp, dp = pearson(1, 3)
    return Correlations(cx, cp, dx, dp)


@dataclass(frozen=True)
class EntanglementReport:
    duan_sum: float
    duan_bound: float
    gains: tuple[float, float]          # Duan gains (g_x, g_p)
    reid_x: float
    reid_p: float
    reid_product: float
    reid_bound: float
    reid_gains: tuple[float, float]     # regression gains of x_B on x_A, p_B on p_A
    reid_x_rev: float                   # A inferred from B
    reid_p_rev: float
    reid_product_rev: float
    corr_x: float
    corr_p: float
    epr_flag: bool
    inseparable_flag: bool

    @property
    def duan_ratio(self) -> float:
        return self.duan_sum / self.duan_bound

    @property
    def reid_ratio(self) -> float:
        return self.reid_product / self.reid_bound

    def values(self) -> dict[str, float]:
        """Flat numeric view used for CSV export and jackknife error bars."""
        return {
            "duan_sum": self.duan_sum,
            "duan_bound": self.duan_bound,
            "duan_ratio": self.duan_ratio,
            "duan_gain_x": self.gains[0],
            "duan_gain_p": self.gains[1],
            "reid_x": self.reid_x,
            "reid_p": self.reid_p,
            "reid_product": self.reid_product,
            "reid_bound": self.reid_bound,
            "reid_gain_x": self.reid_gains[0],
            "reid_gain_p": self.reid_gains[1],
            "reid_x_rev": self.reid_x_rev,
            "reid_p_rev": self.reid_p_rev,
            "reid_product_rev": self.reid_product_rev,
            "corr_x": self.corr_x,
            "corr_p": self.corr_p,
            "epr_flag": float(self.epr_flag),
            "inseparable_flag": float(self.inseparable_flag),
        }


def evaluate(cov, hbar: float = 1.0, gain_mode: str = "optimized") -> EntanglementReport:
    reid = reid_epr(cov, hbar)
    rev = reid_epr(cov, hbar, direction="a|b")
    duan = duan_inseparability(cov, hbar, gain_mode)
    corr = correlation_coefficients(cov)
    return EntanglementReport(
        duan_sum=duan.duan_sum,
        duan_bound=duan.bound,
        gains=(duan.gain_x, duan.gain_p),
        reid_x=reid.reid_x,
        reid_p=reid.reid_p,
        reid_product=reid.product,
        reid_bound=reid.bound,
        reid_gains=(reid.gain_x, reid.gain_p),
        reid_x_rev=rev.reid_x,
        reid_p_rev=rev.reid_p,
        reid_product_rev=rev.product,
        corr_x=corr.corr_x,
        corr_p=corr.corr_p,
        epr_flag=reid.epr_flag,
        inseparable_flag=duan.inseparable,
    )
