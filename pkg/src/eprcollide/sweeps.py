"""One-dimensional parameter sweeps and golden-section refinement of the optimum."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .ensemble import EnsembleConfig
from .errors import BracketError, ValidationError
from .scenarios import HOLD_MODES, Scenario, analyze, with_mass_ratio, with_squeeze

logger = logging.getLogger(__name__)

VARIABLES = ("mass_ratio", "squeeze_r", "v_mean", "x0")
OBJECTIVES = ("reid_product", "duan_ratio", "corr_x", "corr_p")
# corr_p is best when largest; every other objective is best when smallest
_SIGN = {"reid_product": 1.0, "duan_ratio": 1.0, "corr_x": 1.0, "corr_p": -1.0}
FLAT_TOL = 1e-9


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    grid: tuple[float, ...]
    base: Scenario
    objective: str = "reid_product"
    hold: str = "heavier"                   # mass-ratio sweeps only
    ensemble: EnsembleConfig | None = None
    gain_mode: str = "optimized"

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ValidationError(f"sweep variable must be one of {VARIABLES}, got {self.variable!r}")
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"sweep objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.hold not in HOLD_MODES:
            raise ValidationError(f"hold must be one of {HOLD_MODES}")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ValidationError("sweep grid is empty")
        if not all(math.isfinite(g) for g in grid):
            raise ValidationError("sweep grid contains non-finite values")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError("sweep grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)

    def scenario_at(self, value: float) -> Scenario:
        if self.variable == "mass_ratio":
            return with_mass_ratio(self.base, value, self.hold)
        if self.variable == "squeeze_r":
            return with_squeeze(self.base, value)
        return replace(self.base, **{self.variable: value})


@dataclass(frozen=True)
class SweepRow:
    value: float
    objective: float
    objective_stderr: float
    flag: str               # epr, inseparable, none or failed
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.flag != "failed"


def _objective(report, name: str) -> float:
    return float(getattr(report, name))


def evaluate_point(spec: SweepSpec, value: float, with_ensemble: bool = True) -> SweepRow:
    """Objective at one grid value; domain and simulation failures become a failed row."""
    try:
        sc = spec.scenario_at(value)
        res = analyze(sc, spec.ensemble if with_ensemble else None, spec.gain_mode)
    except (ValueError, RuntimeError) as exc:
        logger.warning("sweep point %s=%g failed: %s", spec.variable, value, exc)
        return SweepRow(value, math.nan, math.nan, "failed", f"{type(exc).__name__}: {exc}")
    if res.ensemble_report is not None:
        rep = res.ensemble_report
        stderr = res.ensemble_stderr.get(spec.objective, math.nan)
    else:
        rep, stderr = res.linear_report, math.nan
    flag = "epr" if rep.epr_flag else ("inseparable" if rep.inseparable_flag else "none")
    return SweepRow(value, _objective(rep, spec.objective), stderr, flag)


def sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """Evaluate every grid point independently; rows come back in grid order."""
    if workers <= 1:
        return [evaluate_point(spec, v) for v in spec.grid]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda v: evaluate_point(spec, v), spec.grid))


def linear_objective(spec: SweepSpec, value: float) -> float:
    """Signed linearized objective (smaller is better); ``inf`` where the model fails."""
    row = evaluate_point(spec, value, with_ensemble=False)
    return _SIGN[spec.objective] * row.objective if row.ok else math.inf


def find_bracket(values, objectives) -> tuple[int, int, int]:
    """Indices ``(lo, best, hi)`` of a grid bracket around the smallest finite objective.

    Raises BracketError when the objective is flat or the minimum sits on the
    edge of the grid.
    """
    vals = np.asarray(objectives, dtype=float)
    finite = np.flatnonzero(np.isfinite(vals))
    if finite.size < 3:
        raise BracketError("fewer than three usable grid points; widen or refine the grid")
    span = vals[finite].max() - vals[finite].min()
    if span <= FLAT_TOL * max(abs(vals[finite]).max(), 1e-300):
        raise BracketError("objective is flat over the grid; no optimum to refine")
    pos = int(np.argmin(np.where(np.isfinite(vals), vals, np.inf)))
    k = int(np.searchsorted(finite, pos))
    if k == 0 or k == finite.size - 1:
        raise BracketError(
            f"minimum at grid edge (value index {pos}); widen the grid to bracket the optimum"
        )
    return int(finite[k - 1]), pos, int(finite[k + 1])


@dataclass(frozen=True)
class Optimum:
    argmin: float
    objective: float
    tolerance: float
    bracket: tuple[float, float]
    evaluations: int


def refine_optimum(spec: SweepSpec, rel_tol: float = 1e-3, rows: list[SweepRow] | None = None) -> Optimum:
    """Golden-section search on the linearized objective inside the best grid bracket.

    ``rows`` may pass a finished sweep; otherwise the grid is evaluated with the
    linearized model. The returned ``objective`` is the unsigned value.
    """
    grid = np.array(spec.grid)
    if rows is None:
        signed = [linear_objective(spec, v) for v in grid]
    else:
        signed = [_SIGN[spec.objective] * r.objective if r.ok else math.inf for r in rows]
    lo, mid, hi = find_bracket(grid, signed)
    f = lambda v: linear_objective(spec, v)  # noqa: E731
    # the target tolerance is relative; the golden search tolerance is on x
    xtol = rel_tol * 1e-3
    res = minimize_scalar(f, bracket=(grid[lo], grid[mid], grid[hi]), method="golden",
                          options={"xtol": xtol})
    x = float(res.x)
    if not (grid[lo] <= x <= grid[hi]) or not math.isfinite(res.fun):
        raise BracketError("refinement left the bracket; the objective is not unimodal there")
    return Optimum(x, _SIGN[spec.objective] * float(res.fun), rel_tol * abs(x),
                   (float(grid[lo]), float(grid[hi])), int(res.nfev))
