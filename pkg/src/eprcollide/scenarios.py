"""Collision scenarios, named presets and the linearized/ensemble analysis pipeline."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import criteria
from .ensemble import EnsembleConfig, EnsembleResult, jackknife, run_ensemble
from .errors import DomainError, ValidationError
from .linearized import LinearMap, RegimeReport, linearize, propagate_cov, regime_report
from .states import (ATOMIC_MASS_UNIT_KG, GaussianState, ParticleSpec, UnitSystem, assemble,
                     free_evolve, ground_state, squeeze)

HOLD_MODES = ("heavier", "a", "b")
# ensemble flags need the estimate this many standard errors inside the bound
FLAG_SIGMA = 3.0


@dataclass(frozen=True)
class Scenario:
    """Two-particle collision setup in internal units.

    A rests at the origin, B starts at ``-x0`` with mean velocity ``v_mean``.
    Each particle starts in the ground state of its trap frequency and is then
    squeezed. Positive squeeze values squeeze position and negative values
    squeeze momentum. Explicit ``var_*`` values replace the derived variances.
    ``pre_delay`` lets both packets spread freely (at zero mean momentum) before B
    is kicked to ``v_mean`` at ``t0 = 0``.
    """

    name: str = "custom"
    mass_a: float = 1.0
    mass_b: float = 3.0
    x0: float = 2e9
    v_mean: float = 1.0
    omega_a: float = 1e-13
    omega_b: float = 1e-13
    squeeze_a: float = -3.0
    squeeze_b: float = 3.0
    t1: float | None = None
    pre_delay: float = 0.0
    hbar: float = 1.0
    var_x_a: float | None = None
    var_p_a: float | None = None
    var_x_b: float | None = None
    var_p_b: float | None = None

    def __post_init__(self):
        for key in ("mass_a", "mass_b", "omega_a", "omega_b", "hbar"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{key} must be positive and finite, got {v!r}")
        if not (math.isfinite(self.x0) and self.x0 > 0):
            raise DomainError(f"x0 must be positive, got {self.x0!r}")
        if not (math.isfinite(self.v_mean) and self.v_mean > 0):
            raise DomainError(f"v_mean must be positive, got {self.v_mean!r}")
        if not (math.isfinite(self.pre_delay) and self.pre_delay >= 0):
            raise DomainError("pre_delay must be >= 0")
        if self.t1 is not None and not (math.isfinite(self.t1) and self.t1 > 0):
            raise DomainError("t1 must be positive")
        if not (math.isfinite(self.squeeze_a) and math.isfinite(self.squeeze_b)):
            raise DomainError("squeeze parameters must be finite")

    @property
    def mass_ratio(self) -> float:
        return self.mass_b / self.mass_a

    @property
    def measurement_time(self) -> float:
        """``t1``; defaults to ``2 x0 / v_mean`` after ``t0 = 0``."""
        return self.t1 if self.t1 is not None else 2 * self.x0 / self.v_mean

    def particles(self) -> tuple[ParticleSpec, ParticleSpec]:
        units = UnitSystem.natural(self.hbar)
        a = squeeze(ground_state(self.mass_a, self.omega_a, units), self.squeeze_a)
        b = squeeze(ground_state(self.mass_b, self.omega_b, units), self.squeeze_b)
        try:
            a = replace(a, position_variance=_pick(self.var_x_a, a.position_variance),
                        momentum_variance=_pick(self.var_p_a, a.momentum_variance))
        except ValidationError as exc:
            raise ValidationError(f"particle A: {exc}") from None
        try:
            b = replace(b, mean_position=-self.x0, mean_momentum=self.mass_b * self.v_mean,
                        position_variance=_pick(self.var_x_b, b.position_variance),
                        momentum_variance=_pick(self.var_p_b, b.momentum_variance))
        except ValidationError as exc:
            raise ValidationError(f"particle B: {exc}") from None
        return a, b

    def with_explicit_variances(self) -> "Scenario":
        a, b = self.particles()
        return replace(self, var_x_a=a.position_variance, var_p_a=a.momentum_variance,
                       var_x_b=b.position_variance, var_p_b=b.momentum_variance)

    def to_dict(self) -> dict:
        return asdict(self)


def _pick(explicit, derived):
    return derived if explicit is None else float(explicit)


def initial_state(sc: Scenario) -> GaussianState:
    """Product Gaussian state at ``t0 = 0``."""
    try:
        a, b = sc.particles()
    except ValidationError as exc:
        raise ValidationError(f"scenario {sc.name!r}: {exc}") from None
    if sc.pre_delay == 0:
        return assemble(a, b, 0.0)
    at_rest = assemble(a, replace(b, mean_momentum=0.0), -sc.pre_delay)
    spread = free_evolve(at_rest, sc.mass_a, sc.mass_b, sc.pre_delay)
    mean = spread.mean.copy()
    mean[3] = b.mean_momentum
    return replace(spread, mean=mean)


def with_mass_ratio(sc: Scenario, ratio: float, hold: str = "heavier") -> Scenario:
    """Change ``m_B / m_A`` while all initial variances and ``v_mean`` stay fixed.

    ``hold`` names the particle whose mass is kept: ``"a"``, ``"b"`` or
    ``"heavier"`` (the heavier particle of ``sc``). The other mass is rescaled.
    """
    if not (math.isfinite(ratio) and ratio > 0):
        raise DomainError(f"mass ratio must be positive, got {ratio!r}")
    if hold not in HOLD_MODES:
        raise ValueError(f"hold must be one of {HOLD_MODES}")
    if hold == "heavier":
        hold = "b" if sc.mass_b >= sc.mass_a else "a"
    base = sc.with_explicit_variances()
    if hold == "b":
        return replace(base, mass_a=sc.mass_b / ratio)
    return replace(base, mass_b=sc.mass_a * ratio)


def with_squeeze(sc: Scenario, r: float) -> Scenario:
    """Momentum-squeeze A and position-squeeze B by the same magnitude ``r``."""
    if any(v is not None for v in (sc.var_x_a, sc.var_p_a, sc.var_x_b, sc.var_p_b)):
        raise ValidationError("cannot rescale squeezing of a scenario with explicit variances")
    return replace(sc, squeeze_a=-r, squeeze_b=r)


PRESETS: dict[str, Scenario] = {
    "fig1": Scenario(name="fig1"),
    "fig1-strong": Scenario(name="fig1-strong", squeeze_a=-4.0, squeeze_b=4.0),
    "case-ii": Scenario(name="case-ii", mass_b=1 / 3, omega_b=1e-10),
    "equal-mass": Scenario(name="equal-mass", mass_b=1.0),
    "unsqueezed": Scenario(name="unsqueezed", squeeze_a=0.0, squeeze_b=0.0),
}


def trap_switch_squeezing(omega_initial: float, omega_final: float) -> float:
    """Squeeze parameter of a trap ground state after a sudden frequency switch.

    The ground state of ``omega_initial`` equals the ground state of
    ``omega_final`` squeezed by ``r = ln(omega_initial / omega_final) / 2``
    (position-squeezed when the trap is relaxed).
    """
    if not (omega_initial > 0 and omega_final > 0):
        raise DomainError("trap frequencies must be positive")
    return 0.5 * math.log(omega_initial / omega_final)


@dataclass(frozen=True)
class ScenarioPreset:
    """Ion-trap proposal in SI units. Masses are mass numbers (u)."""

    name: str
    mass_number_a: float
    mass_number_b: float
    omega_a: float      # rad/s, initial trap of A
    omega_p: float      # rad/s, common Paul trap after the switch
    omega_b: float      # rad/s, initial trap of B
    x0: float           # m
    v_mean: float       # m/s
    pre_delay: float = 0.0  # s

    def __post_init__(self):
        if not (0 < self.omega_a < self.omega_p < self.omega_b):
            raise ValidationError(
                f"preset {self.name!r}: trap frequencies must satisfy omega_a < omega_p < omega_b"
            )
        if min(self.mass_number_a, self.mass_number_b, self.x0, self.v_mean) <= 0:
            raise ValidationError(f"preset {self.name!r}: masses, x0 and v_mean must be positive")
        if self.pre_delay < 0:
            raise ValidationError("pre_delay must be >= 0")

    @property
    def squeezes(self) -> tuple[float, float]:
        return (trap_switch_squeezing(self.omega_a, self.omega_p),
                trap_switch_squeezing(self.omega_b, self.omega_p))

    def units(self) -> UnitSystem:
        return UnitSystem.canonical(self.mass_number_a * ATOMIC_MASS_UNIT_KG, self.v_mean)

    def to_scenario(self) -> tuple[Scenario, UnitSystem]:
        u = self.units()
        ra, rb = self.squeezes
        omega = u.from_si(self.omega_p, "frequency")
        sc = Scenario(
            name=self.name,
            mass_a=1.0,
            mass_b=self.mass_number_b / self.mass_number_a,
            x0=u.from_si(self.x0, "length"),
            v_mean=1.0,
            omega_a=omega,
            omega_b=omega,
            squeeze_a=ra,
            squeeze_b=rb,
            pre_delay=u.from_si(self.pre_delay, "time"),
        )
        return sc, u


ION_PRESETS: dict[str, ScenarioPreset] = {
    "k-cs": ScenarioPreset(
        name="k-cs",
        mass_number_a=39,
        mass_number_b=133,
        omega_a=2 * math.pi * 2e3,
        omega_p=2 * math.pi * 1e6,
        omega_b=2 * math.pi * 5e8,
        x0=2.5e-6,
        v_mean=1e4,
    ),
}


@dataclass(frozen=True, eq=False)
class Analysis:
    scenario: Scenario
    state0: GaussianState
    linear_map: LinearMap
    linear_state: GaussianState
    linear_report: criteria.EntanglementReport
    regime: RegimeReport
    ensemble: EnsembleResult | None = None
    ensemble_report: criteria.EntanglementReport | None = None
    ensemble_stderr: dict[str, float] = field(default_factory=dict)


def significant_flags(rep: criteria.EntanglementReport, stderr: dict[str, float],
                      sigma: float = FLAG_SIGMA) -> criteria.EntanglementReport:
    """Keep an estimated flag only if the value sits ``sigma`` error bars below its bound.

    A separable state on the boundary (e.g. a product of pure states) would
    otherwise be flagged in about half of all seeds.
    """
    def below(value, se, bound):
        return not math.isfinite(se) or value + sigma * se < bound

    epr = rep.epr_flag and below(rep.reid_product, stderr.get("reid_product", math.nan), rep.reid_bound)
    insep = rep.inseparable_flag and below(rep.duan_ratio, stderr.get("duan_ratio", math.nan), 1.0)
    return replace(rep, epr_flag=epr, inseparable_flag=insep)


def analyze(sc: Scenario, ensemble: EnsembleConfig | None = None, gain_mode: str = "optimized",
            sink=None) -> Analysis:
    """Linearized evaluation of ``sc``, plus the Monte Carlo estimate when ``ensemble`` is given.

    ``ensemble.t1`` is replaced by the scenario's measurement time.
    """
    state0 = initial_state(sc)
    t1 = sc.measurement_time
    lmap = linearize(state0, sc.mass_a, sc.mass_b, t1)
    lstate = propagate_cov(state0, lmap)
    lrep = criteria.evaluate(lstate.cov, sc.hbar, gain_mode)
    regime = regime_report(state0, sc.mass_a, sc.mass_b, sc.x0, sc.v_mean)
    if ensemble is None:
        return Analysis(sc, state0, lmap, lstate, lrep, regime)
    cfg = replace(ensemble, t1=t1)
    res = run_ensemble(state0, sc.mass_a, sc.mass_b, cfg, sink=sink)
    erep = criteria.evaluate(res.final.cov, sc.hbar, gain_mode)
    keys = list(erep.values())
    _, se = jackknife(res.final, lambda m, c: list(criteria.evaluate(c, sc.hbar, gain_mode).values().values()))
    stderr = {k: float(v) for k, v in zip(keys, np.atleast_1d(se))}
    stderr.update(epr_flag=math.nan, inseparable_flag=math.nan)
    erep = significant_flags(erep, stderr)
    return Analysis(sc, state0, lmap, lstate, lrep, regime, res, erep, stderr)


@dataclass(frozen=True, eq=False)
class IonScenarioResult:
    preset: ScenarioPreset
    units: UnitSystem
    squeezes: tuple[float, float]
    actual: Analysis
    control: Analysis
    control_ratio: float

    @property
    def degradation(self) -> float:
        """Reid product at the preset mass ratio over the ideal-ratio control."""
        return self.actual.linear_report.reid_product / self.control.linear_report.reid_product


def ion_scenario(preset: ScenarioPreset | str = "k-cs", ensemble: EnsembleConfig | None = None,
                 control_ratio: float = 3.0, gain_mode: str = "optimized") -> IonScenarioResult:
    """Run the ion proposal and a control with the ideal mass ratio under identical squeezing."""
    if isinstance(preset, str):
        try:
            preset = ION_PRESETS[preset]
        except KeyError:
            raise ValidationError(f"unknown ion preset {preset!r}") from None
    sc, units = preset.to_scenario()
    actual = analyze(sc, ensemble, gain_mode)
    control = analyze(with_mass_ratio(sc, control_ratio, "heavier"), ensemble, gain_mode)
    return IonScenarioResult(preset, units, preset.squeezes, actual, control, control_ratio)
