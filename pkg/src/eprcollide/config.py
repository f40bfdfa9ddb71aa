"""Run configuration: TOML/JSON loading, unit conversion and resolution into typed objects.

A configuration has up to three sections plus a few top-level keys::

    units = "natural"            # or "si"
    output_dir = "out"
    emit_samples = false
    gain_mode = "optimized"

    [scenario]
    preset = "fig1"              # any overrides follow
    squeeze_a = -3.0

    [ensemble]
    samples = 100000
    seed = 1

    [sweep]
    variable = "mass_ratio"
    start = 1.5
    stop = 6.0
    step = 0.1

In SI mode every dimensional scenario key carries its unit suffix
(``mass_a_u``, ``x0_m``, ``v_mean_m_s``, ``omega_a_rad_s``, ``t1_s`` ...).
"""

from __future__ import annotations

import json
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .ensemble import TRUNCATION_POLICIES, EnsembleConfig
from .errors import ConfigError, ValidationError
from .scenarios import ION_PRESETS, PRESETS, Scenario, ScenarioPreset
from .states import ATOMIC_MASS_UNIT_KG, UnitSystem
from .sweeps import OBJECTIVES, VARIABLES, SweepSpec
from .criteria import GAIN_MODES

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUT_DIR_ENV = "EPRCOLLIDE_OUT_DIR"
DEFAULT_PRESET = "fig1"
CSV_SCHEMA = 1

_NATURAL_KEYS = tuple(f.name for f in fields(Scenario) if f.name != "name")
# SI key -> (internal field, dimension)
_SI_KEYS = {
    "mass_a_u": ("mass_a", "mass_u"),
    "mass_b_u": ("mass_b", "mass_u"),
    "x0_m": ("x0", "length"),
    "v_mean_m_s": ("v_mean", "velocity"),
    "omega_a_rad_s": ("omega_a", "frequency"),
    "omega_b_rad_s": ("omega_b", "frequency"),
    "omega_p_rad_s": ("omega_p", "frequency"),
    "t1_s": ("t1", "time"),
    "pre_delay_s": ("pre_delay", "time"),
    "squeeze_a": ("squeeze_a", "dimensionless"),
    "squeeze_b": ("squeeze_b", "dimensionless"),
    "var_x_a_m2": ("var_x_a", "length2"),
    "var_p_a_kg2m2_s2": ("var_p_a", "momentum2"),
    "var_x_b_m2": ("var_x_b", "length2"),
    "var_p_b_kg2m2_s2": ("var_p_b", "momentum2"),
}
_ENSEMBLE_KEYS = ("samples", "seed", "chunk_size", "workers", "truncation", "max_reject_fraction")
_SWEEP_KEYS = ("variable", "grid", "start", "stop", "step", "objective", "hold", "ensemble", "refine")
_TOP_KEYS = ("units", "output_dir", "emit_samples", "gain_mode", "scenario", "ensemble", "sweep")
# sweep variables that need an SI -> internal conversion
_SWEEP_DIMENSIONS = {"mass_ratio": "dimensionless", "squeeze_r": "dimensionless",
                     "v_mean": "velocity", "x0": "length"}


def load_file(path) -> dict:
    """Parse a TOML or JSON file. A run manifest is accepted and its ``config`` block used."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            raw = tomllib.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table")
    if "config" in raw and "csv_schema" in raw:
        raw = raw["config"]
    return raw


def _table(raw: dict, key: str, allowed) -> dict:
    sub = raw.get(key, {})
    if sub is None:
        return {}
    if not isinstance(sub, dict):
        raise ConfigError(f"[{key}] must be a table")
    unknown = sorted(set(sub) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{key}]: {', '.join(unknown)}")
    return dict(sub)


def _number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key} must be finite")
    return value


def _integer(section: str, key: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class RunConfig:
    scenario: Scenario
    units: UnitSystem
    units_mode: str
    ensemble: EnsembleConfig
    sweep: SweepSpec | None
    refine: bool
    output_dir: Path
    emit_samples: bool
    gain_mode: str
    resolved: dict          # canonical echo of every setting, reloadable


def _scenario_natural(sc_raw: dict) -> tuple[Scenario, dict]:
    preset = sc_raw.pop("preset", DEFAULT_PRESET)
    if preset not in PRESETS:
        known = ", ".join(sorted(PRESETS) + sorted(ION_PRESETS))
        if preset in ION_PRESETS:
            raise ConfigError(f"preset {preset!r} is defined in SI units; set units = \"si\"")
        raise ConfigError(f"unknown preset {preset!r} (known: {known})")
    base = PRESETS[preset].to_dict()
    base.pop("name")
    unknown = sorted(set(sc_raw) - set(_NATURAL_KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s) in [scenario]: {', '.join(unknown)}")
    for key, value in sc_raw.items():
        base[key] = None if value is None else _number("scenario", key, value)
    try:
        sc = Scenario(name=preset, **base)
    except ValidationError as exc:
        raise ConfigError(f"[scenario] {exc}") from None
    echo = {"preset": preset, **{k: v for k, v in base.items() if v is not None}}
    return sc, echo


def _si_base(preset: str) -> dict:
    if preset in ION_PRESETS:
        p = ION_PRESETS[preset]
        return {"mass_a_u": p.mass_number_a, "mass_b_u": p.mass_number_b, "x0_m": p.x0,
                "v_mean_m_s": p.v_mean, "omega_a_rad_s": p.omega_a, "omega_p_rad_s": p.omega_p,
                "omega_b_rad_s": p.omega_b, "pre_delay_s": p.pre_delay}
    known = ", ".join(sorted(ION_PRESETS))
    raise ConfigError(f"unknown SI preset {preset!r} (known: {known}); natural presets need units = \"natural\"")


def _scenario_si(sc_raw: dict) -> tuple[Scenario, UnitSystem, dict]:
    preset = sc_raw.pop("preset", None)
    base = _si_base(preset) if preset is not None else {}
    unknown = sorted(set(sc_raw) - set(_SI_KEYS))
    if unknown:
        hint = " (SI mode needs unit suffixes, e.g. x0_m)" if set(unknown) & set(_NATURAL_KEYS) else ""
        raise ConfigError(f"unknown key(s) in [scenario]: {', '.join(unknown)}{hint}")
    for key, value in sc_raw.items():
        base[key] = _number("scenario", key, value)
    missing = [k for k in ("mass_a_u", "mass_b_u", "x0_m", "v_mean_m_s", "omega_a_rad_s", "omega_b_rad_s")
               if k not in base]
    if missing:
        raise ConfigError(f"[scenario] missing SI key(s): {', '.join(missing)}")
    trap_switch = "omega_p_rad_s" in base
    if trap_switch and ("squeeze_a" in base or "squeeze_b" in base):
        raise ConfigError("[scenario] give either omega_p_rad_s (trap switch) or squeeze_a/squeeze_b, not both")
    try:
        if trap_switch:
            ion = ScenarioPreset(preset or "custom-si", base["mass_a_u"], base["mass_b_u"],
                                 base["omega_a_rad_s"], base["omega_p_rad_s"], base["omega_b_rad_s"],
                                 base["x0_m"], base["v_mean_m_s"], base.get("pre_delay_s", 0.0))
            sc, units = ion.to_scenario()
        else:
            if base["mass_a_u"] <= 0 or base["v_mean_m_s"] <= 0:
                raise ConfigError("[scenario] mass_a_u and v_mean_m_s must be positive")
            units = UnitSystem.canonical(base["mass_a_u"] * ATOMIC_MASS_UNIT_KG, base["v_mean_m_s"])
            sc = Scenario(name=preset or "custom-si", mass_a=1.0,
                          mass_b=base["mass_b_u"] / base["mass_a_u"],
                          x0=units.from_si(base["x0_m"], "length"), v_mean=1.0,
                          omega_a=units.from_si(base["omega_a_rad_s"], "frequency"),
                          omega_b=units.from_si(base["omega_b_rad_s"], "frequency"),
                          squeeze_a=base.get("squeeze_a", 0.0), squeeze_b=base.get("squeeze_b", 0.0),
                          pre_delay=units.from_si(base.get("pre_delay_s", 0.0), "time"))
        extra = {}
        for key in ("t1_s", "var_x_a_m2", "var_p_a_kg2m2_s2", "var_x_b_m2", "var_p_b_kg2m2_s2"):
            if key in base:
                name, dim = _SI_KEYS[key]
                extra[name] = units.from_si(base[key], dim)
        if extra:
            sc = Scenario(**{**sc.to_dict(), **extra})
    except ValidationError as exc:
        raise ConfigError(f"[scenario] {exc}") from None
    echo = {"preset": preset, **base} if preset else dict(base)
    return sc, units, echo


def resolve(raw: dict | None = None, *, seed=None, samples=None, out=None, preset=None,
            emit_samples=None, workers=None, require_sweep: bool = False) -> RunConfig:
    """Merge a parsed config with command-line overrides and validate everything."""
    raw = dict(raw or {})
    unknown = sorted(set(raw) - set(_TOP_KEYS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    sc_raw = _table(raw, "scenario", ("preset",) + _NATURAL_KEYS + tuple(_SI_KEYS))
    if preset is not None:
        sc_raw["preset"] = preset
    # SI-only presets imply SI mode unless units were given explicitly
    default_units = "si" if sc_raw.get("preset") in ION_PRESETS else "natural"
    units_mode = str(raw.get("units", default_units)).lower()
    if units_mode not in ("natural", "si"):
        raise ConfigError(f"units must be 'natural' or 'si', got {raw.get('units')!r}")
    if units_mode == "natural":
        scenario, sc_echo = _scenario_natural(sc_raw)
        units = UnitSystem.natural(scenario.hbar)
    else:
        scenario, units, sc_echo = _scenario_si(sc_raw)

    ens_raw = _table(raw, "ensemble", _ENSEMBLE_KEYS)
    if samples is not None:
        ens_raw["samples"] = samples
    if seed is not None:
        ens_raw["seed"] = seed
    if workers is not None:
        ens_raw["workers"] = workers
    ens_echo = {
        "samples": _integer("ensemble", "samples", ens_raw.get("samples", 100_000)),
        "seed": _integer("ensemble", "seed", ens_raw.get("seed", 0)),
        "chunk_size": _integer("ensemble", "chunk_size", ens_raw.get("chunk_size", 10_000)),
        "truncation": str(ens_raw.get("truncation", "reject")),
        "max_reject_fraction": _number("ensemble", "max_reject_fraction",
                                       ens_raw.get("max_reject_fraction", 1e-3)),
    }
    n_workers = _integer("ensemble", "workers", ens_raw.get("workers", 1))
    if ens_echo["truncation"] not in TRUNCATION_POLICIES:
        raise ConfigError(f"ensemble.truncation must be one of {TRUNCATION_POLICIES}")
    try:
        ensemble = EnsembleConfig(n_samples=ens_echo["samples"], t1=scenario.measurement_time,
                                  seed=ens_echo["seed"], chunk_size=ens_echo["chunk_size"],
                                  truncation_policy=ens_echo["truncation"], workers=n_workers,
                                  max_reject_fraction=ens_echo["max_reject_fraction"])
    except ValidationError as exc:
        raise ConfigError(f"[ensemble] {exc}") from None

    gain_mode = str(raw.get("gain_mode", "optimized"))
    if gain_mode not in GAIN_MODES:
        raise ConfigError(f"gain_mode must be one of {GAIN_MODES}")

    sweep, refine, sw_echo = None, True, None
    if "sweep" in raw and raw["sweep"] is not None:
        sweep, refine, sw_echo = _resolve_sweep(_table(raw, "sweep", _SWEEP_KEYS), scenario, units,
                                                units_mode, ensemble, gain_mode)
    elif require_sweep:
        raise ConfigError("this command needs a [sweep] section")

    if emit_samples is None:
        emit_samples = raw.get("emit_samples", False)
    if not isinstance(emit_samples, bool):
        raise ConfigError("emit_samples must be true or false")
    out_dir = out or raw.get("output_dir") or os.environ.get(OUT_DIR_ENV) or "eprcollide-out"

    resolved = {"units": units_mode, "gain_mode": gain_mode, "emit_samples": emit_samples,
                "scenario": sc_echo, "ensemble": ens_echo}
    if sw_echo is not None:
        resolved["sweep"] = sw_echo
    return RunConfig(scenario, units, units_mode, ensemble, sweep, refine, Path(out_dir),
                     emit_samples, gain_mode, resolved)


def _resolve_sweep(sw: dict, scenario, units, units_mode, ensemble, gain_mode):
    variable = sw.get("variable")
    if variable not in VARIABLES:
        raise ConfigError(f"sweep.variable must be one of {VARIABLES}, got {variable!r}")
    objective = sw.get("objective", "reid_product")
    if objective not in OBJECTIVES:
        raise ConfigError(f"sweep.objective must be one of {OBJECTIVES}, got {objective!r}")
    if "grid" in sw:
        if any(k in sw for k in ("start", "stop", "step")):
            raise ConfigError("sweep: give either grid or start/stop/step")
        if not isinstance(sw["grid"], list):
            raise ConfigError("sweep.grid must be a list of numbers")
        grid = [_number("sweep", "grid", g) for g in sw["grid"]]
    elif all(k in sw for k in ("start", "stop", "step")):
        start, stop, step = (_number("sweep", k, sw[k]) for k in ("start", "stop", "step"))
        if step <= 0:
            raise ConfigError("sweep.step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = [float(v) for v in np.round(start + step * np.arange(max(n, 0)), 12)]
    else:
        raise ConfigError("sweep needs grid or start/stop/step")
    if not grid:
        raise ConfigError("sweep grid is empty")
    internal = grid
    if units_mode == "si":
        internal = [units.from_si(g, _SWEEP_DIMENSIONS[variable]) for g in grid]
    use_ensemble = sw.get("ensemble", False)
    refine = sw.get("refine", True)
    if not isinstance(use_ensemble, bool) or not isinstance(refine, bool):
        raise ConfigError("sweep.ensemble and sweep.refine must be true or false")
    hold = sw.get("hold", "heavier")
    try:
        spec = SweepSpec(variable, tuple(internal), scenario, objective, hold,
                         ensemble if use_ensemble else None, gain_mode)
    except ValidationError as exc:
        raise ConfigError(f"[sweep] {exc}") from None
    echo = {"variable": variable, "grid": grid, "objective": objective, "hold": hold,
            "ensemble": use_ensemble, "refine": refine}
    return spec, refine, echo
