"""Semi-classical simulation of EPR correlations created by a 1D elastic collision."""

__version__ = "0.1.0"

from .criteria import EntanglementReport, duan_inseparability, evaluate, reid_epr  # noqa: E402
from .ensemble import EnsembleConfig, run_ensemble  # noqa: E402
from .linearized import linearize, paper_coefficients, propagate_cov, regime_report  # noqa: E402
from .scenarios import PRESETS, Scenario, analyze, initial_state, ion_scenario  # noqa: E402
from .states import GaussianState, ParticleSpec, UnitSystem, ground_state, squeeze  # noqa: E402

__all__ = [
    "EnsembleConfig", "EntanglementReport", "GaussianState", "PRESETS", "ParticleSpec", "Scenario",
    "UnitSystem", "analyze", "duan_inseparability", "evaluate", "ground_state", "initial_state",
    "ion_scenario", "linearize", "paper_coefficients", "propagate_cov", "regime_report", "reid_epr",
    "run_ensemble", "squeeze",
]
