"""Survival of a quantum particle carried by an accelerated tanh^2 well.

Modules: ``core`` (grid, well, ground state), ``protocols`` (acceleration
schedules), ``propagator`` (split-operator evolution), ``tunneling`` (Gamma(a)
tables), ``disturbance`` (endpoint factors B_n), ``predictor`` (closed-form
survival estimate), ``harmonic`` (exact moving harmonic trap) and ``cli``.
"""

__version__ = "0.1.0"

from .core import Grid, PhysicalParams, Wavefunction, build_grid, ground_state, poschl_teller_energy
from .disturbance import DisturbanceModel, TauSweep, b_from_j, compose_b, disturbance_factor
from .errors import (ConfigurationError, ConveyorError, DomainRangeError, FitError, NoBoundStateError,
                     NumericalError, ResonanceError, UsageError)
from .predictor import Prediction, compare, predict, predict_escape_large_tau, predict_survival
from .propagator import Absorber, Settings, SurvivalSeries, propagate, propagate_constant
from .protocols import ConstantA, Cos, Poly5, Protocol, ShiftedSin, Sin, TaylorCustom, protocol_from_dict
from .tunneling import GammaTable, auto_fit, fit_exponential_decay, gamma_interpolate, gamma_scan

__all__ = [
    "Absorber", "ConfigurationError", "ConstantA", "ConveyorError", "Cos", "DisturbanceModel",
    "DomainRangeError", "FitError", "GammaTable", "Grid", "NoBoundStateError", "NumericalError",
    "PhysicalParams", "Poly5", "Prediction", "Protocol", "ResonanceError", "Settings", "ShiftedSin", "Sin",
    "SurvivalSeries", "TauSweep", "TaylorCustom", "UsageError", "Wavefunction", "auto_fit", "b_from_j",
    "build_grid", "compare", "compose_b", "disturbance_factor", "fit_exponential_decay", "gamma_interpolate",
    "gamma_scan", "ground_state", "poschl_teller_energy", "predict", "predict_escape_large_tau",
    "predict_survival", "propagate", "propagate_constant", "protocol_from_dict",
]
