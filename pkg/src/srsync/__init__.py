"""Synchronization physics of two coupled superradiant lasers.

Four coupling scenarios share one parameter record: a symmetric common-cavity
link, a one-way (master/slave) cascade, and their measure-and-feed-back
classical counterparts.  The package provides the cumulant equations of
motion with steady-state solving and stability analysis (meanfield), exact
Lorentzian spectra and photon fluxes from the two-time correlation dynamics
(spectral), the leading-order analytic results (closedform), an exact
small-system density-matrix oracle (exactsim), and a sweep/figure/validation
batch layer with a CLI (harness, cli).
"""

__version__ = "0.1.0"

from .model import (CarrierConvention, CorrelationState, ModelParams,
                    ParameterError, ScenarioKind, SteadyStateResult,
                    dimensionless)

__all__ = [
    "CarrierConvention",
    "CorrelationState",
    "ModelParams",
    "ParameterError",
    "ScenarioKind",
    "SteadyStateResult",
    "dimensionless",
    "__version__",
]
