"""
Simulation and analysis of exciton-biexciton radiative cascades.

Modules
-------
timetags      time-tag streams and their binary/CSV formats
cascade_mc    stochastic emitter and detector simulation
rate_model    deterministic three-level rate equations and g2 predictions
correlator    coincidence histograms and g2 normalisation
decayfit      lifetime, cross-correlation and power-law fits
polarization  Mueller-calculus analyzer model and ellipticity fits
cli           command-line entry point
"""
from . import cascade_mc, correlator, decayfit, polarization, rate_model, timetags
from .errors import (CascadeError, ConfigurationError, DomainError, FormatError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = [
    "timetags", "cascade_mc", "rate_model", "correlator", "decayfit", "polarization",
    "CascadeError", "ConfigurationError", "DomainError", "FormatError", "ValidationError",
]
