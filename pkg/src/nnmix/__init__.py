"""Nearest-neighbor mixture models for spatial count data.

The conditional law at each site is a weighted mixture of single-neighbor
conditionals built from bivariate copulas over discrete marginals; counts
are continued by uniform jitter so the copula machinery for continuous
variables applies exactly.  The package covers model simulation, MCMC
fitting, posterior prediction, residual diagnostics and proper-scoring-rule
evaluation, plus a CLI tying them together.
"""

from . import copulas, diagnose, geom, jointpmf, marginals, mcmc, predict, \
    simulate, weights
from .errors import ConfigError, DataError, NnmixError, NumericalError
from .kernels import backend_name

__version__ = "0.1.0"

__all__ = [
    "copulas", "diagnose", "geom", "jointpmf", "marginals", "mcmc",
    "predict", "simulate", "weights",
    "ConfigError", "DataError", "NnmixError", "NumericalError",
    "backend_name",
]
