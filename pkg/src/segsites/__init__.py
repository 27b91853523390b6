"""Exact cumulants and Monte Carlo verification for the number of segregating
sites under Kingman's coalescent with infinite-sites mutation."""

__version__ = "0.1.0"

from segsites.analytic import (  # noqa: E402
    MutationParams,
    NegBinParams,
    negbin_cumulant,
    segsites_cumulant,
    segsites_cumulants,
    segsites_mean,
    segsites_pgf,
    segsites_pmf,
    segsites_var,
    watterson_estimator,
)
from segsites.simulation import Method, SimConfig, simulate, summarize  # noqa: E402
from segsites.special_functions import (  # noqa: E402
    harmonic,
    polylog_neg_closed,
    polylog_neg_series,
    stirling2,
)

__all__ = [
    "MutationParams",
    "NegBinParams",
    "Method",
    "SimConfig",
    "harmonic",
    "negbin_cumulant",
    "polylog_neg_closed",
    "polylog_neg_series",
    "segsites_cumulant",
    "segsites_cumulants",
    "segsites_mean",
    "segsites_pgf",
    "segsites_pmf",
    "segsites_var",
    "simulate",
    "stirling2",
    "summarize",
    "watterson_estimator",
]
