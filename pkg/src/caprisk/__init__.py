"""Actuarial toolkit for capped-usage subscription portfolios.

Models each subscriber's metered consumption as a compound
frequency-severity sum, applies a contract regime (hard cap, soft
degradation, overage billing, uncapped variants) to translate usage
into seller cost and subscriber billing, and estimates portfolio loss
distributions, tail risk measures, and reserve requirements by Monte
Carlo.  Companion modules fit censored severity data, build mixed-
population portfolios, and evolve cohorts under usage-driven churn.
"""

__version__ = "0.1.0"

from .distributions import (
    CompoundSpec,
    Degenerate,
    Gamma,
    LogNormal,
    NegBinomial,
    Poisson,
    RandomStream,
    TokenRateCard,
    UsageEvent,
    compound_moments,
    frequency_moments,
    lognormal_from_mean,
    sample_compound,
    sample_compound_batch,
    severity_moments,
    token_severity,
)

__all__ = [
    "__version__",
    "CompoundSpec",
    "Degenerate",
    "Gamma",
    "LogNormal",
    "NegBinomial",
    "Poisson",
    "RandomStream",
    "TokenRateCard",
    "UsageEvent",
    "compound_moments",
    "frequency_moments",
    "lognormal_from_mean",
    "sample_compound",
    "sample_compound_batch",
    "severity_moments",
    "token_severity",
]
