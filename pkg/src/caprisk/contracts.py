"""Contract regimes: how raw usage turns into cost, billing, and loss.

A subscriber's uncapped aggregate consumption ``s_agg`` (in seller cost
units, or retail units for overage contracts) is translated by the
contract regime into three accounting quantities:

``seller_cost``
    What serving the subscriber actually cost.
``user_billed``
    Everything the subscriber paid: the flat premium plus any overage
    or metered usage charges.
``net_loss``
    ``seller_cost - user_billed``; positive means the seller lost money
    on the subscriber this period.

Five regimes are supported.  A hard cap censors cost at ``cap``.  Soft
degradation serves demand past the cap at a reduced marginal cost.  An
overage contract passes the full cost through (scaled by the seller's
cost-to-retail ratio) and bills usage above the included allowance at a
posted rate.  The uncapped regimes serve everything, either on a flat
premium or billed per use at retail.

All functions are pure and the accounting identity

    net_loss + user_billed == seller_cost

holds for every regime and every input by construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .distributions import CompoundSpec

__all__ = [
    "HardCap",
    "SoftDegrade",
    "Overage",
    "NoCap",
    "PayPerUse",
    "ContractRegime",
    "PerUserOutcome",
    "CohortSpec",
    "apply_regime",
    "regime_arrays",
]

_LABEL_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


def _check_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class HardCap:
    """Service stops at ``cap``; cost is censored, demand above is latent."""

    cap: float

    def __post_init__(self):
        _check_positive("cap", self.cap)


@dataclass(frozen=True)
class SoftDegrade:
    """Past ``cap``, demand is served at ``cost_ratio`` of full marginal cost."""

    cap: float
    cost_ratio: float

    def __post_init__(self):
        _check_positive("cap", self.cap)
        if not (0.0 < self.cost_ratio < 1.0):
            raise ValueError(f"cost_ratio must lie in (0, 1), got {self.cost_ratio}")


@dataclass(frozen=True)
class Overage:
    """Usage beyond the ``included`` allowance is billed at ``rate``.

    ``included`` is measured in retail dollars.  The seller's own cost is
    ``cost_to_retail`` per retail dollar of usage.
    """

    included: float
    rate: float
    cost_to_retail: float

    def __post_init__(self):
        _check_positive("included", self.included)
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise ValueError(f"rate must be >= 0, got {self.rate}")
        if not (0.0 < self.cost_to_retail <= 1.0):
            raise ValueError(f"cost_to_retail must lie in (0, 1], got {self.cost_to_retail}")


@dataclass(frozen=True)
class NoCap:
    """Flat-rate contract that serves all demand; no usage billing."""

    cost_to_retail: float

    def __post_init__(self):
        if not (0.0 < self.cost_to_retail <= 1.0):
            raise ValueError(f"cost_to_retail must lie in (0, 1], got {self.cost_to_retail}")


@dataclass(frozen=True)
class PayPerUse:
    """No premium; usage is billed at retail and costs ``cost_to_retail`` per dollar."""

    cost_to_retail: float

    def __post_init__(self):
        if not (0.0 < self.cost_to_retail <= 1.0):
            raise ValueError(f"cost_to_retail must lie in (0, 1], got {self.cost_to_retail}")


ContractRegime = Union[HardCap, SoftDegrade, Overage, NoCap, PayPerUse]


@dataclass(frozen=True)
class PerUserOutcome:
    """One subscriber-period of contract accounting."""

    seller_cost: float
    user_billed: float
    capped: bool
    net_loss: float


@dataclass(frozen=True)
class CohortSpec:
    """A block of ``n`` exchangeable subscribers on identical terms."""

    label: str
    n: int
    premium: float
    compound: CompoundSpec
    regime: ContractRegime

    def __post_init__(self):
        if not _LABEL_RE.match(self.label):
            raise ValueError(f"cohort label must be a bare identifier, got {self.label!r}")
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n <= 0:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not (math.isfinite(self.premium) and self.premium >= 0):
            raise ValueError(f"premium must be >= 0, got {self.premium}")
        if not isinstance(self.compound, CompoundSpec):
            raise TypeError("compound must be a CompoundSpec")
        if isinstance(self.regime, PayPerUse) and self.premium != 0:
            raise ValueError("PayPerUse cohorts must have premium = 0")
        if not isinstance(self.regime, (HardCap, SoftDegrade, Overage, NoCap, PayPerUse)):
            raise TypeError(f"unsupported regime: {self.regime!r}")


def apply_regime(s_agg: float, regime: ContractRegime, premium: float) -> PerUserOutcome:
    """Account for one subscriber's period given their uncapped aggregate."""
    if not s_agg >= 0:
        raise ValueError(f"s_agg must be >= 0, got {s_agg}")
    if not premium >= 0:
        raise ValueError(f"premium must be >= 0, got {premium}")
    if isinstance(regime, HardCap):
        seller = min(regime.cap, s_agg)
        extra = 0.0
        capped = s_agg >= regime.cap
    elif isinstance(regime, SoftDegrade):
        seller = min(regime.cap, s_agg) + regime.cost_ratio * max(0.0, s_agg - regime.cap)
        extra = 0.0
        capped = s_agg >= regime.cap
    elif isinstance(regime, Overage):
        seller = regime.cost_to_retail * s_agg
        extra = regime.rate * max(0.0, s_agg - regime.included)
        capped = s_agg >= regime.included
    elif isinstance(regime, NoCap):
        seller = regime.cost_to_retail * s_agg
        extra = 0.0
        capped = False
    elif isinstance(regime, PayPerUse):
        seller = regime.cost_to_retail * s_agg
        extra = s_agg
        capped = False
    else:
        raise TypeError(f"unsupported regime: {regime!r}")
    billed = premium + extra
    return PerUserOutcome(seller_cost=seller, user_billed=billed, capped=capped, net_loss=seller - billed)


def regime_arrays(
    s_agg: np.ndarray, regime: ContractRegime, premium: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized regime accounting over an array of aggregate draws.

    Returns ``(seller_cost, revenue_beyond_premium, capped)``.  Billing
    for subscriber i is ``premium + revenue_beyond_premium[i]`` under
    every regime (for pay-per-use the premium is zero, so the revenue
    term carries the whole retail bill).
    """
    s = np.asarray(s_agg, dtype=np.float64)
    if s.size and float(s.min()) < 0:
        raise ValueError("aggregate draws must be >= 0")
    if isinstance(regime, HardCap):
        seller = np.minimum(s, regime.cap)
        extra = np.zeros_like(s)
        capped = s >= regime.cap
    elif isinstance(regime, SoftDegrade):
        seller = np.minimum(s, regime.cap) + regime.cost_ratio * np.maximum(s - regime.cap, 0.0)
        extra = np.zeros_like(s)
        capped = s >= regime.cap
    elif isinstance(regime, Overage):
        seller = regime.cost_to_retail * s
        extra = regime.rate * np.maximum(s - regime.included, 0.0)
        capped = s >= regime.included
    elif isinstance(regime, NoCap):
        seller = regime.cost_to_retail * s
        extra = np.zeros_like(s)
        capped = np.zeros(s.shape, dtype=bool)
    elif isinstance(regime, PayPerUse):
        seller = regime.cost_to_retail * s
        extra = s.copy()
        capped = np.zeros(s.shape, dtype=bool)
    else:
        raise TypeError(f"unsupported regime: {regime!r}")
    return seller, extra, capped
