"""Usage-driven churn: cap hits raise the hazard of cancellation.

Each active subscriber's per-period cancellation hazard is

    h = h0 * exp(beta1 * [capped this period] + beta2 * hit_count)

where hit_count is the cumulative number of periods (including the
current one) in which the subscriber's demand reached the cap.  A
period ends with each active subscriber churning independently with
probability 1 - exp(-h).  Because heavy users hit the cap more often,
positive betas concentrate exits among them and the surviving book
drifts lighter: portfolio demand, loss, and loss ratio all decline
even though each individual's demand distribution is unchanged.

Overdispersed (negative-binomial) cohorts are evolved through their
gamma-mixed-Poisson representation: each subscriber keeps a private
Poisson rate drawn once from Gamma(r, (1-p)/p) for the whole horizon.
Any single period still sees NB counts in cross-section, but rates
persist across periods, which is what makes selective churn bite --
the users who hit the cap early are systematically the high-rate ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .contracts import HardCap
from .distributions import Degenerate, NegBinomial, Poisson, RandomStream, kernel_codes
from .portfolio import Scenario

__all__ = [
    "ChurnParams",
    "UserChurnState",
    "ChurnPeriodRow",
    "hazard",
    "advance_user",
    "evolve_portfolio",
    "write_trajectory_csv",
    "TRAJECTORY_COLUMNS",
]

TRAJECTORY_COLUMNS = (
    "period",
    "n_active",
    "premium_income",
    "expected_loss",
    "loss_ratio",
    "mean_hit_count",
)


@dataclass(frozen=True)
class ChurnParams:
    """Baseline hazard and the two cap-history coefficients."""

    h0: float
    beta1: float
    beta2: float

    def __post_init__(self):
        if not (math.isfinite(self.h0) and self.h0 > 0):
            raise ValueError(f"h0 must be positive and finite, got {self.h0}")
        if not (math.isfinite(self.beta1) and math.isfinite(self.beta2)):
            raise ValueError("beta coefficients must be finite")


@dataclass(frozen=True)
class UserChurnState:
    """Subscription status and cumulative cap hits for one subscriber."""

    active: bool
    hit_count: int

    def __post_init__(self):
        if self.hit_count < 0:
            raise ValueError(f"hit_count must be >= 0, got {self.hit_count}")


def hazard(params: ChurnParams, capped_now: bool, hit_count: int) -> float:
    """Per-period cancellation hazard given the current cap state."""
    if hit_count < 0:
        raise ValueError(f"hit_count must be >= 0, got {hit_count}")
    return params.h0 * math.exp(params.beta1 * bool(capped_now) + params.beta2 * hit_count)


def advance_user(
    state: UserChurnState, params: ChurnParams, capped_now: bool, uniform: float
) -> UserChurnState:
    """One period-end transition for a single subscriber.

    ``uniform`` is the caller's U(0,1) draw; the subscriber churns when
    it falls below 1 - exp(-hazard).  Inactive states pass through.
    """
    if not state.active:
        return state
    hit_count = state.hit_count + (1 if capped_now else 0)
    p_churn = -math.expm1(-hazard(params, capped_now, hit_count))
    return UserChurnState(active=uniform >= p_churn, hit_count=hit_count)


@dataclass(frozen=True)
class ChurnPeriodRow:
    """One period of the trajectory, averaged over replications.

    ``n_active`` counts payers at period start.  ``mean_hit_count`` and
    ``mean_uncapped_demand`` average over that period's active
    subscribers (hit counts include the current period's hit).
    """

    period: int
    n_active: float
    premium_income: float
    expected_loss: float
    loss_ratio: float
    mean_hit_count: float
    mean_uncapped_demand: float


def evolve_portfolio(
    scenario: Scenario,
    params: ChurnParams,
    periods: int,
    seed: int | None = None,
) -> tuple[ChurnPeriodRow, ...]:
    """Simulate the cohort period by period under cap-driven churn.

    Requires a single-cohort hard-cap scenario.  Each replication
    walks all periods with persistent per-user state; the trajectory
    returned is the average over ``scenario.replications`` runs.
    Premium income is n_active * premium by construction.
    """
    if periods < 1:
        raise ValueError("periods must be >= 1")
    if len(scenario.cohorts) != 1:
        raise ValueError("churn evolution requires a single-cohort scenario")
    cohort = scenario.cohorts[0]
    if not isinstance(cohort.regime, HardCap):
        raise ValueError("churn evolution requires a HardCap regime")
    cap = cohort.regime.cap
    n = cohort.n
    reps = scenario.replications
    frequency = cohort.compound.frequency
    _, _, _, sev_kind, sev_a, sev_b = kernel_codes(cohort.compound)
    master = scenario.master_seed if seed is None else seed
    root = RandomStream(master).child(scenario.study_label).child("churn")

    n_active_sum = np.zeros(periods)
    loss_sum = np.zeros(periods)
    hit_mean_sum = np.zeros(periods)
    demand_mean_sum = np.zeros(periods)

    for rep in range(reps):
        gen = root.child(rep).generator
        if isinstance(frequency, NegBinomial):
            rates = gen.gamma(frequency.r, (1.0 - frequency.p) / frequency.p, size=n)
        elif isinstance(frequency, Poisson):
            rates = np.full(n, frequency.rate)
        elif isinstance(frequency, Degenerate):
            rates = None
        else:
            raise TypeError(f"unsupported frequency model: {frequency!r}")
        active = np.ones(n, dtype=bool)
        hit_count = np.zeros(n, dtype=np.int64)
        for t in range(periods):
            idx = np.flatnonzero(active)
            n_active_sum[t] += idx.size
            if idx.size == 0:
                continue
            if rates is None:
                draws = kernels.compound_aggregates(
                    gen.bit_generator, idx.size,
                    kernels.FREQ_FIXED, float(frequency.count), 0.0,
                    sev_kind, sev_a, sev_b,
                )
            else:
                draws = kernels.compound_aggregates_rates(
                    gen.bit_generator, rates[idx], sev_kind, sev_a, sev_b
                )
            capped = draws >= cap
            hit_count[idx] += capped
            loss_sum[t] += float(np.sum(np.minimum(draws, cap)))
            hit_mean_sum[t] += float(np.mean(hit_count[idx]))
            demand_mean_sum[t] += float(np.mean(draws))
            h = params.h0 * np.exp(params.beta1 * capped + params.beta2 * hit_count[idx])
            churned = gen.uniform(size=idx.size) < -np.expm1(-h)
            active[idx[churned]] = False

    rows = []
    for t in range(periods):
        mean_active = float(n_active_sum[t]) / reps
        premium_income = mean_active * cohort.premium
        expected_loss = float(loss_sum[t]) / reps
        rows.append(
            ChurnPeriodRow(
                period=t + 1,
                n_active=mean_active,
                premium_income=premium_income,
                expected_loss=expected_loss,
                loss_ratio=expected_loss / premium_income if premium_income > 0 else math.nan,
                mean_hit_count=float(hit_mean_sum[t]) / reps,
                mean_uncapped_demand=float(demand_mean_sum[t]) / reps,
            )
        )
    return tuple(rows)


def write_trajectory_csv(rows: Sequence[ChurnPeriodRow], path) -> None:
    """Write the trajectory with the standard six columns."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.period,
                    repr(row.n_active),
                    repr(row.premium_income),
                    repr(row.expected_loss),
                    "n/a" if math.isnan(row.loss_ratio) else repr(row.loss_ratio),
                    repr(row.mean_hit_count),
                ]
            )
