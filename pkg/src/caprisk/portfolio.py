"""Monte Carlo engine for portfolio loss distributions and reserves.

A :class:`Scenario` bundles one or more cohorts with a replication
count and a master seed.  Each replication draws every subscriber's
uncapped aggregate, applies the cohort's contract regime, and records
the portfolio loss

    L = sum over cohorts, subscribers of seller_cost

together with per-cohort cap hits, revenue beyond premium, and net
loss.  Replications are independent work units on streams derived from
(study label, cohort label, replication index), so results are
bit-identical no matter the execution order or worker count.

Risk measures use the conservative empirical convention: VaR at level q
is the ceil(q*m)-th order statistic (1-indexed, no interpolation) and
TVaR is the mean of the top ceil((1-q)*m) samples, which makes
TVaR >= VaR an exact identity rather than an approximation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .contracts import CohortSpec, HardCap, regime_arrays
from .distributions import RandomStream, kernel_codes

__all__ = [
    "REPORTING_LEVELS",
    "Scenario",
    "CohortRepStats",
    "CohortSummary",
    "PortfolioSummary",
    "SweepPoint",
    "SweepResult",
    "simulate_replication",
    "run_monte_carlo",
    "empirical_var",
    "empirical_tvar",
    "reserve_requirement",
    "premium_adequate",
    "portfolio_size_sweep",
]

REPORTING_LEVELS = (0.99, 0.999)

# Order-statistic indices take ceil(q*m); the epsilon absorbs float
# noise like 0.01*2000 = 20.000000000000004 that would otherwise bump
# the index past the exact integer.
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class Scenario:
    """A portfolio, a replication budget, and a master seed."""

    cohorts: tuple[CohortSpec, ...]
    replications: int
    master_seed: int
    study_label: str

    def __post_init__(self):
        object.__setattr__(self, "cohorts", tuple(self.cohorts))
        if not self.cohorts:
            raise ValueError("scenario needs at least one cohort")
        for cohort in self.cohorts:
            if not isinstance(cohort, CohortSpec):
                raise TypeError(f"cohorts must be CohortSpec, got {cohort!r}")
        labels = [c.label for c in self.cohorts]
        if len(set(labels)) != len(labels):
            raise ValueError(f"cohort labels must be unique, got {labels}")
        if self.replications < 2:
            raise ValueError("replications must be >= 2")
        if not 0 <= self.master_seed < (1 << 64):
            raise ValueError("master_seed must fit in 64 bits")
        if not self.study_label:
            raise ValueError("study_label must be non-empty")

    @property
    def total_size(self) -> int:
        return sum(c.n for c in self.cohorts)

    @property
    def premium_income(self) -> float:
        return float(sum(c.n * c.premium for c in self.cohorts))


@dataclass(frozen=True)
class CohortRepStats:
    """One cohort's totals within a single replication."""

    label: str
    seller_cost: float
    uncapped_cost: float
    revenue_beyond_premium: float
    cap_hits: int


@dataclass(frozen=True, eq=False)
class CohortSummary:
    """Per-cohort averages over all replications."""

    label: str
    n: int
    premium_income: float
    loss_samples: np.ndarray
    expected_loss: float
    mean_uncapped_cost: float
    mean_revenue_beyond_premium: float
    mean_net_loss: float
    cap_hit_rate: float


@dataclass(frozen=True, eq=False)
class PortfolioSummary:
    """The portfolio loss distribution and headline risk measures."""

    study_label: str
    loss_samples: np.ndarray
    expected_loss: float
    premium_income: float
    loss_ratio: float
    var_by_level: Mapping[float, float]
    tvar_by_level: Mapping[float, float]
    reserve: float
    margin_over_tvar: float
    cap_hit_by_cohort: Mapping[str, float]
    mean_overage_revenue: float
    mean_net_loss: float
    cohorts: tuple[CohortSummary, ...]


def _cohort_stream(scenario: Scenario, cohort_label: str, rep_index: int) -> RandomStream:
    return (
        RandomStream(scenario.master_seed)
        .child(scenario.study_label)
        .child(cohort_label)
        .child(rep_index)
    )


def draw_cohort_aggregates(scenario: Scenario, cohort: CohortSpec, rep_index: int) -> np.ndarray:
    """Draw the cohort's n uncapped aggregates for one replication."""
    stream = _cohort_stream(scenario, cohort.label, rep_index)
    fk, fa, fb, sk, sa, sb = kernel_codes(cohort.compound)
    return kernels.compound_aggregates(stream.generator.bit_generator, cohort.n, fk, fa, fb, sk, sa, sb)


def simulate_replication(scenario: Scenario, rep_index: int) -> tuple[float, tuple[CohortRepStats, ...]]:
    """Run one replication; returns (portfolio loss, per-cohort stats)."""
    if not 0 <= rep_index < scenario.replications:
        raise ValueError(f"rep_index must lie in [0, {scenario.replications}), got {rep_index}")
    stats = []
    loss = 0.0
    for cohort in scenario.cohorts:
        s = draw_cohort_aggregates(scenario, cohort, rep_index)
        seller, extra, capped = regime_arrays(s, cohort.regime, cohort.premium)
        seller_sum = float(np.sum(seller))
        stats.append(
            CohortRepStats(
                label=cohort.label,
                seller_cost=seller_sum,
                uncapped_cost=float(np.sum(s)),
                revenue_beyond_premium=float(np.sum(extra)),
                cap_hits=int(np.count_nonzero(capped)),
            )
        )
        loss += seller_sum
    return loss, tuple(stats)


def run_monte_carlo(
    scenario: Scenario,
    *,
    levels: Sequence[float] = REPORTING_LEVELS,
    threads: int = 1,
    reserve_alpha: float = 0.01,
) -> PortfolioSummary:
    """Execute all replications and aggregate into a PortfolioSummary.

    ``threads`` > 1 runs replications on a thread pool; results are
    keyed by replication index, so output is identical to a serial run.
    """
    m = scenario.replications
    n_cohorts = len(scenario.cohorts)
    loss = np.empty(m, dtype=np.float64)
    seller = np.empty((n_cohorts, m), dtype=np.float64)
    uncapped = np.empty((n_cohorts, m), dtype=np.float64)
    extra = np.empty((n_cohorts, m), dtype=np.float64)
    hits = np.empty((n_cohorts, m), dtype=np.int64)

    def record(rep: int, result: tuple[float, tuple[CohortRepStats, ...]]) -> None:
        total, stats = result
        loss[rep] = total
        for i, st in enumerate(stats):
            seller[i, rep] = st.seller_cost
            uncapped[i, rep] = st.uncapped_cost
            extra[i, rep] = st.revenue_beyond_premium
            hits[i, rep] = st.cap_hits

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for rep, result in enumerate(pool.map(lambda r: simulate_replication(scenario, r), range(m))):
                record(rep, result)
    else:
        for rep in range(m):
            record(rep, simulate_replication(scenario, rep))

    premium_income = scenario.premium_income
    expected_loss = float(np.mean(loss))
    loss_ratio = expected_loss / premium_income if premium_income > 0 else math.nan
    var_by_level = {q: empirical_var(loss, q) for q in levels}
    tvar_by_level = {q: empirical_tvar(loss, q) for q in levels}
    reserve = max(0.0, empirical_var(loss, 1.0 - reserve_alpha) - premium_income)
    margin_over_tvar = premium_income - empirical_tvar(loss, 0.99)
    mean_overage = float(np.mean(np.sum(extra, axis=0)))
    cohort_summaries = []
    cap_hit_by_cohort = {}
    for i, cohort in enumerate(scenario.cohorts):
        cohort_premium = cohort.n * cohort.premium
        cohort_expected = float(np.mean(seller[i]))
        cohort_extra = float(np.mean(extra[i]))
        hit_rate = float(np.mean(hits[i])) / cohort.n
        cap_hit_by_cohort[cohort.label] = hit_rate
        cohort_summaries.append(
            CohortSummary(
                label=cohort.label,
                n=cohort.n,
                premium_income=cohort_premium,
                loss_samples=seller[i],
                expected_loss=cohort_expected,
                mean_uncapped_cost=float(np.mean(uncapped[i])),
                mean_revenue_beyond_premium=cohort_extra,
                mean_net_loss=cohort_expected - cohort_premium - cohort_extra,
                cap_hit_rate=hit_rate,
            )
        )
    return PortfolioSummary(
        study_label=scenario.study_label,
        loss_samples=loss,
        expected_loss=expected_loss,
        premium_income=premium_income,
        loss_ratio=loss_ratio,
        var_by_level=var_by_level,
        tvar_by_level=tvar_by_level,
        reserve=reserve,
        margin_over_tvar=margin_over_tvar,
        cap_hit_by_cohort=cap_hit_by_cohort,
        mean_overage_revenue=mean_overage,
        mean_net_loss=expected_loss - premium_income - mean_overage,
        cohorts=tuple(cohort_summaries),
    )


def _tail_index(q: float, m: int) -> int:
    return max(1, math.ceil(q * m - _CEIL_EPS))


def empirical_var(samples, q: float) -> float:
    """Value-at-Risk: the ceil(q*m)-th order statistic, 1-indexed."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size < 2:
        raise ValueError("need at least 2 samples")
    if not 0.0 < q < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {q}")
    k = _tail_index(q, arr.size)
    return float(np.sort(arr)[k - 1])


def empirical_tvar(samples, q: float) -> float:
    """Tail-Value-at-Risk: mean of the top ceil((1-q)*m) samples."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size < 2:
        raise ValueError("need at least 2 samples")
    if not 0.0 < q < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {q}")
    k_tail = _tail_index(1.0 - q, arr.size)
    return float(np.mean(np.sort(arr)[arr.size - k_tail:]))


def reserve_requirement(summary: PortfolioSummary, alpha: float) -> float:
    """Capital needed so the chance of an aggregate shortfall is at most alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return max(0.0, empirical_var(summary.loss_samples, 1.0 - alpha) - summary.premium_income)


def premium_adequate(expected_loss: float, premium_income: float, eta: float) -> bool:
    """True iff premium income covers expected loss with safety loading eta."""
    if premium_income < 0:
        raise ValueError("premium_income must be >= 0")
    if eta < 0:
        raise ValueError("eta must be >= 0")
    return premium_income >= (1.0 + eta) * expected_loss


@dataclass(frozen=True)
class SweepPoint:
    n: int
    per_user_tail_capital: float


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Per-user tail capital across portfolio sizes, with a log-log slope fit."""

    points: tuple[SweepPoint, ...]
    slope: float
    level: float
    summaries: tuple[PortfolioSummary, ...]


def portfolio_size_sweep(
    base: Scenario,
    sizes: Sequence[int],
    *,
    level: float = 0.999,
    threads: int = 1,
) -> SweepResult:
    """Rerun the Monte Carlo at each portfolio size n.

    Per-user tail capital is (TVaR_level(L) - E[L]) / n.  The slope is
    a least-squares fit of log tail capital against log n over the
    points with positive tail capital; diversification of independent
    subscribers should give a slope near -1/2.
    """
    if len(base.cohorts) != 1:
        raise ValueError("size sweep requires a single-cohort scenario")
    if not sizes:
        raise ValueError("sizes must be non-empty")
    for n in sizes:
        if n <= 0:
            raise ValueError(f"sizes must be positive, got {n}")
    points = []
    summaries = []
    for n in sizes:
        cohort = replace(base.cohorts[0], n=int(n))
        summary = run_monte_carlo(replace(base, cohorts=(cohort,)), threads=threads)
        tail = empirical_tvar(summary.loss_samples, level) - summary.expected_loss
        points.append(SweepPoint(n=int(n), per_user_tail_capital=tail / n))
        summaries.append(summary)
    usable = [(p.n, p.per_user_tail_capital) for p in points if p.per_user_tail_capital > 0]
    if len(usable) >= 2:
        xs = np.log([u[0] for u in usable])
        ys = np.log([u[1] for u in usable])
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = math.nan
    return SweepResult(points=tuple(points), slope=slope, level=level, summaries=tuple(summaries))
