"""Mixed subscriber populations: segments, mean matching, and the tail.

A population is described by weighted :class:`SegmentSpec` entries
(e.g. a large light segment and a small power segment).  Two sampling
designs are provided:

:func:`build_mixed_scenario`
    Deterministic composition: segment sizes are fixed at
    round(weight * n) with largest-remainder rounding, one cohort per
    segment.  This conditions on the expected composition and is the
    right object for what-if runs on a known book of subscribers.

:func:`run_mixed_study`
    Stochastic composition: every replication assigns each of the n
    subscribers to a segment i.i.d. by weight, then draws consumption.
    This is the true mixture model for a population *sampled* from the
    segments, and it carries composition risk that the fixed design
    deliberately excludes: Var(L) gains a between-segment term
    n * sum_k w_k (m_k - m_bar)^2 from the multinomial assignment,
    which is what fattens the portfolio tail under heterogeneity even
    when caps rarely bind.

Segment count dispersion defaults to NB r = 1; the power-user studies
use r = 2, which reproduces observed within-segment cap-hit rates in
the 0.5 to 2.5 percent range at cap-to-mean ratios near 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .contracts import _LABEL_RE, CohortSpec, HardCap
from .distributions import CompoundSpec, LogNormal, NegBinomial, RandomStream, kernel_codes
from .portfolio import Scenario, empirical_tvar, empirical_var

__all__ = [
    "SegmentSpec",
    "MixedStudyResult",
    "check_mean_constraint",
    "build_mixed_scenario",
    "run_mixed_study",
]

# Hand-picked segment parameters rarely hit the target mean exactly,
# so the constraint is a relative band rather than exact equality.
MEAN_SLACK = 0.06


@dataclass(frozen=True)
class SegmentSpec:
    """One sub-population: count mean, severity mean and log-scale, share."""

    label: str
    freq_mean: float
    sev_mean: float
    sev_sigma: float
    weight: float
    dispersion: float = 1.0

    def __post_init__(self):
        if not _LABEL_RE.match(self.label):
            raise ValueError(f"invalid segment label {self.label!r}")
        for name in ("freq_mean", "sev_mean", "sev_sigma", "dispersion"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")

    @property
    def uncapped_mean(self) -> float:
        return self.freq_mean * self.sev_mean

    def compound(self) -> CompoundSpec:
        p = self.dispersion / (self.dispersion + self.freq_mean)
        mu = math.log(self.sev_mean) - 0.5 * self.sev_sigma * self.sev_sigma
        return CompoundSpec(NegBinomial(self.dispersion, p), LogNormal(mu, self.sev_sigma))


def _check_weights(segments: Sequence[SegmentSpec]) -> None:
    if not segments:
        raise ValueError("need at least one segment")
    total = sum(s.weight for s in segments)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"segment weights must sum to 1, got {total}")


def check_mean_constraint(segments: Sequence[SegmentSpec], target: float) -> tuple[bool, float]:
    """Return (ok, residual) for the weighted uncapped mean vs target."""
    _check_weights(segments)
    if not target > 0:
        raise ValueError(f"target must be positive, got {target}")
    residual = sum(s.weight * s.uncapped_mean for s in segments) - target
    return abs(residual) <= MEAN_SLACK * target, residual


def _largest_remainder_sizes(segments: Sequence[SegmentSpec], n: int) -> list[int]:
    exact = [s.weight * n for s in segments]
    sizes = [int(math.floor(x)) for x in exact]
    shortfall = n - sum(sizes)
    order = sorted(range(len(segments)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:shortfall]:
        sizes[i] += 1
    return sizes


def build_mixed_scenario(
    segments: Sequence[SegmentSpec],
    n: int,
    premium: float,
    cap: float,
    replications: int,
    seed: int,
    *,
    study_label: str,
    target_mean: float,
) -> Scenario:
    """Fixed-composition Scenario: one cohort per segment.

    Sizes are round(weight * n) with largest-remainder rounding so they
    total exactly n.  Raises if the weighted mean misses target_mean.
    """
    ok, residual = check_mean_constraint(segments, target_mean)
    if not ok:
        raise ValueError(
            f"segment means miss the target: weighted mean residual {residual:+.4f} "
            f"exceeds {MEAN_SLACK:.0%} of {target_mean}"
        )
    sizes = _largest_remainder_sizes(segments, n)
    cohorts = []
    for segment, size in zip(segments, sizes):
        if size == 0:
            continue
        cohorts.append(
            CohortSpec(
                label=segment.label,
                n=size,
                premium=premium,
                compound=segment.compound(),
                regime=HardCap(cap),
            )
        )
    return Scenario(
        cohorts=tuple(cohorts),
        replications=replications,
        master_seed=seed,
        study_label=study_label,
    )


@dataclass(frozen=True, eq=False)
class MixedStudyResult:
    """Loss distribution of a stochastically assigned mixed portfolio."""

    study_label: str
    n: int
    premium_income: float
    loss_samples: np.ndarray
    expected_loss: float
    var_99: float
    tvar_99: float
    cap_hit_by_segment: Mapping[str, float]


def run_mixed_study(
    segments: Sequence[SegmentSpec],
    n: int,
    premium: float,
    cap: float,
    replications: int,
    seed: int,
    *,
    study_label: str,
) -> MixedStudyResult:
    """Monte Carlo with per-replication i.i.d. segment assignment.

    Streams: the assignment uniforms come from the (study,
    "assignment", rep) child and each segment's consumption draws from
    the (study, segment label, rep) child, so results are independent
    of evaluation order and bit-identical across runs.

    Segment cap-hit rates are pooled over replications: total hits
    divided by total realized segment membership.
    """
    _check_weights(segments)
    if n <= 0:
        raise ValueError("n must be positive")
    if replications < 2:
        raise ValueError("replications must be >= 2")
    root = RandomStream(seed).child(study_label)
    cum_weights = np.cumsum([s.weight for s in segments])
    codes = [kernel_codes(s.compound()) for s in segments]
    loss = np.empty(replications, dtype=np.float64)
    hits = np.zeros(len(segments), dtype=np.int64)
    members = np.zeros(len(segments), dtype=np.int64)
    for rep in range(replications):
        uniforms = root.child("assignment").child(rep).generator.uniform(size=n)
        assigned = np.searchsorted(cum_weights, uniforms, side="right")
        total = 0.0
        for k, segment in enumerate(segments):
            size = int(np.count_nonzero(assigned == k))
            members[k] += size
            if size == 0:
                continue
            stream = root.child(segment.label).child(rep)
            fk, fa, fb, sk, sa, sb = codes[k]
            draws = kernels.compound_aggregates(
                stream.generator.bit_generator, size, fk, fa, fb, sk, sa, sb
            )
            total += float(np.sum(np.minimum(draws, cap)))
            hits[k] += int(np.count_nonzero(draws >= cap))
        loss[rep] = total
    cap_hit = {
        segment.label: (hits[k] / members[k] if members[k] else 0.0)
        for k, segment in enumerate(segments)
    }
    return MixedStudyResult(
        study_label=study_label,
        n=n,
        premium_income=n * premium,
        loss_samples=loss,
        expected_loss=float(np.mean(loss)),
        var_99=empirical_var(loss, 0.99),
        tvar_99=empirical_tvar(loss, 0.99),
        cap_hit_by_segment=cap_hit,
    )
