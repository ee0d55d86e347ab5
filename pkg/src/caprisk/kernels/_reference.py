"""Pure numpy backend for the batch sampling kernels.

Wraps the caller's BitGenerator in a Generator and draws in two passes:
all counts, then all severities in subject order.  With scalar
distribution parameters numpy fills arrays by repeated calls to the
same C sampling routines the compiled backend uses, so the stream is
consumed word-for-word identically.  Per-subject accumulation goes
through ``np.bincount``, which adds weights sequentially in input
order, matching a left-to-right scalar loop exactly.
"""

from __future__ import annotations

import numpy as np

_FREQ_POISSON = 0
_FREQ_NEGBIN = 1
_FREQ_FIXED = 2

_SEV_GAMMA = 0


def _severities(gen: np.random.Generator, total: int, sev_kind: int, sa: float, sb: float) -> np.ndarray:
    if sev_kind == _SEV_GAMMA:
        return gen.gamma(sa, sb, size=total)
    return gen.lognormal(sa, sb, size=total)


def _aggregate(counts: np.ndarray, sev: np.ndarray, n: int) -> np.ndarray:
    owners = np.repeat(np.arange(n, dtype=np.intp), counts)
    return np.bincount(owners, weights=sev, minlength=n)


def compound_aggregates(bit_generator, n, freq_kind, fa, fb, sev_kind, sa, sb):
    gen = np.random.Generator(bit_generator)
    if freq_kind == _FREQ_POISSON:
        counts = gen.poisson(fa, size=n)
    elif freq_kind == _FREQ_NEGBIN:
        counts = gen.negative_binomial(fa, fb, size=n)
    elif freq_kind == _FREQ_FIXED:
        counts = np.full(n, int(fa), dtype=np.int64)
    else:
        raise ValueError(f"unknown frequency kind {freq_kind}")
    total = int(counts.sum())
    sev = _severities(gen, total, sev_kind, sa, sb)
    return _aggregate(counts, sev, n)


def compound_aggregates_rates(bit_generator, rates, sev_kind, sa, sb):
    gen = np.random.Generator(bit_generator)
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    n = rates.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    counts = gen.poisson(rates)
    total = int(counts.sum())
    sev = _severities(gen, total, sev_kind, sa, sb)
    return _aggregate(counts, sev, n)
