"""Batch sampling kernels with interchangeable backends.

Two implementations of the same contract are provided:

``python``
    Vectorized numpy reference (always available).
``compiled``
    Cython extension calling numpy's C distribution functions directly
    (available when the extension was built).

Both consume the supplied BitGenerator in the identical order -- one
pass drawing every subject's event count, then one pass drawing every
severity, accumulated per subject in event order -- so for a given
stream state the returned aggregates are bit-for-bit equal.  The active
backend defaults to ``compiled`` when present and can be forced with
the ``CAPRISK_BACKEND`` environment variable or :func:`set_backend`.
"""

from __future__ import annotations

import os

import numpy as np

from . import _reference

__all__ = [
    "FREQ_POISSON",
    "FREQ_NEGBIN",
    "FREQ_FIXED",
    "SEV_GAMMA",
    "SEV_LOGNORMAL",
    "available_backends",
    "active_backend",
    "set_backend",
    "compound_aggregates",
    "compound_aggregates_rates",
]

FREQ_POISSON = 0
FREQ_NEGBIN = 1
FREQ_FIXED = 2

SEV_GAMMA = 0
SEV_LOGNORMAL = 1

_IMPLS = {"python": _reference}
try:
    from . import _compiled

    _IMPLS["compiled"] = _compiled
except ImportError:
    pass

_env = os.environ.get("CAPRISK_BACKEND")
if _env:
    if _env not in _IMPLS:
        raise ImportError(
            f"CAPRISK_BACKEND={_env!r} is not available; built backends: {sorted(_IMPLS)}"
        )
    _active = _env
else:
    _active = "compiled" if "compiled" in _IMPLS else "python"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_IMPLS))


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; built backends: {sorted(_IMPLS)}")
    _active = name


def compound_aggregates(
    bit_generator,
    n: int,
    freq_kind: int,
    fa: float,
    fb: float,
    sev_kind: int,
    sa: float,
    sb: float,
) -> np.ndarray:
    """Draw ``n`` compound sums; returns a float64 array of length ``n``.

    ``(freq_kind, fa, fb)`` select the count law: Poisson(fa),
    NegBinomial(r=fa, p=fb), or a fixed count fa (consumes no random
    words).  ``(sev_kind, sa, sb)`` select Gamma(shape=sa, scale=sb) or
    LogNormal(mu=sa, sigma=sb) severities.  Advances ``bit_generator``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if freq_kind not in (FREQ_POISSON, FREQ_NEGBIN, FREQ_FIXED):
        raise ValueError(f"unknown frequency kind {freq_kind}")
    if sev_kind not in (SEV_GAMMA, SEV_LOGNORMAL):
        raise ValueError(f"unknown severity kind {sev_kind}")
    return _IMPLS[_active].compound_aggregates(bit_generator, n, freq_kind, fa, fb, sev_kind, sa, sb)


def compound_aggregates_rates(
    bit_generator,
    rates,
    sev_kind: int,
    sa: float,
    sb: float,
) -> np.ndarray:
    """Like :func:`compound_aggregates` with a per-subject Poisson rate array."""
    if sev_kind not in (SEV_GAMMA, SEV_LOGNORMAL):
        raise ValueError(f"unknown severity kind {sev_kind}")
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    if rates.ndim != 1:
        raise ValueError("rates must be a one-dimensional array")
    if rates.size and (not np.all(np.isfinite(rates)) or float(rates.min()) < 0):
        raise ValueError("rates must be finite and >= 0")
    return _IMPLS[_active].compound_aggregates_rates(bit_generator, rates, sev_kind, sa, sb)
