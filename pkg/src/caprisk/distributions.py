"""Frequency and severity primitives for compound usage models.

A subscriber's billing-period consumption is modelled as a compound sum

    S_agg = sum_{j=1}^{N} S_j

where N is an integer event count (how many sessions, jobs, or API
bursts occurred) and S_j is the metered cost of one event.  The classes
below describe the supported count and severity laws, expose exact
moment formulas, and provide sampling built on numpy Generators.

Moments of the compound sum follow the Wald identities

    E[S_agg]   = E[N] * E[S]
    Var[S_agg] = E[N] * Var[S] + Var[N] * E[S]^2

which hold when severities are i.i.d. and independent of the count.

Randomness is managed through :class:`RandomStream`, a small wrapper
over a 64-bit seed that supports labelled child derivation.  Children
are produced by hashing the label into the parent seed with an avalanche
mixer, so any (study, cohort, replication) coordinate maps to a stable,
effectively independent PCG64 stream regardless of execution order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Poisson",
    "NegBinomial",
    "Degenerate",
    "Gamma",
    "LogNormal",
    "FrequencyModel",
    "SeverityModel",
    "CompoundSpec",
    "RandomStream",
    "frequency_moments",
    "severity_moments",
    "compound_moments",
    "lognormal_from_mean",
    "sample_frequency",
    "sample_severity",
    "sample_compound",
    "sample_compound_batch",
    "kernel_codes",
    "TokenRateCard",
    "UsageEvent",
    "token_severity",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_WEYL = 0xD1B54A32D192ED03


def _mix64(value: int) -> int:
    """Finalizing avalanche mixer (splitmix64 style) on 64-bit words."""
    x = value & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def _label_key(label: Union[int, str]) -> int:
    if isinstance(label, bool):
        raise TypeError("stream labels must be str or int, not bool")
    if isinstance(label, int):
        return _mix64((label & _MASK64) ^ _GOLDEN)
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"stream labels must be str or int, got {type(label).__name__}")


class RandomStream:
    """Deterministic, splittable source of randomness.

    A stream is fully described by its 64-bit seed.  ``child(label)``
    derives a new stream whose seed depends only on the parent seed and
    the label, so the same coordinates always yield the same stream no
    matter how many siblings were derived before it or on which thread.
    ``generator`` lazily instantiates a ``numpy.random.Generator`` over
    PCG64; repeated access returns the same (stateful) generator.
    """

    __slots__ = ("seed", "_generator")

    def __init__(self, seed: int):
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise TypeError("seed must be an int")
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = seed
        self._generator = None

    def child(self, label: Union[int, str]) -> "RandomStream":
        mixed = _mix64((self.seed * _WEYL + _label_key(label)) & _MASK64)
        return RandomStream(mixed)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            self._generator = np.random.Generator(np.random.PCG64(self.seed))
        return self._generator

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed:#018x})"


@dataclass(frozen=True)
class Poisson:
    """Event count with equal mean and variance."""

    rate: float

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ValueError(f"Poisson rate must be positive and finite, got {self.rate}")


@dataclass(frozen=True)
class NegBinomial:
    """Overdispersed event count.

    Parameterized by the number of failures ``r`` and success
    probability ``p``: mean r(1-p)/p, variance r(1-p)/p^2.  The
    variance-to-mean ratio is 1/p, so small p gives heavy clustering.
    """

    r: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"NegBinomial r must be positive and finite, got {self.r}")
        if not (0.0 < self.p < 1.0):
            raise ValueError(f"NegBinomial p must lie in (0, 1), got {self.p}")


@dataclass(frozen=True)
class Degenerate:
    """Deterministic event count; every period has exactly ``count`` events."""

    count: int

    def __post_init__(self):
        if isinstance(self.count, bool) or not isinstance(self.count, int):
            raise TypeError("Degenerate count must be an int")
        if self.count < 0:
            raise ValueError(f"Degenerate count must be >= 0, got {self.count}")


@dataclass(frozen=True)
class Gamma:
    """Light-tailed event severity; mean shape*scale, variance shape*scale^2."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"Gamma shape must be positive and finite, got {self.shape}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"Gamma scale must be positive and finite, got {self.scale}")


@dataclass(frozen=True)
class LogNormal:
    """Heavy-tailed event severity; log S ~ Normal(mu, sigma^2).

    Mean exp(mu + sigma^2/2); variance (exp(sigma^2) - 1) exp(2 mu + sigma^2).
    """

    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"LogNormal mu must be finite, got {self.mu}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"LogNormal sigma must be positive and finite, got {self.sigma}")


FrequencyModel = Union[Poisson, NegBinomial, Degenerate]
SeverityModel = Union[Gamma, LogNormal]


@dataclass(frozen=True)
class CompoundSpec:
    """A frequency law paired with an i.i.d. severity law."""

    frequency: FrequencyModel
    severity: SeverityModel

    def __post_init__(self):
        if not isinstance(self.frequency, (Poisson, NegBinomial, Degenerate)):
            raise TypeError(f"unsupported frequency model: {self.frequency!r}")
        if not isinstance(self.severity, (Gamma, LogNormal)):
            raise TypeError(f"unsupported severity model: {self.severity!r}")


def frequency_moments(model: FrequencyModel) -> tuple[float, float]:
    """Return (mean, variance) of the event count."""
    if isinstance(model, Poisson):
        return model.rate, model.rate
    if isinstance(model, NegBinomial):
        q = 1.0 - model.p
        mean = model.r * q / model.p
        return mean, mean / model.p
    if isinstance(model, Degenerate):
        return float(model.count), 0.0
    raise TypeError(f"unsupported frequency model: {model!r}")


def severity_moments(model: SeverityModel) -> tuple[float, float]:
    """Return (mean, variance) of a single event severity."""
    if isinstance(model, Gamma):
        return model.shape * model.scale, model.shape * model.scale * model.scale
    if isinstance(model, LogNormal):
        s2 = model.sigma * model.sigma
        mean = math.exp(model.mu + 0.5 * s2)
        var = math.expm1(s2) * math.exp(2.0 * model.mu + s2)
        return mean, var
    raise TypeError(f"unsupported severity model: {model!r}")


def compound_moments(spec: CompoundSpec) -> tuple[float, float]:
    """Return (mean, variance) of the compound sum via the Wald identities."""
    fm, fv = frequency_moments(spec.frequency)
    sm, sv = severity_moments(spec.severity)
    return fm * sm, fm * sv + fv * sm * sm


def lognormal_from_mean(mean: float, sigma: float) -> LogNormal:
    """Construct a LogNormal with the given mean and log-scale sigma."""
    if not (math.isfinite(mean) and mean > 0):
        raise ValueError(f"mean must be positive and finite, got {mean}")
    return LogNormal(math.log(mean) - 0.5 * sigma * sigma, sigma)


def sample_frequency(model: FrequencyModel, stream: RandomStream) -> int:
    """Draw one event count.  Degenerate counts consume no randomness."""
    if isinstance(model, Poisson):
        return int(stream.generator.poisson(model.rate))
    if isinstance(model, NegBinomial):
        return int(stream.generator.negative_binomial(model.r, model.p))
    if isinstance(model, Degenerate):
        return model.count
    raise TypeError(f"unsupported frequency model: {model!r}")


def sample_severity(model: SeverityModel, stream: RandomStream) -> float:
    """Draw one event severity."""
    if isinstance(model, Gamma):
        return float(stream.generator.gamma(model.shape, model.scale))
    if isinstance(model, LogNormal):
        return float(stream.generator.lognormal(model.mu, model.sigma))
    raise TypeError(f"unsupported severity model: {model!r}")


def sample_compound(spec: CompoundSpec, stream: RandomStream) -> float:
    """Draw one compound sum: a count, then that many severities, in order."""
    count = sample_frequency(spec.frequency, stream)
    if count == 0:
        return 0.0
    if isinstance(spec.severity, Gamma):
        draws = stream.generator.gamma(spec.severity.shape, spec.severity.scale, size=count)
    else:
        draws = stream.generator.lognormal(spec.severity.mu, spec.severity.sigma, size=count)
    return float(draws.sum())


def sample_compound_batch(spec: CompoundSpec, stream: RandomStream, size: int) -> np.ndarray:
    """Draw ``size`` compound sums through the batch sampling kernel.

    Consumes the stream in two passes (all counts, then all severities
    in subject order), which is the same order the kernel backends use,
    so results are identical across backends.
    """
    from . import kernels

    if size < 0:
        raise ValueError("size must be >= 0")
    fk, fa, fb, sk, sa, sb = kernel_codes(spec)
    return kernels.compound_aggregates(stream.generator.bit_generator, size, fk, fa, fb, sk, sa, sb)


def kernel_codes(spec: CompoundSpec) -> tuple[int, float, float, int, float, float]:
    """Flatten a CompoundSpec into the numeric codes the kernels accept."""
    from . import kernels

    f = spec.frequency
    if isinstance(f, Poisson):
        freq = (kernels.FREQ_POISSON, f.rate, 0.0)
    elif isinstance(f, NegBinomial):
        freq = (kernels.FREQ_NEGBIN, f.r, f.p)
    elif isinstance(f, Degenerate):
        freq = (kernels.FREQ_FIXED, float(f.count), 0.0)
    else:
        raise TypeError(f"unsupported frequency model: {f!r}")
    s = spec.severity
    if isinstance(s, Gamma):
        sev = (kernels.SEV_GAMMA, s.shape, s.scale)
    elif isinstance(s, LogNormal):
        sev = (kernels.SEV_LOGNORMAL, s.mu, s.sigma)
    else:
        raise TypeError(f"unsupported severity model: {s!r}")
    return freq + sev


@dataclass(frozen=True)
class TokenRateCard:
    """Unit prices for metered inference usage.

    ``input_rate`` applies per input token.  ``output_rates`` maps a
    model class name to its per-output-token price.  ``tool_rates`` maps
    a tool name to a flat per-invocation fee.
    """

    input_rate: float
    output_rates: Mapping[str, float]
    tool_rates: Mapping[str, float]

    def __post_init__(self):
        if not (math.isfinite(self.input_rate) and self.input_rate >= 0):
            raise ValueError(f"input_rate must be >= 0, got {self.input_rate}")
        for name, rate in {**dict(self.output_rates), **dict(self.tool_rates)}.items():
            if not (math.isfinite(rate) and rate >= 0):
                raise ValueError(f"rate for {name!r} must be >= 0, got {rate}")


@dataclass(frozen=True)
class UsageEvent:
    """One metered interaction: token counts, model class, tools invoked.

    ``tools`` is a multiset; a tool that appears twice is billed twice.
    """

    tokens_in: int
    tokens_out: int
    model_class: str
    tools: Sequence[str] = ()

    def __post_init__(self):
        if self.tokens_in < 0 or self.tokens_out < 0:
            raise ValueError("token counts must be >= 0")
        object.__setattr__(self, "tools", tuple(self.tools))


def token_severity(card: TokenRateCard, event: UsageEvent) -> float:
    """Exact cost of one usage event under a rate card.

    cost = tokens_in * input_rate
         + tokens_out * output_rates[model_class]
         + sum of tool_rates over every tool occurrence.
    """
    try:
        out_rate = card.output_rates[event.model_class]
    except KeyError:
        raise ValueError(f"rate card has no output rate for model class {event.model_class!r}") from None
    total = event.tokens_in * card.input_rate + event.tokens_out * out_rate
    for tool in event.tools:
        try:
            total += card.tool_rates[tool]
        except KeyError:
            raise ValueError(f"rate card has no fee for tool {tool!r}") from None
    return total
