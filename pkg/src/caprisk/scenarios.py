"""Named scenario registry, calibration, and the scenario file format.

Every study shipped with the package is available as a named builtin
(:func:`builtin`), fully parameterized: flat-rate baselines on a $50
premium with a $1,000 hard cap, the four stress policy variants, the
usage-billed overage cohorts, the mixed populations, the censoring
study carrier, and the portfolio-size sweep base.  Scenario defaults
are n = 10,000 subscribers, 2,000 replications, seed 20260515.

Scenarios can also be read from and written to a small line-oriented
text format::

    schema_version = 1

    [study]
    label = baseline-pg
    replications = 2000
    seed = 20260515
    levels = 0.99, 0.999

    [cohort]
    label = subscribers
    n = 10000
    premium = 50.0
    frequency = poisson rate=5.0
    severity = gamma shape=2.0 scale=3.0
    regime = hardcap cap=1000.0

One [study] section, one or more [cohort] sections.  Frequency kinds:
``poisson rate=``, ``negbinomial r= p=``, ``degenerate count=``.
Severity kinds: ``gamma shape= scale=``, ``lognormal mu= sigma=``.
Regimes: ``hardcap cap=``, ``softdegrade cap= cost_ratio=``,
``overage included= rate= cost_to_retail=``, ``nocap cost_to_retail=``,
``payperuse cost_to_retail=``.  Blank lines and lines starting with
``#`` are ignored.  Unknown keys, missing required keys, and
out-of-range values are rejected with line numbers.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

from scipy import optimize, stats

from .contracts import (
    CohortSpec,
    ContractRegime,
    HardCap,
    NoCap,
    Overage,
    PayPerUse,
    SoftDegrade,
)
from .distributions import (
    CompoundSpec,
    Degenerate,
    Gamma,
    LogNormal,
    NegBinomial,
    Poisson,
)
from .mixtures import SegmentSpec, build_mixed_scenario
from .portfolio import REPORTING_LEVELS, Scenario

__all__ = [
    "DEFAULT_SEED",
    "DEFAULT_REPLICATIONS",
    "DEFAULT_PORTFOLIO_SIZE",
    "SWEEP_SIZES",
    "BIAS_FRACTIONS",
    "BIAS_TRUE_MU",
    "BIAS_TRUE_SIGMA",
    "BIAS_SAMPLE_SIZE",
    "VERCEL_KAPPAS",
    "MIXED_SEGMENTS",
    "MIXED_TARGET_MEAN",
    "CalibrationError",
    "ScenarioFormatError",
    "registry_names",
    "builtin",
    "lognormal_expected_excess",
    "calibrate_vercel_heavy",
    "serialize_scenario",
    "parse_scenario",
    "load_scenario",
]

DEFAULT_SEED = 20260515
DEFAULT_REPLICATIONS = 2000
DEFAULT_PORTFOLIO_SIZE = 10000

BASELINE_PREMIUM = 50.0
BASELINE_CAP = 1000.0

SWEEP_SIZES = (500, 1000, 2000, 5000, 10000, 20000, 50000, 100000)

BIAS_TRUE_MU = 2.6
BIAS_TRUE_SIGMA = 1.3
BIAS_SAMPLE_SIZE = 50000
BIAS_FRACTIONS = (0.05, 0.20, 0.40)

VERCEL_PREMIUM = 20.0
VERCEL_INCLUDED = 1000.0
VERCEL_RATE = 0.15
VERCEL_KAPPAS = (0.25, 0.5, 1.0)
VERCEL_LIGHT_MEAN = 45.1
VERCEL_LIGHT_SIGMA = 1.0
VERCEL_HEAVY_MEAN = 1114.0
VERCEL_HEAVY_OVERAGE = 65.8

MIXED_TARGET_MEAN = 30.0
MIXED_SEGMENTS: dict[str, tuple[SegmentSpec, ...]] = {
    "mixed-m1": (
        SegmentSpec("light", 5.0, 2.0, 0.8, 0.90, 1.0),
        SegmentSpec("power", 30.0, 7.0, 1.5, 0.10, 2.0),
    ),
    "mixed-m2": (
        SegmentSpec("light", 5.0, 2.0, 0.8, 0.80, 1.0),
        SegmentSpec("power", 22.0, 5.0, 1.5, 0.20, 2.0),
    ),
    "mixed-m3": (
        SegmentSpec("light", 5.0, 3.0, 0.8, 0.95, 1.0),
        SegmentSpec("power", 45.0, 7.0, 1.5, 0.05, 2.0),
    ),
}

_PG = CompoundSpec(Poisson(5.0), Gamma(2.0, 3.0))
_NBLN = CompoundSpec(NegBinomial(1.0, 0.07), LogNormal(-0.311, 1.5))
_STRESS = CompoundSpec(NegBinomial(2.0, 0.05), LogNormal(0.996, 2.0))


class CalibrationError(ValueError):
    """No parameterization in the search bracket meets the targets."""


def lognormal_expected_excess(model: LogNormal, threshold: float) -> float:
    """E[max(0, S - threshold)] via the LogNormal partial expectation."""
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    mean = math.exp(model.mu + 0.5 * model.sigma * model.sigma)
    log_t = math.log(threshold)
    d1 = (model.mu + model.sigma * model.sigma - log_t) / model.sigma
    d2 = (model.mu - log_t) / model.sigma
    return mean * float(stats.norm.cdf(d1)) - threshold * float(stats.norm.cdf(d2))


@lru_cache(maxsize=None)
def calibrate_vercel_heavy(
    target_mean: float, target_overage_billed: float, cap: float, rate: float
) -> LogNormal:
    """Solve for the LogNormal matching a mean and an overage-billing target.

    The mean constraint eliminates mu = log(target_mean) - sigma^2/2;
    billed overage rate*E[max(0, S-cap)] is then increasing in sigma
    (mean-preserving spread against a convex payoff), so a bisection
    search over sigma in [0.05, 5] finds the unique root.
    """
    if not (target_mean > 0 and target_overage_billed > 0):
        raise ValueError("targets must be positive")
    if not (cap > 0 and rate > 0):
        raise ValueError("cap and rate must be positive")
    if target_overage_billed >= rate * target_mean:
        raise CalibrationError(
            f"target overage {target_overage_billed} is unreachable: billed overage "
            f"is below rate*mean = {rate * target_mean}"
        )

    def billed(sigma: float) -> float:
        model = LogNormal(math.log(target_mean) - 0.5 * sigma * sigma, sigma)
        return rate * lognormal_expected_excess(model, cap)

    lo, hi = 0.05, 5.0
    b_lo, b_hi = billed(lo), billed(hi)
    if not b_lo <= target_overage_billed <= b_hi:
        raise CalibrationError(
            f"target overage {target_overage_billed} outside achievable range "
            f"[{b_lo:.6g}, {b_hi:.6g}] for sigma in [{lo}, {hi}]"
        )
    sigma = float(
        optimize.brentq(lambda s: billed(s) - target_overage_billed, lo, hi, xtol=1e-12, rtol=1e-15)
    )
    achieved = billed(sigma)
    if abs(achieved - target_overage_billed) > 1e-6 * target_overage_billed:
        raise CalibrationError(
            f"calibration stalled at billed overage {achieved}, target {target_overage_billed}"
        )
    return LogNormal(math.log(target_mean) - 0.5 * sigma * sigma, sigma)


def _single_cohort(study_label: str, compound: CompoundSpec, regime, premium: float) -> Scenario:
    return Scenario(
        cohorts=(
            CohortSpec(
                label="subscribers",
                n=DEFAULT_PORTFOLIO_SIZE,
                premium=premium,
                compound=compound,
                regime=regime,
            ),
        ),
        replications=DEFAULT_REPLICATIONS,
        master_seed=DEFAULT_SEED,
        study_label=study_label,
    )


def _vercel_scenario(kind: str, kappa: float, suffix: str) -> Scenario:
    if kind == "light":
        severity = LogNormal(
            math.log(VERCEL_LIGHT_MEAN) - 0.5 * VERCEL_LIGHT_SIGMA * VERCEL_LIGHT_SIGMA,
            VERCEL_LIGHT_SIGMA,
        )
    else:
        severity = calibrate_vercel_heavy(
            VERCEL_HEAVY_MEAN, VERCEL_HEAVY_OVERAGE, VERCEL_INCLUDED, VERCEL_RATE
        )
    cohort = CohortSpec(
        label=kind,
        n=DEFAULT_PORTFOLIO_SIZE,
        premium=VERCEL_PREMIUM,
        compound=CompoundSpec(Degenerate(1), severity),
        regime=Overage(included=VERCEL_INCLUDED, rate=VERCEL_RATE, cost_to_retail=kappa),
    )
    return Scenario(
        cohorts=(cohort,),
        replications=DEFAULT_REPLICATIONS,
        master_seed=DEFAULT_SEED,
        study_label=f"vercel-{kind}-{suffix}",
    )


def _mixed_scenario(name: str) -> Scenario:
    return build_mixed_scenario(
        MIXED_SEGMENTS[name],
        DEFAULT_PORTFOLIO_SIZE,
        BASELINE_PREMIUM,
        BASELINE_CAP,
        DEFAULT_REPLICATIONS,
        DEFAULT_SEED,
        study_label=name,
        target_mean=MIXED_TARGET_MEAN,
    )


def _censoring_carrier() -> Scenario:
    return Scenario(
        cohorts=(
            CohortSpec(
                label="severities",
                n=BIAS_SAMPLE_SIZE,
                premium=0.0,
                compound=CompoundSpec(Degenerate(1), LogNormal(BIAS_TRUE_MU, BIAS_TRUE_SIGMA)),
                regime=NoCap(1.0),
            ),
        ),
        replications=2,
        master_seed=DEFAULT_SEED,
        study_label="censoring-bias",
    )


_REGISTRY: dict[str, Callable[[], Scenario]] = {
    "baseline-naive": lambda: _single_cohort("baseline-naive", _PG, HardCap(BASELINE_CAP), BASELINE_PREMIUM),
    "baseline-pg": lambda: _single_cohort("baseline-pg", _PG, HardCap(BASELINE_CAP), BASELINE_PREMIUM),
    "baseline-nbln": lambda: _single_cohort("baseline-nbln", _NBLN, HardCap(BASELINE_CAP), BASELINE_PREMIUM),
    "stress-p0": lambda: _single_cohort("stress-p0", _STRESS, HardCap(1000.0), BASELINE_PREMIUM),
    "stress-p1": lambda: _single_cohort("stress-p1", _STRESS, HardCap(5000.0), BASELINE_PREMIUM),
    "stress-p2": lambda: _single_cohort("stress-p2", _STRESS, NoCap(1.0), BASELINE_PREMIUM),
    "stress-p3": lambda: _single_cohort("stress-p3", _STRESS, PayPerUse(1.0), 0.0),
    "vercel-light-k25": lambda: _vercel_scenario("light", 0.25, "k25"),
    "vercel-light-k50": lambda: _vercel_scenario("light", 0.5, "k50"),
    "vercel-light-k100": lambda: _vercel_scenario("light", 1.0, "k100"),
    "vercel-heavy-k25": lambda: _vercel_scenario("heavy", 0.25, "k25"),
    "vercel-heavy-k50": lambda: _vercel_scenario("heavy", 0.5, "k50"),
    "vercel-heavy-k100": lambda: _vercel_scenario("heavy", 1.0, "k100"),
    "mixed-h": lambda: Scenario(
        cohorts=(
            CohortSpec(
                label="all",
                n=DEFAULT_PORTFOLIO_SIZE,
                premium=BASELINE_PREMIUM,
                compound=_NBLN,
                regime=HardCap(BASELINE_CAP),
            ),
        ),
        replications=DEFAULT_REPLICATIONS,
        master_seed=DEFAULT_SEED,
        study_label="mixed-h",
    ),
    "mixed-m1": lambda: _mixed_scenario("mixed-m1"),
    "mixed-m2": lambda: _mixed_scenario("mixed-m2"),
    "mixed-m3": lambda: _mixed_scenario("mixed-m3"),
    "censoring-bias": _censoring_carrier,
    "size-sweep": lambda: _single_cohort("size-sweep", _NBLN, HardCap(BASELINE_CAP), BASELINE_PREMIUM),
}


def registry_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def builtin(name: str) -> Scenario:
    """Return the named built-in scenario, fully parameterized."""
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; valid names: {', '.join(registry_names())}"
        ) from None
    return builder()


class ScenarioFormatError(ValueError):
    """Scenario file rejected; ``line`` is the 1-based offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


_FREQUENCY_KINDS = {
    "poisson": (Poisson, ("rate",)),
    "negbinomial": (NegBinomial, ("r", "p")),
    "degenerate": (Degenerate, ("count",)),
}
_SEVERITY_KINDS = {
    "gamma": (Gamma, ("shape", "scale")),
    "lognormal": (LogNormal, ("mu", "sigma")),
}
_REGIME_KINDS = {
    "hardcap": (HardCap, ("cap",)),
    "softdegrade": (SoftDegrade, ("cap", "cost_ratio")),
    "overage": (Overage, ("included", "rate", "cost_to_retail")),
    "nocap": (NoCap, ("cost_to_retail",)),
    "payperuse": (PayPerUse, ("cost_to_retail",)),
}

_STUDY_KEYS = ("label", "replications", "seed", "levels")
_COHORT_KEYS = ("label", "n", "premium", "frequency", "severity", "regime")
_REQUIRED_COHORT_KEYS = _COHORT_KEYS
_REQUIRED_STUDY_KEYS = ("label", "replications", "seed")


def _parse_number(text: str, line: int, field: str, want_int: bool = False):
    try:
        if want_int:
            return int(text)
        return float(text)
    except ValueError:
        kind = "an integer" if want_int else "a number"
        raise ScenarioFormatError(line, f"{field} must be {kind}, got {text!r}") from None


def _parse_model(text: str, line: int, field: str, table: dict):
    parts = text.split()
    if not parts:
        raise ScenarioFormatError(line, f"{field} must not be empty")
    kind = parts[0].lower()
    if kind not in table:
        raise ScenarioFormatError(
            line, f"unknown {field} kind {parts[0]!r}; expected one of {', '.join(sorted(table))}"
        )
    cls, params = table[kind]
    seen = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ScenarioFormatError(line, f"{field} parameters must be key=value, got {part!r}")
        key, _, raw = part.partition("=")
        if key not in params:
            raise ScenarioFormatError(
                line, f"unknown {field} parameter {key!r} for kind {kind!r}; expected {', '.join(params)}"
            )
        if key in seen:
            raise ScenarioFormatError(line, f"duplicate {field} parameter {key!r}")
        seen[key] = _parse_number(raw, line, f"{field} parameter {key!r}", want_int=(key == "count"))
    missing = [p for p in params if p not in seen]
    if missing:
        raise ScenarioFormatError(line, f"{field} kind {kind!r} missing parameters: {', '.join(missing)}")
    try:
        return cls(**seen)
    except (ValueError, TypeError) as exc:
        raise ScenarioFormatError(line, f"invalid {field}: {exc}") from None


def _build_cohort(fields: dict, start_line: int) -> CohortSpec:
    missing = [k for k in _REQUIRED_COHORT_KEYS if k not in fields]
    if missing:
        raise ScenarioFormatError(start_line, f"[cohort] missing required keys: {', '.join(missing)}")
    try:
        return CohortSpec(
            label=fields["label"],
            n=fields["n"],
            premium=fields["premium"],
            compound=CompoundSpec(fields["frequency"], fields["severity"]),
            regime=fields["regime"],
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioFormatError(start_line, f"invalid [cohort]: {exc}") from None


def parse_scenario(text: str) -> tuple[Scenario, tuple[float, ...]]:
    """Parse scenario text; returns (scenario, reporting levels)."""
    section = None
    section_line = 0
    study: dict = {}
    cohorts: list[CohortSpec] = []
    pending: dict = {}
    saw_version = False

    def close_section():
        nonlocal pending
        if section == "cohort":
            cohorts.append(_build_cohort(pending, section_line))
        pending = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            if not saw_version:
                raise ScenarioFormatError(lineno, "schema_version must come before any section")
            close_section()
            name = line[1:-1].strip().lower()
            if name == "study":
                if study:
                    raise ScenarioFormatError(lineno, "duplicate [study] section")
                section = "study"
                study["_line"] = lineno
            elif name == "cohort":
                section = "cohort"
            else:
                raise ScenarioFormatError(lineno, f"unknown section [{name}]")
            section_line = lineno
            continue
        if "=" not in line:
            raise ScenarioFormatError(lineno, f"expected key = value, got {raw.strip()!r}")
        key, _, value = (piece.strip() for piece in line.partition("="))
        if not saw_version:
            if key != "schema_version":
                raise ScenarioFormatError(lineno, "file must start with schema_version = 1")
            if value != "1":
                raise ScenarioFormatError(lineno, f"unsupported schema_version {value!r}")
            saw_version = True
            continue
        if section is None:
            raise ScenarioFormatError(lineno, f"key {key!r} outside any section")
        if section == "study":
            if key not in _STUDY_KEYS:
                raise ScenarioFormatError(lineno, f"unknown [study] key {key!r}")
            if key in study:
                raise ScenarioFormatError(lineno, f"duplicate [study] key {key!r}")
            if key == "replications":
                study[key] = _parse_number(value, lineno, key, want_int=True)
            elif key == "seed":
                study[key] = _parse_number(value, lineno, key, want_int=True)
            elif key == "levels":
                try:
                    levels = tuple(float(piece.strip()) for piece in value.split(",") if piece.strip())
                except ValueError:
                    raise ScenarioFormatError(lineno, f"levels must be comma-separated numbers") from None
                if not levels or any(not 0 < q < 1 for q in levels):
                    raise ScenarioFormatError(lineno, "levels must lie in (0, 1)")
                study[key] = levels
            else:
                study[key] = value
        else:
            if key not in _COHORT_KEYS:
                raise ScenarioFormatError(lineno, f"unknown [cohort] key {key!r}")
            if key in pending:
                raise ScenarioFormatError(lineno, f"duplicate [cohort] key {key!r}")
            if key == "n":
                pending[key] = _parse_number(value, lineno, key, want_int=True)
            elif key == "premium":
                pending[key] = _parse_number(value, lineno, key)
            elif key == "frequency":
                pending[key] = _parse_model(value, lineno, "frequency", _FREQUENCY_KINDS)
            elif key == "severity":
                pending[key] = _parse_model(value, lineno, "severity", _SEVERITY_KINDS)
            elif key == "regime":
                pending[key] = _parse_model(value, lineno, "regime", _REGIME_KINDS)
            else:
                pending[key] = value
    if not saw_version:
        raise ScenarioFormatError(1, "file must start with schema_version = 1")
    close_section()
    if "_line" not in study:
        raise ScenarioFormatError(1, "missing [study] section")
    study_line = study.pop("_line")
    missing = [k for k in _REQUIRED_STUDY_KEYS if k not in study]
    if missing:
        raise ScenarioFormatError(study_line, f"[study] missing required keys: {', '.join(missing)}")
    if not cohorts:
        raise ScenarioFormatError(study_line, "need at least one [cohort] section")
    levels = study.pop("levels", REPORTING_LEVELS)
    try:
        scenario = Scenario(
            cohorts=tuple(cohorts),
            replications=study["replications"],
            master_seed=study["seed"],
            study_label=study["label"],
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioFormatError(study_line, f"invalid [study]: {exc}") from None
    return scenario, tuple(levels)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    with open(path, "r") as handle:
        text = handle.read()
    return parse_scenario(text)[0]


def _format_model(model) -> str:
    if isinstance(model, Poisson):
        return f"poisson rate={model.rate!r}"
    if isinstance(model, NegBinomial):
        return f"negbinomial r={model.r!r} p={model.p!r}"
    if isinstance(model, Degenerate):
        return f"degenerate count={model.count!r}"
    if isinstance(model, Gamma):
        return f"gamma shape={model.shape!r} scale={model.scale!r}"
    if isinstance(model, LogNormal):
        return f"lognormal mu={model.mu!r} sigma={model.sigma!r}"
    if isinstance(model, HardCap):
        return f"hardcap cap={model.cap!r}"
    if isinstance(model, SoftDegrade):
        return f"softdegrade cap={model.cap!r} cost_ratio={model.cost_ratio!r}"
    if isinstance(model, Overage):
        return (
            f"overage included={model.included!r} rate={model.rate!r} "
            f"cost_to_retail={model.cost_to_retail!r}"
        )
    if isinstance(model, NoCap):
        return f"nocap cost_to_retail={model.cost_to_retail!r}"
    if isinstance(model, PayPerUse):
        return f"payperuse cost_to_retail={model.cost_to_retail!r}"
    raise TypeError(f"cannot serialize {model!r}")


def serialize_scenario(scenario: Scenario, levels: Sequence[float] = REPORTING_LEVELS) -> str:
    """Render a scenario in the documented text format (round-trips)."""
    lines = [
        "schema_version = 1",
        "",
        "[study]",
        f"label = {scenario.study_label}",
        f"replications = {scenario.replications}",
        f"seed = {scenario.master_seed}",
        f"levels = {', '.join(repr(float(q)) for q in levels)}",
    ]
    for cohort in scenario.cohorts:
        lines.extend(
            [
                "",
                "[cohort]",
                f"label = {cohort.label}",
                f"n = {cohort.n}",
                f"premium = {cohort.premium!r}",
                f"frequency = {_format_model(cohort.compound.frequency)}",
                f"severity = {_format_model(cohort.compound.severity)}",
                f"regime = {_format_model(cohort.regime)}",
            ]
        )
    return "\n".join(lines) + "\n"
