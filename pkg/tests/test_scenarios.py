"""Built-in study registry, heavy-tier calibration, and the scenario file format."""

import math

import pytest
from scipy import integrate, stats

from caprisk.contracts import HardCap, NoCap, Overage, PayPerUse
from caprisk.distributions import Degenerate, LogNormal, NegBinomial, Poisson
from caprisk.portfolio import REPORTING_LEVELS
from caprisk.scenarios import (
    BASELINE_CAP,
    BASELINE_PREMIUM,
    BIAS_SAMPLE_SIZE,
    DEFAULT_PORTFOLIO_SIZE,
    DEFAULT_REPLICATIONS,
    DEFAULT_SEED,
    MIXED_SEGMENTS,
    VERCEL_HEAVY_MEAN,
    VERCEL_HEAVY_OVERAGE,
    VERCEL_INCLUDED,
    VERCEL_LIGHT_MEAN,
    VERCEL_LIGHT_SIGMA,
    VERCEL_PREMIUM,
    VERCEL_RATE,
    CalibrationError,
    ScenarioFormatError,
    builtin,
    calibrate_vercel_heavy,
    load_scenario,
    lognormal_expected_excess,
    parse_scenario,
    registry_names,
    serialize_scenario,
)

ALL_NAMES = (
    "baseline-naive",
    "baseline-nbln",
    "baseline-pg",
    "censoring-bias",
    "mixed-h",
    "mixed-m1",
    "mixed-m2",
    "mixed-m3",
    "size-sweep",
    "stress-p0",
    "stress-p1",
    "stress-p2",
    "stress-p3",
    "vercel-heavy-k100",
    "vercel-heavy-k25",
    "vercel-heavy-k50",
    "vercel-light-k100",
    "vercel-light-k25",
    "vercel-light-k50",
)


class TestRegistry:
    def test_names(self):
        assert registry_names() == ALL_NAMES

    @pytest.mark.parametrize("name", ALL_NAMES)
    def test_labels_and_defaults(self, name):
        scenario = builtin(name)
        assert scenario.study_label == name
        assert scenario.master_seed == DEFAULT_SEED

    def test_baseline_shape(self):
        scenario = builtin("baseline-pg")
        cohort = scenario.cohorts[0]
        assert scenario.replications == DEFAULT_REPLICATIONS
        assert cohort.n == DEFAULT_PORTFOLIO_SIZE
        assert cohort.premium == BASELINE_PREMIUM
        assert isinstance(cohort.compound.frequency, Poisson)
        assert cohort.regime == HardCap(BASELINE_CAP)
        assert builtin("baseline-naive").cohorts[0].compound == cohort.compound

    def test_stress_policy_ladder(self):
        assert builtin("stress-p0").cohorts[0].regime == HardCap(1000.0)
        assert builtin("stress-p1").cohorts[0].regime == HardCap(5000.0)
        assert builtin("stress-p2").cohorts[0].regime == NoCap(1.0)
        p3 = builtin("stress-p3").cohorts[0]
        assert p3.regime == PayPerUse(1.0)
        assert p3.premium == 0.0

    def test_vercel_cohorts(self):
        for kappa, suffix in ((0.25, "k25"), (0.5, "k50"), (1.0, "k100")):
            for kind in ("light", "heavy"):
                cohort = builtin(f"vercel-{kind}-{suffix}").cohorts[0]
                assert cohort.compound.frequency == Degenerate(1)
                assert cohort.premium == VERCEL_PREMIUM
                assert cohort.regime == Overage(VERCEL_INCLUDED, VERCEL_RATE, kappa)

    def test_mixed_sizes_follow_weights(self):
        scenario = builtin("mixed-m1")
        assert [c.label for c in scenario.cohorts] == ["light", "power"]
        assert [c.n for c in scenario.cohorts] == [9000, 1000]
        weights = [seg.weight for seg in MIXED_SEGMENTS["mixed-m3"]]
        assert [c.n for c in builtin("mixed-m3").cohorts] == [
            round(w * DEFAULT_PORTFOLIO_SIZE) for w in weights
        ]

    def test_censoring_carrier(self):
        cohort = builtin("censoring-bias").cohorts[0]
        assert cohort.n == BIAS_SAMPLE_SIZE
        assert cohort.premium == 0.0
        assert cohort.compound.frequency == Degenerate(1)

    def test_unknown_name_lists_choices(self):
        with pytest.raises(ValueError, match="baseline-pg"):
            builtin("no-such-study")

    def test_repeat_builds_are_equal(self):
        assert builtin("stress-p0") == builtin("stress-p0")


class TestHeavyTierCalibration:
    def test_expected_excess_matches_quadrature(self):
        model = LogNormal(1.5, 0.9)
        for threshold in (1.0, 5.0, 20.0):
            numeric, _ = integrate.quad(
                lambda s: (s - threshold) * stats.lognorm.pdf(s, 0.9, scale=math.exp(1.5)),
                threshold,
                math.inf,
            )
            assert lognormal_expected_excess(model, threshold) == pytest.approx(numeric, rel=1e-8)

    def test_expected_excess_bounds(self):
        model = LogNormal(0.0, 1.0)
        mean = math.exp(0.5)
        assert 0 < lognormal_expected_excess(model, 2.0) < mean
        with pytest.raises(ValueError):
            lognormal_expected_excess(model, 0.0)

    def test_targets_are_hit(self):
        model = calibrate_vercel_heavy(
            VERCEL_HEAVY_MEAN, VERCEL_HEAVY_OVERAGE, VERCEL_INCLUDED, VERCEL_RATE
        )
        mean = math.exp(model.mu + 0.5 * model.sigma**2)
        billed = VERCEL_RATE * lognormal_expected_excess(model, VERCEL_INCLUDED)
        assert mean == pytest.approx(VERCEL_HEAVY_MEAN, rel=1e-9)
        assert billed == pytest.approx(VERCEL_HEAVY_OVERAGE, rel=1e-6)

    def test_overage_ceiling_is_rate_times_mean(self):
        with pytest.raises(CalibrationError, match="unreachable"):
            calibrate_vercel_heavy(100.0, 16.0, 1000.0, 0.15)

    def test_target_below_bracket_floor(self):
        # At sigma = 0.05 a mean-1114 severity already bills ~17 in overage.
        with pytest.raises(CalibrationError, match="achievable range"):
            calibrate_vercel_heavy(1114.0, 1.0, 1000.0, 0.15)

    def test_light_tier_overage_is_negligible(self):
        model = LogNormal(
            math.log(VERCEL_LIGHT_MEAN) - 0.5 * VERCEL_LIGHT_SIGMA**2, VERCEL_LIGHT_SIGMA
        )
        portfolio_billed = (
            DEFAULT_PORTFOLIO_SIZE * VERCEL_RATE * lognormal_expected_excess(model, VERCEL_INCLUDED)
        )
        assert portfolio_billed < 5000.0

    def test_input_validation(self):
        with pytest.raises(ValueError):
            calibrate_vercel_heavy(-1.0, 10.0, 1000.0, 0.15)
        with pytest.raises(ValueError):
            calibrate_vercel_heavy(1114.0, 65.8, 0.0, 0.15)


VALID_TEXT = """\
schema_version = 1

# demo portfolio
[study]
label = demo
replications = 4
seed = 7

[cohort]
label = users
n = 50
premium = 10.0
frequency = poisson rate=2.0
severity = gamma shape=2.0 scale=3.0
regime = hardcap cap=40.0
"""

_PREFIX = "schema_version = 1\n[study]\nlabel = demo\nreplications = 4\nseed = 7\n"
_COHORT = (
    "label = users\nn = 50\npremium = 10.0\nfrequency = poisson rate=2.0\n"
    "severity = gamma shape=2.0 scale=3.0\nregime = hardcap cap=40.0\n"
)


def cohort_case(payload):
    """Valid header plus [cohort] on line 6; payload starts on line 7."""
    return _PREFIX + "[cohort]\n" + payload


class TestParse:
    def test_valid_text(self):
        scenario, levels = parse_scenario(VALID_TEXT)
        assert scenario.study_label == "demo"
        assert scenario.replications == 4
        assert scenario.master_seed == 7
        assert levels == REPORTING_LEVELS
        cohort = scenario.cohorts[0]
        assert cohort.n == 50
        assert cohort.compound.frequency == Poisson(2.0)
        assert cohort.regime == HardCap(40.0)

    def test_levels_override(self):
        text = VALID_TEXT.replace("seed = 7", "seed = 7\nlevels = 0.9, 0.95")
        _, levels = parse_scenario(text)
        assert levels == (0.9, 0.95)

    def test_kind_names_case_insensitive(self):
        text = VALID_TEXT.replace("poisson", "POISSON").replace("[study]", "[STUDY]")
        scenario, _ = parse_scenario(text)
        assert scenario.cohorts[0].compound.frequency == Poisson(2.0)

    @pytest.mark.parametrize("name", ALL_NAMES)
    def test_round_trip_builtins(self, name):
        scenario = builtin(name)
        parsed, levels = parse_scenario(serialize_scenario(scenario))
        assert parsed == scenario
        assert levels == REPORTING_LEVELS

    def test_round_trip_custom_levels(self):
        scenario = builtin("stress-p0")
        _, levels = parse_scenario(serialize_scenario(scenario, levels=(0.95,)))
        assert levels == (0.95,)

    def test_load_scenario(self, tmp_path):
        path = tmp_path / "demo.scenario"
        path.write_text(VALID_TEXT)
        assert load_scenario(path) == parse_scenario(VALID_TEXT)[0]

    @pytest.mark.parametrize(
        "text,line,fragment",
        [
            ("", 1, "schema_version"),
            ("[study]\n", 1, "schema_version must come before"),
            ("schema_version = 2\n", 1, "unsupported schema_version"),
            ("x = 1\n", 1, "must start with schema_version"),
            ("schema_version = 1\ngarbage\n", 2, "expected key = value"),
            ("schema_version = 1\nlabel = x\n", 2, "outside any section"),
            ("schema_version = 1\n[banana]\n", 2, "unknown section"),
            ("schema_version = 1\n[study]\nlabel = a\n[study]\n", 4, "duplicate [study]"),
            ("schema_version = 1\n[study]\nflavor = 1\n", 3, "unknown [study] key"),
            ("schema_version = 1\n[study]\nlabel = a\nlabel = b\n", 4, "duplicate [study] key"),
            ("schema_version = 1\n[study]\nlevels = a, b\n", 3, "comma-separated"),
            ("schema_version = 1\n[study]\nlevels = 0.5, 1.5\n", 3, "lie in (0, 1)"),
            ("schema_version = 1\n[study]\nreplications = soon\n", 3, "must be an integer"),
            (cohort_case("color = red\n"), 7, "unknown [cohort] key"),
            (cohort_case("label = a\nlabel = b\n"), 8, "duplicate [cohort] key"),
            (cohort_case("label = a\n"), 6, "missing required keys"),
            (cohort_case("frequency = weibull shape=2\n"), 7, "unknown frequency kind"),
            (cohort_case("frequency = poisson 5\n"), 7, "key=value"),
            (cohort_case("frequency = poisson lam=5\n"), 7, "unknown frequency parameter"),
            (cohort_case("frequency = poisson rate=5 rate=6\n"), 7, "duplicate frequency parameter"),
            (cohort_case("frequency = poisson\n"), 7, "missing parameters"),
            (cohort_case("frequency = negbinomial r=1 p=1.5\n"), 7, "invalid frequency"),
            (cohort_case("n = 2.5\n"), 7, "must be an integer"),
            ("schema_version = 1\n[cohort]\n" + _COHORT, 1, "missing [study]"),
            (_PREFIX, 2, "at least one [cohort]"),
        ],
    )
    def test_rejects_with_line_number(self, text, line, fragment):
        with pytest.raises(ScenarioFormatError) as info:
            parse_scenario(text)
        assert info.value.line == line
        assert fragment in str(info.value)

    def test_study_validation_reported_at_study_line(self):
        text = cohort_case(_COHORT).replace("replications = 4", "replications = 1")
        with pytest.raises(ScenarioFormatError) as info:
            parse_scenario(text)
        assert info.value.line == 2
        assert "invalid [study]" in str(info.value)

    def test_missing_study_keys_reported(self):
        text = "schema_version = 1\n[study]\nlabel = a\n[cohort]\n" + _COHORT
        with pytest.raises(ScenarioFormatError) as info:
            parse_scenario(text)
        assert "replications" in str(info.value) and "seed" in str(info.value)
