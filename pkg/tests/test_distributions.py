"""Distribution models, moments, streams, and token pricing."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from caprisk.distributions import (
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
    sample_frequency,
    sample_severity,
    severity_moments,
    token_severity,
)


class TestRandomStream:
    def test_same_coordinates_same_stream(self):
        a = RandomStream(1234).child("study").child("cohort").child(7)
        b = RandomStream(1234).child("study").child("cohort").child(7)
        assert a.seed == b.seed
        assert a.generator.random() == b.generator.random()

    def test_sibling_derivation_order_is_irrelevant(self):
        root = RandomStream(99)
        first = root.child("a").seed
        root.child("b")
        root.child("c")
        assert root.child("a").seed == first

    def test_distinct_labels_distinct_streams(self):
        root = RandomStream(5)
        seeds = {root.child(label).seed for label in ["a", "b", "c", 0, 1, 2]}
        assert len(seeds) == 6

    def test_int_and_string_labels_do_not_collide(self):
        root = RandomStream(5)
        assert root.child(3) .seed != root.child("3").seed

    def test_generator_is_cached(self):
        stream = RandomStream(42)
        gen = stream.generator
        gen.random()
        assert stream.generator is gen

    def test_seed_validation(self):
        with pytest.raises(TypeError):
            RandomStream(1.5)
        with pytest.raises(TypeError):
            RandomStream(True)
        with pytest.raises(ValueError):
            RandomStream(-1)
        with pytest.raises(ValueError):
            RandomStream(1 << 64)

    def test_bool_label_rejected(self):
        with pytest.raises(TypeError):
            RandomStream(1).child(True)

    def test_repr_shows_hex_seed(self):
        assert "0x" in repr(RandomStream(255))

    @given(st.integers(min_value=0, max_value=(1 << 64) - 1), st.integers(min_value=0, max_value=1 << 32))
    def test_child_seed_stays_in_range(self, seed, label):
        child = RandomStream(seed).child(label)
        assert 0 <= child.seed < 1 << 64


class TestModelValidation:
    @pytest.mark.parametrize(
        "build",
        [
            lambda: Poisson(0.0),
            lambda: Poisson(-1.0),
            lambda: Poisson(math.inf),
            lambda: NegBinomial(0.0, 0.5),
            lambda: NegBinomial(1.0, 0.0),
            lambda: NegBinomial(1.0, 1.5),
            lambda: Degenerate(-1),
            lambda: Gamma(0.0, 1.0),
            lambda: Gamma(1.0, -2.0),
            lambda: LogNormal(0.0, 0.0),
            lambda: LogNormal(math.nan, 1.0),
        ],
    )
    def test_bad_parameters_rejected(self, build):
        with pytest.raises(ValueError):
            build()

    def test_degenerate_zero_allowed(self):
        assert Degenerate(0).count == 0

    def test_negbinomial_p_endpoints_rejected(self):
        with pytest.raises(ValueError):
            NegBinomial(3.0, 1.0)

    def test_negbinomial_paper_calibration_moments(self):
        mean, var = frequency_moments(NegBinomial(1.0, 0.07))
        assert mean == pytest.approx(0.93 / 0.07, rel=1e-12)
        assert var / mean == pytest.approx(1 / 0.07, rel=1e-12)


class TestMoments:
    def test_poisson(self):
        assert frequency_moments(Poisson(4.5)) == (4.5, 4.5)

    def test_negbinomial_overdispersion(self):
        mean, var = frequency_moments(NegBinomial(2.0, 0.25))
        assert mean == pytest.approx(2.0 * 0.75 / 0.25)
        assert var == pytest.approx(mean / 0.25)

    def test_degenerate(self):
        assert frequency_moments(Degenerate(7)) == (7.0, 0.0)

    def test_gamma(self):
        mean, var = severity_moments(Gamma(2.0, 3.0))
        assert mean == pytest.approx(6.0)
        assert var == pytest.approx(18.0)

    def test_lognormal(self):
        mu, sigma = 1.2, 0.7
        mean, var = severity_moments(LogNormal(mu, sigma))
        assert mean == pytest.approx(math.exp(mu + sigma**2 / 2))
        assert var == pytest.approx((math.exp(sigma**2) - 1) * math.exp(2 * mu + sigma**2))

    @given(
        st.floats(min_value=0.1, max_value=50.0),
        st.floats(min_value=0.05, max_value=0.95),
        st.floats(min_value=0.1, max_value=5.0),
        st.floats(min_value=0.1, max_value=5.0),
    )
    def test_wald_identities(self, r, p, shape, scale):
        spec = CompoundSpec(NegBinomial(r, p), Gamma(shape, scale))
        fm, fv = frequency_moments(spec.frequency)
        sm, sv = severity_moments(spec.severity)
        mean, var = compound_moments(spec)
        assert mean == pytest.approx(fm * sm, rel=1e-12)
        assert var == pytest.approx(fm * sv + fv * sm**2, rel=1e-12)

    def test_lognormal_from_mean_inverts(self):
        model = lognormal_from_mean(30.0, 1.5)
        mean, _ = severity_moments(model)
        assert mean == pytest.approx(30.0, rel=1e-12)
        assert model.sigma == 1.5


class TestSampling:
    def test_degenerate_consumes_no_randomness(self):
        consuming = RandomStream(77)
        untouched = RandomStream(77)
        assert sample_frequency(Degenerate(9), consuming) == 9
        assert consuming.generator.random() == untouched.generator.random()

    def test_zero_count_gives_zero_sum(self):
        spec = CompoundSpec(Degenerate(0), Gamma(2.0, 3.0))
        assert sample_compound(spec, RandomStream(1)) == 0.0

    def test_sample_severity_positive(self):
        stream = RandomStream(3)
        for model in (Gamma(0.5, 2.0), LogNormal(0.0, 1.0)):
            assert sample_severity(model, stream) > 0

    def test_scalar_sampling_is_deterministic(self):
        spec = CompoundSpec(Poisson(4.0), LogNormal(0.2, 0.9))
        a = [sample_compound(spec, RandomStream(11).child(i)) for i in range(20)]
        b = [sample_compound(spec, RandomStream(11).child(i)) for i in range(20)]
        assert a == b

    def test_batch_shape_and_determinism(self):
        spec = CompoundSpec(NegBinomial(1.0, 0.3), Gamma(2.0, 1.0))
        out1 = sample_compound_batch(spec, RandomStream(5), 1000)
        out2 = sample_compound_batch(spec, RandomStream(5), 1000)
        assert out1.shape == (1000,)
        assert np.array_equal(out1, out2)

    def test_batch_negative_size_rejected(self):
        spec = CompoundSpec(Poisson(1.0), Gamma(1.0, 1.0))
        with pytest.raises(ValueError):
            sample_compound_batch(spec, RandomStream(5), -1)

    @pytest.mark.parametrize(
        "spec",
        [
            CompoundSpec(Poisson(5.0), Gamma(2.0, 3.0)),
            CompoundSpec(NegBinomial(1.0, 0.07), LogNormal(-0.311, 1.5)),
            CompoundSpec(Degenerate(3), Gamma(1.5, 2.0)),
            CompoundSpec(Poisson(2.0), LogNormal(0.5, 0.8)),
        ],
    )
    def test_batch_mean_within_four_standard_errors(self, spec):
        size = 40000
        mean, var = compound_moments(spec)
        draws = sample_compound_batch(spec, RandomStream(2026).child(repr(spec)), size)
        se = math.sqrt(var / size)
        assert abs(float(draws.mean()) - mean) < 4 * se


class TestTokenPricing:
    def card(self):
        return TokenRateCard(
            input_rate=3e-6,
            output_rates={"fast": 5e-6, "frontier": 25e-6},
            tool_rates={"search": 0.01, "code": 0.002},
        )

    def test_exact_arithmetic(self):
        event = UsageEvent(1000, 500, "frontier", ("search", "code"))
        expected = 1000 * 3e-6 + 500 * 25e-6 + 0.01 + 0.002
        assert token_severity(self.card(), event) == pytest.approx(expected, rel=1e-15)

    def test_tools_billed_per_occurrence(self):
        once = token_severity(self.card(), UsageEvent(0, 0, "fast", ("search",)))
        twice = token_severity(self.card(), UsageEvent(0, 0, "fast", ("search", "search")))
        assert twice == pytest.approx(2 * once)

    def test_unknown_model_class_named_in_error(self):
        with pytest.raises(ValueError, match="slow"):
            token_severity(self.card(), UsageEvent(1, 1, "slow"))

    def test_unknown_tool_named_in_error(self):
        with pytest.raises(ValueError, match="browser"):
            token_severity(self.card(), UsageEvent(1, 1, "fast", ("browser",)))

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            UsageEvent(-1, 0, "fast")

    def test_negative_rates_rejected(self):
        with pytest.raises(ValueError):
            TokenRateCard(-1e-6, {}, {})
        with pytest.raises(ValueError):
            TokenRateCard(0.0, {"fast": -1.0}, {})
