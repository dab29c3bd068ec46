import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egvq import (
    ChannelStatsAccumulator,
    DegenerateProfileError,
    FeatureMatrix,
    SplitReport,
    compute_channel_stats,
    differential_entropy,
    entropy_split,
    variance_share,
)
from egvq.core import GroupPartition, VarianceProfile

from oracles import quantile_splits, scan_split, two_pass_stats

positive = st.floats(min_value=1e-6, max_value=1e6, allow_nan=False)
profiles = st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=2, max_size=200)


class TestChannelStats:
    def test_two_point(self):
        p = compute_channel_stats(FeatureMatrix([[1.0], [3.0]]))
        assert p.means.tolist() == [2.0]
        assert p.variances.tolist() == [1.0]
        assert p.frame_count == 2

    def test_constant_channel(self):
        p = compute_channel_stats(FeatureMatrix(np.full((4, 1), 5.0)))
        assert p.means.tolist() == [5.0]
        assert p.variances.tolist() == [0.0]

    def test_gaussian_population_variance(self):
        x = np.random.default_rng(0).normal(0.0, 2.0, size=(100_000, 1))
        p = compute_channel_stats(FeatureMatrix(x))
        assert abs(p.variances[0] - 4.0) < 0.1

    def test_divisor_is_t(self):
        x = np.random.default_rng(1).normal(size=(7, 3))
        p = compute_channel_stats(FeatureMatrix(x))
        np.testing.assert_allclose(p.variances, np.var(x, axis=0, ddof=0), rtol=1e-13)

    def test_chunked_matches_two_pass(self):
        x = np.random.default_rng(2).normal(1e6, 1.0, size=(10_000, 4))
        p = compute_channel_stats(FeatureMatrix(x), chunk_frames=777)
        mean, var = two_pass_stats(x)
        np.testing.assert_allclose(p.means, mean, rtol=1e-12)
        np.testing.assert_allclose(p.variances, var, rtol=1e-10)

    def test_merge_shards(self):
        x = np.random.default_rng(3).normal(5.0, 3.0, size=(1000, 6))
        a = ChannelStatsAccumulator(6).update(x[:123])
        b = ChannelStatsAccumulator(6).update(x[123:600]).update(x[600:])
        merged = a.merge(b).profile()
        mean, var = two_pass_stats(x)
        np.testing.assert_allclose(merged.means, mean, rtol=1e-13)
        np.testing.assert_allclose(merged.variances, var, rtol=1e-11)
        assert merged.frame_count == 1000

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            ChannelStatsAccumulator(3).update(np.zeros((2, 4)))


class TestDifferentialEntropy:
    def test_zero_entropy_point(self):
        assert differential_entropy(1.0 / (2 * math.pi * math.e)) == pytest.approx(0.0, abs=1e-15)

    def test_unit_variance(self):
        # 0.5*ln(2*pi*e) evaluated at 40 digits with mpmath
        assert differential_entropy(1.0) == pytest.approx(1.418938533204672741780329736405617639861, rel=1e-15)

    @pytest.mark.parametrize("v", [0.0, -1.0])
    def test_domain(self, v):
        with pytest.raises(ValueError):
            differential_entropy(v)

    @given(positive, positive)
    def test_strictly_monotone(self, a, b):
        if a == b:
            return
        lo, hi = sorted((a, b))
        assert differential_entropy(lo) < differential_entropy(hi)


class TestEntropySplit:
    def test_uniform(self):
        r = entropy_split(VarianceProfile.from_variances([1, 1, 1, 1]), 2)
        assert r.partition.groups == [(0, 2), (2, 4)]
        assert r.per_group_variance_share == (0.5, 0.5)

    def test_heavy_first_channel(self):
        variances = [4, 1, 1, 1, 1]
        assert scan_split(variances) == 1
        r = entropy_split(VarianceProfile.from_variances(variances), 2)
        assert r.partition.groups == [(0, 1), (1, 5)]
        assert r.per_group_variance_share == pytest.approx((0.5, 0.5))

    def test_reference_channel_counts(self):
        # channels 0..236 carry exactly half the total
        variances = [275.0] * 237 + [237.0] * 275
        r = entropy_split(VarianceProfile.from_variances(variances), 2)
        assert r.partition.boundaries == (237,)
        assert r.partition.sizes == [237, 275]

    def test_g1_identity(self):
        r = entropy_split(VarianceProfile.from_variances([3, 2, 1]), 1)
        assert r.partition.groups == [(0, 3)]
        assert r.per_group_variance_share == (1.0,)

    def test_zero_variance_profile(self):
        with pytest.raises(DegenerateProfileError, match="degenerate"):
            entropy_split(VarianceProfile.from_variances([0, 0, 0]), 2)

    def test_too_many_groups(self):
        with pytest.raises(ValueError):
            entropy_split(VarianceProfile.from_variances([1, 1]), 3)

    def test_coinciding_boundaries(self):
        with pytest.raises(DegenerateProfileError, match="nonempty"):
            entropy_split(VarianceProfile.from_variances([1, 100, 1, 1]), 4)

    def test_last_group_would_be_empty(self):
        with pytest.raises(DegenerateProfileError):
            entropy_split(VarianceProfile.from_variances([0, 0, 1]), 2)

    def test_four_way_extension(self):
        r = entropy_split(VarianceProfile.from_variances([1] * 8), 4)
        assert r.partition.boundaries == (2, 4, 6)
        assert r.extension
        assert not entropy_split(VarianceProfile.from_variances([1] * 8), 2).extension

    @settings(max_examples=300, deadline=None)
    @given(profiles)
    def test_minimal_against_scan(self, variances):
        expected = scan_split(variances)
        profile = VarianceProfile.from_variances(variances)
        if expected == len(variances):
            with pytest.raises(DegenerateProfileError):
                entropy_split(profile, 2)
        else:
            assert entropy_split(profile, 2).partition.boundaries == (expected,)

    @settings(max_examples=200, deadline=None)
    @given(profiles, st.integers(2, 5))
    def test_multi_group_against_scan(self, variances, g):
        if g > len(variances):
            return
        expected = quantile_splits(variances, g)
        profile = VarianceProfile.from_variances(variances)
        if len(set(expected)) != len(expected) or expected[-1] >= len(variances):
            with pytest.raises(DegenerateProfileError):
                entropy_split(profile, g)
            return
        r = entropy_split(profile, g)
        assert list(r.partition.boundaries) == expected
        assert [k for a, b in r.partition.groups for k in range(a, b)] == list(range(len(variances)))
        assert all(0 <= s <= 1 for s in r.per_group_variance_share)
        assert abs(sum(r.per_group_variance_share) - 1) < 1e-9

    @settings(max_examples=200, deadline=None)
    @given(profiles, st.sampled_from([0.5, 2.0, 4.0, 1024.0, 2.0**-10]))
    def test_scale_invariant(self, variances, c):
        if scan_split(variances) == len(variances):
            return
        a = entropy_split(VarianceProfile.from_variances(variances), 2)
        b = entropy_split(VarianceProfile.from_variances(np.asarray(variances) * c), 2)
        assert a.partition == b.partition

    @settings(max_examples=50, deadline=None)
    @given(profiles)
    def test_g1_always_identity(self, variances):
        r = entropy_split(VarianceProfile.from_variances(variances), 1)
        assert r.partition == GroupPartition(len(variances))


class TestVarianceShare:
    def test_uniform_half(self):
        assert variance_share(VarianceProfile.from_variances([2.0] * 6), 3) == (0.5, 0.5)

    def test_two_channel(self):
        assert variance_share(VarianceProfile.from_variances([3, 1]), 1) == (0.75, 0.25)

    @pytest.mark.parametrize("b", [0, 2, -1])
    def test_out_of_range(self, b):
        with pytest.raises(ValueError):
            variance_share(VarianceProfile.from_variances([3, 1]), b)


class TestSplitReportJson:
    def test_roundtrip(self):
        r = entropy_split(VarianceProfile.from_variances([4, 1, 1, 1, 1, 2, 2]), 2)
        doc = r.to_dict()
        assert set(doc) >= {"boundaries", "group_sizes", "shares", "total_variance"}
        assert SplitReport.from_json(r.to_json()) == r
