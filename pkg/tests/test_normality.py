import io
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from embstat.embeddings import EmbeddingTable
from embstat.errors import UndefinedCorrelationError
from embstat.normality import (census_of_means, histogram, mean_census, norm_cdf, norm_ppf,
                               normality_census, qq_points, shapiro_wilk, standardize,
                               write_histogram_csv, write_qq_csv)

scipy_stats = pytest.importorskip("scipy.stats")


def normal_quantile_sample(n):
    return np.array([norm_ppf((i - 0.5) / n) for i in range(1, n + 1)])


class TestNormPpf:
    def test_median(self):
        assert norm_ppf(0.5) == 0.0

    def test_upper_975(self):
        assert abs(norm_ppf(0.975) - 1.959964) < 1e-6

    def test_against_reference(self):
        p = np.concatenate([np.linspace(1e-12, 1 - 1e-12, 2001), [1e-300, 1e-20, 0.02425]])
        ours = np.array([norm_ppf(v) for v in p])
        np.testing.assert_allclose(ours, scipy_stats.norm.ppf(p), rtol=1e-13, atol=1e-13)

    def test_endpoints(self):
        assert norm_ppf(0.0) == -math.inf and norm_ppf(1.0) == math.inf
        with pytest.raises(ValueError):
            norm_ppf(1.5)

    @given(st.integers(1, 2 ** 52 - 1))
    def test_symmetry(self, k):
        # p = k / 2^53 makes 1 - p exact, so the pair is truly complementary
        p = k / 2.0 ** 53
        assert abs(norm_ppf(p) + norm_ppf(1.0 - p)) <= 1e-12

    @given(st.floats(-8, 0))
    def test_cdf_inverts(self, z):
        # lower tail only: near 1 the cdf itself has lost the digits
        assert abs(norm_ppf(norm_cdf(z)) - z) < 1e-9


class TestShapiroWilk:
    def test_reference_small_sample(self):
        x = [1, 2, 2, 3, 3, 3, 4, 4, 5]
        ref = scipy_stats.shapiro(x)
        res = shapiro_wilk(x)
        assert res.n == 9
        assert abs(res.w_statistic - ref.statistic) < 1e-4
        assert abs(res.p_value - ref.pvalue) < 1e-4

    @pytest.mark.parametrize("n", [3, 4, 5, 6, 7, 11, 12, 20, 50, 300, 1000, 5000])
    def test_matches_reference_across_sizes(self, n):
        rng = np.random.default_rng(n)
        for dist in (rng.normal, rng.standard_exponential, rng.uniform):
            x = dist(size=n)
            ref = scipy_stats.shapiro(x)
            res = shapiro_wilk(x)
            assert abs(res.w_statistic - ref.statistic) < 1e-6
            assert abs(res.p_value - ref.pvalue) < 1e-5

    def test_null_acceptance_rate(self):
        rng = np.random.default_rng(20240)
        kept = sum(shapiro_wilk(rng.normal(size=300)).p_value >= 0.05 for _ in range(1000))
        assert kept >= 900

    def test_heavy_outlier_rejected(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=300)
        x[0] = 20.0
        res = shapiro_wilk(x)
        assert res.p_value < 0.05
        assert abs(res.p_value - scipy_stats.shapiro(x).pvalue) < 1e-6

    @pytest.mark.parametrize("bad", [[1.0, 2.0], np.arange(5001.0)])
    def test_size_range(self, bad):
        with pytest.raises(ValueError):
            shapiro_wilk(bad)

    def test_constant(self):
        with pytest.raises(UndefinedCorrelationError):
            shapiro_wilk([2.0, 2.0, 2.0, 2.0])

    def test_near_perfect_normal(self):
        res = shapiro_wilk(normal_quantile_sample(300))
        assert 0.999 < res.w_statistic <= 1.0
        assert res.p_value > 0.99

    @given(arrays(np.float64, st.integers(3, 200),
                  elements=st.floats(-100, 100).map(lambda v: round(v, 4))),
           st.floats(0.01, 100), st.floats(-100, 100))
    def test_affine_invariance(self, x, a, b):
        assume(np.ptp(x) > 1e-2)
        r1, r2 = shapiro_wilk(x), shapiro_wilk(a * x + b)
        assert abs(r1.w_statistic - r2.w_statistic) < 1e-10
        assert abs(r1.p_value - r2.p_value) < 1e-10

    @given(arrays(np.float64, st.integers(3, 300),
                  elements=st.floats(-100, 100).map(lambda v: round(v, 4))))
    def test_bounds(self, x):
        assume(np.ptp(x) > 0)
        res = shapiro_wilk(x)
        assert 0 < res.w_statistic <= 1 + 1e-12
        assert 0.0 <= res.p_value <= 1.0


@pytest.fixture(scope="module")
def passing():
    x = normal_quantile_sample(50)
    assert shapiro_wilk(x).p_value >= 0.05
    return x


@pytest.fixture(scope="module")
def failing():
    x = np.exp(np.linspace(0, 8, 50))
    assert shapiro_wilk(x).p_value < 0.001
    return x


class TestCensus:
    def test_all_pass(self, passing):
        assert normality_census([passing] * 10).proportion == 1.0

    def test_all_fail(self, failing):
        assert normality_census([failing] * 10, alpha=0.05).proportion == 0.0

    def test_mixed(self, passing, failing):
        rep = normality_census([passing] * 3 + [failing] * 7)
        assert rep.proportion == 0.3
        assert (rep.total, rep.not_rejected) == (10, 3)

    def test_is_mean_of_indicators(self):
        rng = np.random.default_rng(11)
        vecs = [rng.standard_t(df, size=120) for df in rng.integers(1, 30, size=40)]
        expected = np.mean([shapiro_wilk(v).p_value >= 0.05 for v in vecs])
        assert normality_census(vecs).proportion == expected

    def test_untestable_counted_separately(self, passing):
        rep = normality_census([passing, np.zeros(50)])
        assert (rep.total, rep.untestable, rep.proportion) == (1, 1, 1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            normality_census([])

    def test_bad_alpha(self, passing):
        with pytest.raises(ValueError):
            normality_census([passing], alpha=1.0)


class TestMeanCensus:
    def test_counting(self):
        means = [0.0, 0.01, -0.01, 0.2]
        table = EmbeddingTable(tuple("abcd"), np.array([[m, m] for m in means]))
        mc = mean_census(table, 0.05)
        assert mc.fraction == 0.25
        assert mc.histogram.counts.sum() == 4
        assert len(mc.histogram.counts) == 100

    def test_all_zero(self):
        table = EmbeddingTable(("a", "b"), np.zeros((2, 3)))
        assert mean_census(table).fraction == 0.0

    def test_threshold(self):
        with pytest.raises(ValueError):
            census_of_means([0.1], 0.0)

    def test_fixed_width_over_range(self):
        h = histogram(np.linspace(-1, 3, 57))
        assert h.edges[0] == -1 and h.edges[-1] == 3
        np.testing.assert_allclose(np.diff(h.edges), 0.04)

    def test_to_dict(self):
        d = census_of_means([0.0, 0.1], 0.05).to_dict()
        assert d["fraction"] == 0.5 and len(d["histogram"]) == 100


class TestStandardize:
    def test_two_points(self):
        np.testing.assert_allclose(standardize([1, 3]), [-math.sqrt(0.5), math.sqrt(0.5)],
                                   rtol=1e-15)

    def test_idempotent(self):
        z = standardize(np.random.default_rng(2).normal(3, 5, size=100))
        np.testing.assert_allclose(standardize(z), z, atol=1e-12)
        assert abs(z.mean()) < 1e-12 and abs(z.std(ddof=1) - 1) < 1e-12

    def test_constant(self):
        with pytest.raises(UndefinedCorrelationError):
            standardize([2, 2, 2])


class TestQQ:
    def test_normal_quantiles_close(self):
        pts = qq_points(normal_quantile_sample(300))
        assert np.max(np.abs(pts[:, 0] - pts[:, 1])) < 0.05

    def test_positions(self):
        pts = qq_points([3.0, 1.0, 2.0, 10.0])
        expected = scipy_stats.norm.ppf((np.arange(1, 5) - 0.5) / 4)
        np.testing.assert_allclose(pts[:, 0], expected, atol=1e-14)

    @given(arrays(np.float64, st.integers(3, 100),
                  elements=st.floats(-100, 100).map(lambda v: round(v, 4))))
    def test_monotone(self, x):
        assume(np.ptp(x) > 0)
        pts = qq_points(x)
        assert np.all(np.diff(pts[:, 0]) > 0)
        assert np.all(np.diff(pts[:, 1]) >= 0)

    def test_csv(self):
        buf = io.StringIO()
        write_qq_csv(qq_points([1.0, 2.0, 4.0]), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "x,y" and len(lines) == 4

    def test_histogram_csv(self):
        buf = io.StringIO()
        write_histogram_csv(histogram([0.0, 1.0, 1.0], bins=2), buf)
        assert buf.getvalue().splitlines() == ["bin_left,bin_right,count", "0.0,0.5,1",
                                               "0.5,1.0,2"]
