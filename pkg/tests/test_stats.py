import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from breathsync import stats

mpmath.mp.dps = 40


def mp_f_sf(f, d1, d2):
    x = mpmath.mpf(d1) * f / (d1 * f + d2)
    return float(1 - mpmath.betainc(mpmath.mpf(d1) / 2, mpmath.mpf(d2) / 2, 0, x, regularized=True))


def mp_t_sf2(t, df):
    x = mpmath.mpf(df) / (df + mpmath.mpf(t) ** 2)
    return float(mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, x, regularized=True))


def mp_t_sf2_quad(t, df):
    """Two-sided tail by integrating the t density directly."""
    nu = mpmath.mpf(df)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    dens = lambda u: c * (1 + u * u / nu) ** (-(nu + 1) / 2)
    return float(2 * mpmath.quad(dens, [abs(t), abs(t) + 10, mpmath.inf]))


F_GRID = list(itertools.product([0.05, 0.5, 1.0, 3.0, 5.228, 12.0, 40.0], [1, 2, 3, 5], [4, 6, 20, 72, 200]))
T_GRID = list(itertools.product([0.0, 0.3, 1.2247, 2.0, 3.5, 8.0], [1, 2, 4, 10, 36, 72.5, 300]))


@pytest.mark.parametrize("f,d1,d2", F_GRID)
def test_f_sf_matches_high_precision_beta(f, d1, d2):
    assert abs(stats.f_sf(f, d1, d2) - mp_f_sf(f, d1, d2)) <= 1e-9


@pytest.mark.parametrize("t,df", T_GRID)
def test_t_sf_matches_high_precision_beta(t, df):
    assert abs(stats.t_sf_two_sided(t, df) - mp_t_sf2(t, df)) <= 1e-9


@pytest.mark.parametrize("t,df", [(0.5, 3), (1.2247, 4), (2.5, 36), (4.0, 10)])
def test_t_sf_matches_density_quadrature(t, df):
    assert abs(stats.t_sf_two_sided(t, df) - mp_t_sf2_quad(t, df)) <= 1e-9


@given(st.floats(0.01, 0.99), st.floats(0.5, 200), st.floats(0.5, 200))
def test_betainc_matches_mpmath(x, a, b):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert abs(stats.betainc_reg(a, b, x) - ref) <= 1e-9


def test_anova_fixture():
    r = stats.one_way_anova([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert abs(r.f_stat - 3.0) < 1e-9
    assert (r.df_between, r.df_within) == (2, 6)
    assert abs(r.p_value - mp_f_sf(3.0, 2, 6)) < 1e-9


def test_anova_identical_groups_and_degenerate():
    r = stats.one_way_anova([[1.0, 2.0, 3.0]] * 3)
    assert r.f_stat == 0.0 and r.p_value == 1.0
    with pytest.raises(stats.DegenerateDataError):
        stats.one_way_anova([[2.0, 2.0], [2.0, 2.0]])
    with pytest.raises(stats.DegenerateDataError):
        stats.one_way_anova([[1.0], [2.0, 3.0]])


def test_anova_four_by_nineteen_df():
    rng = np.random.default_rng(0)
    r = stats.one_way_anova([rng.standard_normal(19) for _ in range(4)])
    assert (r.df_between, r.df_within) == (3, 72)


samples = st.lists(st.floats(-100, 100), min_size=2, max_size=20)


@given(samples, samples)
def test_anova_two_groups_equals_t_squared(a, b):
    if np.var(a + b) < 1e-6 or np.var(a) + np.var(b) < 1e-6:
        return
    f = stats.one_way_anova([a, b])
    t = stats.independent_t(a, b)
    assert f.f_stat == pytest.approx(t.statistic ** 2, rel=1e-9, abs=1e-9)
    assert f.p_value == pytest.approx(t.p_value, abs=1e-9)


@given(st.lists(samples, min_size=2, max_size=4), st.floats(-50, 50), st.floats(0.1, 10))
def test_anova_shift_and_scale_invariance(groups, c, k):
    if sum(np.var(g) for g in groups) < 1e-3:
        return
    r = stats.one_way_anova(groups)
    shifted = stats.one_way_anova([np.asarray(g) + c for g in groups])
    scaled = stats.one_way_anova([np.asarray(g) * k for g in groups])
    assert shifted.f_stat == pytest.approx(r.f_stat, rel=1e-6, abs=1e-9)
    assert shifted.p_value == pytest.approx(r.p_value, abs=1e-7)
    assert scaled.f_stat == pytest.approx(r.f_stat, rel=1e-6, abs=1e-9)


def test_student_t_fixture():
    r = stats.independent_t([1, 2, 3], [2, 3, 4])
    assert r.statistic == pytest.approx(-1.2247, abs=1e-4)
    assert r.df == 4
    assert r.p_value == pytest.approx(0.2879, abs=1e-4)
    assert abs(r.p_value - mp_t_sf2(r.statistic, 4)) < 1e-9


def test_t_identical_and_degenerate():
    r = stats.independent_t([1, 2, 3], [1, 2, 3])
    assert r.statistic == 0.0 and r.p_value == 1.0
    with pytest.raises(stats.DegenerateDataError):
        stats.independent_t([5, 5], [5, 5, 5])


@given(samples, samples, st.floats(0.1, 100), st.sampled_from(["student", "welch"]))
def test_t_scale_invariance(a, b, k, variant):
    if np.var(a) + np.var(b) < 1e-3:
        return
    r = stats.independent_t(a, b, variant)
    s = stats.independent_t(np.asarray(a) * k, np.asarray(b) * k, variant)
    assert s.statistic == pytest.approx(r.statistic, rel=1e-9, abs=1e-9)
    assert s.p_value == pytest.approx(r.p_value, abs=1e-9)


def test_welch_df_closed_form():
    a, b = [1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 9.0]
    r = stats.independent_t(a, b, "welch")
    va, vb = np.var(a, ddof=1) / 4, np.var(b, ddof=1) / 3
    df = (va + vb) ** 2 / (va ** 2 / 3 + vb ** 2 / 2)
    assert r.df == pytest.approx(df, rel=1e-12)
    assert r.method is stats.PairwiseMethod.WELCH_T


def brute_u(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def test_mann_whitney_examples():
    assert stats.mann_whitney_u([4, 5, 6], [1, 2, 3]).statistic == 9.0
    same = stats.mann_whitney_u([1, 2, 3, 4], [1, 2, 3, 4])
    assert same.statistic == 8.0 and same.p_value == pytest.approx(1.0)


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=19),
       st.lists(st.integers(-5, 5), min_size=1, max_size=19))
def test_mann_whitney_matches_pair_count_and_bounds(a, b):
    r = stats.mann_whitney_u(a, b)
    assert r.statistic == brute_u(a, b)
    assert 0 <= r.statistic <= len(a) * len(b)
    assert 0.0 <= r.p_value <= 1.0


# integer data keeps exp() strictly monotone in floating point
@given(st.lists(st.integers(-30, 30), min_size=2, max_size=19),
       st.lists(st.integers(-30, 30), min_size=2, max_size=19))
def test_mann_whitney_monotone_transform_invariance(a, b):
    r = stats.mann_whitney_u(a, b)
    s = stats.mann_whitney_u(np.exp(np.asarray(a) / 3), np.exp(np.asarray(b) / 3))
    assert r.statistic == s.statistic and r.p_value == s.p_value


def test_mann_whitney_normal_approximation_against_exact_tail():
    # no ties: normal approximation with continuity is close to the exact tail
    a = np.arange(19) + 0.5
    b = np.arange(19) + 6.25
    r = stats.mann_whitney_u(a, b)
    mu, sd = 19 * 19 / 2, math.sqrt(19 * 19 * 39 / 12)
    z = (abs(r.statistic - mu) - 0.5) / sd
    assert r.p_value == pytest.approx(math.erfc(z / math.sqrt(2)), abs=1e-12)


def test_box_stats_examples():
    b = stats.box_stats(range(1, 10))
    assert (b.median, b.q1, b.q3, b.whisker_lo, b.whisker_hi) == (5, 3, 7, 1, 9)
    assert b.outliers == []
    one = stats.box_stats([4.2])
    assert (one.median, one.q1, one.q3, one.whisker_lo, one.whisker_hi, one.outliers) == (4.2,) * 5 + ([],)
    assert stats.box_stats([1, 2, 3, 4, 100]).outliers == [100.0]


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_box_stats_partition(values):
    b = stats.box_stats(values)
    assert b.q1 <= b.median <= b.q3
    inside = [v for v in values if b.whisker_lo <= v <= b.whisker_hi]
    assert len(inside) + len(b.outliers) == len(values)
    iqr = b.q3 - b.q1
    assert b.whisker_lo >= b.q1 - 1.5 * iqr - 1e-9 and b.whisker_hi <= b.q3 + 1.5 * iqr + 1e-9


def test_z_outlier_filter_examples():
    vals = np.array([0, 0, 0, 0, 100.0])
    z = (vals - vals.mean()) / vals.std()
    assert z[-1] == pytest.approx(2.0)
    kept, removed = stats.z_outlier_filter(vals)
    assert removed.size == 0 and kept.size == 5
    kept, removed = stats.z_outlier_filter(np.r_[np.zeros(20), 100.0])
    assert removed.tolist() == [100.0]
    assert stats.z_outlier_filter([3.0] * 6)[1].size == 0
    assert stats.z_outlier_filter(np.linspace(-1, 1, 11))[1].size == 0


def test_significance_stars_legend():
    cases = [(0.2, ""), (0.1, "ns"), (0.06, "ns"), (0.05, "*"), (0.02, "*"), (0.01, "**"),
             (0.002, "**"), (0.001, "***"), (0.0002, "***"), (0.0001, "****"), (math.nan, "")]
    for p, mark in cases:
        assert stats.significance_stars(p) == mark
