import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats as sps

from mtopinn.stats import betainc, t_two_sided_p, welch_t_test


def t_tail_by_quadrature(t, df):
    pdf = lambda x: math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2)) \
        * (1 + x * x / df) ** (-(df + 1) / 2)
    tail, _ = integrate.quad(pdf, abs(t), np.inf)
    return 2 * tail


def samples_hitting(t_target, n=6):
    """Equal-size, equal-variance groups give Welch df = 2(n-1) exactly."""
    base = np.array([0.1, -0.4, 0.25, 0.9, -0.6, 0.3])[:n]
    s2 = base.var(ddof=1)
    shift = t_target * math.sqrt(2 * s2 / n)
    return base + shift, base


def test_identical_samples():
    xs = [1.0, 2.0, 4.0, 7.0]
    r = welch_t_test(xs, xs)
    assert r.t == 0.0 and r.p == 1.0 and not r.significant


def test_reference_point_against_quadrature():
    xs, ys = samples_hitting(2.0)
    r = welch_t_test(xs, ys)
    assert r.t == pytest.approx(2.0, abs=1e-12)
    assert r.df == pytest.approx(10.0, abs=1e-9)
    oracle = t_tail_by_quadrature(2.0, 10)
    assert abs(r.p - oracle) < 1e-3
    assert r.p == pytest.approx(0.0734, abs=1e-3)


def test_swap_negates_t_keeps_p():
    rng = np.random.default_rng(3)
    xs, ys = rng.normal(0, 1, 8), rng.normal(0.5, 2, 5)
    a, b = welch_t_test(xs, ys), welch_t_test(ys, xs)
    assert a.t == -b.t and a.p == b.p and a.df == b.df


def test_matches_scipy_welch():
    rng = np.random.default_rng(9)
    for _ in range(30):
        xs = rng.normal(0, rng.uniform(0.1, 3), rng.integers(2, 15))
        ys = rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 3), rng.integers(2, 15))
        ours = welch_t_test(xs, ys)
        ref = sps.ttest_ind(xs, ys, equal_var=False)
        assert ours.t == pytest.approx(ref.statistic, rel=1e-10)
        assert ours.p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)


@settings(max_examples=200)
@given(a=st.floats(0.05, 60), b=st.floats(0.05, 60), x=st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-9, abs=1e-13)


@pytest.mark.parametrize("t,df", [(0.5, 3), (2.0, 10), (-3.1, 4.5), (10.0, 30), (1e-3, 1.2)])
def test_two_sided_p_against_quadrature(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(t_tail_by_quadrature(t, df), rel=1e-7, abs=1e-12)


def test_constant_groups():
    r = welch_t_test([1.0, 1.0], [2.0, 2.0])
    assert r.p == 0.0 and r.significant and r.t < 0


def test_undersized():
    with pytest.raises(ValueError):
        welch_t_test([1.0], [1.0, 2.0])


def test_betainc_domain():
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)
    with pytest.raises(ValueError):
        betainc(1, 1, 1.5)
