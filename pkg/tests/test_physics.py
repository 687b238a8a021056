import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtopinn.errors import ConfigurationError
from mtopinn.physics import (GreenshieldsParams, ResidualForm, greenshields_flow, greenshields_speed,
                             residual, residual_density, residual_partials, residual_speed)

UNIT = GreenshieldsParams(1.0, 1.0)
pos = st.floats(0.05, 50.0)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("inf"), float("nan")])
def test_params_validated(bad):
    with pytest.raises(ConfigurationError):
        GreenshieldsParams(v_f=bad)
    with pytest.raises(ConfigurationError):
        GreenshieldsParams(k_j=bad)


@given(v_f=pos, k_j=pos)
def test_speed_and_flow_endpoints(v_f, k_j):
    p = GreenshieldsParams(v_f, k_j)
    assert greenshields_speed(0.0, p) == v_f
    assert greenshields_speed(k_j, p) == 0.0
    assert greenshields_speed(k_j / 2, p) == pytest.approx(v_f / 2, rel=1e-15)
    assert greenshields_flow(0.0, p) == 0.0
    assert greenshields_flow(k_j, p) == 0.0
    assert greenshields_flow(k_j / 2, p) == pytest.approx(p.capacity, rel=1e-14)


def test_flow_maximum_on_fine_scan():
    p = GreenshieldsParams(2.5, 0.3)
    k = np.linspace(0, p.k_j, 100001)
    q = greenshields_flow(k, p)
    assert k[np.argmax(q)] == pytest.approx(p.k_j / 2, abs=p.k_j / 1e5)
    assert q.max() == pytest.approx(p.v_f * p.k_j / 4, rel=1e-12)


def test_density_residual_examples():
    assert residual_density(0.4, 0.0, 0.0, UNIT) == 0.0
    assert residual_density(0.25, 1.0, 0.0, UNIT) == pytest.approx(0.5, abs=1e-15)


def test_speed_residual_examples():
    assert residual_speed(0.3, 0.0, 0.0, UNIT) == 0.0
    assert residual_speed(0.75, -1.0, 0.0, UNIT) == pytest.approx(0.5, abs=1e-15)


@given(v_f=pos, k_j=pos, k=st.floats(0, 1), kd=st.floats(-10, 10))
def test_density_residual_vanishes_along_characteristic(v_f, k_j, k, kd):
    p = GreenshieldsParams(v_f, k_j)
    k = k * k_j
    kt = -(v_f - 2 * v_f * k / k_j) * kd
    assert abs(residual_density(k, kd, kt, p)) <= 1e-12 * max(1.0, v_f * abs(kd))


def test_speed_residual_is_density_residual_under_substitution():
    rng = np.random.default_rng(5)
    n = 10_000
    v_f, k_j = rng.uniform(0.1, 3, n), rng.uniform(0.1, 3, n)
    p = GreenshieldsParams.__new__(GreenshieldsParams)
    object.__setattr__(p, "v_f", v_f)
    object.__setattr__(p, "k_j", k_j)
    k = rng.uniform(0, 1, n) * k_j
    kd, kt = rng.uniform(-2, 2, n), rng.uniform(-2, 2, n)
    lhs = residual_speed(v_f * (1 - k / k_j), -(v_f / k_j) * kd, -(v_f / k_j) * kt, p)
    rhs = residual_density(k, kd, kt, p)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.parametrize("form", list(ResidualForm))
def test_residual_linear_in_derivatives(form):
    rng = np.random.default_rng(1)
    p = GreenshieldsParams(1.7, 0.6)
    u = rng.uniform(0, 0.6, 50)
    a, b = rng.normal(size=(2, 50)), rng.normal(size=(2, 50))
    s = 1.9
    lhs = residual(form, u, a[0] + s * b[0], a[1] + s * b[1], p)
    rhs = residual(form, u, a[0], a[1], p) + s * residual(form, u, b[0], b[1], p)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("form", ["density", "speed"])
def test_partials_match_finite_differences(form):
    p = GreenshieldsParams(1.3, 0.8)
    x = np.array([0.35, -0.7, 0.4])
    parts = residual_partials(form, *x, p)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (residual(form, *(x + e), p) - residual(form, *(x - e), p)) / (2 * h)
        assert parts[i] == pytest.approx(fd, rel=1e-8, abs=1e-10)


def test_unknown_form():
    with pytest.raises(ValueError):
        residual("flow", 0.1, 0.0, 0.0, UNIT)
