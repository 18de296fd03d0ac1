import math

import numpy as np
import pytest

from slowfast.errors import DomainError, EvaluationError
from slowfast.model import (
    ModelSpec,
    builtin_model,
    check_dissipativity,
    linear_model,
    nemytskii_F,
    nemytskii_G,
    potential_U,
    tanh_model,
    zero_model,
)
from slowfast.spectral import SpectralField, power_law_field, to_grid


def _model(f=None, g=None, **kw):
    zero = lambda xi, x, y: 0.0 * (xi + x + y)
    return ModelSpec(name="custom", f=f or zero, g=g or zero, **kw)


def _random_pair(rng, n=24):
    k = np.arange(1, n + 1)
    return SpectralField(rng.standard_normal(n) / k), SpectralField(rng.standard_normal(n) / k)


def test_zero_reaction_gives_zero_field():
    x, y = _random_pair(np.random.default_rng(0))
    assert nemytskii_F(zero_model(), x, y) == SpectralField.zeros(24)


def test_constant_one_sine_coefficients():
    n = 64
    m = _model(f=lambda xi, x, y: np.ones_like(xi + x + y))
    c = nemytskii_F(m, SpectralField.zeros(n), SpectralField.zeros(n)).coeffs
    # discrete sine series of 1: sqrt(2)/(N+1) cot(k pi / (2(N+1))) on odd k, 0 on even k
    k = np.arange(1, n + 1)
    expected = np.where(k % 2 == 1, math.sqrt(2) / (n + 1) / np.tan(k * np.pi / (2 * (n + 1))), 0.0)
    np.testing.assert_allclose(c, expected, atol=1e-13)
    # continuum limit of the leading coefficient is 2 sqrt(2) / pi
    assert c[0] == pytest.approx(0.9003163161571062, abs=2e-4)


def test_identity_in_second_argument():
    m = _model(f=lambda xi, x, y: y)
    e1 = SpectralField.mode(1, 16)
    np.testing.assert_allclose(nemytskii_F(m, SpectralField.zeros(16), e1).coeffs, e1.coeffs, atol=1e-15)


def test_bounded_reaction_gives_bounded_grid_values():
    rng = np.random.default_rng(1)
    m = tanh_model()
    for _ in range(10):
        x, y = _random_pair(rng)
        y = 20.0 * y
        assert np.max(np.abs(to_grid(nemytskii_F(m, x, y)).values)) <= 1.0 + 1e-12


def test_non_finite_reaction_names_the_point():
    m = _model(f=lambda xi, x, y: np.where(xi > 0.5, np.inf, 0.0))
    with pytest.raises(EvaluationError, match="xi="):
        nemytskii_F(m, SpectralField.zeros(7), SpectralField.zeros(7))


def test_padding_changes_little_for_smooth_fields():
    rng = np.random.default_rng(2)
    k = np.arange(1, 33)
    x, y = SpectralField(rng.standard_normal(32) / k**3), SpectralField(rng.standard_normal(32) / k**3)
    a = nemytskii_F(tanh_model(), x, y)
    b = nemytskii_F(ModelSpec(**{**tanh_model().__dict__, "padding": True}), x, y)
    assert (a - b).norm() < 1e-3


def test_potential_examples():
    m = _model(g=lambda xi, x, y: -1.0 * y + 0.0 * (xi + x))
    e1 = SpectralField.mode(1, 8)
    assert potential_U(m, SpectralField.zeros(8), e1) == pytest.approx(-0.5, rel=1e-13)
    x, _ = _random_pair(np.random.default_rng(3), 8)
    assert potential_U(tanh_model(), x, SpectralField.zeros(8)) == 0.0
    assert potential_U(zero_model(), x, 3.0 * e1) == 0.0
    with pytest.raises(DomainError):
        potential_U(m, x, e1, quad_points=1)


@pytest.mark.parametrize("name", ["zero", "linear", "tanh"])
def test_fast_drift_is_gradient_of_potential(name):
    m = builtin_model(name)
    rng = np.random.default_rng(4)
    fd = 1e-5
    for _ in range(5):
        x, y = _random_pair(rng)
        h = SpectralField(rng.standard_normal(24))
        h = h * (1.0 / h.norm())
        up = potential_U(m, x, y + fd * h, quad_points=16)
        dn = potential_U(m, x, y - fd * h, quad_points=16)
        slope = (up - dn) / (2 * fd)
        exact = nemytskii_G(m, x, y).inner(h)
        assert abs(slope - exact) <= 1e-5 * max(abs(exact), 1e-8)


def test_dissipativity_examples():
    mu = math.pi**2
    rep = check_dissipativity(_model(g=lambda xi, x, y: -y + 0.0 * (xi + x)))
    assert rep.strict
    assert rep.margin == pytest.approx(mu - 1.0, rel=1e-8)
    rep = check_dissipativity(_model(g=lambda xi, x, y: 10.0 * np.sin(y) + 0.0 * (xi + x)), scan_resolution=41)
    assert not rep.strict
    assert rep.lipschitz_estimate == pytest.approx(10.0, rel=1e-6)
    rep = check_dissipativity(zero_model())
    assert rep.strict
    assert rep.margin == pytest.approx(mu, rel=1e-14)
    assert rep.weak_constants == (mu / 2, 0.0)


def test_declared_bound_is_validated():
    ok = check_dissipativity(tanh_model(1.0))
    assert ok.declared_consistent and ok.lipschitz_used == 1.0
    assert ok.margin == pytest.approx(math.pi**2 - 1.0, rel=1e-12)
    low = check_dissipativity(_model(g=lambda xi, x, y: -2 * y + 0.0 * (xi + x), g_y_sup=1.0))
    assert not low.declared_consistent
    assert low.lipschitz_used == pytest.approx(2.0, rel=1e-8)


def test_scan_refinement_is_stable():
    m = _model(g=lambda xi, x, y: 3.0 * np.sin(y) * np.cos(x) + 0.0 * xi)
    coarse = check_dissipativity(m, scan_resolution=41).lipschitz_estimate
    fine = check_dissipativity(m, scan_resolution=81).lipschitz_estimate
    assert abs(fine - coarse) < 0.01 * fine


def test_weak_dissipativity_constant_holds_on_fresh_samples():
    m = tanh_model()
    rep = check_dissipativity(m, seed=0)
    c, big_c = rep.weak_constants
    rng = np.random.default_rng(99)
    mu_k = m.op_B.eigenvalues(32)
    for _ in range(50):
        x = SpectralField(3 * rng.standard_normal(32) / np.arange(1, 33))
        y = SpectralField(3 * rng.standard_normal(32) / np.arange(1, 33))
        lhs = float(np.sum(-mu_k * y.coeffs**2)) + nemytskii_G(m, x, y).inner(y)
        # analytic: <By + G, y> <= -(mu+kappa)|y|^2 + |sin x||y| so C = 1/(4(mu/2+kappa)) suffices
        assert lhs <= -c * y.norm() ** 2 + max(big_c, 1 / (4 * (c + 1)))


def test_scan_errors():
    with pytest.raises(DomainError):
        check_dissipativity(zero_model(), scan_box={"y": (1.0, 1.0)})
    with pytest.raises(EvaluationError), np.errstate(invalid="ignore", divide="ignore"):
        check_dissipativity(_model(g=lambda xi, x, y: np.log(y) + 0.0 * (xi + x)))


def test_builtin_registry():
    assert builtin_model("linear", 2.0).kappa == 2.0
    assert builtin_model("zero").name == "zero"
    assert tanh_model().linear_in_y and linear_model().linear_in_y
    with pytest.raises(DomainError):
        builtin_model("cubic")
    with pytest.raises(DomainError):
        linear_model(0.0)


def test_power_law_initial_field():
    x = power_law_field(5, 3.0, 2.0)
    np.testing.assert_allclose(x.coeffs, 2.0 / np.arange(1, 6) ** 3)
