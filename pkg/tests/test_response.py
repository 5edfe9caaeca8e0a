import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbstorus.dynamics import get_map, perturbed_cat_family, perturbed_doubling_family
from gibbstorus.errors import NonInvertible
from gibbstorus.gibbs import GibbsMeasure
from gibbstorus.potentials import parse_potential, zero
from gibbstorus.response import (ResponseConfig, fd_measure_derivative, fd_pressure_curve,
                                 fit_decay_ratio, integration_by_parts_check, measure_derivative,
                                 pressure_derivative, response_observable_A)
from gibbstorus.spectral import assemble


@settings(max_examples=30)
@given(st.floats(0.05, 0.95), st.floats(0.1, 10))
def test_decay_ratio_of_geometric_sequence(r, scale):
    terms = scale * r ** np.arange(12)
    assert abs(fit_decay_ratio(terms) - r) < 1e-8


def test_decay_ratio_of_vanishing_sequence():
    assert fit_decay_ratio(np.r_[1.0, np.zeros(10)]) == 0.0


@pytest.fixture(scope="module")
def cat_family():
    pot = parse_potential("fourier(0.3*cos(1,0))")
    cfg = ResponseConfig(perturbed_cat_family(0.0), pot)
    mu = GibbsMeasure(assemble(cfg.tmap, pot, N=10))
    return cfg, mu


def test_pressure_derivative_matches_difference_quotient(cat_family):
    cfg, mu = cat_family
    h = pressure_derivative(cfg, mu)
    _, _, slope = fd_pressure_curve(cfg, 1e-3, N=10)
    assert abs(h - slope) < 1e-6 * max(1.0, abs(slope))


@pytest.mark.filterwarnings("ignore::gibbstorus.errors.ProjectionLoss")
def test_pointwise_A_averages_to_pressure_derivative(cat_family):
    cfg, mu = cat_family
    h = pressure_derivative(cfg, mu)
    A = lambda x: response_observable_A(cfg, x)  # noqa: E731
    assert abs(mu.integrate(A) - h) < 1e-5


def test_pressure_derivative_expanding_family():
    pot = parse_potential("fourier(0.5*cos(1))", get_map("doubling"))
    cfg = ResponseConfig(perturbed_doubling_family(0.0), pot)
    mu = GibbsMeasure(assemble(cfg.tmap, pot, N=24))
    _, _, slope = fd_pressure_curve(cfg, 1e-3, N=24)
    assert abs(pressure_derivative(cfg, mu) - slope) < 1e-6


def test_measure_derivative_matches_difference_quotient(cat_family):
    cfg, mu = cat_family
    psi = lambda x: np.cos(2 * np.pi * x[..., 1]) + 0.3 * np.sin(2 * np.pi * x[..., 0])  # noqa: E731
    rep = measure_derivative(cfg, mu, psi)
    fd = fd_measure_derivative(cfg, psi, 1e-3, N=10)
    assert abs(rep.value - fd) < 1e-3 * abs(fd)


def test_constant_observable_has_zero_derivative(cat_family):
    cfg, mu = cat_family
    rep = measure_derivative(cfg, mu, lambda x: np.full(x.shape[:-1], 2.5))
    assert abs(rep.value) < 1e-8


def test_measure_derivative_needs_invertible_map():
    pot = zero(1)
    cfg = ResponseConfig(perturbed_doubling_family(0.0), pot)
    mu = GibbsMeasure(assemble(cfg.tmap, pot, N=8))
    with pytest.raises((ValueError, NonInvertible)):
        measure_derivative(cfg, mu, lambda x: np.cos(2 * np.pi * x[..., 0]))


def test_integration_by_parts(cat):
    psi = lambda x: np.cos(2 * np.pi * x[..., 0]) + 0.5 * np.sin(2 * np.pi * (x[..., 0] + x[..., 1]))  # noqa: E731
    v = lambda x: 0.2 * np.stack([np.sin(2 * np.pi * x[..., 1]), np.cos(2 * np.pi * x[..., 0])], -1)  # noqa: E731
    assert integration_by_parts_check(cat, zero(), [0.3, 0.4], v, psi) < 1e-5


def test_constant_potential_gives_zero_A():
    cfg = ResponseConfig(perturbed_cat_family(0.0), parse_potential("const(0.7)"))
    x = np.random.default_rng(2).random((6, 2))
    assert np.allclose(response_observable_A(cfg, x), 0.0, atol=1e-12)


def test_zero_field_integration_by_parts(cat):
    psi = lambda x: np.cos(2 * np.pi * x[..., 0])  # noqa: E731
    assert integration_by_parts_check(cat, zero(), [0.3, 0.4], lambda x: np.zeros_like(x), psi) < 1e-12


def test_potential_only_family_on_doubling():
    # fixed doubling map, phi_lam = lam cos(2 pi x): h'(0) = Lebesgue average of cos = 0
    tmap = get_map("doubling")
    fam = perturbed_doubling_family(0.0)
    fixed = type(fam)(tmap, lambda lam, x: tmap.lift(x), lambda x: np.zeros_like(x), lambda lam: tmap)
    cfg = ResponseConfig(fixed, zero(1), pot_derivative=parse_potential("fourier(1*cos(1))", tmap).w1)
    mu = GibbsMeasure(assemble(tmap, zero(1), N=8))
    assert abs(pressure_derivative(cfg, mu)) < 1e-8
