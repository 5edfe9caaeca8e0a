import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbstorus.dynamics import apply, get_map
from gibbstorus.errors import EmptyCut
from gibbstorus.gibbs import (GibbsMeasure, ball_bound_ratio, correlation_model,
                              correlation_residuals, sample_gibbs_points)
from gibbstorus.oracles import periodic_orbit_measure
from gibbstorus.potentials import parse_potential
from gibbstorus.spectral import assemble


@pytest.fixture(scope="module")
def doubling_mu():
    tmap = get_map("doubling")
    pot = parse_potential("fourier(0.5*cos(1))", tmap)
    return tmap, pot, GibbsMeasure(assemble(tmap, pot, N=24))


@pytest.fixture(scope="module")
def cat_mu():
    tmap = get_map("cat")
    pot = parse_potential("fourier(0.3*cos(1,0))", tmap)
    return tmap, pot, GibbsMeasure(assemble(tmap, pot, N=8))


def test_probability(doubling_mu, cat_mu):
    for _, _, mu in (doubling_mu, cat_mu):
        assert abs(mu.integrate(lambda x: np.ones(x.shape[:-1])) - 1) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(-3, 3), st.floats(0, 1))
def test_invariance(k, shift):
    # mu(psi o T) = mu(psi) for a trigonometric psi
    tmap = get_map("doubling")
    pot = parse_potential("fourier(0.5*cos(1))", tmap)
    mu = _cached(tmap, pot)
    psi = lambda x: np.cos(2 * np.pi * (k * x[..., 0] + shift))  # noqa: E731
    a = mu.integrate(psi)
    b = mu.integrate(lambda x: psi(apply(tmap, x)))
    assert abs(a - b) < 1e-10


_CACHE = {}


def _cached(tmap, pot):
    key = (tmap.name, pot.descriptor)
    if key not in _CACHE:
        _CACHE[key] = GibbsMeasure(assemble(tmap, pot, N=24))
    return _CACHE[key]


def test_positive_observable_has_positive_average(doubling_mu):
    _, _, mu = doubling_mu
    assert mu.integrate(lambda x: (1 + np.cos(2 * np.pi * x[..., 0])) ** 2) > 0


def test_average_matches_periodic_orbits(doubling_mu):
    tmap, pot, mu = doubling_mu
    psi = lambda x: np.cos(2 * np.pi * x[..., 0])  # noqa: E731
    rep = periodic_orbit_measure(tmap, pot, 14, psi)
    assert abs(rep.estimate - mu.integrate(psi)) < 1e-4
    assert abs(rep.extra["pressure"] - mu.pressure) < 0.01


def test_correlation_at_zero_is_product_average(doubling_mu):
    _, _, mu = doubling_mu
    f = lambda x: np.sin(2 * np.pi * x[..., 0])  # noqa: E731
    g = lambda x: np.cos(4 * np.pi * x[..., 0])  # noqa: E731
    assert abs(mu.correlation(f, g, 0) - mu.integrate(lambda x: f(x) * g(x))) < 1e-12


def test_correlation_model_residuals(doubling_mu):
    _, _, mu = doubling_mu
    cm = correlation_model(mu, 0.1)
    f = lambda x: np.exp(np.sin(2 * np.pi * x[..., 0]))  # noqa: E731
    g = lambda x: np.cos(2 * np.pi * x[..., 0])  # noqa: E731
    fit = correlation_residuals(mu, cm, f, g, 20)
    assert np.all(fit.residuals <= fit.C * 0.1 ** np.arange(21) + 1e-12)


def test_empty_cut(doubling_mu):
    _, _, mu = doubling_mu
    with pytest.raises(EmptyCut):
        correlation_model(mu, 1.5)


def test_ball_ratio_is_bounded(doubling_mu):
    tmap, pot, mu = doubling_mu
    vals = [ball_bound_ratio(mu, tmap, pot, np.array([0.37]), 0.2, n) for n in (3, 6, 9)]
    assert max(vals) / min(vals) < 20


def test_sampled_points_reproduce_averages(doubling_mu):
    tmap, pot, mu = doubling_mu
    pts = sample_gibbs_points(mu, tmap, pot, 20000, np.random.default_rng(3))
    psi = lambda x: np.cos(2 * np.pi * x[..., 0])  # noqa: E731
    assert abs(psi(pts).mean() - mu.integrate(psi)) < 0.03
