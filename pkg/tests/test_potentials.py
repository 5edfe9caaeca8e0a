import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbstorus.potentials import evaluate_bar_phi, parse_potential, srb_potential


def test_parse_round_trip(cat):
    pot = parse_potential("fourier(0.3*cos(1,0), -0.2*sin(1,1), 0.5)", cat)
    again = parse_potential(pot.descriptor, cat)
    x = np.random.default_rng(0).random((20, 2))
    assert np.allclose(pot.w1(x), again.w1(x))
    assert pot.constant == 0.5


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_fourier_gradient_matches_difference_quotient(a, b):
    pot = parse_potential("fourier(0.3*cos(1,0), -0.2*sin(1,2))")
    x = np.array([a, b])
    h = 1e-6
    fd = np.array([(pot.w1(x + h * e) - pot.w1(x - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(pot.gradient(x), fd, atol=1e-6)


def test_srb_on_doubling_is_minus_log_two(doubling):
    x = np.linspace(0, 1, 7)[:, None]
    assert np.allclose(srb_potential(doubling).w1(x), -np.log(2))


def test_srb_on_cat_is_minus_log_expansion(cat):
    x = np.random.default_rng(1).random((5, 2))
    vals = evaluate_bar_phi(srb_potential(cat), cat, x)
    assert np.allclose(vals, -np.log((3 + np.sqrt(5)) / 2), atol=1e-9)


@pytest.mark.parametrize("bad", ["fourier(0.3*tan(1,0))", "gauss", "const(x)"])
def test_bad_descriptors(bad):
    with pytest.raises(ValueError):
        parse_potential(bad)


def test_dimension_mismatch(doubling):
    with pytest.raises(ValueError):
        parse_potential("fourier(0.3*cos(1,0))", doubling)
