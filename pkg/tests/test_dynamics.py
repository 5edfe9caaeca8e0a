import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbstorus.dynamics import (apply, backward_orbit, estimate_splitting, get_map, invert, orbit,
                                 preimages, torus_distance, wrap)
from gibbstorus.errors import NonInvertible

unit = st.floats(0.0, 1.0, allow_nan=False, exclude_max=True)


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_lands_in_unit_interval(x):
    y = wrap(np.array([x]))
    assert 0.0 <= y[0] < 1.0
    assert abs((x - y[0]) - round(x - y[0])) < 1e-9


@given(unit, unit)
def test_torus_distance_is_at_most_half(a, b):
    d = torus_distance(np.array([a]), np.array([b]))
    assert 0.0 <= float(d) <= 0.5 + 1e-15


@settings(max_examples=40, deadline=None)
@given(unit, unit, st.sampled_from(["cat", "perturbed_cat(0.1)"]))
def test_inverse_undoes_the_map(a, b, name):
    tmap = get_map(name)
    x = np.array([a, b])
    back = invert(tmap, apply(tmap, x))
    assert float(torus_distance(back, x)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(unit, st.sampled_from(["doubling", "tripling", "perturbed_doubling(0.1)"]))
def test_preimages_map_back(x, name):
    tmap = get_map(name)
    pre = preimages(tmap, np.array([x]))
    assert pre.shape == (tmap.degree, 1)
    img = apply(tmap, pre)
    assert np.all(torus_distance(img, np.array([x])) < 1e-12)


def test_doubling_has_no_inverse(doubling):
    with pytest.raises(NonInvertible):
        invert(doubling, np.array([0.3]))


def test_orbit_and_backward_orbit_agree(cat):
    x = np.array([0.123, 0.456])
    fwd = orbit(cat, x, 5)
    bwd = backward_orbit(cat, fwd[-1], 5)
    assert np.max(torus_distance(bwd[-1], x)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(unit, unit)
def test_splitting_is_invariant(a, b):
    tmap = get_map("perturbed_cat(0.1)")
    x = np.array([a, b])
    s0 = estimate_splitting(tmap, x)
    s1 = estimate_splitting(tmap, apply(tmap, x))
    J = tmap.jacobian(x)
    pushed_u = J @ s0.e_u
    pushed_s = J @ s0.e_s
    cross = lambda u, v: abs(u[0] * v[1] - u[1] * v[0]) / np.linalg.norm(u) / np.linalg.norm(v)  # noqa: E731
    assert cross(pushed_u, s1.e_u) < 1e-7
    assert cross(pushed_s, s1.e_s) < 1e-7


def test_unknown_descriptor():
    with pytest.raises(ValueError):
        get_map("baker")
    with pytest.raises(ValueError):
        get_map("perturbed_cat")
