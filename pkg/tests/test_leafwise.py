import numpy as np
import pytest

from gibbstorus.dynamics import get_map
from gibbstorus.gibbs import GibbsMeasure
from gibbstorus.leafwise import (default_test_functions, make_segment, margulis_iterate,
                                 margulis_pressure, margulis_unstable, partition_of_unity,
                                 product_integral, uniqueness_test)
from gibbstorus.potentials import parse_potential
from gibbstorus.spectral import IDENTITY, assemble


@pytest.fixture(scope="module")
def cat_setup():
    tmap = get_map("cat")
    pot = parse_potential("fourier(0.3*cos(1,0))", tmap)
    return tmap, pot, assemble(tmap, pot, N=8).pressure


def test_segment_follows_stable_direction(cat):
    seg = make_segment(cat, [0.3, 0.2], "stable", 0.2)
    assert seg.length == pytest.approx(0.2)
    assert seg.covering_count(0.05) == 4


def test_circle_maps_have_no_stable_seed(doubling):
    with pytest.raises(ValueError):
        make_segment(doubling, [0.3], "stable", 0.2)


def test_conformality_and_pressure(cat_setup):
    tmap, pot, P = cat_setup
    seed = make_segment(tmap, [0.3, 0.2], "stable", 0.3)
    meas = margulis_iterate(tmap, pot, IDENTITY, seed, 8, P)
    assert meas.conformality_residual < 1e-3
    assert abs(meas.pressure_estimate - P) < 1e-3


def test_unstable_leaf_pressure(doubling):
    pot = parse_potential("fourier(0.5*cos(1))", doubling)
    P = assemble(doubling, pot, N=24).pressure
    seed = make_segment(doubling, [0.3], "unstable", 0.2)
    assert abs(margulis_pressure(doubling, pot, seed, 10, P) - P) < 1e-3


def test_uniqueness_across_seeds(cat_setup):
    tmap, pot, P = cat_setup
    a = make_segment(tmap, [0.3, 0.2], "stable", 0.3)
    b = make_segment(tmap, np.array([0.3, 0.2]) + 0.1 * a.tangent, "stable", 0.3)
    assert uniqueness_test(tmap, pot, IDENTITY, [a, b], 8, P).residual < 1e-2


def test_wrong_direction_rejected(cat_setup):
    tmap, pot, P = cat_setup
    seed = make_segment(tmap, [0.3, 0.2], "stable", 0.3)
    with pytest.raises(ValueError):
        margulis_unstable(tmap, pot, IDENTITY, seed, 3, P)


def test_partition_of_unity_sums_to_one():
    charts = partition_of_unity(4, 2)
    x = np.random.default_rng(0).random((200, 2))
    total = sum(chi(x) for _, chi in charts)
    assert np.allclose(total, 1.0)


def test_product_integral_matches_spectral_average(cat_setup):
    tmap, pot, P = cat_setup
    fs = default_test_functions(2)[:4]
    pi = product_integral(tmap, pot, fs, 3, P, nodes=25)
    mu = GibbsMeasure(assemble(tmap, pot, N=8))
    assert np.max(np.abs(pi.values - [mu.integrate(f) for f in fs])) < 5e-3
