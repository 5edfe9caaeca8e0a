import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbstorus.dynamics import GOLDEN, get_map, preimages
from gibbstorus.errors import QuadratureAliasing
from gibbstorus.potentials import parse_potential, zero
from gibbstorus.spectral import (IDENTITY, SpectralModel, assemble, coeffs_to_grid, escape_rate,
                                 function_coeffs, parse_truncation, resonances, smooth_hole,
                                 spectral_convergence_report)


def test_doubling_zero_potential(doubling):
    assert abs(assemble(doubling, zero(), N=6).rho - 2.0) < 1e-12


def test_cat_zero_potential(cat):
    assert abs(assemble(cat, zero(), N=6).pressure - np.log(GOLDEN)) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3))
def test_constant_potential_shifts_pressure(c):
    tmap = get_map("doubling")
    base = assemble(tmap, zero(), N=4).pressure
    shifted = assemble(tmap, parse_potential(f"const({c!r})"), N=4).pressure
    assert abs(shifted - base - c) < 1e-10


def test_galerkin_transfer_matches_preimage_sum(doubling):
    # L f(x) = sum over preimages y of exp(phi(y)) f(y), evaluated directly
    pot = parse_potential("fourier(0.4*cos(1))", doubling)
    model = assemble(doubling, pot, N=24)
    f = lambda x: np.exp(np.sin(2 * np.pi * x[..., 0]))  # noqa: E731
    c = function_coeffs(f, 24, 1)
    Lc = model.matrix @ c
    P = 64
    x = (np.arange(P) / P)[:, None]
    pre = preimages(doubling, x)
    direct = np.sum(np.exp(pot.w1(pre)) * f(pre), axis=1)
    galerkin = np.real(coeffs_to_grid(Lc, 24, 1, P))
    assert np.max(np.abs(direct - galerkin)) < 1e-8


def test_eigendata_normalization(doubling):
    model = assemble(doubling, parse_potential("fourier(0.5*cos(1))", doubling), N=12)
    one = np.zeros(len(model.modes), complex)
    one[model.zero_index] = 1.0
    assert abs(model.ell0 @ model.alpha0 - 1) < 1e-12
    assert abs(model.ell0 @ one - 1) < 1e-12
    assert max(model.residuals.values()) < 1e-10


def test_json_round_trip(doubling):
    model = assemble(doubling, parse_potential("fourier(0.5*cos(1))", doubling), N=6)
    back = SpectralModel.from_json(model.to_json(), rebuild=True)
    assert back.rho == model.rho
    assert np.allclose(back.alpha0, model.alpha0)
    assert np.allclose(back.matrix, model.matrix)


def test_resonances_are_sorted(cat):
    top = resonances(assemble(cat, parse_potential("fourier(0.3*cos(1,0))", cat), N=6), 5)
    assert top[0] == 1
    assert np.all(np.diff(np.abs(top)) <= 1e-12)


def test_aliasing_detected():
    tmap = get_map("perturbed_cat(0.3)")
    with pytest.raises(QuadratureAliasing):
        assemble(tmap, zero(), N=6)


def test_escape_rate_monotone_in_amplitude(doubling, doubling_srb):
    rates = [escape_rate(doubling, doubling_srb, smooth_hole(a), N=8) for a in (0.0, 0.1, 0.3)]
    assert abs(rates[0]) < 1e-10
    assert rates[0] > rates[1] > rates[2]


def test_escape_rate_needs_srb(doubling):
    with pytest.raises(ValueError):
        escape_rate(doubling, zero(), smooth_hole(0.1))


def test_truncation_parser():
    assert parse_truncation("identity") is IDENTITY
    assert parse_truncation("hole(0.2)").amplitude == 0.2
    with pytest.raises(ValueError):
        parse_truncation("hole(2)")
    with pytest.raises(ValueError):
        parse_truncation("mask(1)")


def test_convergence_report(doubling):
    rows, non_cauchy = spectral_convergence_report(
        doubling, parse_potential("fourier(0.5*cos(1))", doubling), IDENTITY, [8, 12, 16])
    assert [r["N"] for r in rows] == [8, 12, 16]
    assert not non_cauchy
