import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gibbstorus.dynamics import GOLDEN
from gibbstorus.estimators import GibbsEstimator


def test_fit_and_predict():
    est = GibbsEstimator("cat", "zero", N=6).fit()
    assert abs(est.pressure_ - np.log(GOLDEN)) < 1e-10
    assert np.allclose(est.predict(np.random.default_rng(0).random((5, 2))), 1.0)


def test_params_round_trip():
    est = GibbsEstimator("doubling", "fourier(0.5*cos(1))", N=12)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    twin.set_params(N=16)
    assert twin.N == 16 and est.N == 12


def test_integrate_and_resonances():
    est = GibbsEstimator("doubling", "srb", N=8).fit()
    assert abs(est.integrate(lambda x: np.cos(2 * np.pi * x[..., 0]))) < 1e-12
    assert est.resonances(3)[0] == 1


def test_unfitted():
    with pytest.raises(NotFittedError):
        GibbsEstimator().predict([[0.1, 0.2]])
