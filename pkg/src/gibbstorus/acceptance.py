"""The ten acceptance checks, shared by the test suite and ``gibbstorus verify``.

Every expected value is either an analytic constant (``log 2``, the golden
ratio, zero) or is produced at run time by an independent route: finite
differences of full spectral computations, periodic orbits, separated sets,
Ulam matrices or Monte Carlo.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .dynamics import CAT_MATRIX, GOLDEN, get_map, perturbed_cat_family
from .gibbs import (GibbsMeasure, ball_drift_slope, ball_ratio_table, correlation_model,
                    correlation_residuals, variational_residual)
from .leafwise import (default_test_functions, make_segment, margulis_iterate, product_integral,
                       uniqueness_test)
from .oracles import monte_carlo_survival, periodic_orbit_measure, separated_set_pressure, ulam_matrix
from .potentials import parse_potential, srb_potential, zero
from .response import ResponseConfig, fd_measure_derivative, fd_pressure_curve, measure_derivative, pressure_derivative
from .spectral import IDENTITY, assemble, escape_rate, resonances, smooth_hole


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    checks: Dict[str, bool] = field(default_factory=dict)
    values: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [k for k, ok in self.checks.items() if not ok]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"{status} criterion {self.number}: {self.title} [{self.seconds:.1f}s]{tail}"


def _run(number: int, title: str, body: Callable[[dict, dict], None],
         budget: float = np.inf) -> CriterionResult:
    checks: dict = {}
    values: dict = {}
    t0 = time.perf_counter()
    body(checks, values)
    secs = time.perf_counter() - t0
    if np.isfinite(budget):
        checks["runtime"] = secs < budget
        values["runtime_budget"] = budget
    return CriterionResult(number, title, all(checks.values()), checks, values, secs)


def _cos(*k):
    k = np.asarray(k, float)
    return lambda x: np.cos(2 * np.pi * (x @ k))


def _sin(*k):
    k = np.asarray(k, float)
    return lambda x: np.sin(2 * np.pi * (x @ k))


def criterion_1() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("doubling")
        model = assemble(tmap, zero(), N=8)
        rep = separated_set_pressure(tmap, zero(), 0.1, 12)
        lo, hi = rep.extra["bracket"]
        values.update(rho=model.rho, bracket_lo=lo, bracket_hi=hi)
        checks["rho"] = abs(model.rho - 2.0) <= 1e-12
        checks["separated_bracket"] = lo - 0.05 <= np.log(2) <= hi + 0.05

    return _run(1, "doubling map, zero potential", body, budget=5.0)


def criterion_2() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("doubling")
        model = assemble(tmap, srb_potential(tmap), N=16)
        top = resonances(model, 5)
        ladder = 0.5 ** np.arange(5)
        ulam = ulam_matrix(tmap, srb_potential(tmap), 10_000)
        second_fourier = abs(model.eigenvalues[1]) / model.rho
        second_ulam = abs(ulam.eigenvalues[1]) / abs(ulam.eigenvalues[0])
        values.update(rho=model.rho, resonance_error=float(np.max(np.abs(np.abs(top) - ladder))),
                      second_fourier=second_fourier, second_ulam=second_ulam)
        checks["rho"] = abs(model.rho - 1.0) <= 1e-10
        checks["resonance_ladder"] = values["resonance_error"] <= 1e-6
        checks["ulam_agreement"] = abs(second_fourier - second_ulam) <= 1e-2

    return _run(2, "doubling map, SRB potential", body, budget=30.0)


def criterion_3() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("cat")
        pot = srb_potential(tmap)
        mu = GibbsMeasure(assemble(tmap, pot, N=8))
        modes = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, 0), (0, 2), (3, 1), (2, -3)]
        obs = [_cos(*k) for k in modes] + [_sin(*k) for k in modes]
        err = max(abs(mu.integrate(f)) for f in obs)  # Lebesgue integrals are all zero
        var = variational_residual(mu, tmap, pot, 0.05, 10, x_samples=10)
        values.update(pressure=mu.pressure, lebesgue_error=err, variational=var.residual)
        checks["pressure"] = abs(mu.pressure) <= 1e-8
        checks["lebesgue"] = err <= 1e-8
        checks["variational"] = abs(var.residual) <= 0.05

    return _run(3, "cat map, SRB potential", body)


def criterion_4() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("cat")
        model = assemble(tmap, zero(), N=16)
        rep = periodic_orbit_measure(tmap, zero(), 8, lambda x: np.ones(x.shape[:-1]))
        # |det(A^8 - I)| in exact integer arithmetic
        A = [[int(v) for v in row] for row in CAT_MATRIX]
        P = [[1, 0], [0, 1]]
        for _ in range(8):
            P = [[sum(P[i][k] * A[k][j] for k in range(2)) for j in range(2)] for i in range(2)]
        det = abs((P[0][0] - 1) * (P[1][1] - 1) - P[0][1] * P[1][0])
        values.update(pressure=model.pressure, periodic_pressure=rep.extra["pressure"],
                      orbit_count=rep.extra["orbit_count"], det=det)
        checks["spectral_pressure"] = abs(model.pressure - np.log(GOLDEN)) <= 1e-10
        checks["periodic_pressure"] = abs(rep.extra["pressure"] - np.log(GOLDEN)) <= 0.02
        checks["orbit_count"] = rep.extra["orbit_count"] == det

    return _run(4, "cat map, zero potential", body)


def criterion_5() -> CriterionResult:
    def body(checks, values):
        fam = perturbed_cat_family(0.1)
        m16 = assemble(fam.base, zero(), N=16, check_aliasing=False)
        m24 = assemble(fam.base, zero(), N=24, check_aliasing=False)
        cfg = ResponseConfig(fam, zero())
        h = pressure_derivative(cfg, GibbsMeasure(m16))
        _, _, slope = fd_pressure_curve(cfg, 1e-3, N=12)
        values.update(rho_drift=abs(m24.rho - m16.rho), pressure_derivative=h, fd_slope=slope)
        checks["self_convergence"] = values["rho_drift"] < 1e-6
        checks["pressure_derivative"] = abs(h) <= 2e-4
        checks["fd_slope"] = abs(slope) <= 1e-3

    return _run(5, "perturbed cat map, zero potential", body, budget=300.0)


def criterion_6() -> CriterionResult:
    def body(checks, values):
        fam = perturbed_cat_family(0.0)
        pot = parse_potential("fourier(0.3*cos(1,0))")
        cfg = ResponseConfig(fam, pot)
        mu = GibbsMeasure(assemble(fam.base, pot, N=12))
        psi = _cos(0, 1)
        rep = measure_derivative(cfg, mu, psi)
        fd = fd_measure_derivative(cfg, psi, 1e-3, N=12)
        one = measure_derivative(cfg, mu, lambda x: np.ones(x.shape[:-1])).value
        values.update(response=rep.value, fd=fd, decay_ratio=rep.decay_ratio,
                      gap=mu.model.gap, normalization=one)
        checks["fd_agreement"] = abs(rep.value - fd) <= 1e-3 * abs(fd)
        checks["k_decay"] = rep.decay_ratio <= mu.model.gap + 0.05
        checks["normalization"] = abs(one) <= 1e-8

    return _run(6, "linear response, perturbed cat family", body)


def criterion_7() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("doubling")
        pot = parse_potential("fourier(0.5*cos(1))", tmap)
        mu = GibbsMeasure(assemble(tmap, pot, N=32))
        rng = np.random.default_rng(1)
        centers = rng.random((50, 1))
        ns = list(range(2, 13))
        L = ball_ratio_table(mu, tmap, pot, centers, 0.2, ns)
        ratio = float(np.exp(L.max() - L.min()))
        drift = ball_drift_slope(L, ns)
        values.update(max_over_min=ratio, drift=drift)
        checks["bounded"] = ratio <= 20
        checks["drift"] = abs(drift) <= 0.02

    return _run(7, "dynamical-ball bounds", body)


def criterion_8() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("cat")
        pot = zero()
        P = assemble(tmap, pot, N=8).pressure
        seed = make_segment(tmap, [0.3, 0.2], "stable", 0.3)
        meas = margulis_iterate(tmap, pot, IDENTITY, seed, 20, P)
        other = make_segment(tmap, np.array([0.3, 0.2]) + 0.1 * seed.tangent, "stable", 0.3)
        uniq = uniqueness_test(tmap, pot, IDENTITY, [seed, other], 20, P)
        fs = default_test_functions(2)
        pi = product_integral(tmap, pot, fs, 20, P)
        mu = GibbsMeasure(assemble(tmap, pot, N=8))
        err = float(np.max(np.abs(pi.values - np.array([mu.integrate(f) for f in fs]))))
        values.update(conformality=meas.conformality_residual, uniqueness=uniq.residual,
                      product_error=err)
        checks["conformality"] = meas.conformality_residual <= 1e-3
        checks["uniqueness"] = uniq.residual <= 1e-2
        checks["product_integral"] = err <= 5e-3

    return _run(8, "Margulis construction, cat map", body)


def criterion_9() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("doubling")
        mu = GibbsMeasure(assemble(tmap, srb_potential(tmap), N=16))
        sigma = 0.3
        cm = correlation_model(mu, sigma)
        psi1 = lambda x: np.exp(np.sin(2 * np.pi * x[..., 0]))  # noqa: E731
        psi2 = lambda x: 1.0 / (2.0 + np.cos(2 * np.pi * x[..., 0]))  # noqa: E731
        fit = correlation_residuals(mu, cm, psi1, psi2, 30)
        values.update(C=fit.C, slope=fit.slope, max_residual=float(np.max(fit.residuals)))
        checks["constant"] = fit.C <= 10
        checks["slope"] = fit.slope <= np.log(sigma) + 0.05

    return _run(9, "correlation model, doubling SRB", body)


def criterion_10() -> CriterionResult:
    def body(checks, values):
        tmap = get_map("doubling")
        pot = srb_potential(tmap)
        rates, slopes = [], []
        for amp in (0.05, 0.1, 0.2):
            hole = smooth_hole(amp)
            rates.append(escape_rate(tmap, pot, hole, N=16))
            slopes.append(monte_carlo_survival(tmap, hole, 25, 1_000_000, seed=7).estimate)
        values.update(spectral=rates[1], monte_carlo=slopes[1],
                      spectral_all=rates, monte_carlo_all=slopes)
        checks["agreement"] = abs(rates[1] - slopes[1]) <= 2e-3
        checks["monotone"] = bool(rates[0] > rates[1] > rates[2] and slopes[0] > slopes[1] > slopes[2])

    return _run(10, "escape rate, doubling map", body)


CRITERIA: List[Callable[[], CriterionResult]] = [
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
]


def run_all(select=None) -> List[CriterionResult]:
    out = []
    for i, fn in enumerate(CRITERIA, start=1):
        if select is None or i in select:
            out.append(fn())
    return out
