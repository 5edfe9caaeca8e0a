"""Gibbs measures from spectral models: integrals, correlations, dynamical balls.

The measure is ``mu(psi) = ell0(psi alpha0)`` where ``alpha0`` and ``ell0`` are
the leading right and left eigenvectors of a :class:`SpectralModel`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .dynamics import (TorusMap, apply, as_points, ball_convention, estimate_splitting,
                       invert, preimages, torus_displacement, wrap)
from .errors import EmptyCut, ProjectionLoss
from .potentials import Potential, evaluate_bar_phi
from .spectral import SpectralModel, coeffs_to_grid, grid_to_coeffs, quadrature_grid, modes


def _trig_eval(coeffs: np.ndarray, N: int, x: np.ndarray, sign: float = 1.0,
               chunk: int = 4096) -> np.ndarray:
    """``sum_k c_k exp(sign 2 pi i k.x)`` at arbitrary points."""
    K = modes(N, x.shape[-1]).astype(float)
    flat = x.reshape(-1, x.shape[-1])
    out = np.empty(len(flat), dtype=complex)
    for s in range(0, len(flat), chunk):
        ph = np.exp(sign * 2j * np.pi * (flat[s:s + chunk] @ K.T))
        out[s:s + chunk] = ph @ coeffs
    return out.reshape(x.shape[:-1])


@dataclass
class GibbsMeasure:
    """Spectral Gibbs functional ``psi -> ell0(psi alpha0)``.

    Parameters
    ----------
    model : SpectralModel
    grid : int, optional
        Sampling grid per axis for observables, default ``8N + 4``.
    tail_tol : float
        Relative spectral mass of an observable beyond ``2N`` that triggers
        a :class:`ProjectionLoss` warning.
    """

    model: SpectralModel
    grid: Optional[int] = None
    tail_tol: float = 1e-10
    _alpha_grid: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.grid = self.grid or (8 * self.model.N + 4)
        self._alpha_grid = coeffs_to_grid(self.model.alpha0, self.model.N, self.model.dim, self.grid)

    @property
    def pressure(self) -> float:
        return self.model.pressure

    @property
    def dim(self) -> int:
        return self.model.dim

    # coefficient-space helpers --------------------------------------------
    def sample(self, psi: Callable) -> np.ndarray:
        Y = quadrature_grid(self.dim, self.grid)
        vals = np.asarray(psi(Y), dtype=complex)
        if vals.shape != (self.grid,) * self.dim:
            vals = np.broadcast_to(vals, (self.grid,) * self.dim)
        self._check_tail(vals)
        return vals

    def _check_tail(self, vals: np.ndarray):
        F = np.abs(np.fft.fftn(vals)) / vals.size
        P = self.grid
        freq = np.abs(np.fft.fftfreq(P, 1.0 / P))
        if self.dim == 1:
            high = freq > 2 * self.model.N
        else:
            high = np.maximum(freq[:, None], freq[None, :]) > 2 * self.model.N
        total = F.sum()
        if total > 0 and F[high].sum() > self.tail_tol * total:
            warnings.warn(f"observable has relative spectral tail {F[high].sum() / total:.2e} "
                          "beyond the resolved band", ProjectionLoss, stacklevel=3)

    def multiply(self, vals: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        """Galerkin projection of ``psi * f`` with ``psi`` given on the grid."""
        f = coeffs_to_grid(coeffs, self.model.N, self.dim, self.grid)
        return grid_to_coeffs(vals * f, self.model.N)

    def pair(self, coeffs: np.ndarray) -> complex:
        return complex(self.model.ell0 @ coeffs)

    def weighted(self, psi: Callable) -> np.ndarray:
        """Coefficients of ``psi alpha0``."""
        vals = self.sample(psi)
        return grid_to_coeffs(vals * self._alpha_grid, self.model.N)

    # measure ----------------------------------------------------------------
    def integrate(self, psi: Callable) -> float:
        return float(np.real(self.pair(self.weighted(psi))))

    def integrate_complex(self, psi: Callable) -> complex:
        return self.pair(self.weighted(psi))

    def alpha_at(self, x) -> np.ndarray:
        return _trig_eval(self.model.alpha0, self.model.N, as_points(x, self.dim))

    def left_density_at(self, x) -> np.ndarray:
        """``sum_j ell_j exp(-2 pi i j.x)``: density of ``ell0`` when it is a function."""
        return _trig_eval(self.model.ell0, self.model.N, as_points(x, self.dim), sign=-1.0)

    def density_at(self, x) -> np.ndarray:
        """Lebesgue density of the measure, meaningful when ``ell0`` is smooth."""
        return np.real(self.alpha_at(x) * self.left_density_at(x))

    def left_tail(self) -> float:
        """Relative size of the outermost modes of ``ell0``; small when it is a smooth density."""
        K = modes(self.model.N, self.dim)
        edge = np.max(np.abs(K), axis=1) >= max(self.model.N - 1, 1)
        return float(np.max(np.abs(self.model.ell0[edge])) / np.max(np.abs(self.model.ell0)))

    def correlation(self, psi1: Callable, psi2: Callable, n: int) -> float:
        """``int psi1 . psi2 o T^n dmu`` via ``<psi2 ell0, (L/rho)^n (psi1 alpha0)>``."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        c = self.model.transfer(self.weighted(psi1), n)
        return float(np.real(self.pair(self.multiply(self.sample(psi2), c))))

    def correlation_sequence(self, psi1: Callable, psi2: Callable, n_max: int) -> np.ndarray:
        c = self.weighted(psi1)
        v2 = self.sample(psi2)
        out = np.empty(n_max + 1)
        for n in range(n_max + 1):
            out[n] = np.real(self.pair(self.multiply(v2, c)))
            c = self.model.transfer(c)
        return out


class LebesgueMeasure:
    """Lebesgue measure on the torus with the same ``integrate`` interface."""

    def __init__(self, dim: int, grid: int = 256):
        self.dim = dim
        self.grid = grid

    def integrate(self, psi: Callable) -> float:
        return float(np.real(np.mean(psi(quadrature_grid(self.dim, self.grid)))))

    def density_at(self, x) -> np.ndarray:
        return np.ones(as_points(x, self.dim).shape[:-1])


# ----------------------------------------------------------------------------
# finite-rank correlation model


@dataclass
class CorrelationModel:
    """Finite-rank description of correlations above a cut radius ``sigma``.

    ``tau2(psi2) @ M^n @ tau1(psi1)`` predicts ``int psi1 . psi2 o T^n dmu``
    up to ``O(sigma^n)``.
    """

    M: np.ndarray
    sigma: float
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    measure: GibbsMeasure = field(repr=False)
    C: float = np.nan

    @property
    def k(self) -> int:
        return self.M.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.diag(self.M)

    def tau1(self, psi1: Callable) -> np.ndarray:
        c = self.measure.weighted(psi1)
        return (self.left @ c) / np.einsum("ij,ji->i", self.left, self.right)

    def tau2(self, psi2: Callable) -> np.ndarray:
        vals = self.measure.sample(psi2)
        return np.array([self.measure.pair(self.measure.multiply(vals, self.right[:, i]))
                         for i in range(self.k)])

    def predict(self, psi1: Callable, psi2: Callable, n: int) -> float:
        return float(np.real(self.tau2(psi2) @ (self.eigenvalues ** n * self.tau1(psi1))))


def correlation_model(mu: GibbsMeasure, sigma: float) -> CorrelationModel:
    """Spectral projection of ``L / rho`` onto resonances of modulus above ``sigma``."""
    M = mu.model.matrix / mu.model.rho
    w, vl, vr = sla.eig(M, left=True, right=True)
    keep = np.abs(w) > sigma
    if not keep.any():
        raise EmptyCut(f"no resonance above sigma={sigma}")
    order = np.argsort(-np.abs(w[keep]), kind="stable")
    lam = w[keep][order]
    right = vr[:, keep][:, order]
    left = vl[:, keep][:, order].conj().T  # rows: left @ M = lam left
    return CorrelationModel(np.diag(lam), sigma, right, left, mu)


@dataclass
class ResidualFit:
    residuals: np.ndarray
    C: float
    slope: float
    used: np.ndarray


def correlation_residuals(mu: GibbsMeasure, cm: CorrelationModel, psi1: Callable,
                          psi2: Callable, n_max: int = 30, floor: float = 1e-14) -> ResidualFit:
    """Residuals of the finite-rank model, the constant ``C`` and the log-slope.

    The slope is fitted on the steps whose residual is above ``floor`` times
    the observable scale; with fewer than three such steps the decay is
    faster than any exponential and the slope is reported as ``-inf``.
    """
    corr = mu.correlation_sequence(psi1, psi2, n_max)
    t1, t2 = cm.tau1(psi1), cm.tau2(psi2)
    pred = np.array([np.real(t2 @ (cm.eigenvalues ** n * t1)) for n in range(n_max + 1)])
    res = np.abs(corr - pred)
    n = np.arange(n_max + 1)
    C = float(np.max(res / cm.sigma ** n))
    scale = max(np.max(np.abs(corr)), 1e-300)
    used = res > floor * scale
    if used.sum() >= 3:
        slope = float(np.polyfit(n[used], np.log(res[used]), 1)[0])
    else:
        slope = -np.inf
    cm.C = C
    return ResidualFit(res, C, slope, used)


# ----------------------------------------------------------------------------
# dynamical balls


def smooth_step(t) -> np.ndarray:
    """C-infinity function equal to 1 on ``t <= 1/2`` and 0 on ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    u = np.clip(2.0 * (1.0 - t), 0.0, 1.0)  # 0 at t=1, 1 at t=1/2

    def f(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    return f(u) / (f(u) + f(1.0 - u))


@dataclass
class BallMeasure:
    value: float
    log_value: float
    convention: str
    n: int
    eps: float


def _forward_ball_measure(mu: GibbsMeasure, tmap: TorusMap, pot: Potential, x, eps: float,
                          n: int, samples: int = 4097) -> BallMeasure:
    """Expanding maps: move the bump forward ``n - 1`` steps and pair with ``ell0``.

    ``mu(b) = rho^{-m} ell0(L^m(b alpha0))`` with ``m = n - 1``; on the last
    image the bump is supported in a ball of radius ``eps`` and is resolved
    by the Fourier grid even though the ball itself has width ``~ eps k^{-m}``.
    """
    if 2 * eps * tmap.expansion >= 1.0:
        raise ValueError("eps too large for the branches of the map to be injective on balls")
    x = as_points(x, 1)
    m = max(n - 1, 0)
    orb = [x]
    for _ in range(m):
        orb.append(apply(tmap, orb[-1]))
    t = np.linspace(-eps, eps, samples)[:, None]
    z = wrap(orb[-1] + t)
    chain = [z]
    y = z
    for k in range(m - 1, -1, -1):
        pre = preimages(tmap, y)  # (samples, deg, 1)
        d = np.abs(torus_displacement(orb[k], pre))[..., 0]
        y = np.take_along_axis(pre, np.argmin(d, axis=1)[:, None, None], axis=1)[:, 0, :]
        chain.append(y)
    chain = chain[::-1]  # chain[i] = T^i y, i = 0..m
    bump = np.ones(samples)
    weight = np.zeros(samples)
    for i, p in enumerate(chain):
        bump *= smooth_step(np.abs(torus_displacement(orb[i], p))[..., 0] / eps)
        if i < m:
            weight += evaluate_bar_phi(pot, tmap, p)
    y0 = chain[0]
    g = bump * np.exp(weight - m * mu.pressure) * np.real(mu.alpha_at(y0))
    # place g on a periodic grid and pair with ell0
    P = max(mu.grid, 8 * mu.model.N + 4)
    grid = np.arange(P) / P
    rel = torus_displacement(orb[-1][0], grid)
    vals = np.interp(rel, t[:, 0], g, left=0.0, right=0.0)
    coeffs = grid_to_coeffs(vals.astype(complex), mu.model.N)
    val = float(np.real(mu.model.ell0 @ coeffs))
    return BallMeasure(val, float(np.log(val)) if val > 0 else -np.inf, "forward", n, eps)


def _backward_ball_measure(mu, tmap: TorusMap, pot: Potential, x, eps: float, n: int,
                           nodes: int = 161, max_enlarge: int = 6) -> BallMeasure:
    """Invertible maps: quadrature of the bump in stable/unstable coordinates.

    Requires a measure with a Lebesgue density (``density_at``).
    """
    x = as_points(x, 2)
    split = estimate_splitting(tmap, x)
    es, eu = split.e_s, split.e_u
    jac = abs(es[0] * eu[1] - es[1] * eu[0])
    # linearised size of the ball in the stable direction
    v = es.copy()
    p = x.copy()
    grow = 1.0
    for _ in range(max(n - 1, 0)):
        q = invert(tmap, p)
        v = np.linalg.solve(tmap.jacobian(q), v)
        grow = max(grow, np.linalg.norm(v))
        p = q
    S, U = 1.5 * eps / grow, 1.5 * eps
    for _ in range(max_enlarge):
        s = np.linspace(-S, S, nodes)
        u = np.linspace(-U, U, nodes)
        ss, uu = np.meshgrid(s, u, indexing="ij")
        pts = x + ss[..., None] * es + uu[..., None] * eu
        bump = np.ones(ss.shape)
        cx, cy = x.copy(), wrap(pts)
        for i in range(max(n, 1)):
            bump *= smooth_step(np.linalg.norm(torus_displacement(cx, cy), axis=-1) / eps)
            if i < n - 1:
                cx, cy = invert(tmap, cx), invert(tmap, cy)
        edge = max(bump[0].max(), bump[-1].max(), bump[:, 0].max(), bump[:, -1].max())
        if edge == 0.0:
            break
        S, U = 1.5 * S, 1.5 * U
    else:
        raise RuntimeError("ball quadrature box could not enclose the bump")
    dens = mu.density_at(wrap(pts))
    val = float(np.trapezoid(np.trapezoid(bump * dens, u, axis=1), s) * jac)
    return BallMeasure(val, float(np.log(val)) if val > 0 else -np.inf, "backward", n, eps)


def dynamical_ball_measure(mu, tmap: TorusMap, pot: Potential, x, eps: float,
                           n: int) -> BallMeasure:
    """Measure of a smooth bump squeezed between the ``eps/2`` and ``eps`` dynamical balls.

    The bump is ``prod_i b(d_i / eps)`` with ``b = 1`` on ``[0, 1/2]`` and
    ``0`` on ``[1, inf)``, so ``mu(B_n(x, eps/2)) <= value <= mu(B_n(x, eps))``.
    """
    if ball_convention(tmap) == "forward":
        return _forward_ball_measure(mu, tmap, pot, x, eps, n)
    return _backward_ball_measure(mu, tmap, pot, x, eps, n)


def ball_reference_log(mu, tmap: TorusMap, pot: Potential, x, n: int) -> float:
    """``S_n phi_bar - n P`` along the orbit that defines the ball."""
    x = as_points(x, tmap.dim)
    total = 0.0
    if ball_convention(tmap) == "forward":
        p = x
        for _ in range(n):
            total += float(evaluate_bar_phi(pot, tmap, p))
            p = apply(tmap, p)
    else:
        p = x
        for _ in range(n):
            p = invert(tmap, p)
            total += float(evaluate_bar_phi(pot, tmap, p))
    return total - n * mu.pressure


def ball_bound_ratio(mu, tmap: TorusMap, pot: Potential, x, eps: float, n: int) -> float:
    """``mu(B_n(x, eps)) / (exp(S_n phi_bar) rho^{-n})``, computed in log space."""
    b = dynamical_ball_measure(mu, tmap, pot, x, eps, n)
    return float(np.exp(b.log_value - ball_reference_log(mu, tmap, pot, x, n)))


def ball_ratio_table(mu, tmap, pot, centers, eps: float, n_values):
    """Log ratios, shape ``(len(centers), len(n_values))``."""
    out = np.empty((len(centers), len(n_values)))
    for i, x in enumerate(centers):
        for j, n in enumerate(n_values):
            b = dynamical_ball_measure(mu, tmap, pot, x, eps, n)
            out[i, j] = b.log_value - ball_reference_log(mu, tmap, pot, x, n)
    return out


def ball_drift_slope(log_ratios: np.ndarray, n_values) -> float:
    """Least-squares slope of the center-averaged log ratio against ``n``."""
    return float(np.polyfit(np.asarray(n_values, float), log_ratios.mean(axis=0), 1)[0])


# ----------------------------------------------------------------------------
# sampling and the variational principle


def sample_gibbs_points(mu: GibbsMeasure, tmap: TorusMap, pot: Potential, count: int,
                        rng: np.random.Generator, burn: int = 40) -> np.ndarray:
    """Approximately mu-distributed points.

    Expanding maps: the backward chain choosing a pre-image ``y`` of ``x``
    with probability ``exp(phi_bar(y)) alpha0(y) / (rho alpha0(x))``; its
    stationary law is the Gibbs measure.  Invertible maps: rejection sampling
    from the Lebesgue density.
    """
    if not tmap.invertible:
        x = rng.random((count, 1))
        for _ in range(burn):
            pre = preimages(tmap, x)  # (count, k, 1)
            w = np.exp(evaluate_bar_phi(pot, tmap, pre)) * np.maximum(np.real(mu.alpha_at(pre)), 0)
            w = w / w.sum(axis=1, keepdims=True)
            c = np.cumsum(w, axis=1)
            pick = (rng.random((count, 1)) > c).sum(axis=1)
            pick = np.minimum(pick, pre.shape[1] - 1)
            x = pre[np.arange(count), pick]
        return x
    out = []
    grid = quadrature_grid(tmap.dim, 64).reshape(-1, tmap.dim)
    bound = 1.2 * np.max(mu.density_at(grid))
    while sum(len(o) for o in out) < count:
        cand = rng.random((4 * count, tmap.dim))
        acc = rng.random(4 * count) * bound < mu.density_at(cand)
        out.append(cand[acc])
    return np.concatenate(out)[:count]


@dataclass
class VariationalReport:
    entropy: float
    entropy_low: float
    entropy_high: float
    mean_potential: float
    pressure: float
    residual: float


def variational_residual(mu, tmap: TorusMap, pot: Potential, eps: float, n: int,
                         x_samples: int = 20, seed: int = 0, n0: Optional[int] = None,
                         pressure: Optional[float] = None, points=None) -> VariationalReport:
    """``h_mu + mu(phi_bar) - P`` with a Brin-Katok entropy estimate.

    The local entropy at each sample point is the increment
    ``-(log mu(B_n) - log mu(B_n0)) / (n - n0)`` with ``n0 = n // 2``, which
    cancels the ``O(log(1/eps) / n)`` bias of ``-(1/n) log mu(B_n)``.  The
    spread of the per-point values gives the low/high estimates.
    """
    n0 = n // 2 if n0 is None else n0
    rng = np.random.default_rng(seed)
    if points is None:
        points = sample_gibbs_points(mu, tmap, pot, x_samples, rng)
    vals = []
    for x in points:
        hi = dynamical_ball_measure(mu, tmap, pot, x, eps, n).log_value
        lo = dynamical_ball_measure(mu, tmap, pot, x, eps, n0).log_value
        vals.append(-(hi - lo) / (n - n0))
    vals = np.asarray(vals)
    h = float(np.mean(vals))
    mean_phi = mu.integrate(lambda y: evaluate_bar_phi(pot, tmap, y))
    P = mu.pressure if pressure is None else pressure
    return VariationalReport(h, float(np.min(vals)), float(np.max(vals)), mean_phi, P,
                             h + mean_phi - P)
