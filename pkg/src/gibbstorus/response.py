"""Derivatives of pressure and Gibbs averages along one-parameter families.

Conventions.  A family ``T_lam`` with ``T_0 = T`` is conjugated to ``T`` by
``h_lam`` with ``T_lam o h_lam = h_lam o T``.  Its generator ``w`` solves the
cohomological equation ``v + DT w = w o T`` with ``v(Tx) = d/dlam T_lam(x)``
(``FamilySpec.vector_field``), and for a hyperbolic base

    w = sum_{n>=0} T^n_* v^s  -  sum_{n>=1} T^{-n}_* v^u.

Differentiating the variational principle along ``h_lam`` gives

    h'   = mu(phi') + mu(L_w phi)
    dmu(psi) = mu(L_w psi) + sum_{k in Z} cov(psi o T^k, phi' + L_w phi).

Every term is evaluated in coefficient space with the weighted operators
``R f = L f / rho``, ``Rs f = R(J_s f)`` and ``Ru f = R(f / J_u)`` where
``DT e_s = J_s e_s o T`` and ``DT e_u = J_u e_u o T``.  Rough factors such as
``c_s o T^{-n}`` never have to be sampled on a grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import (FamilySpec, TorusMap, as_points, estimate_splitting, orbit,
                       backward_orbit, project_vector, stable_stretch, unstable_stretch, wrap)
from .errors import TailBoundExceeded
from .gibbs import GibbsMeasure
from .potentials import Potential, evaluate_bar_phi
from .spectral import (IDENTITY, TruncationProfile, assemble, galerkin_matrix, quadrature_grid,
                       weighted_density)


@dataclass
class ResponseConfig:
    """Truncations and inputs for the response sums.

    Parameters
    ----------
    family : FamilySpec
    pot : Potential
        Potential at ``lam = 0``.
    pot_derivative : callable, optional
        ``x -> d/dlam phi_lam(x)`` at 0; ``None`` means the potential does not move.
    n_terms : int
        Truncation of the stable/unstable push-forward sums.
    k_range : int
        Correlation sums run over ``|k| <= k_range``.
    h_stable : float
        Finite-difference step for derivatives of observables along the splitting.
    tol : float
        Largest acceptable tail bound.
    """

    family: FamilySpec
    pot: Potential
    pot_derivative: Optional[Callable] = None
    n_terms: int = 40
    k_range: int = 20
    h_stable: float = 1e-5
    tol: float = 1e-8

    @property
    def tmap(self) -> TorusMap:
        return self.family.base


@dataclass
class ResponseReport:
    value: float
    partials: dict
    tail_bounds: dict
    k_terms: Optional[np.ndarray] = None
    k_values: Optional[np.ndarray] = None
    decay_ratio: Optional[float] = None
    fd_value: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"value": self.value, "partials": self.partials, "tail_bounds": self.tail_bounds,
               "decay_ratio": self.decay_ratio, "fd_value": self.fd_value, "meta": self.meta}
        if self.k_terms is not None:
            out["k_terms"] = {int(k): float(t) for k, t in zip(self.k_values, self.k_terms)}
        return out


def _geometric_tail(last: float, ratio: float) -> float:
    ratio = min(max(ratio, 0.0), 0.999)
    return float(abs(last) * ratio / (1.0 - ratio))


def fit_decay_ratio(terms, floor: float = 1e-14) -> float:
    """``exp`` of the least-squares slope of ``log|term|`` against the index.

    Entries below ``floor`` times the largest are ignored; with fewer than
    three usable entries the ratio is reported as 0.
    """
    a = np.abs(np.asarray(terms, dtype=float))
    idx = np.arange(len(a))
    keep = a > floor * max(a.max(initial=0.0), 1e-300)
    if keep.sum() < 3:
        return 0.0
    slope = np.polyfit(idx[keep], np.log(a[keep]), 1)[0]
    return float(np.exp(slope))


# ----------------------------------------------------------------------------
# pointwise observable


def _potential_gradient(pot: Potential, tmap: TorusMap, x, h: float = 1e-6) -> np.ndarray:
    if pot.kind == "W1" and not pot.is_srb:
        return pot.gradient(x)
    cols = []
    for i in range(tmap.dim):
        e = np.zeros(tmap.dim)
        e[i] = h
        cols.append((evaluate_bar_phi(pot, tmap, wrap(x + e))
                     - evaluate_bar_phi(pot, tmap, wrap(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def response_observable_terms(cfg: ResponseConfig, x, include_unstable: bool = True):
    """Terms of the pointwise response observable at ``x``.

    Returns ``(phi_prime, stable_terms, unstable_terms)``.  For invertible
    maps ``stable_terms[n] = L_{v^s}(phi o T^n)(x)`` and
    ``unstable_terms[n-1] = L_{v^u}(phi o T^{-n})(x)``; both are evaluated
    through the chain rule along the orbit.  For expanding maps only the
    second list is filled, with ``V(T^n x) phi'(x) / (T^{n+1})'(x)``.
    """
    tmap, pot = cfg.tmap, cfg.pot
    x = as_points(x, tmap.dim)
    phi_prime = cfg.pot_derivative(x) if cfg.pot_derivative is not None else np.zeros(x.shape[:-1])
    n = cfg.n_terms
    if not tmap.invertible:
        fwd = orbit(tmap, x, n + 1)
        grad = _potential_gradient(pot, tmap, x)[..., 0]
        deriv = np.ones(x.shape[:-1])
        unst = []
        for k in range(n):
            deriv = deriv * tmap.jacobian(fwd[k])[..., 0, 0]
            unst.append(cfg.family.generator(fwd[k])[..., 0] * grad / deriv)
        return phi_prime, np.zeros((0,) + x.shape[:-1]), np.asarray(unst)
    split = estimate_splitting(tmap, x)
    v = cfg.family.vector_field(x)
    vs, vu, _, _ = project_vector(v, split)
    # the pushed vectors are re-projected on the splitting at every step so
    # that roundoff in the transverse direction cannot grow
    fwd = orbit(tmap, x, n)
    stab, push = [], vs
    for k in range(n):
        stab.append(np.sum(_potential_gradient(pot, tmap, fwd[k]) * push, axis=-1))
        if k + 1 < n:
            push = np.einsum("...ij,...j->...i", tmap.jacobian(fwd[k]), push)
            push = project_vector(push, estimate_splitting(tmap, fwd[k + 1]))[0]
    unst = []
    if include_unstable:
        back = backward_orbit(tmap, x, n + 1)
        pull = vu
        for k in range(1, n + 1):
            pull = np.linalg.solve(tmap.jacobian(back[k]), pull[..., None])[..., 0]
            pull = project_vector(pull, estimate_splitting(tmap, back[k]))[1]
            unst.append(np.sum(_potential_gradient(pot, tmap, back[k]) * pull, axis=-1))
    return phi_prime, np.asarray(stab), np.asarray(unst)


def response_observable_A(cfg: ResponseConfig, x, include_unstable: bool = True) -> np.ndarray:
    """Pointwise ``A = phi' + L_w phi``, whose Gibbs average is the pressure derivative.

    ``include_unstable=False`` drops the backward sum; the result then only
    accounts for the stable part of the conjugacy.
    """
    phi_prime, stab, unst = response_observable_terms(cfg, x, include_unstable)
    out = phi_prime + (stab.sum(axis=0) if len(stab) else 0.0)
    if len(unst):
        out = out - unst.sum(axis=0)
    return out


# ----------------------------------------------------------------------------
# coefficient-space machinery


class _ResponseOperators:
    """Transfer operators and sampled fields shared by the response sums."""

    def __init__(self, cfg: ResponseConfig, mu: GibbsMeasure):
        self.cfg, self.mu = cfg, mu
        model = mu.model
        tmap = cfg.tmap
        self.R = model.matrix / model.rho
        self.ell = model.ell0
        self.alpha = model.alpha0
        trunc = model.trunc or IDENTITY
        Q = model.quad_points
        Yq = quadrature_grid(tmap.dim, Q)
        Yg = quadrature_grid(tmap.dim, mu.grid)
        flat_g = Yg.reshape(-1, tmap.dim)
        shape_g = Yg.shape[:-1]
        base = weighted_density(tmap, cfg.pot, trunc, Q)
        if tmap.invertible:
            split_q = estimate_splitting(tmap, Yq.reshape(-1, 2))
            Js = stable_stretch(tmap, Yq.reshape(-1, 2), split_q).reshape(Yq.shape[:-1])
            Ju = unstable_stretch(tmap, Yq.reshape(-1, 2), split_q).reshape(Yq.shape[:-1])
            self.Rs = galerkin_matrix(tmap, model.N, Q, base * Js) / model.rho
            self.Ru = galerkin_matrix(tmap, model.N, Q, base / Ju) / model.rho
            split = estimate_splitting(tmap, flat_g)
            v = cfg.family.vector_field(flat_g)
            _, _, c_s, c_u = project_vector(v, split)
            grad = _potential_gradient(cfg.pot, tmap, flat_g)
            self.e_s, self.e_u = split.e_s, split.e_u
            self.c_s = c_s.reshape(shape_g)
            self.c_u = c_u.reshape(shape_g)
            self.Ds_phi = np.sum(grad * split.e_s, axis=-1).reshape(shape_g)
            self.Du_phi = np.sum(grad * split.e_u, axis=-1).reshape(shape_g)
        else:
            T1 = tmap.jacobian(Yq)[..., 0, 0]
            self.Rs = None
            self.Ru = galerkin_matrix(tmap, model.N, Q, base / T1) / model.rho
            g = cfg.family.generator(flat_g)[..., 0]
            self.v_over_T = (g / tmap.jacobian(flat_g)[..., 0, 0]).reshape(shape_g)
            self.D_phi = _potential_gradient(cfg.pot, tmap, flat_g)[..., 0].reshape(shape_g)
        self.flat_g, self.shape_g = flat_g, shape_g
        if cfg.pot_derivative is not None:
            self.phi_prime = np.asarray(cfg.pot_derivative(flat_g), float).reshape(shape_g)
        else:
            self.phi_prime = None

    def mult(self, vals, c):
        return self.mu.multiply(vals, c)

    def pair(self, c) -> float:
        return float(np.real(self.ell @ c))

    def along(self, psi: Callable, direction) -> np.ndarray:
        h = self.cfg.h_stable
        x = self.flat_g
        d = (np.asarray(psi(wrap(x + h * direction)), float)
             - np.asarray(psi(wrap(x - h * direction)), float)) / (2 * h)
        return d.reshape(self.shape_g)

    def sample(self, psi: Callable) -> np.ndarray:
        return np.broadcast_to(np.asarray(psi(self.flat_g), float), self.flat_g.shape[:-1]).reshape(self.shape_g)


def _stable_chain(ops: _ResponseOperators, n_terms: int):
    a = ops.mult(ops.c_s, ops.alpha)
    chain = []
    for _ in range(n_terms):
        chain.append(a)
        a = ops.Rs @ a
    return chain


def _unstable_chain(ops: _ResponseOperators, dvals, n_terms: int):
    """``Ru^n (d alpha)`` for ``n = 0 .. n_terms``."""
    u = ops.mult(dvals, ops.alpha)
    chain = [u]
    for _ in range(n_terms):
        u = ops.Ru @ u
        chain.append(u)
    return chain


def pressure_derivative(cfg: ResponseConfig, mu0: GibbsMeasure, report: bool = False):
    """Derivative of the pressure at ``lam = 0``.

    Evaluates ``mu(phi') + mu(L_w phi)`` term by term in coefficient space:
    ``sum_n ell(D_s phi . Rs^n(c_s alpha)) - sum_{n>=1} ell(c_u . Ru^n(D_u phi alpha))``.
    """
    ops = _ResponseOperators(cfg, mu0)
    n = cfg.n_terms
    base = ops.pair(ops.mult(ops.phi_prime, ops.alpha)) if ops.phi_prime is not None else 0.0
    if cfg.tmap.invertible:
        stab = np.array([ops.pair(ops.mult(ops.Ds_phi, a)) for a in _stable_chain(ops, n)])
        uch = _unstable_chain(ops, ops.Du_phi, n)
        unst = np.array([ops.pair(ops.mult(ops.c_u, u)) for u in uch[1:]])
    else:
        stab = np.zeros(0)
        uch = _unstable_chain(ops, ops.D_phi, n - 1)
        unst = np.array([ops.pair(ops.mult(ops.v_over_T, u)) for u in uch])
    value = base + stab.sum() - unst.sum()
    tails = {"stable": _geometric_tail(stab[-1], fit_decay_ratio(stab)) if len(stab) else 0.0,
             "unstable": _geometric_tail(unst[-1], fit_decay_ratio(unst)) if len(unst) else 0.0}
    if max(tails.values()) > cfg.tol:
        raise TailBoundExceeded(f"response tail bound {max(tails.values()):.2e} above {cfg.tol:.1e}; "
                                "raise n_terms")
    if not report:
        return float(value)
    return ResponseReport(float(value), {"potential": float(base), "stable": float(stab.sum()),
                                         "unstable": float(-unst.sum())}, tails,
                          meta={"n_terms": n, "N": mu0.model.N})


def measure_derivative(cfg: ResponseConfig, mu0: GibbsMeasure, psi: Callable,
                       fd_delta: Optional[float] = None) -> ResponseReport:
    """Derivative of ``mu_lam(psi)`` at ``lam = 0`` for an invertible base map.

    The value is ``mu(L_w psi) + sum_{|k| <= k_range} cov(psi o T^k, g)`` with
    ``g = phi' + L_w phi``.  Each covariance is a three-point correlation
    evaluated with ``R``, ``Rs`` and ``Ru``.  ``k_terms`` holds the total of
    the covariance terms at each ``k``; the reported decay ratio is fitted on
    their moduli over ``|k|``.

    Raises
    ------
    TailBoundExceeded
        If a geometric tail bound exceeds ``cfg.tol``.
    """
    tmap = cfg.tmap
    if not tmap.invertible:
        raise ValueError("measure_derivative needs an invertible map: the backward correlations "
                         "are undefined for expanding maps")
    ops = _ResponseOperators(cfg, mu0)
    n_terms, K = cfg.n_terms, cfg.k_range
    R, Rs, Ru = ops.R, ops.Rs, ops.Ru
    psi_vals = ops.sample(psi)
    psi_alpha = ops.mult(psi_vals, ops.alpha)
    mu_psi = ops.pair(psi_alpha)
    terms = np.zeros(2 * K + 1)

    def add(k, val):
        if -K <= k <= K:
            terms[k + K] += val

    # powers R^p (psi alpha) for the backward correlations
    back = [psi_alpha]
    for _ in range(K):
        back.append(R @ back[-1])

    # stable part of L_w phi
    chain = _stable_chain(ops, n_terms)
    for n, a in enumerate(chain):
        b = ops.mult(ops.Ds_phi, a)
        mean = ops.pair(b)
        for k in range(0, K + 1):
            add(k, ops.pair(ops.mult(psi_vals, b)) - mu_psi * mean)
            b = R @ b
    means_s = [ops.pair(ops.mult(ops.Ds_phi, a)) for a in chain]
    for m, a in enumerate(chain):
        b = ops.mult(psi_vals, a)
        for j in range(1, min(K, n_terms - 1 - m) + 1):
            b = Rs @ b
            add(-j, ops.pair(ops.mult(ops.Ds_phi, b)) - mu_psi * means_s[m + j])
    for p in range(1, K + 1):
        d = ops.mult(ops.c_s, back[p])
        for n in range(0, min(n_terms, K - p + 1)):
            add(-p - n, ops.pair(ops.mult(ops.Ds_phi, d)) - mu_psi * means_s[n])
            d = Rs @ d

    # unstable part of L_w phi, entering with a minus sign
    uch = _unstable_chain(ops, ops.Du_phi, n_terms)
    e = [ops.mult(ops.c_u, u) for u in uch]
    means_u = [ops.pair(x) for x in e]
    for n in range(1, n_terms + 1):
        b = e[n]
        for k in range(n, K + 1):
            add(k, -(ops.pair(ops.mult(psi_vals, b)) - mu_psi * means_u[n]))
            b = R @ b
    for k in range(0, min(K + 1, n_terms)):
        b = ops.mult(psi_vals, uch[k])
        for j in range(1, n_terms - k + 1):
            b = Ru @ b
            add(k, -(ops.pair(ops.mult(ops.c_u, b)) - mu_psi * means_u[k + j]))
    for p in range(1, K + 1):
        d = ops.mult(ops.Du_phi, back[p])
        for n in range(1, n_terms + 1):
            d = Ru @ d
            add(-p, -(ops.pair(ops.mult(ops.c_u, d)) - mu_psi * means_u[n]))

    # potential derivative
    if ops.phi_prime is not None:
        f = ops.mult(ops.phi_prime, ops.alpha)
        mean = ops.pair(f)
        for k in range(0, K + 1):
            add(k, ops.pair(ops.mult(psi_vals, f)) - mu_psi * mean)
            f = R @ f
        for p in range(1, K + 1):
            add(-p, ops.pair(ops.mult(ops.phi_prime, back[p])) - mu_psi * mean)

    # mu(L_w psi)
    Ds_psi = ops.along(psi, ops.e_s)
    Du_psi = ops.along(psi, ops.e_u)
    lw_s = np.array([ops.pair(ops.mult(Ds_psi, a)) for a in chain])
    uch_psi = _unstable_chain(ops, Du_psi, n_terms)
    lw_u = np.array([ops.pair(ops.mult(ops.c_u, u)) for u in uch_psi[1:]])
    lw = lw_s.sum() - lw_u.sum()

    kvals = np.arange(-K, K + 1)
    order = np.argsort(np.abs(kvals) * 2 + (kvals < 0), kind="stable")
    corr = float(np.sum(terms[order]))
    by_abs = np.array([np.abs(terms[K + j]) + (np.abs(terms[K - j]) if j else 0.0)
                       for j in range(K + 1)])
    ratio = fit_decay_ratio(by_abs)
    tails = {"stable_push": _geometric_tail(lw_s[-1], fit_decay_ratio(lw_s)),
             "unstable_push": _geometric_tail(lw_u[-1], fit_decay_ratio(lw_u)),
             "k_sum": _geometric_tail(by_abs[-1], ratio)}
    if max(tails.values()) > cfg.tol:
        raise TailBoundExceeded(f"tail bound {max(tails.values()):.2e} above {cfg.tol:.1e}; "
                                "raise k_range or n_terms")
    rep = ResponseReport(lw + corr, {"stable_derivative": float(lw_s.sum()),
                                     "unstable_derivative": float(-lw_u.sum()),
                                     "correlations": corr}, tails, terms, kvals, ratio,
                         meta={"n_terms": n_terms, "k_range": K, "N": mu0.model.N,
                               "gap": float(mu0.model.gap)})
    if fd_delta is not None:
        rep.fd_value = fd_measure_derivative(cfg, psi, fd_delta, mu0.model.N)
    return rep


# ----------------------------------------------------------------------------
# finite-difference references


def _member_potential(cfg: ResponseConfig, lam: float) -> Potential:
    if cfg.pot_derivative is None or lam == 0.0:
        return cfg.pot
    from .potentials import Potential as _P
    base, d = cfg.pot, cfg.pot_derivative

    def w1(x):
        return base.w1(x) + lam * d(x)

    return _P("W1", f"{base.descriptor}+{lam!r}*d", w1=w1)


def fd_measure_derivative(cfg: ResponseConfig, psi: Callable, delta: float = 1e-3,
                          N: int = 14, trunc: TruncationProfile = IDENTITY) -> float:
    """Central difference of the spectral Gibbs average in the family parameter."""
    vals = []
    for lam in (-delta, delta):
        model = assemble(cfg.family.at(lam), _member_potential(cfg, lam), trunc, N,
                         check_aliasing=False)
        vals.append(GibbsMeasure(model).integrate(psi))
    return (vals[1] - vals[0]) / (2 * delta)


def fd_pressure_curve(cfg: ResponseConfig, h: float = 1e-3, N: int = 16,
                      trunc: TruncationProfile = IDENTITY):
    """Pressure at five nodes ``lam = -2h .. 2h`` and the five-point slope at 0."""
    nodes = h * np.arange(-2, 3)
    P = np.array([assemble(cfg.family.at(lam), _member_potential(cfg, lam), trunc, N,
                           check_aliasing=False).pressure for lam in nodes])
    slope = (P[0] - 8 * P[1] + 8 * P[3] - P[4]) / (12 * h)
    return nodes, P, float(slope)


# ----------------------------------------------------------------------------
# leafwise integration by parts


def _flow(v: Callable, x, t: float, steps: int = 4) -> np.ndarray:
    """Classical RK4 for ``dx/ds = v(x)`` over time ``t``."""
    dt = t / steps
    for _ in range(steps):
        k1 = v(x)
        k2 = v(x + 0.5 * dt * k1)
        k3 = v(x + 0.5 * dt * k2)
        k4 = v(x + dt * k3)
        x = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return x


def integration_by_parts_check(tmap: TorusMap, pot: Potential, center, v: Callable,
                               psi: Callable, length: float = 0.2, n: int = 6,
                               flow_step: float = 1e-3, P_guess: Optional[float] = None,
                               trunc: TruncationProfile = IDENTITY, n0: int = 129,
                               refine_tol: float = 1e-6) -> float:
    """Leafwise Stokes identity ``int_W psi L_v alpha = -int_W L_{v^s} psi alpha``.

    The left side differentiates the stable leafwise measure carried by the
    flowed curves ``Phi_{+-t}(W)`` and pulled back to ``W``; the right side is a
    quadrature of the stable derivative of ``psi chi`` where ``chi`` is a
    cutoff vanishing near the ends of ``W``.  Returns the absolute discrepancy.
    """
    from .leafwise import _iterate_batch, endpoint_cutoff

    center = as_points(center, tmap.dim)
    split = estimate_splitting(tmap, center)
    e = split.e_s
    if P_guess is None:
        P_guess = assemble(tmap, pot, trunc, 8, check_aliasing=False).pressure
    ts = np.array([-flow_step, 0.0, flow_step])
    eta = 1e-6

    def seed_fn(p):
        z = center[None, None, :] + p[None, :, None] * e[None, None, :]
        out, tau = [], []
        for t in ts:
            out.append(_flow(v, z[0], t))
            hi = _flow(v, z[0] + eta * e, t)
            lo = _flow(v, z[0] - eta * e, t)
            tau.append((hi - lo) / (2 * eta))
        return np.stack(out), np.stack(tau)

    meas = _iterate_batch(tmap, pot, trunc, "stable", np.repeat(center[None], 3, 0),
                          np.repeat(e[None], 3, 0), length, n, P_guess, n0=n0,
                          refine_tol=refine_tol, seed_fn=seed_fn)
    p = meas.params
    z = wrap(center[None, :] + p[:, None] * e[None, :])
    lo, hi = -0.5 * length, 0.5 * length
    margin = 0.2 * length
    chi = endpoint_cutoff(p, margin, lo, hi)
    q = meas.weights  # (3, m): trapezoid weights times density in p
    test = np.asarray(psi(z), float) * chi
    J = q @ test
    lhs = (J[2] - J[0]) / (2 * flow_step)

    def g(s):
        return np.asarray(psi(wrap(center[None, :] + s[:, None] * e[None, :])), float) \
            * endpoint_cutoff(s, margin, lo, hi)

    h = 1e-5
    dtest = (g(p + h) - g(p - h)) / (2 * h)
    vv = v(center[None, :] + p[:, None] * e[None, :])
    _, _, c_s, _ = project_vector(vv, estimate_splitting(tmap, z))
    rhs = -float(q[1] @ (c_s * dtest))
    return float(abs(lhs - rhs))
