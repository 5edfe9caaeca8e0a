"""Conformal leafwise measures by weighted leaf iteration.

A seed curve ``W`` is iterated by ``F = T^{-1}`` (stable leaves) or
``F = T`` (unstable leaves).  After ``n`` steps the measure on ``W`` has
density, with respect to the seed parameter,

    rho_n(z) = exp(sum_k (phi_bar - P)(points along the orbit)) * |DF^n(z) tau|,

where ``tau`` is the unit seed tangent.  For stable leaves the sum runs
over ``T^{-k} z, k = 1..n``; for unstable leaves over ``T^k z, k = 0..n-1``.
The limits satisfy ``mu_s = T_*(exp(phi_bar - P) mu_s)`` and
``mu_u = T_*(exp(P - phi_bar) mu_u)``.

Seeds are processed in batches sharing one parameter grid, which is refined
wherever any seed's image bends or its potential varies too much.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .dynamics import (TorusMap, as_points, estimate_splitting, invert_lift, torus_distance,
                       wrap)
from .errors import ChartOverlap, DivergingMass, NotSameStableLeaf, RefinementBlowup
from .potentials import Potential, evaluate_bar_phi
from .spectral import IDENTITY, TruncationProfile

TWO_PI = 2.0 * np.pi


@dataclass
class LeafSegment:
    """Sampled curve in the lifted plane.

    ``points[i]`` is the image of the seed point with parameter ``params[i]``
    (signed arclength along the straight seed).
    """

    points: np.ndarray
    params: np.ndarray
    direction: str
    refine_tol: float = 1e-4
    center: Optional[np.ndarray] = None
    tangent: Optional[np.ndarray] = None

    @property
    def arclength(self) -> np.ndarray:
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=-1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    def covering_count(self, max_len: float = 0.5) -> int:
        """Number of pieces of length at most ``max_len`` needed to cover the curve."""
        return int(np.ceil(self.length / max_len - 1e-12))

    def pieces(self, max_len: float = 0.5) -> List["LeafSegment"]:
        """Split at nodes so each piece has length at most ``max_len`` where nodes allow."""
        s = self.arclength
        cuts = [0]
        for i in range(1, len(s)):
            if s[i] - s[cuts[-1]] > max_len and i - 1 > cuts[-1]:
                cuts.append(i - 1)
        cuts.append(len(s) - 1)
        return [LeafSegment(self.points[a:b + 1], self.params[a:b + 1], self.direction,
                            self.refine_tol) for a, b in zip(cuts[:-1], cuts[1:])]


def make_segment(tmap: TorusMap, x, direction: str, length: float, n0: int = 65,
                 refine_tol: float = 1e-4) -> LeafSegment:
    """Straight seed of the given length centred at ``x`` along ``e_s`` or ``e_u``."""
    x = as_points(x, tmap.dim)
    if direction not in ("stable", "unstable"):
        raise ValueError("direction must be 'stable' or 'unstable'")
    if tmap.dim == 1:
        if direction == "stable":
            raise ValueError("expanding circle maps have no stable leaves")
        e = np.ones(1)
    else:
        split = estimate_splitting(tmap, x)
        e = split.e_s if direction == "stable" else split.e_u
    t = np.linspace(-0.5 * length, 0.5 * length, n0)
    return LeafSegment(x + t[:, None] * e, t, direction, refine_tol, x.copy(), e.copy())


# ----------------------------------------------------------------------------
# batched leaf iteration


def potential_lipschitz(pot: Potential, tmap: TorusMap, samples: int = 64) -> float:
    """Lipschitz bound of ``phi_bar``: exact for Fourier terms, sampled otherwise."""
    if pot.is_constant:
        return 0.0
    if pot.kind == "W1" and not pot.is_srb:
        return float(sum(abs(t.coef) * TWO_PI * np.linalg.norm(t.k) for t in pot.terms))
    if tmap.is_linear:
        return 0.0
    g = (np.arange(samples) + 0.5) / samples
    h = 1e-5
    if tmap.dim == 1:
        x = g[:, None]
        d = (evaluate_bar_phi(pot, tmap, x + h) - evaluate_bar_phi(pot, tmap, x - h)) / (2 * h)
        return float(1.5 * np.max(np.abs(d)))
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    grads = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        grads.append((evaluate_bar_phi(pot, tmap, X + e) - evaluate_bar_phi(pot, tmap, X - e)) / (2 * h))
    return float(1.5 * np.max(np.hypot(*grads)))


class _LeafFlow:
    """Advance a batch of straight seeds ``centers + t * tangents`` by ``F``."""

    def __init__(self, tmap: TorusMap, pot: Potential, trunc: TruncationProfile,
                 direction: str, seed_fn: Callable, P: float):
        self.tmap, self.pot, self.trunc = tmap, pot, trunc
        self.stable = direction == "stable"
        self.seed_fn = seed_fn  # t -> (points (B, m, d), d points / dt)
        self.P = P

    def _phi(self, p, tau):
        if self.pot.kind == "W1":
            return self.pot.w1(p)
        if self.stable:
            return self.pot.w0(p, tau)
        return evaluate_bar_phi(self.pot, self.tmap, wrap(p))

    def _step(self, p, tau, logw):
        tmap = self.tmap
        if self.stable:
            q = invert_lift(tmap, p)
            tau = np.linalg.solve(tmap.jacobian(q), tau[..., None])[..., 0]
            logw = logw + self._phi(q, tau) - self.P
            if self.trunc.mode != "identity":
                logw = logw + np.log(np.maximum(self.trunc.survival(wrap(q)), 1e-300))
            return q, tau, logw
        logw = logw + self._phi(p, tau) - self.P
        if self.trunc.mode != "identity":
            logw = logw + np.log(np.maximum(self.trunc.survival(wrap(p)), 1e-300))
        J = tmap.jacobian(p)
        return tmap.lift(p), np.einsum("...ij,...j->...i", J, tau), logw

    def start(self, t):
        p, tau = self.seed_fn(t)
        return p, tau, np.zeros(p.shape[:2])

    def run(self, t, k):
        state = self.start(t)
        for _ in range(k):
            state = self._step(*state)
        return state


@dataclass
class LeafwiseMeasure:
    """Measures on a batch of seeds after ``n`` steps of weighted iteration.

    ``density[b, i]`` is the density at parameter ``params[i]`` of seed ``b``
    with respect to the seed parameter (arclength on the straight seed).
    """

    direction: str
    centers: np.ndarray
    tangents: np.ndarray
    params: np.ndarray
    density: np.ndarray
    images: np.ndarray
    generation: int
    P_guess: float
    log_mass: np.ndarray
    residuals: np.ndarray
    image_length: np.ndarray
    cutoff_margin: float
    seed: Optional[LeafSegment] = None
    seed_fn: Optional[Callable] = field(default=None, repr=False)

    @property
    def seed_points(self) -> np.ndarray:
        if self.seed_fn is not None:
            return self.seed_fn(self.params)[0]
        return self.centers[:, None, :] + self.params[None, :, None] * self.tangents[:, None, :]

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights times the density."""
        t = self.params
        q = np.zeros_like(t)
        q[1:] += 0.5 * np.diff(t)
        q[:-1] += 0.5 * np.diff(t)
        return self.density * q[None, :]

    @property
    def conformality_residual(self) -> float:
        return float(self.residuals[-1]) if len(self.residuals) else np.nan

    @property
    def pressure_estimate(self) -> float:
        """``P_guess`` corrected by the last mass increment of the first seed."""
        inc = np.ravel(self.log_mass[-1] - self.log_mass[-2])[0]
        return float(self.P_guess + inc)

    def integrate(self, f: Callable, seed_index: int = 0, cutoff: bool = True) -> float:
        """``int f dmu`` on one seed, optionally with the endpoint cutoff."""
        z = self.seed_points[seed_index]
        vals = f(wrap(z))
        if cutoff:
            vals = vals * endpoint_cutoff(self.params, self.cutoff_margin)
        return float(np.sum(vals * self.weights[seed_index]))

    def image_segment(self, seed_index: int = 0) -> LeafSegment:
        return LeafSegment(self.images[seed_index], self.params, self.direction)


def endpoint_cutoff(t: np.ndarray, margin: float, a: Optional[float] = None,
                    b: Optional[float] = None) -> np.ndarray:
    """Smooth cutoff equal to 1 away from ``[a, b]``'s ends and 0 within ``margin`` of them.

    The interval defaults to ``[t[0], t[-1]]``.
    """
    a = t[0] if a is None else a
    b = t[-1] if b is None else b
    d = np.minimum(t - a, b - t)
    u = np.clip((d - margin) / margin, 0.0, 1.0)

    def f(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    return f(u) / (f(u) + f(1.0 - u))


def default_test_functions(dim: int) -> List[Callable]:
    """Ten smooth observables on the torus."""
    if dim == 1:
        ks = [0, 1, 2, 3, 4]
        fs = []
        for k in ks:
            fs.append(lambda x, k=k: np.cos(TWO_PI * k * x[..., 0]))
            if k:
                fs.append(lambda x, k=k: np.sin(TWO_PI * k * x[..., 0]))
        return fs[:10]
    modes = [(0, 0), (1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2), (2, 1), (1, 2), (3, -1)]
    fs = []
    for i, k in enumerate(modes):
        kk = np.array(k, float)
        if i % 2:
            fs.append(lambda x, kk=kk: np.sin(TWO_PI * (x @ kk)) + 1.5)
        else:
            fs.append(lambda x, kk=kk: np.cos(TWO_PI * (x @ kk)) + 1.5)
    return fs


def straight_seeds(centers, tangents) -> Callable:
    """Seed function for the segments ``centers[b] + t * tangents[b]``."""
    centers = np.atleast_2d(np.asarray(centers, float))
    tangents = np.atleast_2d(np.asarray(tangents, float))

    def seed_fn(t):
        p = centers[:, None, :] + t[None, :, None] * tangents[:, None, :]
        tau = np.broadcast_to(tangents[:, None, :], p.shape).copy()
        return p, tau

    return seed_fn


def _iterate_batch(tmap, pot, trunc, direction, centers, tangents, length, n, P_guess,
                   n0=65, refine_tol=1e-4, weight_tol=0.02, max_nodes=2_000_000,
                   tests=None, cutoff_fraction=0.1, diverge_tol=None, seed_fn=None):
    centers = np.atleast_2d(np.asarray(centers, float))
    tangents = np.atleast_2d(np.asarray(tangents, float))
    custom_seed = seed_fn is not None
    seed_fn = seed_fn or straight_seeds(centers, tangents)
    flow = _LeafFlow(tmap, pot, trunc, direction, seed_fn, P_guess)
    lip = potential_lipschitz(pot, tmap)
    t = np.linspace(-0.5 * length, 0.5 * length, n0)
    state = flow.start(t)
    margin = cutoff_fraction * length
    tests = tests or default_test_functions(tmap.dim)

    def trapezoid(tt):
        q = np.zeros_like(tt)
        q[1:] += 0.5 * np.diff(tt)
        q[:-1] += 0.5 * np.diff(tt)
        return q

    def measure_values(tt, st):
        p, tau, logw = st
        dens = np.exp(logw) * np.linalg.norm(tau, axis=-1)
        w = dens * trapezoid(tt)[None, :] * endpoint_cutoff(tt, margin)[None, :]
        z = wrap(seed_fn(tt)[0])
        vals = np.stack([np.sum(f(z) * w, axis=1) for f in tests], axis=1)
        return vals, np.sum(dens * trapezoid(tt)[None, :], axis=1)

    history, log_mass = [], []
    v, mass = measure_values(t, state)
    history.append(v)
    log_mass.append(np.log(mass))
    residuals = []
    for k in range(1, n + 1):
        state = flow._step(*state)
        while True:
            p, tau, logw = state
            dp = np.linalg.norm(np.diff(p, axis=1), axis=-1)
            ta = tau / np.linalg.norm(tau, axis=-1, keepdims=True)
            if tmap.dim == 2:
                sin = np.abs(ta[:, 1:, 0] * ta[:, :-1, 1] - ta[:, 1:, 1] * ta[:, :-1, 0])
            else:
                sin = np.zeros_like(dp)
            bad = (dp * sin / 4 > refine_tol) | (dp * lip > weight_tol)
            bad = bad.any(axis=0)
            if not bad.any():
                break
            mids = 0.5 * (t[:-1][bad] + t[1:][bad])
            if (len(t) + len(mids)) * p.shape[0] > max_nodes:
                raise RefinementBlowup(f"leaf refinement needs more than {max_nodes} nodes "
                                       f"at step {k}; reduce the number of steps or loosen tolerances")
            new = flow.run(mids, k)
            order = np.argsort(np.concatenate([t, mids]), kind="stable")
            t = np.concatenate([t, mids])[order]
            state = tuple(np.concatenate([a, b], axis=1)[:, order] for a, b in zip(state, new))
        v, mass = measure_values(t, state)
        history.append(v)
        log_mass.append(np.log(mass))
        prev = history[-2]
        scale = np.max(np.abs(v), axis=1)
        residuals.append(float(np.max(np.max(np.abs(v - prev), axis=1) / scale)))
        if diverge_tol is not None and k >= 6:
            inc = np.diff(np.asarray(log_mass)[-4:], axis=0)
            if np.all(np.abs(inc.mean(axis=0)) > diverge_tol):
                raise DivergingMass(f"log mass drifts by {inc.mean():.3e} per step; "
                                    "the pressure guess is off")
    p, tau, logw = state
    dens = np.exp(logw) * np.linalg.norm(tau, axis=-1)
    image_len = np.sum(np.linalg.norm(np.diff(p, axis=1), axis=-1), axis=1)
    return LeafwiseMeasure(direction, centers, tangents, t, dens, p, n, P_guess,
                           np.asarray(log_mass), np.asarray(residuals), image_len, margin,
                           seed_fn=seed_fn if custom_seed else None)


def iterate_leaf(tmap: TorusMap, seg: LeafSegment, steps: int, max_nodes: int = 2_000_000,
                 weight_tol: float = 0.02) -> LeafSegment:
    """Image of a seed under ``T^{-steps}`` (stable) or ``T^{steps}`` (unstable), refined."""
    if steps == 0:
        return seg
    from .potentials import zero
    meas = _iterate_batch(tmap, zero(), IDENTITY, seg.direction, seg.center, seg.tangent,
                          seg.params[-1] - seg.params[0], steps, 0.0, n0=len(seg.params),
                          refine_tol=seg.refine_tol, max_nodes=max_nodes)
    return LeafSegment(meas.images[0], meas.params, seg.direction, seg.refine_tol)


def margulis_iterate(tmap: TorusMap, pot: Potential, trunc: TruncationProfile,
                     seed: LeafSegment, n: int, P_guess: float, **kwargs) -> LeafwiseMeasure:
    """Stable leafwise measure on ``seed`` after ``n`` weighted backward steps."""
    if seed.direction != "stable":
        raise ValueError("margulis_iterate needs a stable seed")
    out = _iterate_batch(tmap, pot, trunc, "stable", seed.center, seed.tangent,
                         seed.params[-1] - seed.params[0], n, P_guess, n0=len(seed.params),
                         refine_tol=seed.refine_tol, **kwargs)
    out.seed = seed
    return out


def margulis_unstable(tmap: TorusMap, pot: Potential, trunc: TruncationProfile,
                      seed: LeafSegment, n: int, P_guess: float, **kwargs) -> LeafwiseMeasure:
    """Unstable leafwise measure on ``seed`` after ``n`` weighted forward steps."""
    if seed.direction != "unstable":
        raise ValueError("margulis_unstable needs an unstable seed")
    out = _iterate_batch(tmap, pot, trunc, "unstable", seed.center, seed.tangent,
                         seed.params[-1] - seed.params[0], n, P_guess, n0=len(seed.params),
                         refine_tol=seed.refine_tol, **kwargs)
    out.seed = seed
    return out


def margulis_pressure(tmap: TorusMap, pot: Potential, seed: LeafSegment, n: int,
                      P_guess: float, trunc: TruncationProfile = IDENTITY) -> float:
    """Pressure from the growth of leaf mass: ``P_guess + log(m_n / m_{n-1})``."""
    run = margulis_iterate if seed.direction == "stable" else margulis_unstable
    return run(tmap, pot, trunc, seed, n, P_guess).pressure_estimate


# ----------------------------------------------------------------------------
# holonomy, uniqueness, product reconstruction


@dataclass
class Holonomy:
    value: float
    tail_bound: float
    n_terms: int


def holonomy_jacobian(tmap: TorusMap, pot: Potential, x, y, n_terms: int = 30,
                      contraction_slack: float = 10.0) -> Holonomy:
    """``exp(sum_{k<n} phi_bar(T^k y) - phi_bar(T^k x))`` for ``x, y`` on one stable leaf."""
    x = as_points(x, tmap.dim)
    y = as_points(y, tmap.dim)
    d0 = float(torus_distance(x, y))
    total = 0.0
    px, py = x.copy(), y.copy()
    for _ in range(n_terms):
        total += float(evaluate_bar_phi(pot, tmap, py) - evaluate_bar_phi(pot, tmap, px))
        px, py = wrap(tmap.lift(px)), wrap(tmap.lift(py))
    nu = tmap.contraction
    dn = float(torus_distance(px, py))
    if dn > contraction_slack * (nu ** n_terms) * d0 + 1e-12:
        raise NotSameStableLeaf(f"forward distance {dn:.2e} does not contract from {d0:.2e}")
    lip = potential_lipschitz(pot, tmap)
    tail = nu ** n_terms * lip * d0 / (1 - nu)
    return Holonomy(float(np.exp(total)), float(tail), n_terms)


@dataclass
class UniquenessReport:
    c: float
    residual: float
    values_a: np.ndarray
    values_b: np.ndarray


def uniqueness_test(tmap: TorusMap, pot: Potential, trunc: TruncationProfile,
                    seeds: Sequence[LeafSegment], n: int, P_guess: float,
                    tests: Optional[List[Callable]] = None, **kwargs) -> UniquenessReport:
    """Compare the Margulis measures grown from two collinear stable seeds.

    Both measures are integrated against test functions localised on the
    overlap of the seeds; the report gives the least-squares proportionality
    constant and the relative residual.
    """
    a, b = seeds
    if a.direction != "stable" or b.direction != "stable":
        raise ValueError("uniqueness_test needs stable seeds")
    e = a.tangent
    offset = float(np.dot(b.center - a.center, e))
    perp = np.linalg.norm((b.center - a.center) - offset * e)
    if perp > 1e-9:
        raise NotSameStableLeaf("seeds are not collinear along the stable direction")
    lo = max(a.params[0], offset + b.params[0])
    hi = min(a.params[-1], offset + b.params[-1])
    if hi <= lo:
        raise ValueError("seeds do not overlap")
    margin = 0.25 * (hi - lo)
    tests = tests or default_test_functions(tmap.dim)
    ma = margulis_iterate(tmap, pot, trunc, a, n, P_guess, **kwargs)
    mb = margulis_iterate(tmap, pot, trunc, b, n, P_guess, **kwargs)

    def values(meas, shift):
        s = meas.params + shift  # coordinate along the common line, origin at a.center
        cut = endpoint_cutoff(s, margin, lo, hi)
        z = wrap(meas.seed_points[0])
        w = meas.weights[0] * cut
        return np.array([np.sum(f(z) * w) for f in tests])

    va, vb = values(ma, 0.0), values(mb, offset)
    c = float(np.dot(vb, va) / np.dot(vb, vb))
    res = float(np.linalg.norm(va - c * vb) / np.linalg.norm(va))
    return UniquenessReport(c, res, va, vb)


def partition_of_unity(G: int, dim: int):
    """``G^dim`` products of ``cos^2`` bumps on a regular grid; they sum to 1."""
    centers = np.arange(G) / G

    def bump1(t, c):
        d = np.mod(t - c + 0.5, 1.0) - 0.5
        return np.where(np.abs(d) < 1.0 / G, np.cos(0.5 * np.pi * G * d) ** 2, 0.0)

    charts = []
    if dim == 1:
        for c in centers:
            charts.append((np.array([c]), lambda x, c=c: bump1(x[..., 0], c)))
    else:
        for c1 in centers:
            for c2 in centers:
                charts.append((np.array([c1, c2]),
                               lambda x, c1=c1, c2=c2: bump1(x[..., 0], c1) * bump1(x[..., 1], c2)))
    return charts


@dataclass
class ProductIntegral:
    values: np.ndarray
    partition_error: float
    charts: int


def product_integral(tmap: TorusMap, pot: Potential, observables: Sequence[Callable],
                     n: int, P_guess: float, G: int = 4, nodes: int = 49,
                     trunc: TruncationProfile = IDENTITY, holonomy_terms: int = 30,
                     alpha: Optional[Callable] = None) -> ProductIntegral:
    """Gibbs averages rebuilt from leafwise measures over a partition of unity.

    On each chart, centred at ``c``, an unstable transversal ``F`` through
    ``c`` carries the Margulis measure ``mu_u``; each point ``x`` of ``F``
    carries a stable segment with measure ``mu_s``.  The chart contributes

        int_F int_{W_s(x)} psi chi_c H(x, y) dmu_s(y) dmu_u(x),

    with ``H`` the holonomy density, and the result is normalised by the same
    expression for ``psi = 1``.  On the circle there are no stable leaves and
    ``alpha`` (a density along the unstable direction) takes their place.
    """
    charts = partition_of_unity(G, tmap.dim)
    probe = quadrature_grid_points(tmap.dim, 37)
    perr = float(np.max(np.abs(sum(chi(probe) for _, chi in charts) - 1.0)))
    if perr > 1e-6:
        warnings.warn(f"partition of unity off by {perr:.2e}", ChartOverlap, stacklevel=2)
    obs = list(observables) + [lambda x: np.ones(x.shape[:-1])]
    totals = np.zeros(len(obs))
    lip = potential_lipschitz(pot, tmap)
    for c, chi in charts:
        if tmap.dim == 1:
            half = 1.0 / G
            seed = make_segment(tmap, c, "unstable", 2 * half * 1.02, nodes)
            mu_u = margulis_unstable(tmap, pot, trunc, seed, n, P_guess)
            z = wrap(mu_u.seed_points[0])
            w = mu_u.weights[0] * chi(z)
            if alpha is not None:
                w = w * alpha(z)
            totals += np.array([np.sum(f(z) * w) for f in obs])
            continue
        split = estimate_splitting(tmap, c)
        es, eu = split.e_s, split.e_u
        # chart box in (s, u) coordinates covering the support square of chi
        corners = np.array([[a, b] for a in (-1, 1) for b in (-1, 1)]) / G
        det = es[0] * eu[1] - es[1] * eu[0]
        cs = (corners[:, 0] * eu[1] - corners[:, 1] * eu[0]) / det
        cu = (es[0] * corners[:, 1] - es[1] * corners[:, 0]) / det
        S = 1.02 * np.max(np.abs(cs))
        U = 1.02 * np.max(np.abs(cu))
        seed_u = make_segment(tmap, c, "unstable", 2 * U, nodes)
        mu_u = margulis_unstable(tmap, pot, trunc, seed_u, n, P_guess)
        # the transversal density is smooth; resample it so that refinement
        # of the unstable run does not multiply the number of stable seeds
        tu = np.linspace(mu_u.params[0], mu_u.params[-1], nodes)
        wu = np.interp(tu, mu_u.params, mu_u.density[0])
        qu = np.zeros_like(tu)
        qu[1:] += 0.5 * np.diff(tu)
        qu[:-1] += 0.5 * np.diff(tu)
        wu = wu * qu
        xs = c + tu[:, None] * eu
        mu_s = _iterate_batch(tmap, pot, trunc, "stable", xs,
                              np.broadcast_to(es, xs.shape), 2 * S, n, P_guess, n0=nodes)
        ys = mu_s.seed_points  # (B, m, 2)
        H = np.ones(ys.shape[:2])
        if lip > 0:
            acc = np.zeros(ys.shape[:2])
            px = np.broadcast_to(xs[:, None, :], ys.shape).copy()
            py = ys.copy()
            for _ in range(holonomy_terms):
                acc += evaluate_bar_phi(pot, tmap, wrap(py)) - evaluate_bar_phi(pot, tmap, wrap(px))
                px, py = tmap.lift(px), tmap.lift(py)
            H = np.exp(acc)
        w = mu_s.weights * H * chi(wrap(ys)) * wu[:, None]
        totals += np.array([np.sum(f(wrap(ys)) * w) for f in obs])
    return ProductIntegral(totals[:-1] / totals[-1], perr, len(charts))


def quadrature_grid_points(dim: int, P: int) -> np.ndarray:
    g = (np.arange(P) + 0.37) / P
    if dim == 1:
        return g[:, None]
    return np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
