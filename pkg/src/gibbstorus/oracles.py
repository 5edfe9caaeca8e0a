"""Brute-force estimators used to cross-check the spectral computations.

Nothing here touches the Fourier model: pressures come from counting
separated sets and periodic orbits, averages from orbit sums and random
sampling, and eigendata from a piecewise-constant (Ulam) discretization.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .dynamics import (TorusMap, apply, get_map, orbit,
                       backward_orbit, torus_displacement, wrap)
from .errors import GridTooCoarse, InsufficientSurvivors, OrbitEnumerationIncomplete
from .potentials import Potential, evaluate_bar_phi
from .spectral import TruncationProfile

RNG_NAME = "numpy.random.Generator(PCG64)"


@dataclass
class OracleReport:
    """Estimate with a method-specific error bar.

    ``error_bar`` is a bracket width, a standard error or a refinement gap
    depending on ``method``; ``params`` plus ``seed`` reproduce the run.
    """

    estimate: float
    error_bar: float
    cost: int
    method: str
    seed: Optional[int] = None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.error_bar = max(float(self.error_bar), np.finfo(float).tiny)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rng"] = RNG_NAME if self.seed is not None else None
        return out


def _workers_map(fn, chunks, workers: int):
    """Apply ``fn`` over ``chunks`` and return results in chunk order."""
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, chunks))


def _birkhoff_weights(tmap: TorusMap, pot: Potential, orb: np.ndarray) -> np.ndarray:
    """``sum_k phi_bar(orb[k])`` along the leading axis."""
    flat = orb.reshape(-1, tmap.dim)
    vals = evaluate_bar_phi(pot, tmap, flat).reshape(orb.shape[:-1])
    return vals.sum(axis=0)


# ----------------------------------------------------------------------------
# separated sets


def _embedding(tmap: TorusMap, pts: np.ndarray, n: int) -> np.ndarray:
    """Orbit coordinates ``(x, F x, ..., F^{n-1} x)`` with ``F`` the ball direction."""
    orb = backward_orbit(tmap, pts, n) if tmap.invertible else orbit(tmap, pts, n)
    return np.moveaxis(orb, 0, 1).reshape(len(pts), -1), orb


def _greedy_separated(emb: np.ndarray, eps: float) -> np.ndarray:
    """Indices of a maximal set with pairwise sup-distance ``> eps``.

    Points are visited in index order; each selected point removes every
    point within ``eps`` in the product metric.
    """
    tree = cKDTree(np.mod(emb, 1.0), boxsize=1.0)
    covered = np.zeros(len(emb), dtype=bool)
    chosen = []
    for i in range(len(emb)):
        if covered[i]:
            continue
        chosen.append(i)
        covered[tree.query_ball_point(np.mod(emb[i], 1.0), eps, p=np.inf)] = True
    return np.asarray(chosen)


def _candidate_points(tmap: TorusMap, eps: float, n: int, spacing: Optional[float]):
    need = eps * tmap.expansion ** -n
    if tmap.dim == 1 or not tmap.is_linear:
        if spacing > need:
            raise GridTooCoarse(f"grid spacing {spacing:.2e} exceeds eps * nu^n = {need:.2e}")
        m = int(np.ceil(1.0 / spacing))
        if tmap.dim == 1:
            return (np.arange(m) + 0.5)[:, None] / m
        if m * m > 4_000_000:
            raise GridTooCoarse(f"a {m}x{m} grid is needed; reduce n or raise eps")
        g = (np.arange(m) + 0.5) / m
        return np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    # linear automorphisms: a grid aligned with the eigen-directions, fine only
    # along the stable line where backward iterates separate points
    w, V = np.linalg.eig(tmap.linear_part)
    order = np.argsort(np.abs(w))
    es, eu = np.real(V[:, order[0]]), np.real(V[:, order[-1]])
    s_step = spacing
    if s_step > need:
        raise GridTooCoarse(f"stable spacing {s_step:.2e} exceeds eps * nu^n = {need:.2e}")
    u_step = 0.5 * eps
    # a fundamental domain: sides 2 along each unit eigenvector cover the torus
    s = np.arange(0.0, 2.0, s_step)
    u = np.arange(0.0, 2.0, u_step)
    pts = s[:, None, None] * es + u[None, :, None] * eu
    return wrap(pts.reshape(-1, 2))


def _greedy_sweep_circle(orb: np.ndarray, eps: float, window: int = 256) -> np.ndarray:
    """Greedy separated set on a sorted circle grid.

    For radii below the injectivity scale a Bowen ball is an interval, so
    the next selectable point after ``k`` is the first later grid point
    whose orbit leaves the ball.  ``orb`` has shape ``(n, M)``.
    """
    n, M = orb.shape
    chosen, k = [], 0
    while k < M:
        chosen.append(k)
        w = window
        while True:
            seg = orb[:, k + 1:k + 1 + w]
            d = np.abs(seg - orb[:, k:k + 1])
            out = np.any(np.minimum(d, 1.0 - d) > eps, axis=0)
            hit = np.flatnonzero(out)
            if hit.size or k + 1 + w >= M:
                break
            w *= 2
        k = k + 1 + (hit[0] if hit.size else M)
        window = max(16, 2 * (hit[0] + 1) if hit.size else window)
    chosen = np.asarray(chosen)
    # the circle closes up: drop the last point if it shadows the first
    if len(chosen) > 1:
        d = np.abs(orb[:, chosen[-1]] - orb[:, chosen[0]])
        if np.all(np.minimum(d, 1.0 - d) <= eps):
            chosen = chosen[:-1]
    return chosen


def separated_set_pressure(tmap: TorusMap, pot: Potential, eps: float, n: int,
                           spacing: Optional[float] = None, resolution: Optional[int] = None) -> OracleReport:
    """Pressure from greedy ``(n, eps)``-separated sets.

    The greedy set at ``eps`` and the greedy set at ``2 eps`` are both
    ``eps``-separated; the ``2 eps`` set also bounds the spanning infimum at
    ``eps`` from below.  Each weighted log-sum is turned into a pressure by the
    increment ``log Z_n - log Z_{n-1}``, which cancels the ``eps``-dependent
    prefactor that ``(1/n) log Z_n`` carries at desk-scale ``n``.

    Parameters
    ----------
    spacing : float, optional
        Search-grid spacing; defaults to ``eps nu^n / resolution``.  A
        spacing above ``eps nu^n`` raises :class:`GridTooCoarse`.

    Returns
    -------
    OracleReport
        ``estimate`` is the separated increment; ``extra["bracket"]`` holds
        the smaller and larger of the two increments.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    need = eps * tmap.expansion ** -n
    resolution = resolution or (64 if tmap.dim == 1 else 16)
    spacing = spacing or need / resolution
    pts = _candidate_points(tmap, eps, n, spacing)
    emb, orb = _embedding(tmap, pts, n)
    circle = tmap.dim == 1

    def log_z(k, radius):
        if circle:
            idx = _greedy_sweep_circle(orb[:k, :, 0], radius)
        else:
            idx = _greedy_separated(emb[:, : k * tmap.dim], radius)
        w = _birkhoff_weights(tmap, pot, orb[:k, idx])
        return float(np.logaddexp.reduce(w)), len(idx)

    z_sep = [log_z(n - 1, eps), log_z(n, eps)]
    z_wide = [log_z(n - 1, 2 * eps), log_z(n, 2 * eps)]
    inc_sep = z_sep[1][0] - z_sep[0][0]
    inc_span = z_wide[1][0] - z_wide[0][0]
    lo, hi = sorted((inc_span, inc_sep))
    return OracleReport(inc_sep, hi - lo, len(pts), "separated_set",
                        params={"map": tmap.name, "potential": pot.descriptor, "eps": eps, "n": n,
                                "spacing": spacing},
                        extra={"bracket": [lo, hi], "spanning_increment": inc_span,
                               "separated_log_sum": max(z_sep[1][0], z_wide[1][0]),
                               "spanning_log_sum": z_wide[1][0],
                               "average_rate": z_sep[1][0] / n, "set_size": z_sep[1][1]})


# ----------------------------------------------------------------------------
# periodic orbits


def _circle_fixed_points(tmap: TorusMap, n: int, tol: float = 1e-15) -> np.ndarray:
    """Fixed points of ``T^n`` for an increasing expanding circle map.

    ``F(x) = T^n(x) - x`` is increasing on the lift with ``F(1) - F(0) =
    deg^n - 1``; each integer value in range is hit exactly once.
    """
    def F(x):
        y = x.copy()
        for _ in range(n):
            y = tmap.lift(y[..., None])[..., 0]
        return y - x

    f0 = F(np.zeros(1))[0]
    targets = np.arange(np.ceil(f0), f0 + tmap.degree ** n - 1)
    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        up = F(mid) > targets
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        if np.max(hi - lo) < tol:
            break
    return (0.5 * (lo + hi))[:, None]


def _hnf_lower(B: np.ndarray):
    """Lower-triangular column Hermite form ``[[a, 0], [b, c]]`` of an integer 2x2 matrix."""
    M = [[int(B[0, 0]), int(B[0, 1])], [int(B[1, 0]), int(B[1, 1])]]
    # column operations zero the (0, 1) entry
    while M[0][1] != 0:
        q = M[0][0] // M[0][1]
        M[0][0] -= q * M[0][1]
        M[1][0] -= q * M[1][1]
        M[0][0], M[0][1] = M[0][1], M[0][0]
        M[1][0], M[1][1] = M[1][1], M[1][0]
    a, b, c = M[0][0], M[1][0], M[1][1]
    if a < 0:
        a, b = -a, -b
    if c < 0:
        c = -c
    return a, b, c


def _cat_fixed_points(A: np.ndarray, n: int) -> np.ndarray:
    """All ``x`` with ``(A^n - I) x`` integral, one per residue class."""
    An = np.linalg.matrix_power(A.astype(np.int64), n)
    B = An - np.eye(2, dtype=np.int64)
    a, b, c = _hnf_lower(B)
    i, j = np.meshgrid(np.arange(a), np.arange(c), indexing="ij")
    m = np.stack([i.ravel(), j.ravel()], -1).astype(float)
    x = np.linalg.solve(B.astype(float), m.T).T
    return wrap(x), int(round(abs(np.linalg.det(B.astype(float)))))


def _newton_orbits(tmap: TorusMap, X: np.ndarray, iters: int = 20, tol: float = 1e-13):
    """Multiple-shooting Newton for period-``n`` orbits.

    ``X`` has shape ``(n, P, 2)``; the residuals are ``x_{k+1} - T x_k`` on the
    torus (indices mod ``n``).  Returns the polished orbits and the residual.
    """
    n, P, d = X.shape
    I = np.eye(d)
    res = np.inf
    for _ in range(iters):
        TX = apply(tmap, X.reshape(-1, d)).reshape(X.shape)
        R = torus_displacement(TX, np.roll(X, -1, axis=0))  # (n, P, d)
        res = float(np.max(np.abs(R)))
        if res < tol:
            break
        J = np.zeros((P, n * d, n * d))
        DT = tmap.jacobian(X.reshape(-1, d)).reshape(n, P, d, d)
        for k in range(n):
            r0, c0, c1 = k * d, k * d, ((k + 1) % n) * d
            J[:, r0:r0 + d, c0:c0 + d] -= DT[k]
            J[:, r0:r0 + d, c1:c1 + d] += I
        rhs = -np.moveaxis(R, 0, 1).reshape(P, n * d)
        step = np.linalg.solve(J, rhs[..., None])[..., 0]
        X = wrap(X + np.moveaxis(step.reshape(P, n, d), 1, 0))
    return X, res


def _unique_points(x: np.ndarray, digits: int = 9) -> np.ndarray:
    key = np.round(wrap(x) * 10 ** digits).astype(np.int64) % 10 ** digits
    _, idx = np.unique(key, axis=0, return_index=True)
    return x[np.sort(idx)]


def fixed_points(tmap: TorusMap, n: int, continuation_steps: int = 10) -> np.ndarray:
    """Enumerate ``Fix(T^n)`` for circle maps and (perturbed) cat maps.

    Raises
    ------
    OrbitEnumerationIncomplete
        When continuation loses or merges roots.
    """
    if tmap.dim == 1:
        pts = _circle_fixed_points(tmap, n)
        if len(pts) != tmap.degree ** n - 1:
            raise OrbitEnumerationIncomplete(f"found {len(pts)} of {tmap.degree ** n - 1} roots")
        return pts
    A = np.rint(tmap.linear_part).astype(np.int64)
    pts, count = _cat_fixed_points(A, n)
    if not tmap.is_linear:
        from .dynamics import perturbed_cat

        a_final = float(tmap.params.get("a", 0.0))
        X = orbit(get_map("cat"), pts, n)
        for a in np.linspace(0.0, a_final, continuation_steps + 1)[1:]:
            X, res = _newton_orbits(perturbed_cat(float(a)), X)
        pts = X[0]
        if res > 1e-9:
            raise OrbitEnumerationIncomplete(f"Newton residual {res:.1e} after continuation")
    uniq = _unique_points(pts)
    if len(uniq) != count:
        raise OrbitEnumerationIncomplete(f"{len(uniq)} distinct fixed points, expected |det(A^n - I)| = {count}")
    return uniq


def periodic_orbit_measure(tmap: TorusMap, pot: Potential, n: int, psi: Callable) -> OracleReport:
    """Gibbs average of ``psi`` weighted by ``exp(S_n phi_bar)`` over ``Fix(T^n)``.

    ``extra["pressure"]`` is ``(1/n) log sum exp(S_n phi_bar)``; the error bar
    is the change of the average from ``n - 1`` to ``n``.
    """
    def one(m):
        pts = fixed_points(tmap, m)
        orb = orbit(tmap, pts, m)
        logw = _birkhoff_weights(tmap, pot, orb)
        lz = np.logaddexp.reduce(logw)
        w = np.exp(logw - lz)
        return float(np.sum(w * psi(pts))), float(lz / m), len(pts)

    avg, press, count = one(n)
    prev = one(n - 1) if n > 1 else (avg, press, count)
    return OracleReport(avg, abs(avg - prev[0]), count, "periodic_orbits",
                        params={"map": tmap.name, "potential": pot.descriptor, "n": n},
                        extra={"pressure": press, "pressure_error": abs(press - prev[1]),
                               "orbit_count": count})


# ----------------------------------------------------------------------------
# Monte Carlo


def _digit_orbits(base: int, starts_digits: np.ndarray, length: int) -> np.ndarray:
    """Exact orbits of ``x -> base x mod 1`` from base-``base`` digit strings.

    ``T^j x`` is the number whose digits are those of ``x`` shifted by ``j``;
    the first ``ceil(53 / log2(base))`` digits fix it to double precision.
    """
    width = int(np.ceil(53 / np.log2(base)))
    weights = float(base) ** -np.arange(1, width + 1)
    win = np.lib.stride_tricks.sliding_window_view(starts_digits, width, axis=1)[:, :length]
    return win @ weights


def _uniform_orbits(tmap: TorusMap, rng: np.random.Generator, count: int, length: int):
    """``(length, count, d)`` orbit array from Lebesgue-random starts."""
    if tmap.dim == 1 and tmap.is_linear:
        width = int(np.ceil(53 / np.log2(tmap.degree)))
        digits = rng.integers(0, tmap.degree, size=(count, length + width))
        return _digit_orbits(tmap.degree, digits, length).T[..., None]
    x = rng.random((count, tmap.dim))
    return orbit(tmap, x, length)


def monte_carlo_birkhoff(tmap: TorusMap, psi: Callable, n_orbits: int, orbit_len: int,
                         seed: int = 0, chunk: int = 2000, workers: int = 1) -> OracleReport:
    """Mean of ``(1/L) S_L psi`` over Lebesgue-random starts; estimates the SRB average."""
    bounds = list(range(0, n_orbits, chunk))
    seeds = np.random.SeedSequence(seed).spawn(len(bounds))

    def run(i):
        rng = np.random.default_rng(seeds[i])
        cnt = min(chunk, n_orbits - bounds[i])
        orb = _uniform_orbits(tmap, rng, cnt, orbit_len)
        return np.asarray(psi(orb), float).mean(axis=0)

    means = np.concatenate(_workers_map(run, range(len(bounds)), workers))
    se = means.std(ddof=1) / np.sqrt(len(means)) if len(means) > 1 else np.inf
    return OracleReport(float(means.mean()), float(se), n_orbits * orbit_len, "monte_carlo_birkhoff",
                        seed, {"map": tmap.name, "n_orbits": n_orbits, "orbit_len": orbit_len})


def monte_carlo_survival(tmap: TorusMap, hole: TruncationProfile, n_max: int, n_samples: int,
                         seed: int = 0, fit_from: Optional[int] = None, min_survivors: int = 1000,
                         chunk: int = 100_000, workers: int = 1) -> OracleReport:
    """Escape rate from the killed process started at Lebesgue-random points.

    At each step a point at ``x`` disappears with probability ``hole(x)``
    and otherwise moves to ``T x``.  The estimate is the least-squares slope
    of ``log(survivors_n / n_samples)`` over ``fit_from <= n <= n_max``; the
    error bar is its standard error.
    """
    if hole.mode not in ("hole", "identity"):
        raise ValueError("monte_carlo_survival needs a hole profile")
    fit_from = n_max // 4 if fit_from is None else fit_from
    bounds = list(range(0, n_samples, chunk))
    seeds = np.random.SeedSequence(seed).spawn(len(bounds))

    def run(i):
        rng = np.random.default_rng(seeds[i])
        cnt = min(chunk, n_samples - bounds[i])
        orb = _uniform_orbits(tmap, rng, cnt, n_max + 1)
        alive = np.ones(cnt, dtype=bool)
        counts = np.empty(n_max + 1, dtype=np.int64)
        counts[0] = cnt
        for k in range(n_max):
            kill = rng.random(cnt) < (1.0 - hole.survival(orb[k]))
            alive &= ~kill
            counts[k + 1] = alive.sum()
        return counts

    counts = np.sum(_workers_map(run, range(len(bounds)), workers), axis=0)
    if counts[-1] < min_survivors:
        raise InsufficientSurvivors(f"{counts[-1]} survivors at n = {n_max}")
    ns = np.arange(fit_from, n_max + 1)
    logs = np.log(counts[ns] / n_samples)
    if np.all(counts == n_samples):
        return OracleReport(0.0, 1.0 / n_samples, n_samples * n_max, "monte_carlo_survival", seed,
                            {"map": tmap.name, "hole": hole.descriptor, "n_max": n_max,
                             "n_samples": n_samples}, {"counts": counts.tolist()})
    # binomial variance of log S_n as weights
    p = counts[ns] / n_samples
    var = (1 - p) / np.maximum(counts[ns], 1)
    coef, cov = np.polyfit(ns, logs, 1, w=1 / np.sqrt(var), cov="unscaled")
    return OracleReport(float(coef[0]), float(np.sqrt(cov[0, 0])), n_samples * n_max,
                        "monte_carlo_survival", seed,
                        {"map": tmap.name, "hole": hole.descriptor, "n_max": n_max,
                         "n_samples": n_samples, "fit_from": fit_from},
                        {"counts": counts.tolist()})


# ----------------------------------------------------------------------------
# Ulam


@dataclass
class UlamResult:
    eigenvalues: np.ndarray
    leading_vector: np.ndarray
    matrix: sp.csr_matrix
    report: OracleReport


def _subspace_eigs(M: sp.csr_matrix, k: int, iters: int = 500, tol: float = 1e-12, seed: int = 0):
    """Top ``k`` eigenvalues by orthogonal iteration with Rayleigh-Ritz."""
    rng = np.random.default_rng(seed)
    b = min(k + 6, M.shape[0])
    V, _ = np.linalg.qr(rng.standard_normal((M.shape[0], b)))
    prev = None
    for _ in range(iters):
        V, _ = np.linalg.qr(M @ V)
        H = V.T @ (M @ V)
        ev = np.linalg.eigvals(H)
        ev = ev[np.argsort(-np.abs(ev))][:k]
        if prev is not None and np.max(np.abs(ev - prev)) < tol * max(abs(ev[0]), 1.0):
            break
        prev = ev
    return ev


def ulam_matrix(tmap: TorusMap, pot: Potential, cells: int, sub: int = 16, k: int = 6,
                trunc: Optional[TruncationProfile] = None) -> UlamResult:
    """Piecewise-constant discretization of the same weighted transfer operator.

    ``M[j, i] = (1/|C_j|) int_{C_i} g(y) 1[T y in C_j] dy`` with ``g`` the
    effective weight times ``|det DT|``, estimated with ``sub`` midpoints per
    cell (``sub^2`` on the 2-torus, where ``cells`` is the total count and must
    be a square).
    """
    from .spectral import effective_weight, IDENTITY

    if cells < 100:
        raise ValueError("cells must be at least 100")
    trunc = trunc or IDENTITY
    d = tmap.dim
    per = int(round(cells ** (1.0 / d)))
    if per ** d != cells:
        raise ValueError("cells must be a perfect power of the dimension")
    h = 1.0 / per
    offs = (np.arange(sub) + 0.5) / sub * h
    if d == 1:
        y = (np.arange(per)[:, None] * h + offs[None, :]).reshape(-1, 1)
        src = np.repeat(np.arange(per), sub)
    else:
        base = np.stack(np.meshgrid(np.arange(per), np.arange(per), indexing="ij"), -1).reshape(-1, 2)
        o = np.stack(np.meshgrid(offs, offs, indexing="ij"), -1).reshape(-1, 2)
        y = (base[:, None, :] * h + o[None]).reshape(-1, 2)
        src = np.repeat(np.arange(cells), sub * sub)
    g = effective_weight(tmap, pot, trunc, y) * np.abs(np.linalg.det(tmap.jacobian(y)))
    ty = apply(tmap, y)
    idx = np.minimum((ty / h).astype(np.int64), per - 1)
    dst = idx[:, 0] if d == 1 else idx[:, 0] * per + idx[:, 1]
    vol = h ** d
    mass = g * vol / (sub ** d)
    M = sp.csr_matrix((mass / vol, (dst, src)), shape=(cells, cells))
    if cells <= 4096:
        ev = np.linalg.eigvals(M.toarray())
        ev = ev[np.argsort(-np.abs(ev))][:k]
    else:
        ev = _subspace_eigs(M, k)
    # Perron vector by power iteration (nonnegative matrix)
    v = np.full(cells, 1.0 / cells)
    for _ in range(2000):
        w = M @ v
        w /= w.sum()
        if np.max(np.abs(w - v)) < 1e-15:
            v = w
            break
        v = w
    rho = float(np.real(ev[0]))
    # the error bar is the cell width, the scale of the discretization error
    rep = OracleReport(rho, h, cells * sub ** d, "ulam",
                       params={"map": tmap.name, "potential": pot.descriptor, "cells": cells, "sub": sub},
                       extra={"eigenvalues": [complex(e) for e in ev]})
    return UlamResult(ev, v, M, rep)
