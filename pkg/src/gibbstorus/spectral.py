"""Fourier-Galerkin discretisation of weighted transfer operators on the torus.

The operator acts on densities by

    (L f)(x) = sum_{T y = x} w(y) f(y),

which for a diffeomorphism is ``w(T^{-1} x) f(T^{-1} x)``.  Its matrix in the
exponential basis ``e_k(x) = exp(2 pi i k.x)`` is obtained after the change of
variables ``x = T y``:

    M_jk = int conj(e_j(T y)) w(y) |det DT(y)| e_k(y) dy,

so no inverse map is needed and one FFT per row yields every column.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .dynamics import (TWO_PI, TorusMap, as_points, estimate_splitting, get_map,
                       stable_stretch)
from .errors import QuadratureAliasing, SimplicityViolation
from .potentials import Potential, bar_phi, parse_potential

# ----------------------------------------------------------------------------
# truncation profiles


@dataclass(frozen=True)
class TruncationProfile:
    """Survival weight applied before each step of the dynamics.

    ``mode="identity"`` keeps every point; ``mode="hole"`` removes a point at
    ``x`` with probability ``hole(x)``.
    """

    mode: str = "identity"
    descriptor: str = "identity"
    hole: Optional[Callable] = None
    smooth: bool = True
    amplitude: float = 0.0

    def survival(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.mode == "identity":
            return np.ones(x.shape[:-1])
        return 1.0 - self.hole(x)

    @property
    def is_empty(self) -> bool:
        return self.mode == "identity" or self.amplitude == 0.0


IDENTITY = TruncationProfile()


def smooth_hole(amplitude: float, center: float = 0.0) -> TruncationProfile:
    """Hole ``amplitude * (1 + cos 2 pi (x_1 - center)) / 2``."""
    amplitude, center = float(amplitude), float(center)
    if not 0.0 <= amplitude <= 1.0:
        raise ValueError("hole amplitude must lie in [0, 1]")

    def hole(x):
        return amplitude * 0.5 * (1.0 + np.cos(TWO_PI * (np.asarray(x)[..., 0] - center)))

    desc = f"hole({amplitude!r})" if center == 0.0 else f"hole({amplitude!r},{center!r})"
    return TruncationProfile("hole", desc, hole, True, amplitude)


def indicator_hole(a: float, b: float, depth: float = 1.0) -> TruncationProfile:
    """Sharp hole on ``a <= x_1 < b``; deliberately non-smooth."""
    a, b = float(a), float(b)

    def hole(x):
        t = np.asarray(x)[..., 0] % 1.0
        return depth * ((t >= a) & (t < b)).astype(float)

    return TruncationProfile("hole", f"indicator({a!r},{b!r})", hole, False, depth)


def parse_truncation(descriptor: str) -> TruncationProfile:
    s = descriptor.strip()
    if s in ("identity", "none"):
        return IDENTITY
    m = re.fullmatch(r"(hole|indicator)\(\s*([^)]*)\)", s)
    if m:
        args = [float(v) for v in m.group(2).split(",")]
        if m.group(1) == "hole" and len(args) in (1, 2):
            return smooth_hole(*args)
        if m.group(1) == "indicator" and len(args) == 2:
            return indicator_hole(*args)
    raise ValueError(f"unknown truncation descriptor {descriptor!r}")


# ----------------------------------------------------------------------------
# Fourier grid helpers


def modes(N: int, dim: int) -> np.ndarray:
    """Integer modes ``|k_i| <= N`` in row-major order, shape ``(D, dim)``."""
    ks = np.arange(-N, N + 1)
    if dim == 1:
        return ks[:, None]
    return np.stack(np.meshgrid(ks, ks, indexing="ij"), -1).reshape(-1, 2)


def quadrature_grid(dim: int, Q: int) -> np.ndarray:
    g = np.arange(Q) / Q
    if dim == 1:
        return g[:, None]
    return np.stack(np.meshgrid(g, g, indexing="ij"), -1)


def coeffs_to_grid(c: np.ndarray, N: int, dim: int, P: int) -> np.ndarray:
    """Values of ``sum_k c_k e_k`` on the uniform ``P^dim`` grid."""
    K = modes(N, dim)
    G = np.zeros((P,) * dim, dtype=complex)
    np.add.at(G, tuple((K % P).T), c)
    return np.fft.ifftn(G) * P ** dim


def grid_to_coeffs(values: np.ndarray, N: int) -> np.ndarray:
    """Fourier coefficients with ``|k_i| <= N`` of uniformly sampled values."""
    dim = values.ndim
    P = values.shape[0]
    F = np.fft.fftn(values) / P ** dim
    K = modes(N, dim)
    return F[tuple((K % P).T)]


def sample_function(f: Callable, dim: int, P: int) -> np.ndarray:
    Y = quadrature_grid(dim, P)
    return np.asarray(f(Y), dtype=complex).reshape((P,) * dim)


def function_coeffs(f: Callable, N: int, dim: int, P: Optional[int] = None) -> np.ndarray:
    P = P or (8 * N + 4)
    return grid_to_coeffs(sample_function(f, dim, P), N)


# ----------------------------------------------------------------------------
# weights


def stable_jacobian(tmap: TorusMap, y, split=None) -> np.ndarray:
    """Leaf stretch ``J_s(y) = |DT(y) e_s(y)|``; identically 1 for expanding maps."""
    y = as_points(y, tmap.dim)
    if not tmap.invertible:
        return np.ones(y.shape[:-1])
    if split is None:
        split = estimate_splitting(tmap, y)
    return stable_stretch(tmap, y, split)


def effective_weight(tmap: TorusMap, pot: Potential, trunc: TruncationProfile, x,
                     split=None) -> np.ndarray:
    """``survival * exp(phi_bar) / J_s`` (no leaf factor for expanding maps)."""
    x = as_points(x, tmap.dim)
    if tmap.invertible and split is None:
        split = estimate_splitting(tmap, x)
    phi = bar_phi(pot, x, split)
    w = trunc.survival(x) * np.exp(phi)
    if tmap.invertible:
        w = w / stable_jacobian(tmap, x, split)
    return w


def galerkin_matrix(tmap: TorusMap, N: int, Q: int, density, rows=None) -> np.ndarray:
    """Matrix of ``f -> sum_{Ty=.} g(y) f(y) / |det DT(y)|`` where ``density = g`` on the grid.

    ``density`` is sampled on the ``Q^d`` quadrature grid and already contains
    the factor ``|det DT|``.  ``rows`` restricts the computation to selected
    row indices.
    """
    dim = tmap.dim
    Y = quadrature_grid(dim, Q)
    TY = tmap.lift(Y)
    K = modes(N, dim)
    D = len(K)
    rows = np.arange(D) if rows is None else np.asarray(rows)
    density = np.asarray(density).reshape((Q,) * dim)
    idx = tuple((K % Q).T)
    out = np.empty((len(rows), D), dtype=complex)
    if dim == 1:
        for r, j in enumerate(rows):
            g = np.exp(-1j * TWO_PI * K[j, 0] * TY[..., 0]) * density
            out[r] = np.fft.ifft(g)[idx]
        return out
    ks = np.arange(-N, N + 1)
    E1 = np.exp(-1j * TWO_PI * ks[:, None, None] * TY[None, ..., 0])
    E2 = np.exp(-1j * TWO_PI * ks[:, None, None] * TY[None, ..., 1])
    # group rows sharing their first index so FFTs run in batches
    for a in np.unique(K[rows, 0]):
        sel = np.nonzero(K[rows, 0] == a)[0]
        b = K[rows[sel], 1] + N
        g = (E1[a + N] * density)[None] * E2[b]
        F = np.fft.ifft2(g, axes=(1, 2))
        out[sel] = F[:, idx[0], idx[1]]
    return out


def weighted_density(tmap: TorusMap, pot: Potential, trunc: TruncationProfile, Q: int,
                     split=None) -> np.ndarray:
    Y = quadrature_grid(tmap.dim, Q)
    w = effective_weight(tmap, pot, trunc, Y, split)
    return w * np.abs(np.linalg.det(tmap.jacobian(Y)))


# ----------------------------------------------------------------------------
# model


@dataclass
class SpectralModel:
    """Galerkin matrix plus leading eigendata.

    ``ell0`` and ``alpha0`` are normalised so that ``ell0(1) = 1`` and
    ``ell0(alpha0) = 1``; the Gibbs functional is ``psi -> ell0(psi alpha0)``.
    """

    map_name: str
    potential: str
    truncation: str
    N: int
    quad_points: int
    dim: int
    rho: float
    gap: float
    eigenvalues: np.ndarray
    alpha0: np.ndarray
    ell0: np.ndarray
    pairing: float
    residuals: dict = field(default_factory=dict)
    matrix: Optional[np.ndarray] = None
    tmap: Optional[TorusMap] = None
    pot: Optional[Potential] = None
    trunc: Optional[TruncationProfile] = None

    @property
    def modes(self) -> np.ndarray:
        return modes(self.N, self.dim)

    @property
    def zero_index(self) -> int:
        return (len(self.modes) - 1) // 2

    @property
    def pressure(self) -> float:
        return float(np.log(self.rho))

    def transfer(self, c: np.ndarray, n: int = 1) -> np.ndarray:
        """Apply ``(L / rho)^n`` to a coefficient vector."""
        for _ in range(n):
            c = self.matrix @ c / self.rho
        return c

    def density_on_grid(self, P: int) -> np.ndarray:
        return coeffs_to_grid(self.alpha0, self.N, self.dim, P)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        def cpx(v):
            v = np.asarray(v, dtype=complex)
            return [[float(z.real), float(z.imag)] for z in v]

        return {
            "format": "gibbstorus.spectral_model/1",
            "map": self.map_name,
            "potential": self.potential,
            "truncation": self.truncation,
            "N": int(self.N),
            "quad_points": int(self.quad_points),
            "dim": int(self.dim),
            "rho": float(self.rho),
            "gap": float(self.gap),
            "pairing": float(self.pairing),
            "eigenvalues": cpx(self.eigenvalues),
            "alpha0": cpx(self.alpha0),
            "ell0": cpx(self.ell0),
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, rec: dict, rebuild: bool = False) -> "SpectralModel":
        def cpx(v):
            a = np.asarray(v, dtype=float)
            return a[:, 0] + 1j * a[:, 1] if a.size else np.zeros(0, complex)

        model = cls(rec["map"], rec["potential"], rec["truncation"], rec["N"],
                    rec["quad_points"], rec["dim"], rec["rho"], rec["gap"],
                    cpx(rec["eigenvalues"]), cpx(rec["alpha0"]), cpx(rec["ell0"]),
                    rec["pairing"], dict(rec.get("residuals", {})))
        model.tmap = get_map(model.map_name)
        model.pot = parse_potential(model.potential, model.tmap)
        model.trunc = parse_truncation(model.truncation)
        if rebuild:
            density = weighted_density(model.tmap, model.pot, model.trunc, model.quad_points)
            model.matrix = _clean(galerkin_matrix(model.tmap, model.N, model.quad_points, density))
        return model

    @classmethod
    def from_json(cls, text: str, rebuild: bool = False) -> "SpectralModel":
        return cls.from_dict(json.loads(text), rebuild)


def _clean(M: np.ndarray, drop_tol: float = 1e-14) -> np.ndarray:
    """Zero entries that are pure quadrature round-off.

    For linear maps the exact matrix is a weighted permutation; leaving
    1e-17 noise in its nilpotent part spreads the zero eigenvalue over a
    circle of radius ~ eps^(1/chain length).
    """
    M = M.copy()
    M[np.abs(M) < drop_tol * np.max(np.abs(M))] = 0.0
    return M


def _inverse_iteration(M: np.ndarray, lam: complex, left: bool, iters: int = 4) -> np.ndarray:
    D = M.shape[0]
    A = (M.conj().T if left else M) - (np.conj(lam) if left else lam) * (1 + 1e-13) * np.eye(D)
    lu = sla.lu_factor(A, check_finite=False)
    v = np.ones(D, dtype=complex) / np.sqrt(D)
    for _ in range(iters):
        v = sla.lu_solve(lu, v, check_finite=False)
        v /= np.linalg.norm(v)
    return v.conj() if left else v


def leading_eigendata(M: np.ndarray, zero_index: int, margin: float = 1e-6,
                      pairing_floor: float = 1e-10):
    """Spectrum sorted by modulus, leading right/left vectors, normalised pairing."""
    ev = sla.eigvals(M, check_finite=False)
    ev = ev[np.argsort(-np.abs(ev), kind="stable")]
    lead = ev[0]
    rho = abs(lead)
    if rho == 0 or abs(lead.imag) > 1e-8 * rho or lead.real <= 0:
        raise SimplicityViolation(f"leading eigenvalue {lead} is not real positive")
    gap = abs(ev[1]) / rho if len(ev) > 1 else 0.0
    if gap >= 1 - margin:
        raise SimplicityViolation(f"second eigenvalue modulus ratio {gap:.3e} within {margin} of 1")
    lam = float(lead.real)
    alpha = _inverse_iteration(M, lam, left=False)
    ell = _inverse_iteration(M, lam, left=True)  # row vector: ell @ M = lam ell
    pairing = abs(ell @ alpha) / (np.linalg.norm(ell) * np.linalg.norm(alpha))
    if pairing < pairing_floor:
        raise SimplicityViolation(f"left/right pairing {pairing:.2e} too small")
    if abs(ell[zero_index]) < 1e-300:
        raise SimplicityViolation("left eigenvector annihilates constants")
    ell = ell / ell[zero_index]
    alpha = alpha / (ell @ alpha)
    rq = (ell @ (M @ alpha)) / (ell @ alpha)
    lam = float(rq.real)
    res_r = np.linalg.norm(M @ alpha - lam * alpha) / np.linalg.norm(alpha)
    res_l = np.linalg.norm(ell @ M - lam * ell) / np.linalg.norm(ell)
    return ev, lam, gap, alpha, ell, float(pairing), {"right": float(res_r / lam), "left": float(res_l / lam)}


def assemble(tmap: TorusMap, pot: Potential, trunc: TruncationProfile = IDENTITY, N: int = 16,
             quad_points: Optional[int] = None, check_aliasing: bool = True,
             alias_tol: float = 1e-9, margin: float = 1e-6, split=None) -> SpectralModel:
    """Assemble the Galerkin matrix and extract its leading eigendata.

    Parameters
    ----------
    quad_points : int, optional
        Grid points per axis; defaults to ``4 (2N + 1)``.
    check_aliasing : bool
        Recompute a few rows on a doubled grid and raise
        :class:`QuadratureAliasing` if any entry moves by more than
        ``alias_tol`` relative to the largest entry.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    Q = quad_points or 4 * (2 * N + 1)
    if Q < 4 * (2 * N + 1):
        raise ValueError("quad_points must be at least 4 (2N + 1)")
    density = weighted_density(tmap, pot, trunc, Q, split)
    M = galerkin_matrix(tmap, N, Q, density)
    scale = np.max(np.abs(M))
    if check_aliasing:
        D = M.shape[0]
        probe = np.unique(np.r_[0, D // 2, D - 1, np.linspace(0, D - 1, 5).astype(int)])
        fine = galerkin_matrix(tmap, N, 2 * Q,
                               weighted_density(tmap, pot, trunc, 2 * Q), rows=probe)
        drift = np.max(np.abs(fine - M[probe])) / scale
        if drift > alias_tol:
            raise QuadratureAliasing(f"doubling the quadrature moves entries by {drift:.2e}")
    M = _clean(M)
    K = modes(N, tmap.dim)
    ev, rho, gap, alpha, ell, pairing, res = leading_eigendata(M, (len(K) - 1) // 2, margin)
    return SpectralModel(tmap.name, pot.descriptor, trunc.descriptor, N, Q, tmap.dim, rho, gap,
                         ev, alpha, ell, pairing, res, M, tmap, pot, trunc)


def pressure(model: SpectralModel) -> float:
    return float(np.log(model.rho))


def resonances(model: SpectralModel, k: int) -> np.ndarray:
    """Top ``k`` eigenvalues divided by the leading one, by decreasing modulus."""
    if k > len(model.eigenvalues):
        raise ValueError("k exceeds the matrix dimension")
    r = model.eigenvalues[:k] / model.rho
    r = r.astype(complex)
    r[0] = 1.0
    return r


def spectral_convergence_report(tmap: TorusMap, pot: Potential, trunc: TruncationProfile,
                                N_list: Sequence[int], tol: float = 1e-6, k: int = 5):
    """Leading data for increasing cutoffs and a Cauchy flag.

    Returns a list of rows ``{"N", "rho", "gap", "top_k_deviation", "aliasing"}``
    and a boolean that is True when consecutive cutoffs disagree by more
    than ``tol`` on ``rho`` or on the quadrature check.
    """
    if list(N_list) != sorted(N_list):
        raise ValueError("N_list must be ascending")
    rows, prev, non_cauchy = [], None, False
    for N in N_list:
        aliasing = False
        try:
            model = assemble(tmap, pot, trunc, N, check_aliasing=True)
        except QuadratureAliasing:
            aliasing = True
            model = assemble(tmap, pot, trunc, N, check_aliasing=False)
        top = resonances(model, min(k, len(model.eigenvalues))) * model.rho
        dev = np.nan
        if prev is not None:
            m = min(len(top), len(prev[1]))
            dev = float(np.max(np.abs(np.sort_complex(top[:m]) - np.sort_complex(prev[1][:m]))))
            if abs(model.rho - prev[0]) > tol:
                non_cauchy = True
        non_cauchy |= aliasing
        rows.append({"N": N, "rho": model.rho, "gap": model.gap,
                     "top_k_deviation": dev, "aliasing": aliasing})
        prev = (model.rho, top)
    return rows, non_cauchy


def escape_rate(tmap: TorusMap, pot: Potential, hole: TruncationProfile, N: int = 16,
                **kwargs) -> float:
    """Log of the leading eigenvalue of the operator with survival weight ``1 - hole``."""
    if hole.mode != "hole" and not hole.is_empty:
        raise ValueError("escape_rate needs a hole profile")
    if not pot.is_srb:
        raise ValueError("escape rates are defined for the SRB potential")
    return pressure(assemble(tmap, pot, hole, N, **kwargs))
