"""Torus maps: evaluation, inversion, orbits, Birkhoff sums and hyperbolic splittings.

Points are numpy arrays whose last axis holds the ``d`` coordinates, so every
function here accepts a single point of shape ``(d,)`` or a batch of shape
``(..., d)``.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateSplitting, NonConvergence, NonInvertible

TWO_PI = 2.0 * np.pi
GOLDEN = (3.0 + np.sqrt(5.0)) / 2.0
CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float array with trailing axis of length ``dim``."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected trailing dimension {dim}, got shape {x.shape}")
    return x


def wrap(x) -> np.ndarray:
    """Reduce coordinates to [0, 1)."""
    y = np.mod(x, 1.0)
    # mod can return exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, 0.0, y)


def torus_displacement(x, y) -> np.ndarray:
    """Shortest representative of ``y - x`` on the torus, componentwise in [-1/2, 1/2)."""
    return np.mod(np.asarray(y) - np.asarray(x) + 0.5, 1.0) - 0.5


def torus_distance(x, y) -> np.ndarray:
    return np.linalg.norm(torus_displacement(x, y), axis=-1)


@dataclass(frozen=True)
class TorusMap:
    """A smooth self-map of the d-torus given by a lift to R^d.

    Parameters
    ----------
    name : str
        Catalog descriptor, e.g. ``"perturbed_cat(0.1)"``.
    dim : int
        Torus dimension, 1 or 2.
    lift : callable
        ``(..., d) -> (..., d)``; commutes with integer translations up to the
        action of ``linear_part`` on Z^d.
    jacobian : callable
        ``(..., d) -> (..., d, d)``, derivative of ``lift``.
    linear_part : ndarray
        Integer matrix (degree for d=1) describing the homotopy class.
    expansion, contraction : float
        Declared hyperbolicity constants; ``contraction`` is 0 for expanding maps.
    invertible : bool
    inverse_lift : callable, optional
        Exact inverse of the lift; when absent Newton's method is used.
    """

    name: str
    dim: int
    lift: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    linear_part: np.ndarray
    expansion: float
    contraction: float
    invertible: bool
    inverse_lift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    @property
    def inverse_mode(self) -> str:
        return "analytic" if self.inverse_lift is not None else "newton"

    @property
    def degree(self) -> int:
        return int(round(abs(np.linalg.det(self.linear_part))))

    @property
    def is_linear(self) -> bool:
        return bool(self.params.get("linear", False))

    def __call__(self, x):
        return apply(self, x)


# ----------------------------------------------------------------------------
# catalog


def _linear_map(name, matrix, expansion, contraction, invertible):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    dim = matrix.shape[0]

    def lift(x):
        return np.asarray(x, dtype=float) @ matrix.T

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(matrix, x.shape[:-1] + (dim, dim)).copy()

    inverse_lift = None
    if invertible:
        inv = np.linalg.inv(matrix)

        def inverse_lift(x):
            return np.asarray(x, dtype=float) @ inv.T

    return TorusMap(name, dim, lift, jacobian, matrix, expansion, contraction,
                    invertible, inverse_lift, {"linear": True})


def doubling() -> TorusMap:
    return _linear_map("doubling", [[2.0]], 2.0, 0.0, False)


def tripling() -> TorusMap:
    return _linear_map("tripling", [[3.0]], 3.0, 0.0, False)


def cat() -> TorusMap:
    return _linear_map("cat", CAT_MATRIX, GOLDEN, 1.0 / GOLDEN, True)


def perturbed_doubling(a: float) -> TorusMap:
    """x -> 2x + a sin(2 pi x) / (2 pi); expanding for |a| < 1."""
    a = float(a)
    if abs(a) >= 1.0:
        raise ValueError("perturbed_doubling needs |a| < 1 to stay expanding")
    if a == 0.0:
        m = doubling()
        return TorusMap(f"perturbed_doubling({a!r})", 1, m.lift, m.jacobian, m.linear_part,
                        2.0, 0.0, False, None, {"linear": True, "a": a})

    def lift(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x + a * np.sin(TWO_PI * x) / TWO_PI

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        return (2.0 + a * np.cos(TWO_PI * x))[..., None]

    return TorusMap(f"perturbed_doubling({a!r})", 1, lift, jacobian, np.array([[2.0]]),
                    2.0 - abs(a), 0.0, False, None, {"a": a})


def perturbed_cat(a: float) -> TorusMap:
    """x -> A x + a (sin(2 pi x_2), 0) / (2 pi) with A = [[2, 1], [1, 1]]."""
    a = float(a)
    A = CAT_MATRIX

    def lift(x):
        x = np.asarray(x, dtype=float)
        y = x @ A.T
        if a != 0.0:
            y[..., 0] += a * np.sin(TWO_PI * x[..., 1]) / TWO_PI
        return y

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        J = np.broadcast_to(A, x.shape[:-1] + (2, 2)).copy()
        if a != 0.0:
            J[..., 0, 1] += a * np.cos(TWO_PI * x[..., 1])
        return J

    inverse_lift = None
    if a == 0.0:
        inv = np.linalg.inv(A)

        def inverse_lift(x):
            return np.asarray(x, dtype=float) @ inv.T

    # cone-restricted singular values move by at most |a| per unit vector
    return TorusMap(f"perturbed_cat({a!r})", 2, lift, jacobian, A, GOLDEN - 2 * abs(a),
                    1.0 / GOLDEN + 2 * abs(a), True, inverse_lift,
                    {"a": a, "linear": a == 0.0})


_CATALOG = {
    "doubling": (doubling, 0),
    "tripling": (tripling, 0),
    "cat": (cat, 0),
    "perturbed_doubling": (perturbed_doubling, 1),
    "perturbed_cat": (perturbed_cat, 1),
}

_DESCRIPTOR = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\))?\s*$")


def get_map(descriptor: str) -> TorusMap:
    """Build a catalog map from a descriptor such as ``"perturbed_cat(0.1)"``."""
    m = _DESCRIPTOR.match(descriptor)
    if not m or m.group(1) not in _CATALOG:
        raise ValueError(f"unknown map descriptor {descriptor!r}")
    factory, nargs = _CATALOG[m.group(1)]
    args = [float(s) for s in m.group(2).split(",")] if m.group(2) else []
    if len(args) != nargs:
        raise ValueError(f"{m.group(1)} takes {nargs} parameter(s), got {len(args)}")
    return factory(*args)


# ----------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class FamilySpec:
    """One-parameter family ``lambda -> T_lambda`` through ``base`` at 0.

    ``generator(x)`` is the derivative of ``lift_family(lam, x)`` in ``lam`` at 0,
    evaluated at the pre-image point ``x``.
    """

    base: TorusMap
    lift_family: Callable[[float, np.ndarray], np.ndarray]
    generator: Callable[[np.ndarray], np.ndarray]
    member: Callable[[float], TorusMap]

    def at(self, lam: float) -> TorusMap:
        return self.member(lam)

    def vector_field(self, y, split_inverse=None) -> np.ndarray:
        """The perturbing field at image points: ``generator(T^{-1} y)``."""
        pre = invert(self.base, y) if split_inverse is None else split_inverse
        return self.generator(pre)


def perturbed_cat_family(a0: float = 0.0) -> FamilySpec:
    base = perturbed_cat(a0)

    def lift_family(lam, x):
        return perturbed_cat(a0 + lam).lift(x)

    def generator(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = np.sin(TWO_PI * x[..., 1]) / TWO_PI
        return out

    return FamilySpec(base, lift_family, generator, lambda lam: perturbed_cat(a0 + lam))


def perturbed_doubling_family(a0: float = 0.0) -> FamilySpec:
    base = perturbed_doubling(a0)

    def lift_family(lam, x):
        return perturbed_doubling(a0 + lam).lift(x)

    def generator(x):
        x = np.asarray(x, dtype=float)
        return np.sin(TWO_PI * x) / TWO_PI

    return FamilySpec(base, lift_family, generator, lambda lam: perturbed_doubling(a0 + lam))


def get_family(descriptor: str) -> FamilySpec:
    """Family through a catalog map, perturbing along its sine term."""
    m = _DESCRIPTOR.match(descriptor)
    if not m:
        raise ValueError(f"unknown family descriptor {descriptor!r}")
    name = m.group(1)
    a0 = float(m.group(2)) if m.group(2) else 0.0
    if name in ("cat", "perturbed_cat"):
        return perturbed_cat_family(a0)
    if name in ("doubling", "perturbed_doubling"):
        return perturbed_doubling_family(a0)
    raise ValueError(f"no family for {descriptor!r}")


# ----------------------------------------------------------------------------
# evaluation and inversion


def apply(tmap: TorusMap, x) -> np.ndarray:
    x = as_points(x, tmap.dim)
    return wrap(tmap.lift(x))


def apply_lift(tmap: TorusMap, x) -> np.ndarray:
    return tmap.lift(as_points(x, tmap.dim))


def invert_lift(tmap: TorusMap, y, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Solve ``lift(x) = y`` on R^d (no reduction mod 1)."""
    if not tmap.invertible:
        raise NonInvertible(f"{tmap.name} is not invertible")
    y = as_points(y, tmap.dim)
    if tmap.inverse_lift is not None:
        return tmap.inverse_lift(y)
    linv = np.linalg.inv(tmap.linear_part)
    x = y @ linv.T
    # absolute tolerance near the fundamental domain, relative far out in the lift
    scale = np.maximum(1.0, np.max(np.abs(y), axis=-1, keepdims=True))
    for _ in range(max_iter):
        r = tmap.lift(x) - y
        if np.all(np.abs(r) <= tol * scale):
            return x
        x = x - np.linalg.solve(tmap.jacobian(x), r[..., None])[..., 0]
    r = tmap.lift(x) - y
    if np.all(np.abs(r) <= tol * scale):
        return x
    raise NonConvergence(f"Newton inversion of {tmap.name} did not reach tol={tol}")


def invert(tmap: TorusMap, x, tol: float = 1e-12) -> np.ndarray:
    """The unique pre-image of ``x`` on the torus."""
    return wrap(invert_lift(tmap, x, tol=tol))


def preimages(tmap: TorusMap, x, tol: float = 1e-14) -> np.ndarray:
    """All ``k`` pre-images of ``x`` under a degree-``k`` circle map, sorted.

    Returns an array of shape ``(..., k, 1)``.
    """
    if tmap.dim != 1:
        raise ValueError("preimages is only defined for circle maps")
    x = as_points(x, 1)[..., 0]
    k = tmap.degree
    base = float(tmap.lift(np.zeros(1))[0])
    # lift is increasing with lift(y + 1) = lift(y) + k
    targets = base + np.mod(x[..., None] - base + np.arange(k), k)
    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = tmap.lift(mid[..., None])[..., 0] < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    y = 0.5 * (lo + hi)
    for _ in range(3):
        r = tmap.lift(y[..., None])[..., 0] - targets
        y = y - r / tmap.jacobian(y[..., None])[..., 0, 0]
    y = np.sort(wrap(y), axis=-1)
    return y[..., None]


def orbit(tmap: TorusMap, x, n: int) -> np.ndarray:
    """Forward orbit ``x, Tx, ..., T^{n-1} x`` stacked on a new leading axis."""
    x = as_points(x, tmap.dim)
    out = np.empty((n,) + x.shape)
    for k in range(n):
        out[k] = x
        x = apply(tmap, x)
    return out


def backward_orbit(tmap: TorusMap, x, n: int) -> np.ndarray:
    """``x, T^{-1} x, ..., T^{-(n-1)} x``."""
    x = as_points(x, tmap.dim)
    out = np.empty((n,) + x.shape)
    for k in range(n):
        out[k] = x
        x = invert(tmap, x)
    return out


def birkhoff_sum(tmap: TorusMap, f: Callable, x, n: int) -> np.ndarray:
    """``sum_{k<n} f(T^k x)``; ``f`` must be vectorised over points."""
    x = as_points(x, tmap.dim)
    total = np.zeros(x.shape[:-1])
    for _ in range(n):
        total = total + f(x)
        x = apply(tmap, x)
    return total


def finite_difference_jacobian(tmap: TorusMap, x, h: float = 1e-6) -> np.ndarray:
    x = as_points(x, tmap.dim)
    cols = []
    for i in range(tmap.dim):
        e = np.zeros(tmap.dim)
        e[i] = h
        cols.append((tmap.lift(x + e) - tmap.lift(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


# ----------------------------------------------------------------------------
# hyperbolic splitting


@dataclass(frozen=True)
class SplittingEstimate:
    point: np.ndarray
    e_s: np.ndarray
    e_u: np.ndarray
    residual: float

    def angle(self) -> np.ndarray:
        c = np.abs(np.sum(self.e_s * self.e_u, axis=-1))
        return np.arccos(np.clip(c, 0.0, 1.0))


def _reference_directions(tmap: TorusMap):
    w, V = np.linalg.eig(tmap.linear_part)
    order = np.argsort(np.abs(w))
    ref_s = np.real(V[:, order[0]])
    ref_u = np.real(V[:, order[-1]])
    if ref_u[np.argmax(np.abs(ref_u))] < 0:
        ref_u = -ref_u
    if ref_s[np.argmax(np.abs(ref_s))] < 0:
        ref_s = -ref_s
    return ref_s / np.linalg.norm(ref_s), ref_u / np.linalg.norm(ref_u)


def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _orient(v, ref):
    s = np.sign(np.sum(v * ref, axis=-1, keepdims=True))
    return v * np.where(s == 0, 1.0, s)


def estimate_splitting(tmap: TorusMap, x, n_push: int = 40, tol: float = 1e-9,
                       min_angle: float = 1e-3) -> SplittingEstimate:
    """Stable and unstable directions by power iteration along the orbit of ``x``.

    ``e_u`` is obtained by pushing a fixed seed vector with the Jacobians along
    the backward orbit ending at ``x``; ``e_s`` by pulling a seed back with the
    inverse Jacobians along the forward orbit.  The residual is the largest
    change between the estimates started ``n_push`` and ``n_push - 1`` steps away.
    """
    if tmap.dim != 2 or not tmap.invertible:
        raise ValueError("splitting estimates need an invertible map of the 2-torus")
    x = as_points(x, 2)
    ref_s, ref_u = _reference_directions(tmap)
    seed_u = _normalize(ref_u + 0.3 * ref_s)
    seed_s = _normalize(ref_s + 0.3 * ref_u)

    if tmap.is_linear:
        e_u = np.broadcast_to(ref_u, x.shape).copy()
        e_s = np.broadcast_to(ref_s, x.shape).copy()
        return SplittingEstimate(x, e_s, e_u, 0.0)

    back = backward_orbit(tmap, x, n_push + 1)
    v1 = np.broadcast_to(seed_u, x.shape).copy()
    v2 = None
    for k in range(n_push, 0, -1):
        J = tmap.jacobian(back[k])
        v1 = _normalize(np.einsum("...ij,...j->...i", J, v1))
        if v2 is not None:
            v2 = _normalize(np.einsum("...ij,...j->...i", J, v2))
        elif k == n_push:
            v2 = np.broadcast_to(seed_u, x.shape).copy()
    e_u = _orient(v1, ref_u)
    res_u = np.max(np.linalg.norm(e_u - _orient(v2, ref_u), axis=-1), initial=0.0)

    fwd = orbit(tmap, x, n_push + 1)
    w1 = np.broadcast_to(seed_s, x.shape).copy()
    w2 = None
    for k in range(n_push - 1, -1, -1):
        J = tmap.jacobian(fwd[k])
        w1 = _normalize(np.linalg.solve(J, w1[..., None])[..., 0])
        if w2 is not None:
            w2 = _normalize(np.linalg.solve(J, w2[..., None])[..., 0])
        elif k == n_push - 1:
            w2 = np.broadcast_to(seed_s, x.shape).copy()
    e_s = _orient(w1, ref_s)
    res_s = np.max(np.linalg.norm(e_s - _orient(w2, ref_s), axis=-1), initial=0.0)

    residual = float(max(res_u, res_s))
    if residual > tol:
        raise NonConvergence(f"splitting residual {residual:.2e} above {tol:.1e}; raise n_push")
    split = SplittingEstimate(x, e_s, e_u, residual)
    if np.min(split.angle(), initial=np.pi) < min_angle:
        raise DegenerateSplitting("stable and unstable directions are nearly parallel")
    return split


class SplittingCache:
    """Thread-safe memo of splitting estimates on a quantised grid.

    Queries are answered with the estimate at the nearest grid node, so
    results do not depend on query order.
    """

    def __init__(self, tmap: TorusMap, resolution: float = 2.0 ** -10, n_push: int = 40):
        self.tmap = tmap
        self.resolution = resolution
        self.n_push = n_push
        self._store: dict = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._store)

    def get(self, x) -> SplittingEstimate:
        x = wrap(as_points(x, 2))
        key = tuple(np.round(x / self.resolution).astype(np.int64) % int(round(1 / self.resolution)))
        with self._lock:
            hit = self._store.get(key)
        if hit is None:
            node = np.array(key, dtype=float) * self.resolution
            hit = estimate_splitting(self.tmap, node, self.n_push)
            with self._lock:
                self._store.setdefault(key, hit)
        return hit


def stable_stretch(tmap: TorusMap, x, split: SplittingEstimate) -> np.ndarray:
    """Signed factor ``J_s`` with ``DT(x) e_s(x) = J_s(x) e_s(Tx)``; its modulus is the leaf stretch."""
    return np.linalg.norm(np.einsum("...ij,...j->...i", tmap.jacobian(x), split.e_s), axis=-1)


def unstable_stretch(tmap: TorusMap, x, split: SplittingEstimate) -> np.ndarray:
    return np.linalg.norm(np.einsum("...ij,...j->...i", tmap.jacobian(x), split.e_u), axis=-1)


def project_vector(v, split: SplittingEstimate, threshold: float = 1e-8):
    """Oblique decomposition ``v = v_s + v_u`` along the splitting.

    Returns the parts and their coefficients ``(v_s, v_u, c_s, c_u)`` with
    ``v_s = c_s e_s`` and ``v_u = c_u e_u``.
    """
    v = np.asarray(v, dtype=float)
    es, eu = split.e_s, split.e_u
    det = es[..., 0] * eu[..., 1] - es[..., 1] * eu[..., 0]
    if np.min(np.abs(det), initial=np.inf) < threshold:
        raise DegenerateSplitting("|det(e_s, e_u)| below threshold")
    c_s = (v[..., 0] * eu[..., 1] - v[..., 1] * eu[..., 0]) / det
    c_u = (es[..., 0] * v[..., 1] - es[..., 1] * v[..., 0]) / det
    return c_s[..., None] * es, c_u[..., None] * eu, c_s, c_u


def ball_convention(tmap: TorusMap) -> str:
    """``"backward"`` for invertible maps, ``"forward"`` for expanding ones."""
    return "backward" if tmap.invertible else "forward"


def in_dynamical_ball(tmap: TorusMap, x, eps: float, n: int, y) -> np.ndarray:
    """Whether ``y`` shadows ``x`` within ``eps`` for ``n`` steps.

    Invertible maps use backward orbits, expanding maps forward orbits (see
    :func:`ball_convention`).  ``n = 0`` is treated as the plain ball.
    """
    x = as_points(x, tmap.dim)
    y = as_points(y, tmap.dim)
    step = (lambda p: invert(tmap, p)) if tmap.invertible else (lambda p: apply(tmap, p))
    inside = torus_distance(x, y) <= eps
    for _ in range(1, max(n, 1)):
        x, y = step(x), step(y)
        inside &= torus_distance(x, y) <= eps
    return inside
