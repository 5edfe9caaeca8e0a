"""Potentials: position-only weights (W1) and direction-dependent weights (W0).

A W0 potential is evaluated on the stable direction, so its reduced value at
``x`` depends on a splitting estimate.  Fourier potentials carry their
coefficients so that callers can differentiate them in closed form.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import TWO_PI, SplittingEstimate, TorusMap, as_points
from .errors import MissingSplitting


@dataclass(frozen=True)
class FourierTerm:
    """``coef * cos(2 pi k.x)`` or ``coef * sin(2 pi k.x)``."""

    coef: float
    kind: str  # "cos" or "sin"
    k: tuple

    def value(self, x):
        phase = TWO_PI * (x @ np.asarray(self.k, dtype=float))
        return self.coef * (np.cos(phase) if self.kind == "cos" else np.sin(phase))

    def gradient(self, x):
        k = np.asarray(self.k, dtype=float)
        phase = TWO_PI * (x @ k)
        d = -np.sin(phase) if self.kind == "cos" else np.cos(phase)
        return (self.coef * TWO_PI * d)[..., None] * k


@dataclass(frozen=True)
class Potential:
    """A scalar weight on the torus.

    Parameters
    ----------
    kind : {"W0", "W1"}
    descriptor : str
        Config string that rebuilds this potential.
    w1 : callable, optional
        ``x -> phi(x)`` for W1 potentials.
    w0 : callable, optional
        ``(x, E) -> phi(x, E)`` for W0 potentials, even in ``E``.
    terms : tuple of FourierTerm
        Non-empty for ``fourier(...)`` potentials.
    constant : float
        Constant offset (also the whole value of ``const(c)``).
    """

    kind: str
    descriptor: str
    w1: Optional[Callable] = None
    w0: Optional[Callable] = None
    terms: tuple = ()
    constant: float = 0.0
    is_srb: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def is_constant(self) -> bool:
        return self.kind == "W1" and not self.terms and not self.is_srb

    def gradient(self, x) -> np.ndarray:
        """Analytic gradient of a Fourier or constant W1 potential."""
        if self.kind != "W1" or self.is_srb:
            raise ValueError("closed-form gradient only for Fourier/constant potentials")
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        for t in self.terms:
            g = g + t.gradient(x)
        return g


def zero(dim: int = 2) -> Potential:
    return constant(0.0, "zero")


def constant(c: float, descriptor: Optional[str] = None) -> Potential:
    c = float(c)

    def w1(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], c)

    return Potential("W1", descriptor or f"const({c!r})", w1=w1, constant=c)


def fourier(terms: Sequence[FourierTerm], c0: float = 0.0, descriptor: Optional[str] = None) -> Potential:
    terms = tuple(terms)

    def w1(x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], c0)
        for t in terms:
            out = out + t.value(x)
        return out

    if descriptor is None:
        parts = [f"{t.coef!r}*{t.kind}({','.join(str(int(k)) for k in t.k)})" for t in terms]
        if c0:
            parts.append(repr(c0))
        descriptor = f"fourier({', '.join(parts)})"
    return Potential("W1", descriptor, w1=w1, terms=terms, constant=float(c0))


def srb_potential(tmap: TorusMap) -> Potential:
    """Minus the log unstable Jacobian, up to a coboundary.

    On the 2-torus this is the W0 potential ``log|DT E| - log|det DT|``; for an
    expanding circle map it is the W1 potential ``-log|T'|``.
    """
    if tmap.dim == 1:
        def w1(x):
            x = np.asarray(x, dtype=float)
            return -np.log(np.abs(tmap.jacobian(x)[..., 0, 0]))

        return Potential("W1", "srb", w1=w1, is_srb=True, meta={"map": tmap.name})

    def w0(x, E):
        x = np.asarray(x, dtype=float)
        J = tmap.jacobian(x)
        stretch = np.linalg.norm(np.einsum("...ij,...j->...i", J, E), axis=-1)
        stretch = stretch / np.linalg.norm(E, axis=-1)
        return np.log(stretch) - np.log(np.abs(np.linalg.det(J)))

    return Potential("W0", "srb", w0=w0, is_srb=True, meta={"map": tmap.name})


def bar_phi(pot: Potential, x, split: Optional[SplittingEstimate] = None) -> np.ndarray:
    """The reduced potential: ``phi(x)`` for W1, ``phi(x, e_s(x))`` for W0."""
    x = np.asarray(x, dtype=float)
    if pot.kind == "W1":
        return pot.w1(x)
    if split is None:
        raise MissingSplitting(f"W0 potential {pot.descriptor!r} needs a splitting estimate")
    return pot.w0(x, split.e_s)


def stable_derivative(f: Callable, x, direction, h: float = 1e-5) -> np.ndarray:
    """Central difference of ``f`` along ``x +/- h * direction``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    return (f(x + h * d) - f(x - h * d)) / (2.0 * h)


# ----------------------------------------------------------------------------
# config grammar

_TERM = re.compile(r"^\s*([-+0-9.eE]+)\s*\*\s*(cos|sin)\s*\(\s*([-0-9,\s]+)\)\s*$")


def _split_top_level(s: str):
    depth, start, out = 0, 0, []
    for i, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(s[start:i])
            start = i + 1
    out.append(s[start:])
    return [p for p in (q.strip() for q in out) if p]


def parse_potential(descriptor: str, tmap: Optional[TorusMap] = None) -> Potential:
    """Parse ``"zero"``, ``"const(c)"``, ``"srb"`` or ``"fourier(0.3*cos(1,0), ...)"``."""
    s = descriptor.strip()
    if s == "zero":
        return zero()
    if s == "srb":
        if tmap is None:
            raise ValueError("the srb potential needs a map")
        return srb_potential(tmap)
    m = re.fullmatch(r"const\(\s*([-+0-9.eE]+)\s*\)", s)
    if m:
        return constant(float(m.group(1)), s)
    m = re.fullmatch(r"fourier\((.*)\)", s)
    if m:
        terms, c0 = [], 0.0
        for part in _split_top_level(m.group(1)):
            t = _TERM.match(part)
            if t:
                k = tuple(int(v) for v in t.group(3).split(","))
                if tmap is not None and len(k) != tmap.dim:
                    raise ValueError(f"mode {k} does not match dimension {tmap.dim}")
                terms.append(FourierTerm(float(t.group(1)), t.group(2), k))
            else:
                try:
                    c0 += float(part)
                except ValueError:
                    raise ValueError(f"bad Fourier term {part!r}") from None
        return fourier(terms, c0, s)
    raise ValueError(f"unknown potential descriptor {descriptor!r}")


def evaluate_bar_phi(pot: Potential, tmap: TorusMap, x, split=None) -> np.ndarray:
    """Reduced potential on a batch of points, estimating the splitting if needed."""
    x = as_points(x, tmap.dim)
    if pot.kind == "W0" and split is None:
        from .dynamics import estimate_splitting
        split = estimate_splitting(tmap, x)
    return bar_phi(pot, x, split)
