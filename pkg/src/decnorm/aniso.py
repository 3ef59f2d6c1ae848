"""Anisotropic dilations, the direction-adapted parabolic norm, and the maximal function.

The dilation group scales by ``sigma^2`` along a unit direction ``omega`` and
by ``sigma`` transversally.  The associated norm ``|x|_w`` is the unique
``sigma > 0`` with ``|A_{w,1/sigma} x| = 1``; it has the closed form used in
:func:`aniso_norm`, with :func:`aniso_norm_oracle` retained as an independent
bisection cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import PHYSICAL, TorusField


@dataclass(frozen=True)
class Direction:
    """Unit vector on S^{n-1}, stored as a tuple of floats."""

    omega: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.omega, dtype=float)
        if v.ndim != 1 or len(v) not in (2, 3):
            raise ValueError("direction must be a 2- or 3-vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-14:
            raise ValueError("direction must be unit length to 1e-14")

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(tuple(v / nrm))

    @classmethod
    def from_angle(cls, theta: float) -> "Direction":
        return cls((math.cos(theta), math.sin(theta)))

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.omega)


def _split(direction: Direction, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Components of x along omega and the transverse part, x shaped (..., n)."""
    w = direction.vector
    x = np.asarray(x, dtype=float)
    a = x @ w
    perp = x - a[..., None] * w
    return a, perp


def dilate(direction: Direction, sigma: float, x: np.ndarray) -> np.ndarray:
    """Group dilation sigma^2 (w.x) w + sigma (x - (w.x) w)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    a, perp = _split(direction, x)
    w = direction.vector
    return sigma**2 * a[..., None] * w + sigma * perp


def aniso_norm(direction: Direction, x: np.ndarray) -> np.ndarray:
    """Closed-form |x|_w.

    With a = |w.x| and b = |perp part|, |x|_w is the unique positive root of
    sigma^4 = a^2 + sigma^2 b^2, i.e. sigma^2 = (b^2 + sqrt(b^4 + 4 a^2)) / 2.
    """
    a, perp = _split(direction, x)
    a = np.abs(a)
    b = np.linalg.norm(perp, axis=-1)
    s2 = 0.5 * (b**2 + np.sqrt(b**4 + 4.0 * a**2))
    return np.sqrt(s2)


def aniso_norm_oracle(direction: Direction, x: np.ndarray) -> np.ndarray:
    """Bisection on sigma -> |A_{w,1/sigma} x| - 1 over [1e-8, 1e8], tolerance 1e-13.

    Independent of the closed form; raises if the bracket fails.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x.reshape(-1, x.shape[-1])
    if np.any(np.all(pts == 0.0, axis=-1)):
        raise ValueError("oracle requires x != 0")
    a, perp = _split(direction, pts)
    a = np.abs(a)
    b = np.linalg.norm(perp, axis=-1)

    def g(sig):
        return np.sqrt(a**2 / sig**4 + b**2 / sig**2) - 1.0

    lo = np.full(len(pts), 1e-8)
    hi = np.full(len(pts), 1e8)
    if np.any(g(lo) <= 0) or np.any(g(hi) >= 0):
        raise ValueError("bisection bracket failure")
    while np.max(hi - lo) > 1e-13:
        mid = 0.5 * (lo + hi)
        pos = g(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out[0]) if single else out.reshape(x.shape[:-1])


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def ball_volume(tau: float, n: int) -> float:
    """Volume of the anisotropic ball B_tau^w in R^n: tau^(n+1) |B_1|."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return tau ** (n + 1) * unit_ball_volume(n)


def _ball_offsets(grid, direction: Direction, tau: float) -> np.ndarray:
    """Index offsets whose minimum-image displacement satisfies |dx|_w < tau."""
    m = grid.points
    d = grid.spacing * np.arange(m)
    d = np.where(d >= grid.side / 2, d - grid.side, d)  # minimum image
    if grid.dim == 2:
        pts = np.stack(np.meshgrid(d, d, indexing="ij"), axis=-1)
    else:
        pts = np.stack(np.meshgrid(d, d, d, indexing="ij"), axis=-1)
    nrm = aniso_norm(direction, pts.reshape(-1, grid.dim)).reshape(grid.shape)
    return np.argwhere(nrm < tau)


def maximal_aniso(f: TorusField, direction: Direction, radii) -> TorusField:
    """Centered anisotropic maximal function over the given radii.

    Direct summation: for each radius the average of |f| over the discrete
    ball {|x - y|_w < tau} (cells selected by the closed-form norm), then a
    pointwise max over radii.  The zero offset always qualifies, so radii
    below the cell size degenerate to |f| itself.
    """
    radii = list(radii)
    if not radii:
        raise ValueError("radii list must be non-empty")
    if any(t <= 0 for t in radii):
        raise ValueError("radii must be positive")
    if f.space != PHYSICAL:
        raise ValueError("maximal function expects a physical-space field")
    a = np.abs(f.values)
    out = np.zeros_like(a)
    for tau in radii:
        offs = _ball_offsets(f.grid, direction, tau)
        acc = np.zeros_like(a)
        for off in offs:
            acc += np.roll(a, shift=tuple(-off), axis=tuple(range(f.grid.dim)))
        np.maximum(out, acc / len(offs), out=out)
    return TorusField(f.grid, out.astype(np.complex128), PHYSICAL)
