"""Frequency localizers: radial dyadic profile, directional parabolic family, caps.

Everything is built from the compactly supported template
``eta(t) = exp(-1/(1-t^2))`` so that every stated support property holds
exactly rather than approximately.  The directional family is normalized
pointwise on the frequency lattice against its own quadrature sum, which
makes the angular completeness identity exact on the discrete direction set.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate as sint

from . import grid as gridmod
from .aniso import Direction, aniso_norm
from .grid import Symbol, TorusGrid

_S_FLOOR = 1e-300


def bump(t: np.ndarray) -> np.ndarray:
    """Smooth compactly supported template exp(-1/(1-t^2)) on |t| < 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out


@functools.lru_cache(maxsize=1)
def _smoothstep_table(n: int = 8192) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(-1.0, 1.0, n)
    vals = bump(t)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(t))])
    cum /= cum[-1]
    return t, cum


def smoothstep(t: np.ndarray) -> np.ndarray:
    """C^inf ramp: 0 for t <= 0, 1 for t >= 1 (normalized bump integral)."""
    t = np.asarray(t, dtype=float)
    xs, ys = _smoothstep_table()
    out = np.interp(2.0 * t - 1.0, xs, ys)
    return np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, out))


def radial_taper(r: np.ndarray) -> np.ndarray:
    """Smooth beta(r): 0 on [0, 1/4], 1 on [1, inf)."""
    return smoothstep((np.asarray(r, dtype=float) - 0.25) / 0.75)


@dataclass(frozen=True)
class RadialProfile:
    """Calderon-normalized dyadic profile psi0 supported in [1/2, 2].

    psi0(r) = eta(log2 r) / sqrt(c) with c = int_0^inf eta(log2 s)^2 ds/s,
    so that int_0^inf psi0(sigma r)^2 dsigma/sigma = 1 for every r > 0.
    """

    normalization: float

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = bump(np.log2(r[pos]))
        return out / math.sqrt(self.normalization)


def build_radial_profile() -> RadialProfile:
    val, _ = sint.quad(lambda t: math.exp(-2.0 / (1.0 - t * t)) if abs(t) < 1 else 0.0,
                       -1.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    return RadialProfile(normalization=val * math.log(2.0))


def _fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


@dataclass(frozen=True)
class DirectionalFamily:
    """Quadrature direction set with the normalized parabolic localizers phi_w.

    The raw localizer is beta(|xi|) * eta(sqrt(|xi|) |xihat - w|); dividing by
    the square root of the pointwise quadrature sum s(xi) = sum_j w_j eta_j^2
    gives sum_j w_j phi_j(xi)^2 = beta(|xi|)^2 exactly on the lattice, equal
    to 1 wherever |xi| >= 1.
    """

    dim: int
    count: int
    vectors: tuple[tuple[float, ...], ...]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.count, 1.0 / self.count)

    @property
    def weight(self) -> float:
        return 1.0 / self.count

    def direction(self, j: int) -> Direction:
        return Direction(self.vectors[j])

    def vector_array(self) -> np.ndarray:
        return np.asarray(self.vectors, dtype=float)

    def thetas(self) -> np.ndarray:
        if self.dim != 2:
            raise ValueError("thetas only defined for dim=2")
        v = self.vector_array()
        return np.arctan2(v[:, 1], v[:, 0])

    def angular_raw(self, omega: np.ndarray, points: np.ndarray) -> np.ndarray:
        """eta(sqrt(|xi|) |xihat - omega|) at frequency points (..., dim)."""
        pts = np.asarray(points, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        out = np.zeros_like(r)
        pos = r > 0
        if np.any(pos):
            xhat = pts[pos] / r[pos][..., None]
            dist = np.linalg.norm(xhat - np.asarray(omega), axis=-1)
            out[pos] = bump(np.sqrt(r[pos]) * dist)
        return out

    def quadrature_sum_raw(self, points: np.ndarray) -> np.ndarray:
        """s(xi) = sum_j w_j eta_j(xi)^2 over the direction set."""
        pts = np.asarray(points, dtype=float)
        s = np.zeros(pts.shape[:-1])
        for v in self.vectors:
            s += self.angular_raw(np.asarray(v), pts) ** 2
        return s * self.weight

    def phi(self, omega: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Normalized localizer phi_omega at arbitrary points (omega need not be a node)."""
        pts = np.asarray(points, dtype=float)
        raw = self.angular_raw(np.asarray(omega), pts)
        s = self.quadrature_sum_raw(pts)
        r = np.linalg.norm(pts, axis=-1)
        return radial_taper(r) * raw / np.sqrt(np.maximum(s, _S_FLOOR))

    def rho(self, points: np.ndarray) -> np.ndarray:
        """Low-frequency cut-off (1 - sum_j w_j phi_j^2)^(1/2) = sqrt(1 - beta^2)."""
        r = np.linalg.norm(np.asarray(points, dtype=float), axis=-1)
        return rho_of_radius(r)

    def phi_symbol(self, omega) -> Symbol:
        w = omega.vector if isinstance(omega, Direction) else np.asarray(omega, dtype=float)
        return Symbol(lambda pts: self.phi(w, pts), annulus=(0.25, np.inf))


def rho_of_radius(r: np.ndarray) -> np.ndarray:
    b = radial_taper(r)
    return np.sqrt(np.clip(1.0 - b * b, 0.0, None))


def eval_rho(family: DirectionalFamily, xi) -> np.ndarray:
    """rho(xi) for the family (radial, since the angular sum is exactly beta^2)."""
    return family.rho(np.asarray(xi, dtype=float))


def min_direction_count(dim: int, xi_max: float) -> int:
    """Smallest direction count resolving angular features of width xi_max^(-1/2)."""
    if dim == 2:
        return 8 * math.ceil(math.sqrt(xi_max))
    return math.ceil(16.0 * xi_max)


def build_directional_family(dim: int, count: int) -> DirectionalFamily:
    """Uniform-angle (n=2) or Fibonacci-sphere (n=3) direction set with unit total weight."""
    if dim == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        vecs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    elif dim == 3:
        vecs = _fibonacci_sphere(count)
    else:
        raise ValueError("dim must be 2 or 3")
    return DirectionalFamily(dim=dim, count=count, vectors=tuple(map(tuple, vecs)))


def packet_symbol(family: DirectionalFamily, profile: RadialProfile, omega, sigma: float) -> Symbol:
    """Wave packet symbol psi_{w,sigma}(xi) = Psi0(sigma |xi|) phi_w(xi)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    w = omega.vector if isinstance(omega, Direction) else np.asarray(omega, dtype=float)

    def ev(pts):
        r = np.linalg.norm(np.asarray(pts, dtype=float), axis=-1)
        return profile(sigma * r) * family.phi(w, pts)

    return Symbol(ev, annulus=(0.5 / sigma, 2.0 / sigma))


def parabolic_profile_symbol(profile: RadialProfile, omega: Direction, sigma: float) -> Symbol:
    """Anisotropic profile symbol xi -> Psi0(sigma |xi|_w)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")

    def ev(pts):
        return profile(sigma * aniso_norm(omega, pts))

    return Symbol(ev)


# ---------------------------------------------------------------------------
# Cap systems


@dataclass(frozen=True)
class CapSystem:
    """R^(-1/2)-separated direction set with a homogeneous partition of unity.

    Each chi_nu is positively homogeneous of degree zero, supported in
    {|xihat - nu| <= 2 R^(-1/2)}, and the caps sum to one away from xi = 0.
    """

    scale: float
    dim: int
    centers: tuple[tuple[float, ...], ...]
    window: float  # angular half-width of the raw bump argument normalization

    @property
    def count(self) -> int:
        return len(self.centers)

    @property
    def separation(self) -> float:
        c = self.center_array()
        if self.dim == 2:
            # uniform circle: neighbors realize the minimum
            return float(np.linalg.norm(c[0] - c[1]))
        best = np.inf
        for i in range(len(c)):
            d = np.linalg.norm(c[i + 1 :] - c[i], axis=-1)
            if len(d):
                best = min(best, float(d.min()))
        return best

    def center_array(self) -> np.ndarray:
        return np.asarray(self.centers, dtype=float)

    def raw_values(self, points: np.ndarray) -> np.ndarray:
        """Unnormalized bump values, shape (count, ...)."""
        pts = np.asarray(points, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        out = np.zeros((self.count,) + r.shape)
        pos = r > 0
        if not np.any(pos):
            return out
        xhat = pts[pos] / r[pos][..., None]
        if self.dim == 2:
            ang = np.arctan2(xhat[..., 1], xhat[..., 0])
            cth = np.arctan2(self.center_array()[:, 1], self.center_array()[:, 0])
            for i in range(self.count):
                d = np.abs((ang - cth[i] + np.pi) % (2 * np.pi) - np.pi)
                out[i][pos] = bump(d / self.window)
        else:
            for i, c in enumerate(self.center_array()):
                chord = np.linalg.norm(xhat - c, axis=-1)
                out[i][pos] = bump(chord / self.window)
        return out

    def chi_values(self, points: np.ndarray) -> np.ndarray:
        """Normalized partition values chi_nu, shape (count, ...); zero at xi = 0."""
        raw = self.raw_values(points)
        den = raw.sum(axis=0)
        good = den > 0
        out = np.zeros_like(raw)
        for i in range(self.count):
            out[i][good] = raw[i][good] / den[good]
        return out

    def chi_symbol(self, i: int) -> Symbol:
        def ev(pts):
            return self.chi_values(pts)[i]

        return Symbol(ev)


def build_caps(scale: float, dim: int) -> CapSystem:
    """Maximal R^(-1/2)-separated cap system V_R with its partition of unity.

    n=2: uniformly spaced angles at the largest count keeping chordal
    separation >= R^(-1/2) (maximality by construction).  n=3: Fibonacci
    points greedily thinned to R^(-1/2) separation, then greedily completed
    to a maximal set.
    """
    if scale < 2:
        raise ValueError("cap scale R must be >= 2")
    sep = scale**-0.5
    if dim == 2:
        delta_min = 2.0 * math.asin(min(1.0, sep / 2.0))
        count = int(2.0 * math.pi / delta_min)
        th = 2.0 * np.pi * np.arange(count) / count
        centers = np.stack([np.cos(th), np.sin(th)], axis=-1)
        window = 2.0 * np.pi / count  # angular half-width = one spacing
        return CapSystem(scale=scale, dim=2, centers=tuple(map(tuple, centers)), window=window)
    if dim == 3:
        # Oversampled candidates, greedy thinning, then a maximality pass.
        cand = _fibonacci_sphere(max(64, int(40.0 * scale)))
        kept: list[np.ndarray] = []
        for v in cand:
            if all(np.linalg.norm(v - u) >= sep for u in kept):
                kept.append(v)
        extra = _fibonacci_sphere(max(128, int(97.0 * scale)))
        for v in extra:
            if all(np.linalg.norm(v - u) >= sep for u in kept):
                kept.append(v)
        centers = np.asarray(kept)
        return CapSystem(scale=scale, dim=3, centers=tuple(map(tuple, centers)), window=2.0 * sep)
    raise ValueError("dim must be 2 or 3")


# ---------------------------------------------------------------------------
# Grid-bound caches


class FamilyGridData:
    """Sparse per-direction evaluation of a family on one frequency lattice.

    For every direction j this stores the flat lattice indices inside its
    angular window (sorted by |xi|), the radii there, and the normalized
    phi_j values.  The quadrature sum s(xi) is accumulated once on the grid.
    """

    def __init__(self, family: DirectionalFamily, grid: TorusGrid):
        if family.dim != grid.dim:
            raise ValueError("family/grid dimension mismatch")
        self.family = family
        self.grid = grid
        r = gridmod.freq_radius(grid).ravel()
        beta = radial_taper(r)
        s = np.zeros(grid.size)
        idx_list: list[np.ndarray] = []
        raw_list: list[np.ndarray] = []
        corner = float(r.max())
        if family.dim == 2:
            theta = gridmod.freq_angle(grid).ravel()
            halfwidth = np.full(grid.size, np.pi)
            pos = r > 0
            # chord < r^(-1/2)  <=>  |dtheta| < 2 asin(min(1, r^(-1/2)/2))
            halfwidth[pos] = 2.0 * np.arcsin(np.minimum(1.0, 0.5 / np.sqrt(r[pos])))
            for j, th in enumerate(family.thetas()):
                d = np.abs((theta - th + np.pi) % (2 * np.pi) - np.pi)
                sel = np.flatnonzero((d < halfwidth) & pos)
                pts = gridmod.freq_points(grid, sel)
                raw = family.angular_raw(family.vector_array()[j], pts)
                keep = raw > 0
                sel, raw = sel[keep], raw[keep]
                s[sel] += family.weight * raw**2
                idx_list.append(sel)
                raw_list.append(raw)
        else:
            pts_all = None
            for j in range(family.count):
                w = family.vector_array()[j]
                if pts_all is None:
                    ax = grid.freq_axis()
                    g = np.meshgrid(ax, ax, ax, indexing="ij")
                    pts_all = np.stack([gg.ravel() for gg in g], axis=-1)
                raw = family.angular_raw(w, pts_all)
                sel = np.flatnonzero(raw > 0)
                raw = raw[sel]
                s[sel] += family.weight * raw**2
                idx_list.append(sel)
                raw_list.append(raw)
        self.squad = s
        self.indices: list[np.ndarray] = []
        self.radii: list[np.ndarray] = []
        self.phi: list[np.ndarray] = []
        for j in range(family.count):
            sel = idx_list[j]
            phi = beta[sel] * raw_list[j] / np.sqrt(np.maximum(s[sel], _S_FLOOR))
            order = np.argsort(r[sel], kind="stable")
            self.indices.append(sel[order])
            self.radii.append(r[sel][order])
            self.phi.append(phi[order])
        self.rho_flat = rho_of_radius(r)
        # coverage check: inside the lattice ball every |xi| >= 1/4 point
        # with beta > 0 must be seen by at least one direction
        uncovered = (beta > 0) & (s <= 0) & (r <= corner)
        if np.any(uncovered):
            raise ValueError(
                "direction count too small: lattice points with no covering direction; "
                f"need count >= {min_direction_count(family.dim, grid.nyquist)}"
            )


_family_cache: dict[tuple, FamilyGridData] = {}


def family_on_grid(family: DirectionalFamily, grid: TorusGrid) -> FamilyGridData:
    key = (id(family), grid)
    data = _family_cache.get(key)
    if data is None:
        data = FamilyGridData(family, grid)
        _family_cache.clear()
        _family_cache[key] = data
    return data


class CapsGridData:
    """Sparse per-cap chi_nu values on one frequency lattice."""

    def __init__(self, caps: CapSystem, grid: TorusGrid):
        if caps.dim != grid.dim:
            raise ValueError("caps/grid dimension mismatch")
        self.caps = caps
        self.grid = grid
        r = gridmod.freq_radius(grid).ravel()
        pos = r > 0
        den = np.zeros(grid.size)
        idx_list: list[np.ndarray] = []
        raw_list: list[np.ndarray] = []
        if caps.dim == 2:
            theta = gridmod.freq_angle(grid).ravel()
            cth = np.arctan2(caps.center_array()[:, 1], caps.center_array()[:, 0])
            for i in range(caps.count):
                d = np.abs((theta - cth[i] + np.pi) % (2 * np.pi) - np.pi)
                sel = np.flatnonzero((d < caps.window) & pos)
                raw = bump(d[sel] / caps.window)
                keep = raw > 0
                sel, raw = sel[keep], raw[keep]
                den[sel] += raw
                idx_list.append(sel)
                raw_list.append(raw)
        else:
            ax = grid.freq_axis()
            g = np.meshgrid(ax, ax, ax, indexing="ij")
            pts = np.stack([gg.ravel() for gg in g], axis=-1)
            xhat = np.zeros_like(pts)
            xhat[pos] = pts[pos] / r[pos][:, None]
            for i, c in enumerate(caps.center_array()):
                chord = np.linalg.norm(xhat - c, axis=-1)
                sel = np.flatnonzero((chord < caps.window) & pos)
                raw = bump(chord[sel] / caps.window)
                keep = raw > 0
                sel, raw = sel[keep], raw[keep]
                den[sel] += raw
                idx_list.append(sel)
                raw_list.append(raw)
        self.indices = idx_list
        self.chi = [raw / den[sel] for sel, raw in zip(idx_list, raw_list)]


_caps_cache: dict[tuple, CapsGridData] = {}


def caps_on_grid(caps: CapSystem, grid: TorusGrid) -> CapsGridData:
    key = (id(caps), grid)
    data = _caps_cache.get(key)
    if data is None:
        data = CapsGridData(caps, grid)
        if len(_caps_cache) > 4:
            _caps_cache.clear()
        _caps_cache[key] = data
    return data
