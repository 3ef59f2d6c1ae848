"""Periodic sampling grids, discrete Fourier calculus, and mixed-norm evaluation.

A :class:`TorusGrid` is a periodic box ``[-L/2, L/2)^n`` sampled on ``M``
points per axis.  Its frequency lattice is ``{2*pi*k/L : k in [-M/2, M/2)}``
per axis, in FFT ordering.  All transforms are unitary (``norm="ortho"``)
and all physical norms carry the cell volume weight, so the discrete
Parseval identity matches the continuum Plancherel statement.
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.fft as sfft
import scipy.ndimage as ndi

from ._threads import fft_workers

PHYSICAL = "physical"
FREQUENCY = "frequency"


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``[-L/2, L/2)^dim`` with ``points`` samples per axis.

    Parameters
    ----------
    dim : int
        Ambient dimension, 2 or 3.
    side : float
        Physical period L, the same in each axis.
    points : int
        Samples per axis; must be a power of two.
    """

    dim: int
    side: float
    points: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.side <= 0:
            raise ValueError("side must be positive")
        m = self.points
        if m < 2 or (m & (m - 1)) != 0:
            raise ValueError(f"points must be a power of two >= 2, got {m}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def spacing(self) -> float:
        return self.side / self.points

    @property
    def cell_volume(self) -> float:
        return (self.side / self.points) ** self.dim

    @property
    def total_volume(self) -> float:
        return self.side**self.dim

    @property
    def nyquist(self) -> float:
        """Largest per-axis lattice frequency magnitude, pi*M/L."""
        return np.pi * self.points / self.side

    def coord_axis(self) -> np.ndarray:
        """Physical sample positions per axis, centered: -L/2 + j*L/M."""
        return -self.side / 2 + self.spacing * np.arange(self.points)

    def freq_axis(self) -> np.ndarray:
        """Frequency lattice per axis in FFT order."""
        return 2 * np.pi * sfft.fftfreq(self.points, d=self.spacing)


@functools.lru_cache(maxsize=16)
def _freq_radius(grid: TorusGrid) -> np.ndarray:
    ax = grid.freq_axis()
    if grid.dim == 2:
        r = np.hypot(ax[:, None], ax[None, :])
    else:
        r = np.sqrt(ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2)
    r.flags.writeable = False
    return r


@functools.lru_cache(maxsize=16)
def _freq_angle(grid: TorusGrid) -> np.ndarray:
    if grid.dim != 2:
        raise ValueError("freq_angle is only defined for dim=2")
    ax = grid.freq_axis()
    th = np.arctan2(ax[None, :], ax[:, None])
    th.flags.writeable = False
    return th


@functools.lru_cache(maxsize=16)
def _radius_order(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Flat lattice indices sorted by |xi|, and the sorted radii."""
    r = _freq_radius(grid).ravel()
    order = np.argsort(r, kind="stable").astype(np.int64)
    rs = r[order]
    order.flags.writeable = False
    rs.flags.writeable = False
    return order, rs


def freq_radius(grid: TorusGrid) -> np.ndarray:
    """|xi| on the frequency lattice (FFT order)."""
    return _freq_radius(grid)


def freq_angle(grid: TorusGrid) -> np.ndarray:
    """Polar angle of xi on the 2-d frequency lattice (FFT order)."""
    return _freq_angle(grid)


def radius_order(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    return _radius_order(grid)


def freq_points(grid: TorusGrid, flat_idx: np.ndarray) -> np.ndarray:
    """Frequency lattice points for flat indices, shape (len(idx), dim)."""
    ax = grid.freq_axis()
    idx = np.unravel_index(flat_idx, grid.shape)
    return np.stack([ax[i] for i in idx], axis=-1)


@functools.lru_cache(maxsize=16)
def _centered_phase(grid: TorusGrid) -> np.ndarray:
    """Per-lattice-point phase exp(-i xi . (-L/2 vector)) = (-1)^(sum of indices).

    Multiplying raw ortho-DFT coefficients by this phase makes
    ``ifftn(...)`` evaluate ``sum_xi u(xi) exp(i xi . x)`` at the centered
    sample positions ``x = -L/2 + j h``.
    """
    s = (-1.0) ** np.arange(grid.points)
    if grid.dim == 2:
        ph = s[:, None] * s[None, :]
    else:
        ph = s[:, None, None] * s[None, :, None] * s[None, None, :]
    ph.flags.writeable = False
    return ph


class TorusField:
    """Complex field sampled on a :class:`TorusGrid`, in physical or frequency space.

    Frequency values are the unitary DFT coefficients of the physical
    samples.  Instances are treated as immutable.
    """

    __slots__ = ("grid", "values", "space")

    def __init__(self, grid: TorusGrid, values: np.ndarray, space: str):
        if space not in (PHYSICAL, FREQUENCY):
            raise ValueError(f"space must be '{PHYSICAL}' or '{FREQUENCY}'")
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self.space = space

    def copy(self) -> "TorusField":
        return TorusField(self.grid, self.values.copy(), self.space)

    def __repr__(self):
        return f"TorusField(dim={self.grid.dim}, M={self.grid.points}, L={self.grid.side}, {self.space})"


@dataclass(frozen=True)
class Symbol:
    """Fourier multiplier m(xi), evaluated pointwise on frequency points.

    ``evaluator`` maps an array of frequency points with shape (..., dim)
    to complex values of shape (...).  ``annulus`` is an optional
    (lo, hi) support hint in |xi| used for sparse evaluation.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    annulus: tuple[float, float] | None = None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.evaluator(np.asarray(points, dtype=float)))
        if np.any(np.isnan(vals)):
            raise ValueError("symbol evaluated to NaN at a lattice point with no declared fallback")
        return vals


def to_frequency(f: TorusField) -> TorusField:
    """Unitary DFT of a physical-space field."""
    if f.space != PHYSICAL:
        raise ValueError("to_frequency expects a physical-space field")
    vals = sfft.fftn(f.values, norm="ortho", workers=fft_workers())
    return TorusField(f.grid, vals, FREQUENCY)


def to_physical(f: TorusField) -> TorusField:
    """Inverse unitary DFT of a frequency-space field."""
    if f.space != FREQUENCY:
        raise ValueError("to_physical expects a frequency-space field")
    vals = sfft.ifftn(f.values, norm="ortho", workers=fft_workers())
    return TorusField(f.grid, vals, PHYSICAL)


def spectrum(f: TorusField) -> np.ndarray:
    """Frequency-space coefficient array of ``f`` (transforming if needed)."""
    if f.space == FREQUENCY:
        return f.values
    return sfft.fftn(f.values, norm="ortho", workers=fft_workers())


def physical(f: TorusField) -> np.ndarray:
    """Physical-space sample array of ``f`` (transforming if needed)."""
    if f.space == PHYSICAL:
        return f.values
    return sfft.ifftn(f.values, norm="ortho", workers=fft_workers())


def field_from_spectrum(grid: TorusGrid, coefficients: np.ndarray) -> TorusField:
    """Frequency-space field from raw unitary-DFT coefficients."""
    return TorusField(grid, coefficients, FREQUENCY)


def synth_centered(grid: TorusGrid, amplitude: np.ndarray) -> TorusField:
    """Physical field f(x) = M^{-n/2} sum_xi a(xi) e^{i xi.x} at centered samples.

    ``amplitude`` is indexed by the FFT-ordered frequency lattice.  This is
    the constructor to use when a field is specified analytically by its
    Fourier integral over the lattice.
    """
    coeff = np.asarray(amplitude, dtype=np.complex128) * _centered_phase(grid)
    vals = sfft.ifftn(coeff, norm="ortho", workers=fft_workers())
    return TorusField(grid, vals, PHYSICAL)


def eval_symbol_on_grid(m: Symbol, grid: TorusGrid) -> np.ndarray:
    """Evaluate a symbol on the full frequency lattice."""
    ax = grid.freq_axis()
    if grid.dim == 2:
        pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    else:
        pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    if m.annulus is not None:
        lo, hi = m.annulus
        r = _freq_radius(grid)
        out = np.zeros(grid.shape, dtype=np.complex128)
        mask = (r >= lo) & (r <= hi)
        if np.any(mask):
            out[mask] = m(pts[mask])
        return out
    return np.asarray(m(pts), dtype=np.complex128)


def apply_multiplier(f: TorusField, m: Symbol) -> TorusField:
    """Apply the Fourier multiplier m(D): result^(xi) = m(xi) f^(xi)."""
    mvals = eval_symbol_on_grid(m, f.grid)
    coeff = spectrum(f) * mvals
    out = TorusField(f.grid, coeff, FREQUENCY)
    if f.space == PHYSICAL:
        return to_physical(out)
    return out


def lp_norm(f: TorusField, p: float) -> float:
    """Riemann-sum L^p norm (sum |f(x)|^p cellvol)^(1/p), for p in (1, inf)."""
    if not (1.0 < p < np.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    if f.space != PHYSICAL:
        raise ValueError("lp_norm expects a physical-space field")
    a = np.abs(f.values)
    return float((np.sum(a**p) * f.grid.cell_volume) ** (1.0 / p))


def lp_norms_of_values(values: np.ndarray, cellvol: float, ps: tuple[float, ...]) -> tuple[float, ...]:
    """L^p norms of one sample array for several p at once (shared |.| pass)."""
    a = np.abs(values)
    out = []
    for p in ps:
        if not (1.0 < p < np.inf):
            raise ValueError(f"p must lie in (1, inf), got {p}")
        if p == 2.0:
            out.append(float(np.sqrt(np.sum(a * a) * cellvol)))
        else:
            out.append(float((np.sum(a**p) * cellvol) ** (1.0 / p)))
    return tuple(out)


def l2_norm(f: TorusField) -> float:
    """L^2 norm, valid in either space (the transform is unitary up to cell weights)."""
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.cell_volume))


def japanese_bracket(r: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(r) ** 2)


def sobolev_norm(f: TorusField, s: float, p: float) -> float:
    """Bessel-potential Sobolev norm ||<D>^s f||_{L^p}."""
    if not (1.0 < p < np.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    if s == 0.0:
        if f.space == PHYSICAL:
            return lp_norm(f, p)
        return lp_norm(to_physical(f), p)
    w = japanese_bracket(_freq_radius(f.grid)) ** s
    g = TorusField(f.grid, spectrum(f) * w, FREQUENCY)
    return lp_norm(to_physical(g), p)


def band_mass_outside(f: TorusField, hi: float, *, lo: float = 0.0) -> float:
    """Relative L^2 spectral mass outside the band {lo <= |xi| <= hi} (DC counts as inside if lo == 0)."""
    co = spectrum(f)
    r = _freq_radius(f.grid)
    tot = float(np.sum(np.abs(co) ** 2))
    if tot == 0.0:
        return 0.0
    outside = (r > hi) | (r < lo)
    return float(np.sum(np.abs(co[outside]) ** 2) / tot)


def check_band(f: TorusField, hi: float, *, tol: float = 1e-8, what: str = "input") -> None:
    frac = band_mass_outside(f, hi)
    if frac > tol:
        raise ValueError(
            f"{what} has relative spectral mass {frac:.3e} outside the resolved band |xi| <= {hi:.6g}"
        )


def oversample2(f: TorusField) -> TorusField:
    """Spectrally zero-padded copy of ``f`` on a 2x finer grid (same period)."""
    g = f.grid
    m = g.points
    big = TorusGrid(g.dim, g.side, 2 * m)
    co = sfft.fftshift(spectrum(f))
    pad = (2 * m - m) // 2
    widths = [(pad, pad)] * g.dim
    cob = np.pad(co, widths)
    cob = sfft.ifftshift(cob) * (2.0**g.dim) ** 0.5
    return to_physical(TorusField(big, cob, FREQUENCY))


def resample_compose(
    f: TorusField,
    psi_map: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    cutoff: TorusField | np.ndarray,
) -> TorusField:
    """Pointwise k(x) * f(psi(x)) via bicubic interpolation on a 2x oversampled copy.

    ``psi_map`` maps centered coordinate arrays (x1, x2) to (y1, y2); the
    image of the support of the cutoff must stay inside the fundamental
    domain [-L/2, L/2)^2.
    """
    g = f.grid
    if g.dim != 2:
        raise ValueError("resample_compose is only implemented for dim=2")
    if isinstance(cutoff, TorusField):
        if cutoff.space != PHYSICAL or cutoff.grid != g:
            raise ValueError("cutoff must be a physical-space field on the same grid")
        kvals = cutoff.values
    else:
        kvals = np.asarray(cutoff)
        if kvals.shape != g.shape:
            raise ValueError("cutoff array shape mismatch")

    ax = g.coord_axis()
    x1, x2 = np.meshgrid(ax, ax, indexing="ij")
    y1, y2 = psi_map(x1, x2)

    supp = np.abs(kvals) > 1e-14
    half = g.side / 2
    if np.any(supp):
        y1s, y2s = y1[supp], y2[supp]
        if y1s.min() < -half or y1s.max() >= half or y2s.min() < -half or y2s.max() >= half:
            raise ValueError("psi_map leaves the fundamental domain on the support of the cutoff")

    fine = oversample2(f)
    h2 = fine.grid.spacing
    i1 = (y1 + half) / h2
    i2 = (y2 + half) / h2
    coords = np.stack([i1.ravel(), i2.ravel()])
    re = ndi.map_coordinates(fine.values.real, coords, order=3, mode="grid-wrap")
    im = ndi.map_coordinates(fine.values.imag, coords, order=3, mode="grid-wrap")
    vals = (re + 1j * im).reshape(g.shape) * kvals
    return TorusField(g, vals, PHYSICAL)


_MAGIC = b"DNF1"


def save_field(f: TorusField, path: str) -> None:
    """Flat binary layout: magic, dim, M, L, space flag, row-major little-endian complex64."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIdB", f.grid.dim, f.grid.points, f.grid.side, 1 if f.space == FREQUENCY else 0))
        fh.write(np.ascontiguousarray(f.values.astype("<c8")).tobytes())


def load_field(path: str) -> TorusField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a decnorm field file")
        dim, m, side, flag = struct.unpack("<IIdB", fh.read(17))
        grid = TorusGrid(dim, side, m)
        buf = fh.read(8 * grid.size)
        vals = np.frombuffer(buf, dtype="<c8").reshape(grid.shape).astype(np.complex128)
    return TorusField(grid, vals, FREQUENCY if flag else PHYSICAL)


def save_field_csv(f: TorusField, path: str) -> None:
    """CSV rows (index..., re, im) for small grids."""
    if f.grid.size > 1 << 16:
        raise ValueError("CSV export is intended for small grids")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        cols = ",".join(f"i{d}" for d in range(f.grid.dim))
        fh.write(f"{cols},re,im\r\n")
        for idx in np.ndindex(f.grid.shape):
            v = f.values[idx]
            fh.write(",".join(str(i) for i in idx) + f",{v.real!r},{v.imag!r}\r\n")
