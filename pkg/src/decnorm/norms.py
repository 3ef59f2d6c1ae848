"""Norm evaluators and the closed-form exponent calculators.

The continuous directional norm is

    || rho(D) f ||_p  +  ( sum_j w_j || <D>^s phi_j(D) f ||_p^q )^(1/q)

over the frame's direction quadrature; the discrete variant replaces the
directional family by the cap partition on a dyadic annulus with the scaling
prefactor R^(s + (n-1)/2 (1/2 - 1/q)).  Slice evaluation is shared across
every (p, q) pair requested for one field, which is what the experiment
batteries rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from . import grid as gridmod
from ._threads import fft_workers
from .aniso import Direction, aniso_norm
from .frames import CapSystem, caps_on_grid
from .grid import PHYSICAL, TorusField, japanese_bracket, lp_norms_of_values
from .transform import PhaseSpaceField, RenormalizedFrame

_SUPPORT_RTOL = 1e-13


@dataclass(frozen=True)
class NormSpec:
    """Integrability/smoothness triple (p, q, s) with 1 < p, q < inf."""

    p: float
    q: float
    s: float = 0.0

    def __post_init__(self):
        if not (1.0 < self.p < math.inf):
            raise ValueError(f"p must lie in (1, inf), got {self.p}")
        if not (1.0 < self.q < math.inf):
            raise ValueError(f"q must lie in (1, inf), got {self.q}")


# ---------------------------------------------------------------------------
# continuous directional norm


def _support_profile(fhat_flat: np.ndarray, grid) -> tuple[np.ndarray, float, np.ndarray | None]:
    """Support indices (relative threshold), min radius there, support angles (n=2)."""
    mag = np.abs(fhat_flat)
    top = mag.max()
    if top == 0.0:
        return np.empty(0, dtype=np.int64), 0.0, None
    idx = np.flatnonzero(mag > _SUPPORT_RTOL * top)
    r = gridmod.freq_radius(grid).ravel()[idx]
    pos = r > 0
    rmin = float(r[pos].min()) if np.any(pos) else 0.0
    ang = None
    if grid.dim == 2:
        ang = np.sort(gridmod.freq_angle(grid).ravel()[idx[pos]])
    return idx, rmin, ang


def _direction_relevant(theta: float, support_angles: np.ndarray, halfwidth: float) -> bool:
    """Whether any support angle lies within the circular halfwidth of theta."""
    if support_angles is None or len(support_angles) == 0:
        return False
    pos = np.searchsorted(support_angles, theta)
    cand = [support_angles[pos % len(support_angles)], support_angles[pos - 1]]
    d = min(abs((c - theta + np.pi) % (2 * np.pi) - np.pi) for c in cand)
    return d <= halfwidth


class DirectionalComponents:
    """Per-direction L^p norms of <D>^s phi_j(D) f, plus the rho(D) f term.

    Computed once and reassembled for any (p, q) battery sharing the same s.
    """

    def __init__(self, rho_norms: dict[float, float], dir_norms: dict[float, np.ndarray], weight: float):
        self.rho_norms = rho_norms
        self.dir_norms = dir_norms
        self.weight = weight

    def assemble(self, p: float, q: float) -> float:
        nj = self.dir_norms[p]
        return self.rho_norms[p] + float((self.weight * np.sum(nj**q)) ** (1.0 / q))


def directional_components(
    f: TorusField,
    frame: RenormalizedFrame,
    ps: tuple[float, ...],
    s: float = 0.0,
    *,
    band_hi: float | None = None,
) -> DirectionalComponents:
    """Shared slice pass behind :func:`dec_norm_continuous` for several p at once."""
    if f.grid != frame.grid:
        raise ValueError("grid mismatch between field and frame")
    hi = frame.band_hi if band_hi is None else band_hi
    gridmod.check_band(f, hi, what="norm input")
    g = f.grid
    cv = g.cell_volume
    fhat = gridmod.spectrum(f).ravel()
    sup_idx, rmin, sup_ang = _support_profile(fhat, g)

    sw_flat = None
    if s != 0.0:
        sw_flat = japanese_bracket(gridmod.freq_radius(g).ravel()) ** s

    # rho term (the smoothness weight does not apply to the low-frequency part)
    coeff = np.zeros(g.size, dtype=np.complex128)
    low_idx = np.flatnonzero(frame.rho_flat > 0)
    coeff[low_idx] = frame.rho_flat[low_idx] * fhat[low_idx]
    rho_phys = sfft.ifftn(coeff.reshape(g.shape), norm="ortho", workers=fft_workers())
    rho_vals = lp_norms_of_values(rho_phys, cv, ps)
    rho_norms = dict(zip(ps, rho_vals))

    fam = frame.family
    dir_norms = {p: np.zeros(fam.count) for p in ps}
    if len(sup_idx):
        use_skip = g.dim == 2 and rmin > 0 and sup_ang is not None
        halfwidth = 2.0 * math.asin(min(1.0, 0.5 / math.sqrt(rmin))) * 1.0001 if rmin > 0 else math.pi
        thetas = fam.thetas() if g.dim == 2 else None
        for j in range(fam.count):
            if use_skip and not _direction_relevant(float(thetas[j]), sup_ang, halfwidth):
                continue
            idx = frame.data.indices[j]
            vals = frame.data.phi[j] * fhat[idx]
            if sw_flat is not None:
                vals = vals * sw_flat[idx]
            if not np.any(vals):
                continue
            coeff = np.zeros(g.size, dtype=np.complex128)
            coeff[idx] = vals
            phys = sfft.ifftn(coeff.reshape(g.shape), norm="ortho", workers=fft_workers())
            for p, val in zip(ps, lp_norms_of_values(phys, cv, ps)):
                dir_norms[p][j] = val
    return DirectionalComponents(rho_norms, dir_norms, fam.weight)


def dec_norm_continuous(
    f: TorusField,
    spec: NormSpec,
    frame: RenormalizedFrame,
    *,
    band_hi: float | None = None,
) -> float:
    """Continuous directional norm of the (p, q; s) space, by direction quadrature."""
    comp = directional_components(f, frame, (spec.p,), spec.s, band_hi=band_hi)
    return comp.assemble(spec.p, spec.q)


# ---------------------------------------------------------------------------
# discrete cap norm


def dec_norm_discrete(f: TorusField, spec: NormSpec, caps: CapSystem, scale: float) -> float:
    """Cap norm R^(s+(n-1)/2(1/2-1/q)) (sum_nu ||chi_nu(D) f||_p^q)^(1/q) on a dyadic annulus."""
    g = f.grid
    if caps.dim != g.dim:
        raise ValueError("caps/grid dimension mismatch")
    fhat = gridmod.spectrum(f).ravel()
    r = gridmod.freq_radius(g).ravel()
    tot = float(np.sum(np.abs(fhat) ** 2))
    if tot > 0:
        outside = (r < scale / 2 * (1 - 1e-9)) | (r > 2 * scale * (1 + 1e-9))
        frac = float(np.sum(np.abs(fhat[outside]) ** 2) / tot)
        if frac > 1e-8:
            raise ValueError(
                f"input has relative spectral mass {frac:.3e} outside the dyadic annulus [R/2, 2R]"
            )
    data = caps_on_grid(caps, g)
    cv = g.cell_volume
    acc = 0.0
    for idx, chi in zip(data.indices, data.chi):
        vals = chi * fhat[idx]
        if not np.any(vals):
            continue
        coeff = np.zeros(g.size, dtype=np.complex128)
        coeff[idx] = vals
        phys = sfft.ifftn(coeff.reshape(g.shape), norm="ortho", workers=fft_workers())
        (nrm,) = lp_norms_of_values(phys, cv, (spec.p,))
        acc += nrm**spec.q
    n = g.dim
    expo = spec.s + (n - 1) / 2.0 * (0.5 - 1.0 / spec.q)
    return float(scale**expo * acc ** (1.0 / spec.q))


def cap_lp_norms(f: TorusField, caps: CapSystem, p: float) -> np.ndarray:
    """||chi_nu(D) f||_p for every cap (no prefactor); shared by the decoupling runs."""
    g = f.grid
    fhat = gridmod.spectrum(f).ravel()
    data = caps_on_grid(caps, g)
    cv = g.cell_volume
    out = np.zeros(caps.count)
    for i, (idx, chi) in enumerate(zip(data.indices, data.chi)):
        vals = chi * fhat[idx]
        if not np.any(vals):
            continue
        coeff = np.zeros(g.size, dtype=np.complex128)
        coeff[idx] = vals
        phys = sfft.ifftn(coeff.reshape(g.shape), norm="ortho", workers=fft_workers())
        (out[i],) = lp_norms_of_values(phys, cv, (p,))
    return out


# ---------------------------------------------------------------------------
# phase-space mixed norm


def lqp_norms(F: PhaseSpaceField, pairs: tuple[tuple[float, float], ...]) -> dict[tuple[float, float], float]:
    """L^q_w L^p_x L^2_s norms for several (p, q) pairs in one slice pass."""
    fr = F.frame
    g = fr.grid
    cv = g.cell_volume
    v = fr.sigmas.weight
    w = fr.family.weight
    ps = tuple(sorted({p for p, _ in pairs}))
    low_sq = np.abs(np.asarray(F.lowfreq_values())) ** 2
    per_dir = {p: np.zeros(fr.family.count) for p in ps}
    for j in range(fr.family.count):
        acc = low_sq.copy()
        for _, blk in F.iter_physical(j):
            acc += v * np.sum(np.abs(blk) ** 2, axis=0)
        root = np.sqrt(acc)
        for p, val in zip(ps, lp_norms_of_values(root, cv, ps)):
            per_dir[p][j] = val
    out = {}
    for p, q in pairs:
        out[(p, q)] = float((w * np.sum(per_dir[p] ** q)) ** (1.0 / q))
    return out


def lqp_norm(F: PhaseSpaceField, p: float, q: float) -> float:
    """Mixed norm over directions, space, and scales, low-frequency slice at unit weight."""
    return lqp_norms(F, ((p, q),))[(p, q)]


# ---------------------------------------------------------------------------
# square-function norms


def _sqfn_norm(f: TorusField, radius_flat: np.ndarray, p: float, per_octave: int) -> float:
    """Square-function norm with the squared dyadic multiplier along a radius map."""
    from .frames import build_radial_profile

    g = f.grid
    fhat = gridmod.spectrum(f).ravel()
    mag = np.abs(fhat)
    top = mag.max()
    if top == 0.0:
        return 0.0
    sup = np.flatnonzero(mag > _SUPPORT_RTOL * top)
    rsup = radius_flat[sup]
    rsup = rsup[rsup > 0]
    if len(rsup) == 0:
        return 0.0
    m_lo, m_hi = float(rsup.min()), float(rsup.max())
    profile = build_radial_profile()
    lo = 0.5 / m_hi / 2.0
    hi = 2.0 / m_lo * 2.0
    n = int(math.ceil(math.log2(hi / lo) * per_octave)) + 1
    sig = lo * 2.0 ** ((np.arange(n) + 0.5) / per_octave)
    sig = sig[sig < hi]
    v = math.log(2.0) / per_octave
    acc = np.zeros(g.shape)
    order = np.argsort(radius_flat, kind="stable")
    rs = radius_flat[order]
    for s in sig:
        i0 = np.searchsorted(rs, 0.5 / s * (1 - 1e-9))
        i1 = np.searchsorted(rs, 2.0 / s * (1 + 1e-9), side="right")
        if i1 <= i0:
            continue
        idx = order[i0:i1]
        vals = profile(s * rs[i0:i1]) ** 2 * fhat[idx]
        if not np.any(vals):
            continue
        coeff = np.zeros(g.size, dtype=np.complex128)
        coeff[idx] = vals
        phys = sfft.ifftn(coeff.reshape(g.shape), norm="ortho", workers=fft_workers())
        acc += v * np.abs(phys) ** 2
    (nrm,) = lp_norms_of_values(np.sqrt(acc), g.cell_volume, (p,))
    return nrm


def parabolic_sqfn_norm(f: TorusField, omega: Direction, p: float, *, per_octave: int = 16) -> float:
    """Parabolic square-function norm through squared anisotropic dilates of the profile."""
    if not (1.0 < p < math.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    g = f.grid
    ax = g.freq_axis()
    if g.dim == 2:
        pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    else:
        pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    rad = aniso_norm(omega, pts.reshape(-1, g.dim))
    return _sqfn_norm(f, rad, p, per_octave)


def isotropic_sqfn_norm(f: TorusField, p: float, *, per_octave: int = 16) -> float:
    """Isotropic dyadic square-function norm (squared multiplier convention)."""
    if not (1.0 < p < math.inf):
        raise ValueError(f"p must lie in (1, inf), got {p}")
    return _sqfn_norm(f, gridmod.freq_radius(f.grid).ravel(), p, per_octave)


# ---------------------------------------------------------------------------
# exponent calculators


def exponent_s(p: float, n: int) -> float:
    """Fixed-time Sobolev exponent (n-1)/2 |1/2 - 1/p|."""
    if not (1.0 <= p <= math.inf):
        raise ValueError("p out of range")
    ip = 0.0 if p == math.inf else 1.0 / p
    return (n - 1) / 2.0 * abs(0.5 - ip)


def exponent_d(p: float, q: float, n: int) -> float:
    """Decoupling exponent d(p, q), two branches split at p = 2(n+1)/(n-1)."""
    if p < 2 or q < 2:
        raise ValueError("d(p, q) is defined for p, q >= 2")
    base = (n - 1) / 2.0 * (0.5 - 1.0 / q)
    if p >= 2.0 * (n + 1) / (n - 1):
        return base + (n - 1) / 4.0 - (n + 1) / (2.0 * p)
    return base


def exponent_alpha(p: float, n: int) -> float:
    """Radially-localized embedding exponent alpha(p), three branches."""
    if not (1.0 < p < math.inf):
        raise ValueError("p must lie in (1, inf)")
    if p >= 2.0 * (n + 1) / (n - 1):
        return (n - 1) / 4.0 - (n + 1) / (2.0 * p)
    if p <= 2.0 * (n + 1) / (n + 3):
        return (n - 1) / (2.0 * p) - 1.0
    return 0.0


def exponent_sigma(p: float, n: int) -> float:
    """Local smoothing conjecture exponent: 2 s(p) - 1/p above 2n/(n-1), else 0."""
    if not (1.0 < p < math.inf):
        raise ValueError("p must lie in (1, inf)")
    if p >= 2.0 * n / (n - 1):
        return 2.0 * exponent_s(p, n) - 1.0 / p
    return 0.0


def fractional_exponent(p1: float, p2: float, n: int) -> float:
    """Smoothness cost (n+1)/2 (1/p1 - 1/p2) of raising integrability p1 -> p2."""
    if not (1.0 <= p1 < math.inf and 1.0 <= p2 < math.inf):
        raise ValueError("p1, p2 must lie in [1, inf)")
    return (n + 1) / 2.0 * (1.0 / p1 - 1.0 / p2)
