"""Cartesian variable-density line masks, golden-angle radial spokes and retrospective undersampling."""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .kspace import fft2c, ifft2c

#: golden-angle increment for radial spokes, 111.246 degrees
GOLDEN_ANGLE = np.pi * (np.sqrt(5.0) - 1.0) / 2.0

CARTESIAN = "cartesian_lines"
RADIAL = "radial_spokes"


@dataclass
class SamplingPattern:
    """One frame of a sampling scheme.

    Cartesian patterns carry a boolean mask over phase-encode lines (image
    rows); radial patterns carry spoke angles in ``[0, pi)`` and the number of
    readout samples per spoke. ``n_full`` is the line or spoke count of the
    fully sampled reference used for acceleration bookkeeping.
    """
    kind: str
    lines: np.ndarray = None
    angles: np.ndarray = None
    n_readout: int = 0
    n_full: int = 0
    frame_index: int = 0

    def __post_init__(self):
        if self.kind == CARTESIAN:
            self.lines = np.asarray(self.lines, dtype=bool)
            if self.lines.ndim != 1 or not self.lines.any():
                raise ValueError("cartesian pattern needs at least one active line")
            if not self.n_full:
                self.n_full = self.lines.size
        elif self.kind == RADIAL:
            self.angles = np.asarray(self.angles, dtype=float).reshape(-1)
            if np.any((self.angles < 0) | (self.angles >= np.pi)):
                raise ValueError("spoke angles must lie in [0, pi)")
            if self.n_readout < 2:
                raise ValueError("radial pattern needs n_readout >= 2")
        else:
            raise ValueError(f"unknown pattern kind {self.kind!r}")

    @property
    def frame_count(self):
        return int(self.lines.sum()) if self.kind == CARTESIAN else int(self.angles.size)

    def mask2d(self, shape):
        if self.kind != CARTESIAN:
            raise ValueError("only cartesian patterns have a line mask")
        H, W = shape
        if self.lines.size != H:
            raise ValueError(f"mask has {self.lines.size} lines, grid has {H} rows")
        return np.broadcast_to(self.lines[:, None], (H, W))

    def acceleration(self):
        return acceleration_report(self.n_full, self.frame_count)


@dataclass(frozen=True)
class AccelerationReport:
    full_count: int
    frame_count: int
    R: float = field(init=False)

    def __post_init__(self):
        if self.frame_count < 1 or self.full_count < self.frame_count:
            raise ValueError("need 1 <= frame_count <= full_count")
        object.__setattr__(self, "R", self.full_count / self.frame_count)


def acceleration_report(full_count, frame_count):
    """``R = full_count / frame_count``; lines or spokes per frame."""
    return AccelerationReport(int(full_count), int(frame_count))


def count_for_acceleration(full_count, R):
    """Lines or spokes per frame closest to a nominal acceleration ``R``."""
    if R < 1:
        raise ValueError("acceleration must be >= 1")
    return int(min(full_count, max(1, round(full_count / R))))


# --------------------------------------------------------------------------
# Cartesian
# --------------------------------------------------------------------------

def vista_like_mask(n_pe, n_frames, lines_per_frame, seed=0):
    """Variable-density, temporally incoherent line masks (a VISTA stand-in).

    Every frame keeps the central line plus ``lines_per_frame - 1`` lines drawn
    without replacement from a Gaussian density over line offsets
    (``sigma = n_pe / 6``). Consecutive frames are redrawn when identical,
    unless only one arrangement exists.
    """
    if not 1 <= lines_per_frame <= n_pe:
        raise ValueError(f"lines_per_frame must be in [1, {n_pe}]")
    center = n_pe // 2
    offsets = np.arange(n_pe) - center
    density = np.exp(-0.5 * (offsets / (n_pe / 6.0)) ** 2)
    density[center] = 0.0
    forced = lines_per_frame in (1, n_pe)
    patterns = []
    prev = None
    for f in range(n_frames):
        rng = np.random.default_rng([seed, f])
        for _ in range(100):
            lines = np.zeros(n_pe, dtype=bool)
            lines[center] = True
            if lines_per_frame > 1:
                pick = rng.choice(n_pe, size=lines_per_frame - 1, replace=False, p=density / density.sum())
                lines[pick] = True
            if forced or prev is None or not np.array_equal(lines, prev):
                break
        patterns.append(SamplingPattern(CARTESIAN, lines=lines, n_full=n_pe, frame_index=f))
        prev = lines
    return patterns


def apply_cartesian_mask(k, pattern):
    """Zero every unselected phase-encode line in every coil."""
    if pattern.kind != CARTESIAN:
        raise ValueError("apply_cartesian_mask needs a cartesian pattern")
    k = np.asarray(k)
    return np.where(pattern.mask2d(k.shape[-2:]), k, 0)


# --------------------------------------------------------------------------
# radial
# --------------------------------------------------------------------------

def golden_angle_spokes(n_spokes, start_index=0, n_readout=64, n_full=0, frame_index=0):
    """Spokes at ``((start_index + i) * GOLDEN_ANGLE) mod pi``."""
    if n_spokes < 0:
        raise ValueError("n_spokes must be >= 0")
    idx = start_index + np.arange(n_spokes)
    angles = np.mod(idx * GOLDEN_ANGLE, np.pi)
    return SamplingPattern(RADIAL, angles=angles, n_readout=n_readout,
                           n_full=n_full or max(n_spokes, 1), frame_index=frame_index)


def spoke_coordinates(pattern):
    """Angular-frequency coordinates ``(kx, ky)`` of every sample, shape ``(n_spokes, n_readout)``.

    Readout positions are ``pi * (2 s / n - 1)`` for ``s = 0..n-1``, so with
    ``n_readout == W`` the samples along the x axis fall on grid frequencies.
    """
    if pattern.kind != RADIAL:
        raise ValueError("spoke_coordinates needs a radial pattern")
    n = pattern.n_readout
    kr = np.pi * (2.0 * np.arange(n) / n - 1.0)
    kx = np.cos(pattern.angles)[:, None] * kr[None, :]
    ky = np.sin(pattern.angles)[:, None] * kr[None, :]
    return kx, ky


def radial_sample(img, pattern):
    """Direct DFT of ``img`` at the spoke locations, unitary scaling.

    ``img`` may be a stack ``(..., H, W)``; the result is ``(..., n_spokes, n_readout)``.
    """
    if pattern.kind != RADIAL:
        raise ValueError("radial_sample needs a radial pattern")
    kx, ky = spoke_coordinates(pattern)
    img = np.asarray(img, dtype=np.complex128)
    vals = kernels.radial_dft(img, kx.ravel(), ky.ravel())
    return vals.reshape(*img.shape[:-2], *kx.shape)


def radial_forward(img, coils, pattern):
    return radial_sample(np.asarray(coils) * np.asarray(img)[None], pattern)


def radial_adjoint_dft(samples, pattern, shape):
    """Exact adjoint of :func:`radial_sample` (no density compensation)."""
    H, W = shape
    kx, ky = spoke_coordinates(pattern)
    kx, ky, d = kx.ravel(), ky.ravel(), np.asarray(samples).ravel()
    x = np.arange(W) - W // 2
    y = np.arange(H) - H // 2
    ey = np.exp(1j * np.outer(ky, y))           # (S, H)
    ex = np.exp(1j * np.outer(kx, x))           # (S, W)
    return (ey.T * d) @ ex / np.sqrt(H * W)


def radial_adjoint(samples, coils, pattern):
    coils = np.asarray(coils)
    shape = coils.shape[-2:]
    return sum(np.conj(c) * radial_adjoint_dft(s, pattern, shape) for c, s in zip(coils, samples))


def radial_adjoint_grid(spokes, pattern, shape):
    """Density-compensated nearest-neighbour gridding onto the Cartesian k-grid.

    Each sample is weighted by its ramp ``|k|`` (floored at half a grid step at
    the center) and samples falling into the same cell are combined as a
    weighted average. Cells without samples stay exactly zero. ``spokes`` may
    carry a leading coil axis.
    """
    if pattern.kind != RADIAL:
        raise ValueError("radial_adjoint_grid needs a radial pattern")
    H, W = shape
    spokes = np.asarray(spokes, dtype=np.complex128)
    lead = spokes.shape[:-2]
    out = np.zeros(lead + (H, W), dtype=np.complex128)
    if pattern.angles.size == 0:
        return out
    kx, ky = spoke_coordinates(pattern)
    ix = np.rint(kx / (2 * np.pi / W)).astype(np.int64) + W // 2
    iy = np.rint(ky / (2 * np.pi / H)).astype(np.int64) + H // 2
    keep = ((ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)).ravel()
    ix, iy = ix.ravel()[keep], iy.ravel()[keep]
    step = np.pi / max(H, W)
    w = np.maximum(np.hypot(kx, ky).ravel()[keep], step)
    wsum, _ = kernels.grid_accumulate(w.astype(np.complex128), iy, ix, H, W)
    filled = wsum.real > 0
    flat = spokes.reshape((-1,) + spokes.shape[-2:])
    out_flat = out.reshape((-1, H, W))
    for c in range(flat.shape[0]):
        acc, _ = kernels.grid_accumulate(w * flat[c].ravel()[keep], iy, ix, H, W)
        out_flat[c][filled] = acc[filled] / wsum.real[filled]
    return out


def grid_support(pattern, shape):
    """Boolean grid of cells touched by at least one rasterized spoke sample."""
    H, W = shape
    sup = np.zeros((H, W), dtype=bool)
    if pattern.angles.size == 0:
        return sup
    kx, ky = spoke_coordinates(pattern)
    ix = np.rint(kx / (2 * np.pi / W)).astype(np.int64).ravel() + W // 2
    iy = np.rint(ky / (2 * np.pi / H)).astype(np.int64).ravel() + H // 2
    ok = (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
    sup[iy[ok], ix[ok]] = True
    return sup


# --------------------------------------------------------------------------
# convenience
# --------------------------------------------------------------------------

def make_pattern(kind, R, shape, frame_index=0, seed=0, n_full=None):
    """Single-frame pattern for a nominal acceleration ``R`` on an ``(H, W)`` grid.

    Cartesian: ``n_full`` defaults to ``H`` lines. Radial: ``n_full`` defaults
    to ``ceil(pi / 2 * max(H, W))`` spokes, the Nyquist spoke count.
    """
    H, W = shape
    if kind in ("cartesian", CARTESIAN):
        full = n_full or H
        count = count_for_acceleration(full, R)
        if count >= H:
            return SamplingPattern(CARTESIAN, lines=np.ones(H, bool), n_full=full, frame_index=frame_index)
        return vista_like_mask(H, frame_index + 1, count, seed)[frame_index]
    if kind in ("radial", RADIAL):
        full = n_full or int(np.ceil(np.pi / 2 * max(H, W)))
        count = count_for_acceleration(full, R)
        return golden_angle_spokes(count, start_index=frame_index * count, n_readout=max(H, W),
                                   n_full=full, frame_index=frame_index)
    raise ValueError(f"unknown trajectory kind {kind!r}")


def undersample(coil_kspace, pattern):
    """Retrospectively undersample fully sampled coil k-space onto the network grid.

    Cartesian patterns mask lines; radial patterns resample the coil images
    on the spokes and grid them back with :func:`radial_adjoint_grid`.
    """
    coil_kspace = np.asarray(coil_kspace)
    if pattern.kind == CARTESIAN:
        return apply_cartesian_mask(coil_kspace, pattern)
    spokes = radial_sample(ifft2c(coil_kspace), pattern)
    return radial_adjoint_grid(spokes, pattern, coil_kspace.shape[-2:])


def zero_filled(coil_kspace):
    """Coil images of (possibly undersampled) grid k-space."""
    return ifft2c(coil_kspace)


def write_patterns_csv(patterns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if patterns and patterns[0].kind == RADIAL:
            w.writerow(["frame", "angle"])
            for p in patterns:
                for a in p.angles:
                    w.writerow([p.frame_index, repr(float(a))])
        else:
            w.writerow(["frame", "line"])
            for p in patterns:
                for ln in np.flatnonzero(p.lines):
                    w.writerow([p.frame_index, int(ln)])


def read_patterns_csv(path, n_pe=None, n_readout=64, n_full=0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    frames = {}
    for r in body:
        frames.setdefault(int(r[0]), []).append(r[1])
    out = []
    for f in sorted(frames):
        if header[1] == "angle":
            out.append(SamplingPattern(RADIAL, angles=[float(a) for a in frames[f]], n_readout=n_readout,
                                       n_full=n_full or len(frames[f]), frame_index=f))
        else:
            if n_pe is None:
                raise ValueError("n_pe required to rebuild cartesian masks")
            lines = np.zeros(n_pe, bool)
            lines[[int(v) for v in frames[f]]] = True
            out.append(SamplingPattern(CARTESIAN, lines=lines, n_full=n_full or n_pe, frame_index=f))
    return out
