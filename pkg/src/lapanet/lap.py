"""Classical Local-All-Pass registration.

A local translation ``u`` is an all-pass filter ``exp(-j u^T k)``. Writing it
as ``P(k) / P(-k)`` with a real FIR ``p`` turns the registration of a window
into the linear problem ``p(-x) * fix = p(x) * mov``. Splitting ``p`` into
even part ``e`` (with ``sum(e) = 1``) and odd part ``o`` gives

    e * (fix - mov) - o * (fix + mov) = 0,

solved in the least-squares sense per window. The displacement is read off
the filter as ``u = 2 * first_moment(p) / sum(p)``.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .kspace import fft2c, ifft2c
from .motion import compose, warp_bilinear

log = logging.getLogger(__name__)

#: relative residual above which a window is treated as carrying no consistent motion,
#: calibrated by Monte Carlo on independent noise windows (see tests/test_lap.py)
REJECT_RESIDUAL = 0.5


class InsufficientSignal(RuntimeError):
    pass


@dataclass
class AllPassFilter:
    coeffs: np.ndarray
    r: int
    residual: float = 0.0
    identifiable: bool = True


@dataclass
class LapResult:
    field: np.ndarray
    residual_history: list = field(default_factory=list)
    levels_used: list = field(default_factory=list)


def _tukey(n, width, center, alpha=0.5):
    """1D raised-cosine window of support ``width`` centred at ``center``; ones when it spans the axis."""
    if width >= n:
        return np.ones(n)
    x = np.arange(n) - center
    t = np.abs(x) / (width / 2.0)
    flat = 1.0 - alpha
    w = np.where(t <= flat, 1.0, 0.5 * (1 + np.cos(np.pi * (t - flat) / alpha)))
    w[t >= 1.0] = 0.0
    return w


def taper_window(k_full, center, width, alpha=0.5):
    """k-space of the image windowed by a raised-cosine taper.

    Windowing in the image domain is the same as convolving the k-space
    with the phase-modulated k-space image of the taper, so this returns
    ``fft2c(window * ifft2c(k_full))``. A window at least as wide as the
    field of view is identically one.
    """
    k_full = np.asarray(k_full)
    H, W = k_full.shape[-2:]
    cy, cx = center
    if width < 4:
        raise ValueError("taper width must be >= 4 pixels")
    half = width / 2.0
    if width < H and (cy - half < 0 or cy + half > H):
        raise ValueError("taper window leaves the image")
    if width < W and (cx - half < 0 or cx + half > W):
        raise ValueError("taper window leaves the image")
    win = np.outer(_tukey(H, width, cy, alpha), _tukey(W, width, cx, alpha))
    return fft2c(win * ifft2c(k_full))


def _hann(n):
    """Strictly positive Hann window of length ``n``."""
    return np.hanning(n + 2)[1:-1]


# --------------------------------------------------------------------------
# single-window estimation
# --------------------------------------------------------------------------

def _half_offsets(r):
    return [(dy, dx) for dy in range(0, r + 1) for dx in range(-r, r + 1)
            if (dy > 0 or dx > 0) and abs(dx) <= r]


def _shift(img, dy, dx):
    # img(x - a), periodic
    return np.roll(img, (dy, dx), axis=(0, 1))


def _responses(fix, mov, r):
    """Columns of the linear LAP system followed by the right-hand side ``-D``."""
    D = fix - mov
    S = fix + mov
    cols = []
    offs = _half_offsets(r)
    for dy, dx in offs:
        cols.append(_shift(D, dy, dx) + _shift(D, -dy, -dx) - 2 * D)
    for dy, dx in offs:
        cols.append(-(_shift(S, dy, dx) - _shift(S, -dy, -dx)))
    cols.append(-D)
    return np.stack(cols)


def _solve(M, v, n_even, cond_max=1e12):
    """Min-norm solve of ``M theta = v``; returns ``theta, identifiable``."""
    n = M.shape[0]
    if not np.trace(M) > 0:
        return np.zeros(n), False
    w, V = np.linalg.eigh(M)
    keep = w > w.max() * 1e-12
    theta = V[:, keep] @ ((V[:, keep].T @ v) / w[keep])
    wo = np.linalg.eigvalsh(M[n_even:, n_even:])
    ident = wo[0] > 0 and wo[-1] / wo[0] < cond_max
    return theta, bool(ident)


def translation_residual(fix_win, mov_win, weight, u):
    """Weighted misfit of the translation model ``fix(x) = mov(x - u)`` on a window.

    Normalized by the windows' weighted variance: ~0 for a consistent
    translation, ~1 for unrelated content.
    """
    shifted = kernels.warp_bilinear(np.ascontiguousarray(mov_win, dtype=float),
                                    np.full(mov_win.shape, u[0]), np.full(mov_win.shape, u[1]))
    wsum = weight.sum()
    if not wsum > 0:
        return np.inf
    mf = np.sum(weight * fix_win) / wsum
    mm = np.sum(weight * mov_win) / wsum
    var = 0.5 * np.sum(weight * ((fix_win - mf) ** 2 + (mov_win - mm) ** 2))
    if not var > 0:
        return np.inf
    return float(np.sum(weight * (fix_win - shifted) ** 2) / var)


def _theta_to_filter(theta, r):
    offs = _half_offsets(r)
    m = len(offs)
    e, o = theta[:m], theta[m:]
    p = np.zeros((2 * r + 1, 2 * r + 1))
    p[r, r] = 1.0 - 2.0 * e.sum()
    for (dy, dx), ea, oa in zip(offs, e, o):
        p[r + dy, r + dx] += ea + oa
        p[r - dy, r - dx] += ea - oa
    return p


def estimate_local_allpass(fix_win, mov_win, r=2, weight=None):
    """Least-squares all-pass filter relating two windows.

    ``weight`` defaults to a raised-cosine taper with the ``r``-pixel rim
    excluded, so periodic wrap-around never enters the fit.
    """
    fix_win = np.asarray(fix_win, dtype=float)
    mov_win = np.asarray(mov_win, dtype=float)
    if fix_win.shape != mov_win.shape:
        raise ValueError("windows must have the same shape")
    if r not in (1, 2, 3):
        raise ValueError("filter radius must be 1, 2 or 3")
    h, w = fix_win.shape
    if weight is None:
        weight = np.pad(np.outer(_hann(h - 2 * r), _hann(w - 2 * r)), r)
    resp = _responses(fix_win, mov_win, r)
    M, v, _ = kernels.tile_normal_eq(resp, weight, np.zeros((1, 2), np.int64))
    theta, ident = _solve(M[0], v[0], len(_half_offsets(r)))
    p = _theta_to_filter(theta, r)
    rel = np.inf
    if ident and abs(p.sum()) > 1e-12:
        rel = translation_residual(fix_win, mov_win, weight, filter_to_displacement(p))
    return AllPassFilter(p, r, rel, ident)


def filter_to_displacement(f):
    """``u = 2 * first moment / sum`` of the stencil, per axis. Returns ``(ux, uy)``."""
    p = f.coeffs if isinstance(f, AllPassFilter) else np.asarray(f, dtype=float)
    total = p.sum()
    if abs(total) < 1e-12:
        raise ValueError("filter coefficients sum to zero")
    r = p.shape[0] // 2
    off = np.arange(-r, r + 1)
    ux = 2.0 * np.sum(p * off[None, :]) / total
    uy = 2.0 * np.sum(p * off[:, None]) / total
    return float(ux), float(uy)


# --------------------------------------------------------------------------
# multi-scale registration
# --------------------------------------------------------------------------

def default_window_schedule(size, levels=4):
    """Window widths full, 1/2, 1/4, 1/8 of the field of view (coarse to fine)."""
    return [max(size // (2 ** lv), 8) for lv in range(levels)]


def default_radius_schedule(levels=4):
    """Filter radius 3 at the coarsest level down to 1 at the finest."""
    if levels == 1:
        return [3]
    return [int(round(3 - 2 * lv / (levels - 1))) for lv in range(levels)]


def _tiles(n, width):
    stride = max(width // 2, 1)
    starts = list(range(0, n - width + 1, stride))
    if starts[-1] != n - width:
        starts.append(n - width)
    return starts


def to_magnitude_image(k, coils=None):
    """Zero-filled magnitude reconstruction of (multi-coil) grid k-space."""
    k = np.asarray(k)
    if k.ndim == 2:
        return np.abs(ifft2c(k))
    imgs = ifft2c(k)
    if coils is not None:
        return np.abs(np.sum(np.conj(coils) * imgs, axis=0))
    return np.sqrt(np.sum(np.abs(imgs) ** 2, axis=0))


def _photometric(fix, mov, u):
    return float(np.mean(np.abs(fix - warp_bilinear(mov, u))))


def _level_field(fix, mov, width, r, smooth):
    H, W = fix.shape
    if smooth > 0:
        fix = ndimage.gaussian_filter(fix, smooth, mode="wrap")
        mov = ndimage.gaussian_filter(mov, smooth, mode="wrap")
    resp = _responses(fix, mov, r)
    wy, wx = min(width, H), min(width, W)
    if wy >= H and wx >= W:
        weight = np.ones((H, W))
    else:
        weight = np.outer(_hann(wy), _hann(wx))
    ys, xs = _tiles(H, wy), _tiles(W, wx)
    tiles = np.array([(y, x) for y in ys for x in xs], dtype=np.int64)
    M, v, _ = kernels.tile_normal_eq(resp, weight, tiles)
    n_even = len(_half_offsets(r))
    grid_u = np.full((len(ys), len(xs), 2), np.nan)
    resid = np.full((len(ys), len(xs)), np.inf)
    for t, (y0, x0) in enumerate(tiles):
        theta, ident = _solve(M[t], v[t], n_even)
        iy, ix = ys.index(y0), xs.index(x0)
        if not ident:
            continue
        p = _theta_to_filter(theta, r)
        if abs(p.sum()) < 1e-12:
            continue
        u_t = filter_to_displacement(p)
        grid_u[iy, ix] = u_t
        resid[iy, ix] = translation_residual(fix[y0:y0 + wy, x0:x0 + wx], mov[y0:y0 + wy, x0:x0 + wx], weight, u_t)
    ok = np.isfinite(resid) & (resid < REJECT_RESIDUAL)
    if ok.any():
        ok &= resid <= 3.0 * np.median(resid[ok])
    if not ok.any():
        return None, 0
    centers_y = np.array(ys) + (wy - 1) / 2.0
    centers_x = np.array(xs) + (wx - 1) / 2.0
    gu = np.where(ok[..., None], grid_u, np.nan)
    if gu.shape[0] >= 3 and gu.shape[1] >= 3:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.stack([ndimage.generic_filter(gu[..., c], np.nanmedian, size=3, mode="nearest")
                            for c in range(2)], axis=-1)
        gu = np.where(ok[..., None], med, np.nan)
    cy, cx = np.meshgrid(centers_y, centers_x, indexing="ij")
    pts = np.stack([cy[ok], cx[ok]], axis=1)
    vals = gu[ok]
    if pts.shape[0] == 1:
        return np.broadcast_to(vals[0][:, None, None], (2, H, W)).copy(), 1
    sigma = max(wy, wx) / 2.0
    yy, xx = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    num = np.zeros((2, H, W))
    den = np.zeros((H, W))
    for (py, px), (vx, vy) in zip(pts, vals):
        g = np.exp(-((yy - py) ** 2 + (xx - px) ** 2) / (2 * sigma * sigma))
        num[0] += g * vx
        num[1] += g * vy
        den += g
    return num / np.maximum(den, 1e-300), int(ok.sum())


def lap_register(fix, mov, levels=4, window_schedule=None, radius_schedule=None, iterations=2, smooth=1.0):
    """Coarse-to-fine LAP registration of two real images.

    Returns a :class:`LapResult` whose ``field`` satisfies
    ``fix(x) ~ mov(x - u(x))``. Each level tiles the image with windows at
    half-window stride, fits one all-pass filter per window, discards
    windows with large residual, median-filters the survivors, interpolates
    them to a dense field with normalized Gaussian radial basis functions and
    composes the update with the running estimate. A level whose update
    raises the photometric residual is dropped.
    """
    fix = np.asarray(fix, dtype=float)
    mov = np.asarray(mov, dtype=float)
    H, W = fix.shape
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if H % 2 or W % 2:
        raise ValueError("LAP registration needs even image sizes")
    widths = window_schedule or default_window_schedule(min(H, W), levels)
    radii = radius_schedule or default_radius_schedule(len(widths))
    u = np.zeros((2, H, W))
    best = _photometric(fix, mov, u)
    history = [best]
    used = []
    for lv, (width, r) in enumerate(zip(widths, radii)):
        for _ in range(iterations):
            warped = warp_bilinear(mov, u)
            upd, n_ok = _level_field(fix, warped, width, r, smooth)
            if upd is None:
                if lv == 0 and not used:
                    raise InsufficientSignal("insufficient signal: every window rejected at the coarsest level")
                log.debug("level %d: all windows rejected, keeping coarser estimate", lv)
                break
            cand = compose(upd, u)
            err = _photometric(fix, mov, cand)
            if err <= best:
                u, best = cand, err
                used.append(lv)
            else:
                break
        history.append(best)
    return LapResult(u, history, sorted(set(used)))


def lap_register_multiscale(k_fix, k_mov, levels=4, window_schedule=None, coils=None, **kwargs):
    """LAP registration from (multi-coil, possibly undersampled) grid k-space.

    The solver runs on zero-filled magnitude reconstructions; the dense
    displacement field ``(2, H, W)`` is returned.
    """
    fix = to_magnitude_image(k_fix, coils)
    mov = to_magnitude_image(k_mov, coils)
    return lap_register(fix, mov, levels=levels, window_schedule=window_schedule, **kwargs).field
