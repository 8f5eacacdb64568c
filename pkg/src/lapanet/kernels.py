"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public functions dispatch on :func:`lapanet._accel.numba_enabled` at call
time. Both paths are exposed (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them directly.
"""
import math

import numpy as np

from ._accel import njit, numba_enabled


# --------------------------------------------------------------------------
# bilinear / nearest warping, out(x) = img(x - u(x)), border clamped
# --------------------------------------------------------------------------

@njit
def _warp_bilinear_nb(img, ux, uy):
    H, W = img.shape
    out = np.empty_like(img)
    for i in range(H):
        for j in range(W):
            y = i - uy[i, j]
            x = j - ux[i, j]
            if y < 0.0:
                y = 0.0
            elif y > H - 1:
                y = H - 1.0
            if x < 0.0:
                x = 0.0
            elif x > W - 1:
                x = W - 1.0
            y0 = int(math.floor(y))
            x0 = int(math.floor(x))
            if y0 > H - 2:
                y0 = H - 2
            if x0 > W - 2:
                x0 = W - 2
            fy = y - y0
            fx = x - x0
            out[i, j] = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x0 + 1])
                         + fy * ((1 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]))
    return out


def _warp_bilinear_np(img, ux, uy):
    H, W = img.shape
    yy, xx = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    y = np.clip(yy - uy, 0.0, H - 1.0)
    x = np.clip(xx - ux, 0.0, W - 1.0)
    y0 = np.minimum(np.floor(y).astype(np.int64), H - 2)
    x0 = np.minimum(np.floor(x).astype(np.int64), W - 2)
    fy = y - y0
    fx = x - x0
    return ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x0 + 1])
            + fy * ((1 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]))


@njit
def _warp_nearest_nb(labels, ux, uy):
    H, W = labels.shape
    out = np.empty_like(labels)
    for i in range(H):
        for j in range(W):
            y = int(np.rint(i - uy[i, j]))
            x = int(np.rint(j - ux[i, j]))
            y = min(max(y, 0), H - 1)
            x = min(max(x, 0), W - 1)
            out[i, j] = labels[y, x]
    return out


def _warp_nearest_np(labels, ux, uy):
    H, W = labels.shape
    yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    y = np.clip(np.rint(yy - uy).astype(np.int64), 0, H - 1)
    x = np.clip(np.rint(xx - ux).astype(np.int64), 0, W - 1)
    return labels[y, x]


def warp_bilinear_numba(img, ux, uy):
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("warp needs at least 2x2 images")
    return _warp_bilinear_nb(np.ascontiguousarray(img), np.ascontiguousarray(ux, dtype=float),
                             np.ascontiguousarray(uy, dtype=float))


def warp_bilinear_numpy(img, ux, uy):
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("warp needs at least 2x2 images")
    return _warp_bilinear_np(np.asarray(img), np.asarray(ux, float), np.asarray(uy, float))


def warp_nearest_numba(labels, ux, uy):
    return _warp_nearest_nb(np.ascontiguousarray(labels), np.ascontiguousarray(ux, dtype=float),
                            np.ascontiguousarray(uy, dtype=float))


def warp_nearest_numpy(labels, ux, uy):
    return _warp_nearest_np(np.asarray(labels), np.asarray(ux, float), np.asarray(uy, float))


# --------------------------------------------------------------------------
# direct (non-uniform) DFT on centered pixel coordinates, unitary scaling
# --------------------------------------------------------------------------

@njit(fastmath=True)
def _radial_dft_nb(re, im, kx, ky):
    # re, im: (N, H, W) stacks sharing one set of sample positions
    N, H, W = re.shape
    cy = H // 2
    cx = W // 2
    n = kx.shape[0]
    out_re = np.zeros((N, n))
    out_im = np.zeros((N, n))
    scale = 1.0 / math.sqrt(H * W)
    cr = np.empty(W)
    ci = np.empty(W)
    for s in range(n):
        for j in range(W):
            cr[j] = math.cos(kx[s] * (j - cx))
            ci[j] = -math.sin(kx[s] * (j - cx))
        for i in range(H):
            ph = ky[s] * (i - cy)
            er = math.cos(ph)
            ei = -math.sin(ph)
            for c in range(N):
                rr = 0.0
                ri = 0.0
                for j in range(W):
                    a = re[c, i, j]
                    b = im[c, i, j]
                    rr += a * cr[j] - b * ci[j]
                    ri += a * ci[j] + b * cr[j]
                out_re[c, s] += er * rr - ei * ri
                out_im[c, s] += er * ri + ei * rr
    return out_re * scale, out_im * scale


def _radial_dft_np(img, kx, ky):
    # img may carry leading stack axes; the exponentials are shared
    H, W = img.shape[-2:]
    x = np.arange(W) - W // 2
    y = np.arange(H) - H // 2
    ex = np.exp(-1j * np.outer(kx, x))          # (S, W)
    ey = np.exp(-1j * np.outer(ky, y))          # (S, H)
    rows = img @ ex.T                           # (..., H, S): sum over x per row
    return np.sum(ey.T * rows, axis=-2) / np.sqrt(H * W)


def radial_dft_numba(img, kx, ky):
    img = np.asarray(img, dtype=np.complex128)
    flat = img.reshape(-1, *img.shape[-2:])
    re, im = _radial_dft_nb(np.ascontiguousarray(flat.real), np.ascontiguousarray(flat.imag),
                            np.ascontiguousarray(kx, dtype=float), np.ascontiguousarray(ky, dtype=float))
    return (re + 1j * im).reshape(*img.shape[:-2], re.shape[1])


def radial_dft_numpy(img, kx, ky):
    return _radial_dft_np(np.asarray(img, dtype=np.complex128), np.asarray(kx, float),
                          np.asarray(ky, float))


# --------------------------------------------------------------------------
# nearest-neighbour accumulation onto a grid
# --------------------------------------------------------------------------

@njit
def _grid_accumulate_nb(values, iy, ix, H, W):
    acc = np.zeros((H, W), dtype=np.complex128)
    cnt = np.zeros((H, W), dtype=np.int64)
    for s in range(values.shape[0]):
        acc[iy[s], ix[s]] += values[s]
        cnt[iy[s], ix[s]] += 1
    return acc, cnt


def _grid_accumulate_np(values, iy, ix, H, W):
    acc = np.zeros((H, W), dtype=np.complex128)
    cnt = np.zeros((H, W), dtype=np.int64)
    np.add.at(acc, (iy, ix), values)
    np.add.at(cnt, (iy, ix), 1)
    return acc, cnt


def grid_accumulate_numba(values, iy, ix, H, W):
    return _grid_accumulate_nb(np.ascontiguousarray(values, dtype=np.complex128),
                               np.ascontiguousarray(iy, dtype=np.int64),
                               np.ascontiguousarray(ix, dtype=np.int64), H, W)


def grid_accumulate_numpy(values, iy, ix, H, W):
    return _grid_accumulate_np(np.asarray(values, np.complex128), np.asarray(iy, np.int64),
                               np.asarray(ix, np.int64), H, W)


# --------------------------------------------------------------------------
# per-tile weighted normal equations for the LAP solver
#   resp: (n_cols + 1, H, W) -- basis responses, last plane is the rhs
#   weight: (h, w) window, tiles: (T, 2) top-left corners
# --------------------------------------------------------------------------

@njit(fastmath=True)
def _tile_normal_eq_nb(resp_hwp, weight, tiles):
    # resp_hwp is (H, W, P) so the basis responses of one pixel are contiguous
    H, W, P = resp_hwp.shape
    n = P - 1
    h, w = weight.shape
    T = tiles.shape[0]
    M = np.zeros((T, n, n))
    v = np.zeros((T, n))
    c = np.zeros(T)
    acc = np.zeros((n, n))
    for t in range(T):
        r0 = tiles[t, 0]
        c0 = tiles[t, 1]
        acc[:, :] = 0.0
        for i in range(h):
            for j in range(w):
                wt = weight[i, j]
                if wt == 0.0:
                    continue
                a = resp_hwp[r0 + i, c0 + j]
                b = a[n]
                for p in range(n):
                    wa = wt * a[p]
                    v[t, p] += wa * b
                    for q in range(n):
                        acc[p, q] += wa * a[q]
                c[t] += wt * b * b
        M[t] = acc
    return M, v, c


def _tile_normal_eq_np(resp, weight, tiles):
    P = resp.shape[0]
    n = P - 1
    h, w = weight.shape
    T = tiles.shape[0]
    M = np.zeros((T, n, n))
    v = np.zeros((T, n))
    c = np.zeros(T)
    for t in range(T):
        r0, c0 = tiles[t]
        patch = resp[:, r0:r0 + h, c0:c0 + w].reshape(P, -1)
        wt = weight.reshape(-1)
        A = patch[:n]
        b = patch[n]
        Aw = A * wt
        M[t] = Aw @ A.T
        v[t] = Aw @ b
        c[t] = np.sum(wt * b * b)
    return M, v, c


def tile_normal_eq_numba(resp, weight, tiles):
    return _tile_normal_eq_nb(np.ascontiguousarray(np.moveaxis(np.asarray(resp, dtype=float), 0, -1)),
                              np.ascontiguousarray(weight, dtype=float),
                              np.ascontiguousarray(tiles, dtype=np.int64))


def tile_normal_eq_numpy(resp, weight, tiles):
    return _tile_normal_eq_np(np.asarray(resp, float), np.asarray(weight, float),
                              np.asarray(tiles, np.int64))


# --------------------------------------------------------------------------
# directed Hausdorff distance between point sets
# --------------------------------------------------------------------------

@njit
def _directed_hausdorff_nb(a, b):
    worst = 0.0
    for i in range(a.shape[0]):
        best = np.inf
        for j in range(b.shape[0]):
            dy = a[i, 0] - b[j, 0]
            dx = a[i, 1] - b[j, 1]
            d = dy * dy + dx * dx
            if d < best:
                best = d
                if best <= worst:
                    break
        if best > worst:
            worst = best
    return math.sqrt(worst)


def _directed_hausdorff_np(a, b, chunk=2048):
    worst = 0.0
    for s in range(0, a.shape[0], chunk):
        d = ((a[s:s + chunk, None, :] - b[None, :, :]) ** 2).sum(-1)
        worst = max(worst, float(d.min(axis=1).max()))
    return math.sqrt(worst)


def directed_hausdorff_numba(a, b):
    return _directed_hausdorff_nb(np.ascontiguousarray(a, dtype=float),
                                  np.ascontiguousarray(b, dtype=float))


def directed_hausdorff_numpy(a, b):
    return _directed_hausdorff_np(np.asarray(a, float), np.asarray(b, float))


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

def _pick(nb, npy):
    def call(*args, **kwargs):
        return (nb if numba_enabled() else npy)(*args, **kwargs)
    call.__name__ = npy.__name__.replace("_numpy", "")
    call.__doc__ = npy.__doc__
    return call


warp_bilinear = _pick(warp_bilinear_numba, warp_bilinear_numpy)
warp_nearest = _pick(warp_nearest_numba, warp_nearest_numpy)
radial_dft = _pick(radial_dft_numba, radial_dft_numpy)
grid_accumulate = _pick(grid_accumulate_numba, grid_accumulate_numpy)
tile_normal_eq = _pick(tile_normal_eq_numba, tile_normal_eq_numpy)
directed_hausdorff = _pick(directed_hausdorff_numba, directed_hausdorff_numpy)
