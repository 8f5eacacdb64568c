"""Centered unitary FFTs, the Fourier shift / all-pass identity and multi-coil operators.

Conventions
-----------
* Images are ``(H, W)`` complex arrays, row index = y, column index = x.
* Multi-coil data is stacked as ``(n_c, H, W)``.
* ``fft2c`` is the orthonormal DFT with the zero frequency at index
  ``(H // 2, W // 2)``; the pixel origin sits at the same index.
* Angular frequencies run over ``[-pi, pi)`` along both axes.
"""
import numpy as np


def _check_finite(x, what="input"):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite values")


def fft2c(img):
    """Unitary centered 2D DFT over the last two axes."""
    img = np.asarray(img)
    _check_finite(img)
    ax = (-2, -1)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img, axes=ax), axes=ax, norm="ortho"), axes=ax)


def ifft2c(k):
    """Exact inverse of :func:`fft2c`."""
    k = np.asarray(k)
    _check_finite(k)
    ax = (-2, -1)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=ax), axes=ax, norm="ortho"), axes=ax)


def kgrid(shape):
    """Centered angular-frequency grids ``(ky, kx)`` for an ``(H, W)`` grid."""
    H, W = shape
    ky = 2 * np.pi * (np.arange(H) - H // 2) / H
    kx = 2 * np.pi * (np.arange(W) - W // 2) / W
    return np.meshgrid(ky, kx, indexing="ij")


def all_pass_response(u, shape):
    """Frequency response ``exp(-j u^T k)`` of a translation by ``u = (ux, uy)`` pixels."""
    ux, uy = (float(v) for v in u)
    if not (np.isfinite(ux) and np.isfinite(uy)):
        raise ValueError("translation must be finite")
    ky, kx = kgrid(shape)
    return np.exp(-1j * (ux * kx + uy * ky))


def apply_phase_ramp(k, u):
    """Translate the image behind ``k`` by ``u = (ux, uy)``: ``k * exp(-j u^T k)``.

    For integer ``u`` this is exactly ``np.roll`` of the image by ``(uy, ux)``.
    Works on single grids and on coil stacks.
    """
    k = np.asarray(k)
    _check_finite(k)
    return k * all_pass_response(u, k.shape[-2:])


def inverse_zero_frequency_shift(k):
    """Move the k-space center to the corners (``ifftshift`` over the last two axes).

    The shift is ``floor(n / 2)`` along each axis, so element ``(H//2, W//2)``
    lands on ``(0, 0)``. On even grids the operation is an involution; on
    odd grids its inverse is :func:`zero_frequency_shift`.
    """
    return np.fft.ifftshift(np.asarray(k), axes=(-2, -1))


def zero_frequency_shift(k):
    return np.fft.fftshift(np.asarray(k), axes=(-2, -1))


# --------------------------------------------------------------------------
# coils
# --------------------------------------------------------------------------

def synthetic_coil_maps(shape, n_coils, seed=0):
    """Smooth complex receive profiles normalized so that ``sum_c |S_c|^2 == 1``.

    Coils are Gaussian blobs placed on a ring around the field of view with a
    slowly varying phase. ``n_coils == 1`` gives a uniform coil.
    """
    H, W = shape
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    if n_coils == 1:
        return np.ones((1, H, W), dtype=np.complex128)
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid((np.arange(H) - H / 2) / H, (np.arange(W) - W / 2) / W, indexing="ij")
    maps = np.empty((n_coils, H, W), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2 * np.pi * c / n_coils + rng.uniform(-0.2, 0.2)
        cy, cx = 0.6 * np.sin(ang), 0.6 * np.cos(ang)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.45 ** 2))
        phase = rng.uniform(-np.pi, np.pi) + 2.0 * (rng.uniform(-1, 1) * yy + rng.uniform(-1, 1) * xx)
        maps[c] = mag * np.exp(1j * phase)
    rss = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / rss


def _as_pattern_mask(pattern, shape):
    if pattern is None:
        return None
    if hasattr(pattern, "mask2d"):
        return pattern.mask2d(shape)
    mask = np.asarray(pattern)
    if mask.ndim == 1:
        mask = np.broadcast_to(mask[:, None], shape)
    return mask


def multicoil_forward(img, coils, pattern=None):
    """``A x``: coil weighting, centered FFT, then sampling.

    ``pattern`` may be ``None`` (full sampling), a Cartesian
    :class:`~lapanet.sampling.SamplingPattern`, a boolean line mask over rows,
    or a full 2D mask. Radial patterns return per-coil spoke samples
    ``(n_c, n_spokes, n_readout)`` from the direct DFT.
    """
    img = np.asarray(img)
    coils = np.asarray(coils)
    if coils.shape[-2:] != img.shape:
        raise ValueError(f"coil maps {coils.shape[-2:]} do not match image {img.shape}")
    if getattr(pattern, "kind", None) == "radial_spokes":
        from .sampling import radial_forward
        return radial_forward(img, coils, pattern)
    k = fft2c(coils * img[None])
    mask = _as_pattern_mask(pattern, img.shape)
    if mask is not None:
        k = np.where(mask[None], k, 0)
    return k


def multicoil_adjoint(k, coils, pattern=None):
    """``A^H y = sum_c conj(S_c) * ifft2c(mask * y_c)``."""
    k = np.asarray(k)
    coils = np.asarray(coils)
    if getattr(pattern, "kind", None) == "radial_spokes":
        from .sampling import radial_adjoint
        return radial_adjoint(k, coils, pattern)
    if k.shape != coils.shape:
        raise ValueError(f"k-space {k.shape} does not match coil maps {coils.shape}")
    mask = _as_pattern_mask(pattern, k.shape[-2:])
    if mask is not None:
        k = np.where(mask[None], k, 0)
    return np.sum(np.conj(coils) * ifft2c(k), axis=0)


def coil_compress_svd(k, n_out):
    """Project the coil axis onto its ``n_out`` leading left singular vectors.

    Returns ``(compressed, basis)`` where ``compressed`` has shape
    ``(n_out, H, W)`` and ``basis`` is the ``(n_c, n_out)`` projection.
    """
    k = np.asarray(k)
    n_c = k.shape[0]
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    if n_out > n_c:
        raise ValueError(f"cannot compress {n_c} coils to {n_out}")
    X = k.reshape(n_c, -1)
    U, _, _ = np.linalg.svd(X, full_matrices=False)
    basis = U[:, :n_out]
    return (basis.conj().T @ X).reshape((n_out,) + k.shape[1:]), basis


def coil_combine(coil_imgs, coils):
    return np.sum(np.conj(coils) * coil_imgs, axis=0)


def normalize_max(img):
    """Divide by the maximum magnitude. Phase is untouched."""
    img = np.asarray(img)
    peak = np.max(np.abs(img)) if img.size else 0.0
    if not peak > 0:
        raise ValueError("cannot normalize an all-zero image")
    return img / peak
