"""Spectral analysis of attribution maps.

Maps are 2D arrays; spectra use the unitary centered FFT so total energy is
preserved.
"""
import numpy as np

from .kspace import fft2c


def power_spectrum(m):
    return np.abs(fft2c(np.asarray(m, dtype=complex))) ** 2


def central_profiles(a):
    """Rows and columns through the array center: ``(horizontal, vertical)``."""
    a = np.asarray(a)
    H, W = a.shape
    return a[H // 2, :], a[:, W // 2]


def mean_profile(maps):
    """Mean central-line profile of the power spectra of ``maps`` along both axes."""
    hs, vs = zip(*(central_profiles(power_spectrum(m)) for m in maps))
    return np.mean(hs, axis=0), np.mean(vs, axis=0)


def radial_average(a):
    """Average over integer-radius annuli around the array center."""
    a = np.asarray(a, dtype=float)
    H, W = a.shape
    yy, xx = np.indices((H, W))
    r = np.rint(np.hypot(yy - H // 2, xx - W // 2)).astype(int)
    total = np.bincount(r.ravel(), a.ravel())
    count = np.bincount(r.ravel())
    return total / np.maximum(count, 1)


def noise_power_spectrum(maps):
    """Mean power spectrum averaged over all lines through the center (radial profile)."""
    return radial_average(np.mean([power_spectrum(m) for m in maps], axis=0))


def line_psf_profile(lines):
    """Power spectrum of a phase-encode line mask: the sampling PSF along that axis."""
    lines = np.asarray(lines, dtype=float)
    return np.abs(np.fft.fftshift(np.fft.fft(np.fft.ifftshift(lines), norm="ortho"))) ** 2


def deconvolve_profile(profile, psf, floor=1e-3):
    """Wiener-style division of a profile by a PSF, floored at ``floor * max|PSF|``.

    Both are 1D and centered; the division happens in the conjugate domain.
    """
    P = np.fft.fft(np.fft.ifftshift(profile))
    K = np.fft.fft(np.fft.ifftshift(psf))
    eps = floor * np.max(np.abs(K))
    D = P * np.conj(K) / np.maximum(np.abs(K) ** 2, eps ** 2)
    return np.fft.fftshift(np.fft.ifft(D).real)


def low_frequency_fraction(heatmap, band=0.25):
    """Share of central-profile energy within the central ``band`` of each axis.

    The central row and column of ``|heatmap|^2`` are pooled; a sample counts
    as low frequency when its distance from the center is below ``band / 2``
    of the axis length.
    """
    e = np.abs(np.asarray(heatmap)) ** 2
    H, W = e.shape
    h, v = central_profiles(e)
    dx = np.abs(np.arange(W) - W // 2)
    dy = np.abs(np.arange(H) - H // 2)
    low = h[dx < band * W / 2].sum() + v[dy < band * H / 2].sum()
    total = h.sum() + v.sum()
    return float(low / total) if total > 0 else 0.0


def analysis_rows(heatmaps, lines=None, floor=1e-3):
    """Long-format rows: per map, position, heatmap energy profiles, spectrum profiles (and deconvolved)."""
    rows = []
    for name, m in heatmaps.items():
        e = np.abs(m) ** 2
        eh, ev = central_profiles(e)
        ph, pv = central_profiles(power_spectrum(m))
        dv = deconvolve_profile(pv, line_psf_profile(lines), floor) if lines is not None else None
        H, W = m.shape
        for i in range(max(H, W)):
            row = {"map": name, "index": i - max(H, W) // 2}
            row["energy_x"] = float(eh[i]) if i < W else ""
            row["energy_y"] = float(ev[i]) if i < H else ""
            row["spectrum_x"] = float(ph[i]) if i < W else ""
            row["spectrum_y"] = float(pv[i]) if i < H else ""
            if dv is not None:
                row["spectrum_y_deconv"] = float(dv[i]) if i < H else ""
            rows.append(row)
    return rows
