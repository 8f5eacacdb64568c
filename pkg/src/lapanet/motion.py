"""Displacement fields, warping and the synthetic cardiac cine phantom.

A displacement field is a ``(2, H, W)`` float array, channel 0 = x (columns),
channel 1 = y (rows), in pixels. Warping follows
``fix(x) = mov(x - u(x))``: ``u`` points from moving to fixed positions.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels

BACKGROUND, MYOCARDIUM, CAVITY, RV_POOL = 0, 1, 2, 3
LABELS = {"myocardium": MYOCARDIUM, "cavity": CAVITY, "rv": RV_POOL}


def _check_field(img, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (2,) + tuple(np.shape(img)):
        raise ValueError(f"field shape {u.shape} does not match image {np.shape(img)}")
    return u


def warp_bilinear(img, u):
    """``out(x) = img(x - u(x))``, bilinear, border clamped; complex parts interpolate independently."""
    img = np.asarray(img)
    u = _check_field(img, u)
    if np.iscomplexobj(img):
        return kernels.warp_bilinear(img.astype(np.complex128), u[0], u[1])
    return kernels.warp_bilinear(img.astype(float), u[0], u[1])


def warp_coils(coil_imgs, u):
    return np.stack([warp_bilinear(c, u) for c in coil_imgs])


def warp_mask(mask, u):
    """Nearest-neighbour label warping with the same convention as :func:`warp_bilinear`."""
    mask = np.asarray(mask)
    u = _check_field(mask, u)
    return kernels.warp_nearest(mask, u[0], u[1])


def constant_field(u, shape):
    H, W = shape
    out = np.empty((2, H, W))
    out[0] = u[0]
    out[1] = u[1]
    return out


def _resize_bilinear(a, out_shape):
    """Half-pixel-centred bilinear resampling (same grid convention as the network)."""
    H, W = a.shape
    Ho, Wo = out_shape
    sy = np.clip((np.arange(Ho) + 0.5) * H / Ho - 0.5, 0, H - 1)
    sx = np.clip((np.arange(Wo) + 0.5) * W / Wo - 0.5, 0, W - 1)
    y0 = np.minimum(np.floor(sy).astype(int), max(H - 2, 0))
    x0 = np.minimum(np.floor(sx).astype(int), max(W - 2, 0))
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    return ((1 - fy) * ((1 - fx) * a[np.ix_(y0, x0)] + fx * a[np.ix_(y0, x1)])
            + fy * ((1 - fx) * a[np.ix_(y1, x0)] + fx * a[np.ix_(y1, x1)]))


def upscale_field(u, factor=2):
    """Bilinear x2 upsampling; displacement values double with the resolution."""
    if factor != 2:
        raise ValueError("only factor 2 is supported")
    u = np.asarray(u, dtype=float)
    _, H, W = u.shape
    return np.stack([factor * _resize_bilinear(c, (factor * H, factor * W)) for c in u])


def downscale_field(u, factor=2):
    """2x2 mean pooling with displacement values halved."""
    u = np.asarray(u, dtype=float)
    C, H, W = u.shape
    if H % factor or W % factor:
        raise ValueError("field size must be divisible by the factor")
    pooled = u.reshape(C, H // factor, factor, W // factor, factor).mean(axis=(2, 4))
    return pooled / factor


def resize_field(u, shape):
    """Resample a field to ``shape``, rescaling values per axis."""
    u = np.asarray(u, dtype=float)
    _, H, W = u.shape
    Ho, Wo = shape
    return np.stack([_resize_bilinear(u[0], shape) * (Wo / W), _resize_bilinear(u[1], shape) * (Ho / H)])


def compose(u_outer, u_inner):
    """Field of ``warp(warp(img, u_inner), u_outer)`` expressed as one warp.

    ``u(x) = u_outer(x) + u_inner(x - u_outer(x))``.
    """
    shifted = np.stack([warp_bilinear(c, u_outer) for c in u_inner])
    return u_outer + shifted


def synth_gaussian_field(centers, amplitudes, widths, H, W):
    """Sum of Gaussian-enveloped displacement bumps.

    ``centers`` are ``(y, x)`` pixel positions, ``amplitudes`` are ``(ax, ay)``
    vectors (scalars mean a purely horizontal bump), ``widths`` are the
    Gaussian standard deviations in pixels.
    """
    u = np.zeros((2, H, W))
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if centers.size == 0:
        return u
    amps = np.asarray(amplitudes, dtype=float)
    if amps.ndim == 1:
        amps = np.stack([amps, np.zeros_like(amps)], axis=1)
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (centers.shape[0],))
    if np.any(widths <= 0):
        raise ValueError("widths must be positive")
    yy, xx = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    for (cy, cx), (ax, ay), w in zip(centers, amps, widths):
        g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * w * w))
        u[0] += ax * g
        u[1] += ay * g
    return u


def jacobian_determinant(u):
    """``det(I - grad u)`` of the sampling map ``x -> x - u(x)`` (central differences)."""
    dux_dy, dux_dx = np.gradient(u[0])
    duy_dy, duy_dx = np.gradient(u[1])
    return (1 - dux_dx) * (1 - duy_dy) - dux_dy * duy_dx


def endpoint_error(u_est, u_ref):
    return np.hypot(u_est[0] - u_ref[0], u_est[1] - u_ref[1])


# --------------------------------------------------------------------------
# phantom
# --------------------------------------------------------------------------

@dataclass
class PhantomConfig:
    size: int = 64
    cavity_radius: float = 0.14      # fractions of size
    myo_radius: float = 0.22
    contraction: float = 0.10        # peak fractional radial contraction
    taper: float = 0.5               # fall-off width beyond the myocardium, fraction of its radius
    rv_axes: tuple = (0.09, 0.16)    # (x, y) semi-axes, fractions of size
    rv_gap: float = 0.03
    rv_shift: tuple = (1.0, 0.5)     # peak RV translation (ux, uy), pixels
    body_radius: float = 0.44
    texture: float = 0.15
    texture_cutoff: float = 0.6      # fraction of Nyquist
    motion: str = "cine"             # cine | translation | static
    translation: tuple = (2.0, -1.0)
    spacing_mm: float = 1.9
    seed: int = 0

    def validate(self):
        if self.size < 8:
            raise ValueError("phantom size must be >= 8")
        if self.cavity_radius >= self.myo_radius:
            raise ValueError("degenerate geometry: inner radius must be below outer radius")
        if not 0 <= self.contraction < 1:
            raise ValueError("contraction must be in [0, 1)")
        if self.motion not in ("cine", "translation", "static"):
            raise ValueError(f"unknown phantom motion {self.motion!r}")


@dataclass
class PhantomScene:
    frames: list
    masks: list
    fields: dict = field(default_factory=dict)
    config: PhantomConfig = None
    residual_bound: float = 0.05

    def field(self, fix, mov):
        return self.fields[(fix, mov)]


class _Phantom:
    """Analytic reference object and per-frame deformations."""

    def __init__(self, cfg):
        cfg.validate()
        self.cfg = cfg
        N = cfg.size
        self.N = N
        self.c = np.array([N / 2.0, N / 2.0])        # (y, x)
        self.R_in = cfg.cavity_radius * N
        self.R_out = cfg.myo_radius * N
        self.w_taper = max(cfg.taper * self.R_out, 2.0)
        ax, ay = cfg.rv_axes
        self.rv_ax, self.rv_ay = ax * N, ay * N
        self.rv_c = self.c + np.array([0.0, -(self.R_out + self.rv_ax + cfg.rv_gap * N)])
        rng = np.random.default_rng(cfg.seed)
        k = 64
        fmax = cfg.texture_cutoff * np.pi
        rad = fmax * np.sqrt(rng.uniform(0, 1, k))
        ang = rng.uniform(0, 2 * np.pi, k)
        self.tex_f = np.stack([rad * np.sin(ang), rad * np.cos(ang)], axis=1)
        self.tex_a = rng.normal(size=k) / (1.0 + (rad / (0.25 * np.pi)) ** 2)
        self.tex_p = rng.uniform(0, 2 * np.pi, k)
        self.tex_norm = np.sqrt(0.5 * np.sum(self.tex_a ** 2))

    # displacement from reference to frame t at phase s in [0, 1]
    def _forward_disp(self, p, s):
        cfg = self.cfg
        d = np.zeros_like(p)
        if cfg.motion == "static" or s == 0:
            return d
        if cfg.motion == "translation":
            d[..., 0] = s * cfg.translation[1]
            d[..., 1] = s * cfg.translation[0]
            return d
        rel = p - self.c
        rho = np.hypot(rel[..., 0], rel[..., 1])
        z = np.clip((rho - self.R_out) / self.w_taper, 0.0, 1.0)
        inside = rho <= self.R_out
        mag = np.where(inside, rho, self.R_out * 0.5 * (1 + np.cos(np.pi * z)))
        mag = s * cfg.contraction * mag
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(rho > 0, mag / rho, 0.0)
        d -= rel * scale[..., None]
        # localized RV translation
        q = (p - self.rv_c) / np.array([self.rv_ay, self.rv_ax])
        r = np.hypot(q[..., 0], q[..., 1])
        b = np.where(r <= 1.0, 1.0, 0.5 * (1 + np.cos(np.pi * np.clip((r - 1.0) / 0.6, 0, 1))))
        d[..., 0] += s * cfg.rv_shift[1] * b
        d[..., 1] += s * cfg.rv_shift[0] * b
        return d

    def forward(self, p, s):
        return p + self._forward_disp(p, s)

    def inverse(self, y, s, iters=80, tol=1e-12):
        x = y.copy()
        for _ in range(iters):
            nxt = y - self._forward_disp(x, s)
            done = np.max(np.abs(nxt - x)) < tol
            x = nxt
            if done:
                break
        return x

    def phase_of(self, t, n):
        if n < 2:
            return 0.0
        return 0.5 * (1 - np.cos(2 * np.pi * t / n))

    def texture(self, p):
        arg = p[..., 0, None] * self.tex_f[:, 0] + p[..., 1, None] * self.tex_f[:, 1] + self.tex_p
        return np.sum(self.tex_a * np.cos(arg), axis=-1) / self.tex_norm

    def labels(self, p):
        rel = p - self.c
        rho = np.hypot(rel[..., 0], rel[..., 1])
        q = (p - self.rv_c) / np.array([self.rv_ay, self.rv_ax])
        lab = np.zeros(p.shape[:-1], dtype=np.int32)
        lab[np.hypot(q[..., 0], q[..., 1]) < 1.0] = RV_POOL
        lab[rho < self.R_out] = MYOCARDIUM
        lab[rho < self.R_in] = CAVITY
        return lab

    def intensity(self, p):
        def soft(v, w=0.6):
            return 1.0 / (1.0 + np.exp(-v / w))
        cfg = self.cfg
        rel = p - self.c
        rho = np.hypot(rel[..., 0], rel[..., 1])
        body = soft(cfg.body_radius * self.N - np.hypot(rel[..., 0], 0.8 * rel[..., 1]))
        q = (p - self.rv_c) / np.array([self.rv_ay, self.rv_ax])
        rv = soft((1.0 - np.hypot(q[..., 0], q[..., 1])) * min(self.rv_ax, self.rv_ay))
        myo = soft(self.R_out - rho)
        cav = soft(self.R_in - rho)
        base = 0.3 * body
        base = base + (0.9 - base) * rv
        base = base + (0.45 - base) * myo
        base = base + (1.0 - base) * cav
        mag = base * (1.0 + cfg.texture * self.texture(p))
        phase = 0.6 * (rel[..., 1] + 0.5 * rel[..., 0]) / self.N
        return mag * np.exp(1j * phase)


def _pixel_grid(N):
    yy, xx = np.meshgrid(np.arange(N, dtype=float), np.arange(N, dtype=float), indexing="ij")
    return np.stack([yy, xx], axis=-1)


def phantom_cine(config=None, n_frames=2, pairs=None):
    """Cardiac-like cine phantom with analytic ground-truth fields and label masks.

    Frames follow a cosine contraction cycle starting relaxed at frame 0.
    ``pairs`` selects which ordered ``(fix, mov)`` fields to compute (all
    ordered pairs by default).
    """
    cfg = config or PhantomConfig()
    if n_frames < 2:
        raise ValueError("phantom_cine needs n_frames >= 2")
    ph = _Phantom(cfg)
    grid = _pixel_grid(cfg.size)
    phases = [ph.phase_of(t, n_frames) for t in range(n_frames)]
    ref_coords = [ph.inverse(grid, s) for s in phases]
    frames = [ph.intensity(r) for r in ref_coords]
    masks = [ph.labels(r) for r in ref_coords]
    if pairs is None:
        pairs = [(i, j) for i in range(n_frames) for j in range(n_frames) if i != j]
    fields = {}
    for i, j in pairs:
        y = ph.forward(ref_coords[i], phases[j])     # position in frame j
        disp = grid - y
        fields[(i, j)] = np.stack([disp[..., 1], disp[..., 0]])
    return PhantomScene(frames=frames, masks=masks, fields=fields, config=cfg)


def render_deformed(config, u, base_phase=0.0):
    """Render the phantom at phase ``base_phase`` and warp it analytically by ``u``.

    Returns ``(moving, fixed, mask_fixed, mask_moving)`` with
    ``fixed(x) = moving(x - u(x))`` holding exactly (no interpolation).
    """
    ph = _Phantom(config)
    grid = _pixel_grid(config.size)
    ref_mov = ph.inverse(grid, base_phase)
    src = grid - np.stack([u[1], u[0]], axis=-1)
    ref_fix = ph.inverse(src, base_phase)
    return ph.intensity(ref_mov), ph.intensity(ref_fix), ph.labels(ref_fix), ph.labels(ref_mov)


def bounding_box(mask, margin=10):
    """Box mask around the nonzero labels dilated by ``margin`` pixels, clipped to the image."""
    mask = np.asarray(mask)
    box = np.zeros(mask.shape, dtype=bool)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        box[:] = True
        return box
    H, W = mask.shape
    y0, y1 = max(ys.min() - margin, 0), min(ys.max() + margin, H - 1)
    x0, x1 = max(xs.min() - margin, 0), min(xs.max() + margin, W - 1)
    box[y0:y1 + 1, x0:x1 + 1] = True
    return box


# --------------------------------------------------------------------------
# export helpers
# --------------------------------------------------------------------------

def mask_rle(mask):
    """Run-length encode a label grid (row-major) as ``(label, start, length)`` runs."""
    flat = np.asarray(mask).ravel()
    if flat.size == 0:
        return []
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], edges])
    lengths = np.diff(np.concatenate([starts, [flat.size]]))
    return [(int(flat[s]), int(s), int(n)) for s, n in zip(starts, lengths)]


def mask_from_rle(runs, shape):
    flat = np.zeros(int(np.prod(shape)), dtype=np.int32)
    for lab, s, n in runs:
        flat[s:s + n] = lab
    return flat.reshape(shape)


def write_masks_csv(path, masks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "label", "start", "length"])
        for f, m in enumerate(masks):
            for lab, s, n in mask_rle(m):
                w.writerow([f, lab, s, n])


def read_masks_csv(path, shape):
    runs = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            runs.setdefault(int(row["frame"]), []).append((int(row["label"]), int(row["start"]), int(row["length"])))
    return [mask_from_rle(runs[f], shape) for f in sorted(runs)]


def _color_wheel():
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    cols = []
    cols += [(255, 255 * i / RY, 0) for i in range(RY)]
    cols += [(255 - 255 * i / YG, 255, 0) for i in range(YG)]
    cols += [(0, 255, 255 * i / GC) for i in range(GC)]
    cols += [(0, 255 - 255 * i / CB, 255) for i in range(CB)]
    cols += [(255 * i / BM, 0, 255) for i in range(BM)]
    cols += [(255, 0, 255 - 255 * i / MR) for i in range(MR)]
    return np.array(cols, dtype=float)


def flow_to_color(u, max_mag=None):
    """Optical-flow color coding (hue = direction, saturation = magnitude).

    Magnitudes are normalized by ``max_mag`` (the field's own maximum when
    omitted). Returns ``(rgb uint8 (H, W, 3), max_mag)``.
    """
    wheel = _color_wheel()
    ncols = wheel.shape[0]
    ux, uy = u[0], u[1]
    mag = np.hypot(ux, uy)
    if max_mag is None:
        max_mag = float(mag.max())
    scale = max_mag if max_mag > 0 else 1.0
    rad = mag / scale
    a = np.arctan2(-uy, -ux) / np.pi
    fk = (a + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = ((1 - f) * wheel[k0] + f * wheel[k1]) / 255.0
    r = np.clip(rad, 0, 1)[..., None]
    col = np.where(rad[..., None] <= 1, 1 - r * (1 - col), col * 0.75)
    return np.rint(255 * col).astype(np.uint8), max_mag
