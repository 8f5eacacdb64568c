"""Training losses (torch).

Images are coil-resolved complex tensors ``(B, n_c, H, W)``; fields are
``(B, 2, h, w)`` with channels ``(ux, uy)`` in pixels of their own grid.
Warping follows ``out(x) = img(x - u(x))`` with bilinear interpolation and
border clamping, matching :func:`lapanet.motion.warp_bilinear`.
"""
import torch
import torch.nn.functional as F

ALPHA = 0.5
BETA = 0.05
GAMMA = 0.01
AMPLITUDE_EPS = 1e-8


def upscale_to(u, size):
    """Bilinear resize of a field to ``size`` with values scaled per axis."""
    h, w = u.shape[-2:]
    H, W = size
    if (h, w) == (H, W):
        return u
    up = F.interpolate(u, size=(H, W), mode="bilinear", align_corners=False)
    scale = torch.tensor([W / w, H / h], dtype=u.dtype, device=u.device).view(1, 2, 1, 1)
    return up * scale


def _sample_grid(u):
    B, _, H, W = u.shape
    ys = torch.arange(H, dtype=u.dtype, device=u.device).view(1, H, 1)
    xs = torch.arange(W, dtype=u.dtype, device=u.device).view(1, 1, W)
    sx = xs - u[:, 0]
    sy = ys - u[:, 1]
    gx = 2 * sx / max(W - 1, 1) - 1
    gy = 2 * sy / max(H - 1, 1) - 1
    return torch.stack([gx, gy], dim=-1)


def warp(img, u):
    """Warp a real ``(B, C, H, W)`` or complex image by a full-resolution field."""
    if img.shape[-2:] != u.shape[-2:]:
        raise ValueError(f"field {tuple(u.shape)} does not match image {tuple(img.shape)}")
    grid = _sample_grid(u)
    if torch.is_complex(img):
        re = F.grid_sample(img.real, grid, mode="bilinear", padding_mode="border", align_corners=True)
        im = F.grid_sample(img.imag, grid, mode="bilinear", padding_mode="border", align_corners=True)
        return torch.complex(re, im)
    return F.grid_sample(img, grid, mode="bilinear", padding_mode="border", align_corners=True)


def box_mask(boxes, size, dtype=torch.float32):
    """``(B, 1, H, W)`` indicator of per-sample boxes ``(y0, y1, x0, x1)`` (end exclusive)."""
    H, W = size
    m = torch.zeros(len(boxes), 1, H, W, dtype=dtype)
    for b, (y0, y1, x0, x1) in enumerate(boxes):
        m[b, :, y0:y1, x0:x1] = 1
    return m


def photometric_loss(fix, mov, u, box=None):
    """Sum over the box of ``|fix - warp(mov, u)|`` across coils, averaged over the batch."""
    u = upscale_to(u, fix.shape[-2:])
    diff = (fix - warp(mov, u)).abs()
    if box is not None:
        diff = diff * box
    return diff.sum() / fix.shape[0]


def _amplitude(img):
    k = torch.fft.fft2(img, norm="ortho")
    return torch.sqrt(k.real ** 2 + k.imag ** 2 + AMPLITUDE_EPS ** 2)


def kdc_loss(fix, mov, u):
    """L1 distance between k-space amplitudes of ``fix`` and the warped ``mov``."""
    u = upscale_to(u, fix.shape[-2:])
    return (_amplitude(fix) - _amplitude(warp(mov, u))).abs().sum() / fix.shape[0]


def smoothness_loss(u):
    """Anisotropic total variation of the field on its native grid."""
    dx = (u[..., :, 1:] - u[..., :, :-1]).abs().sum()
    dy = (u[..., 1:, :] - u[..., :-1, :]).abs().sum()
    return (dx + dy) / u.shape[0]


def translation_loss(fix, mov, t, box=None):
    """Photometric loss of the constant field given by the translation head."""
    H, W = fix.shape[-2:]
    u = t.view(-1, 2, 1, 1).expand(-1, 2, H, W)
    return photometric_loss(fix, mov, u, box)


def total_loss(out, fix, mov, box=None, alpha=ALPHA, beta=BETA, gamma=GAMMA):
    """Weighted sum over all resolutions; returns ``(loss, parts)`` with float parts for logging."""
    t_loss = translation_loss(fix, mov, out["translation"], box)
    loss = alpha * t_loss
    parts = {"translation": float(t_loss.detach())}
    for i, u in enumerate(out["fields"], 1):
        p = photometric_loss(fix, mov, u, box)
        k = kdc_loss(fix, mov, u)
        s = smoothness_loss(u)
        loss = loss + p + beta * k + gamma * s
        parts[f"photo{i}"] = float(p.detach())
        parts[f"kdc{i}"] = float(k.detach())
        parts[f"smooth{i}"] = float(s.detach())
    parts["total"] = float(loss.detach())
    return loss, parts
