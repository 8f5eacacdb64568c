"""The k-space motion estimation network."""
import numpy as np
import torch
import torch.nn as nn

from .blocks import (
    DecoderBlock,
    DilatedFusion,
    EncoderBlock,
    ChannelIntegration,
    GlobalResidualModule,
    MotionAttention,
    TranslationHead,
    groups_for,
)
from .config import ModelConfig


def prepare_input(k_fix, k_mov, dtype=torch.float32):
    """Stack complex coil k-spaces into network channels.

    ``k_fix`` and ``k_mov`` are centered k-spaces of shape ``(n_c, H, W)`` or
    ``(B, n_c, H, W)``. Channels are ordered fix-real, fix-imag, mov-real,
    mov-imag (each block over coils); the zero frequency is moved to the
    array origin.
    """
    k_fix = np.asarray(k_fix)
    k_mov = np.asarray(k_mov)
    if k_fix.shape != k_mov.shape:
        raise ValueError(f"fix {k_fix.shape} and mov {k_mov.shape} differ")
    if k_fix.ndim == 3:
        k_fix, k_mov = k_fix[None], k_mov[None]
    if k_fix.ndim != 4:
        raise ValueError("expected (n_c, H, W) or (B, n_c, H, W) k-space")
    x = np.concatenate([k_fix.real, k_fix.imag, k_mov.real, k_mov.imag], axis=1)
    x = np.fft.ifftshift(x, axes=(-2, -1))
    return torch.as_tensor(np.ascontiguousarray(x), dtype=dtype)


def channels_to_kspace(x):
    """Inverse of the channel layout of :func:`prepare_input` for one sample.

    Returns ``(fix, mov)`` arrays of shape ``(n_c, 2, H, W)`` holding real and
    imaginary planes in centered k-space order.
    """
    x = np.fft.fftshift(np.asarray(x), axes=(-2, -1))
    n_c = x.shape[0] // 4
    fix = np.stack([x[:n_c], x[n_c:2 * n_c]], axis=1)
    mov = np.stack([x[2 * n_c:3 * n_c], x[3 * n_c:]], axis=1)
    return fix, mov


class LapaNet(nn.Module):
    """Encoder-decoder that maps a k-space pair to multi-resolution displacement fields.

    ``forward`` returns a dict with ``fields`` (list ``u_1 .. u_L``, coarse to
    fine, each ``(B, 2, h, w)`` with channels ``(ux, uy)`` in pixels of its own
    grid), ``translation`` ``(B, 2)`` and ``bottleneck`` features.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        L = cfg.levels
        grm, enc, cb = cfg.grm, cfg.enc, cfg.bottleneck
        cin = cfg.in_channels

        if cfg.use_grm:
            self.grm = nn.ModuleList(
                GlobalResidualModule(cin, grm[i], i + 1, cfg.se_reduction) for i in range(L))
        else:
            self.grm = None
        self.encoders = nn.ModuleList()
        prev = cin
        for i in range(L):
            self.encoders.append(EncoderBlock(
                prev, grm[i] if cfg.use_grm else 0, enc[i], cfg.combine, cfg.use_cim, cfg.use_dfm, cfg.fuse_kernel))
            prev = enc[i]

        self.bottleneck_norm = nn.GroupNorm(groups_for(prev), prev)
        self.bottleneck_cim = ChannelIntegration(prev, cb, pool=True)
        self.bottleneck_dfm = DilatedFusion(cb, fuse_kernel=cfg.fuse_kernel) if cfg.use_dfm else None
        self.translation = TranslationHead(cb, cfg.bottleneck_size)

        # decoders[0] is the deepest
        self.decoders = nn.ModuleList()
        self.mams = nn.ModuleList()
        prev = cb
        for i in reversed(range(L)):
            self.decoders.append(DecoderBlock(prev, enc[i], enc[i], cfg.use_cim, cfg.use_dfm, cfg.fuse_kernel))
            self.mams.append(MotionAttention(enc[i], cfg.mam_hidden, cfg.use_mam))
            prev = enc[i]

        # the encoder side reads k-space, which is periodic on the DFT grid;
        # circular padding keeps the low frequencies split across the corners
        # connected. Bottleneck and decoder keep zero padding, and so does any
        # encoder convolution whose padding exceeds its feature map (circular
        # padding cannot wrap more than once).
        H = min(cfg.input_size)
        for part, sizes in ((self.grm, [H] * L), (self.encoders, [H >> (i + 1) for i in range(L)])):
            for block, size in zip(part if part is not None else (), sizes):
                for m in block.modules():
                    if isinstance(m, nn.Conv2d) and max(m.padding) <= size:
                        m.padding_mode = cfg.padding

    def encode(self, x):
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected (B, {cfg.in_channels}, H, W) input, got {tuple(x.shape)}")
        if tuple(x.shape[-2:]) != cfg.input_size:
            raise ValueError(f"input size {tuple(x.shape[-2:])} does not match {cfg.input_size}")
        skips = []
        h = x
        for i, enc in enumerate(self.encoders):
            g = self.grm[i](x) if self.grm is not None else None
            h = enc(h, g)
            skips.append(h)
        b = self.bottleneck_cim(self.bottleneck_norm(h))
        if self.bottleneck_dfm is not None:
            b = self.bottleneck_dfm(b)
        return b, skips

    def forward(self, x):
        b, skips = self.encode(x)
        fields = []
        h = b
        u = None
        for dec, mam, skip in zip(self.decoders, self.mams, reversed(skips)):
            h = dec(h, skip)
            u = mam(h, u)
            fields.append(u)
        return {"fields": fields, "translation": self.translation(b), "bottleneck": b}


def build_model(cfg=None, seed=0):
    cfg = cfg or ModelConfig()
    torch.manual_seed(seed)
    return LapaNet(cfg)


def count_parameters(model):
    return sum(p.numel() for p in model.parameters())


def shape_ledger(model, batch=1):
    """Run a zero input through the model and record every intermediate shape."""
    cfg = model.cfg
    x = torch.zeros(batch, cfg.in_channels, *cfg.input_size)
    rows = [("input", tuple(x.shape))]
    was_training = model.training
    model.eval()
    with torch.no_grad():
        if model.grm is not None:
            for i, g in enumerate(model.grm):
                rows.append((f"grm{i + 1}", tuple(g(x).shape)))
        b, skips = model.encode(x)
        for i, s in enumerate(skips):
            rows.append((f"enc{i + 1}", tuple(s.shape)))
        rows.append(("bottleneck", tuple(b.shape)))
        out = model(x)
        for i, u in enumerate(out["fields"]):
            rows.append((f"u{i + 1}", tuple(u.shape)))
        rows.append(("translation", tuple(out["translation"].shape)))
    model.train(was_training)
    return rows
