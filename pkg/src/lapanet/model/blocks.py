"""Network building blocks.

All convolutions are 3x3 with stride 1 and "same" padding unless noted;
``conv(cin, cout, d)`` is the dilation-``d`` variant.
"""
import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def conv(cin, cout, dilation=1, k=3):
    return nn.Conv2d(cin, cout, k, padding=dilation * (k // 2), dilation=dilation)


def groups_for(c):
    for g in (8, 4, 2, 1):
        if c % g == 0:
            return g
    return 1


class ChannelAttention(nn.Module):
    """Self-attention across channels with depthwise-convolution projections.

    Queries, keys and values come from per-channel 3x3 convolutions; the
    ``C x C`` attention map is ``softmax(Q K^T / sqrt(H W))``.
    """

    def __init__(self, c):
        super().__init__()
        self.q = nn.Conv2d(c, c, 3, padding=1, groups=c)
        self.k = nn.Conv2d(c, c, 3, padding=1, groups=c)
        self.v = nn.Conv2d(c, c, 3, padding=1, groups=c)

    def forward(self, x):
        B, C, H, W = x.shape
        q = self.q(x).reshape(B, C, H * W)
        k = self.k(x).reshape(B, C, H * W)
        v = self.v(x).reshape(B, C, H * W)
        attn = torch.softmax(q @ k.transpose(1, 2) / math.sqrt(H * W), dim=-1)
        return (attn @ v).reshape(B, C, H, W)


class AttentionSE(nn.Module):
    """Squeeze-and-excitation with a softmax-weighted spatial squeeze.

    A single-channel projection, softmaxed over all pixels, pools every
    channel into a ``C x 1 x 1`` descriptor; the excitation
    ``conv - SiLU - conv - sigmoid`` turns it into channel weights in (0, 1).
    """

    def __init__(self, c, reduction=4):
        super().__init__()
        mid = max(c // reduction, 1)
        self.proj = conv(c, 1)
        self.fc1 = conv(c, mid)
        self.fc2 = conv(mid, c)

    def weights(self, x):
        B, C, H, W = x.shape
        a = torch.softmax(self.proj(x).reshape(B, 1, H * W), dim=-1)
        desc = (x.reshape(B, C, H * W) * a).sum(-1).reshape(B, C, 1, 1)
        return torch.sigmoid(self.fc2(F.silu(self.fc1(desc))))

    def forward(self, x):
        return x * self.weights(x)


class GlobalResidualModule(nn.Module):
    """Full-resolution input -> level-``i`` multi-scale features.

    cross path: one convolution; main path: conv-BN-SiLU, channel attention,
    dilated conv-BN-SiLU; sum, attention-weighted SE, then max pooling by
    ``2 ** (i - 1)``.
    """

    def __init__(self, cin, cout, level, se_reduction=4):
        super().__init__()
        self.level = level
        self.cross = conv(cin, cout)
        self.conv1 = conv(cin, cout)
        self.bn1 = nn.BatchNorm2d(cout)
        self.attn = ChannelAttention(cout)
        self.conv2 = conv(cout, cout, dilation=2)
        self.bn2 = nn.BatchNorm2d(cout)
        self.se = AttentionSE(cout, se_reduction)

    def forward(self, x):
        main = F.silu(self.bn1(self.conv1(x)))
        main = F.silu(self.bn2(self.conv2(self.attn(main))))
        y = self.se(self.cross(x) + main)
        s = 2 ** (self.level - 1)
        return F.max_pool2d(y, s, s) if s > 1 else y


class ChannelIntegration(nn.Module):
    """conv-SiLU, conv-SiLU, dilated conv-SiLU, optional 2x2 max pool, residual attention unit."""

    def __init__(self, cin, cout, pool):
        super().__init__()
        self.pool = pool
        self.c1 = conv(cin, cout)
        self.c2 = conv(cout, cout)
        self.c3 = conv(cout, cout, dilation=2)
        self.attn = ChannelAttention(cout)
        self.c4 = conv(cout, cout)

    def forward(self, x):
        y = F.silu(self.c1(x))
        y = F.silu(self.c2(y))
        y = F.silu(self.c3(y))
        if self.pool:
            y = F.max_pool2d(y, 2, 2)
        return y + F.silu(self.c4(self.attn(y)))


class DilatedFusion(nn.Module):
    """Residual multi-branch block: GN, branches conv(d)-SiLU-BN for d in 1/2/4, fused by conv-SiLU-BN.

    The fusion convolution is 1x1 by default.
    """

    def __init__(self, c, dilations=(1, 2, 4), fuse_kernel=1):
        super().__init__()
        self.norm = nn.GroupNorm(groups_for(c), c)
        self.branches = nn.ModuleList(conv(c, c, d) for d in dilations)
        self.branch_bn = nn.ModuleList(nn.BatchNorm2d(c) for _ in dilations)
        self.fuse = conv(c * len(dilations), c, k=fuse_kernel)
        self.fuse_bn = nn.BatchNorm2d(c)

    def forward(self, x):
        h = self.norm(x)
        stack = torch.cat([bn(F.silu(b(h))) for b, bn in zip(self.branches, self.branch_bn)], dim=1)
        return x + self.fuse_bn(F.silu(self.fuse(stack)))


class EncoderBlock(nn.Module):
    """GN -> combine with the GRM output -> CIM (pooling) -> DFM; halves the spatial size."""

    def __init__(self, cin, c_grm, cout, combine="concat", use_cim=True, use_dfm=True, fuse_kernel=1):
        super().__init__()
        self.combine = combine
        self.norm = nn.GroupNorm(groups_for(cin), cin)
        if c_grm:
            if combine == "concat":
                self.reduce = nn.Conv2d(cin + c_grm, cout, 1)
            else:
                self.proj_x = nn.Conv2d(cin, cout, 1)
                self.proj_g = nn.Conv2d(c_grm, cout, 1)
        else:
            self.reduce = nn.Conv2d(cin, cout, 1)
        self.c_grm = c_grm
        if use_cim:
            self.cim = ChannelIntegration(cout, cout, pool=True)
        else:
            self.cim = None
        self.dfm = DilatedFusion(cout, fuse_kernel=fuse_kernel) if use_dfm else None

    def forward(self, x, grm_out=None):
        h = self.norm(x)
        if self.c_grm:
            if grm_out is None:
                raise ValueError("encoder block expects the GRM output")
            if grm_out.shape[-2:] != h.shape[-2:]:
                raise ValueError(f"GRM output {tuple(grm_out.shape)} does not match input {tuple(h.shape)}")
            if self.combine == "concat":
                h = self.reduce(torch.cat([h, grm_out], dim=1))
            else:
                h = self.proj_x(h) + self.proj_g(grm_out)
        else:
            h = self.reduce(h)
        h = self.cim(h) if self.cim is not None else F.max_pool2d(h, 2, 2)
        return self.dfm(h) if self.dfm is not None else h


class DecoderBlock(nn.Module):
    """GN -> nearest x2 upsample -> residual conv-SiLU -> concat skip -> CIM (no pool) -> DFM."""

    def __init__(self, cin, c_skip, cout, use_cim=True, use_dfm=True, fuse_kernel=1):
        super().__init__()
        self.norm = nn.GroupNorm(groups_for(cin), cin)
        self.res = conv(cin, cin)
        if use_cim:
            self.cim = ChannelIntegration(cin + c_skip, cout, pool=False)
        else:
            self.cim = None
            self.reduce = conv(cin + c_skip, cout)
        self.dfm = DilatedFusion(cout, fuse_kernel=fuse_kernel) if use_dfm else None

    def forward(self, x, skip):
        h = F.interpolate(self.norm(x), scale_factor=2, mode="nearest")
        h = h + F.silu(self.res(h))
        if skip.shape[-2:] != h.shape[-2:]:
            raise ValueError(f"skip {tuple(skip.shape)} does not match upsampled input {tuple(h.shape)}")
        h = torch.cat([h, skip], dim=1)
        h = self.cim(h) if self.cim is not None else F.silu(self.reduce(h))
        return self.dfm(h) if self.dfm is not None else h


class MotionAttention(nn.Module):
    """Bilinear x2 upsample, 3-conv motion encoder, per-axis attention blend with the previous estimate.

    ``u = m * raw + (1 - m) * prev`` per channel, with masks ``m`` in (0, 1)
    from two separate conv-conv-sigmoid heads.
    """

    def __init__(self, cin, hidden=8, use_attention=True):
        super().__init__()
        mid = max(cin // 2, 2)
        self.e1 = conv(cin, mid)
        self.e2 = conv(mid, mid)
        self.e3 = conv(mid, 2)
        self.use_attention = use_attention
        self.mask_x = nn.Sequential(conv(4, hidden), conv(hidden, 1))
        self.mask_y = nn.Sequential(conv(4, hidden), conv(hidden, 1))

    def masks(self, raw, prev):
        z = torch.cat([raw, prev], dim=1)
        return torch.sigmoid(self.mask_x(z)), torch.sigmoid(self.mask_y(z))

    def forward(self, x, prev=None):
        h = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        raw = self.e3(F.silu(self.e2(F.silu(self.e1(h)))))
        if prev is None:
            prev = torch.zeros_like(raw)
        else:
            prev = 2.0 * F.interpolate(prev, scale_factor=2, mode="bilinear", align_corners=False)
        if not self.use_attention:
            return raw + prev
        mx, my = self.masks(raw, prev)
        ux = mx * raw[:, :1] + (1 - mx) * prev[:, :1]
        uy = my * raw[:, 1:] + (1 - my) * prev[:, 1:]
        return torch.cat([ux, uy], dim=1)


class TranslationHead(nn.Module):
    """1x1 convolution to two channels, then max pooling over the bottleneck window."""

    def __init__(self, cin, window):
        super().__init__()
        self.proj = nn.Conv2d(cin, 2, 1)
        self.window = tuple(window)

    def forward(self, x):
        if tuple(x.shape[-2:]) != self.window:
            raise ValueError(f"bottleneck size {tuple(x.shape[-2:])} does not match {self.window}")
        return F.max_pool2d(self.proj(x), self.window).flatten(1)
