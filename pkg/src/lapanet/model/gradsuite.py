"""Finite-difference checks over every differentiable primitive and composite block.

Primitives are checked element by element; composite blocks and the full
model are checked along random directions. Everything runs in float64.
"""
import torch
import torch.nn.functional as F

from .. import losses
from . import blocks
from .config import desk_config
from .gradcheck import check_directional, check_full, module_closure
from .network import build_model


class _Fn(torch.nn.Module):
    def __init__(self, fn):
        super().__init__()
        self.fn = fn

    def forward(self, *xs):
        return self.fn(*xs)


def _circular(m):
    m.padding_mode = "circular"
    return m


def _leaf(*shape, scale=1.0):
    return (scale * torch.randn(*shape, dtype=torch.float64)).requires_grad_(True)


def _parts(*shape):
    return _leaf(*shape), _leaf(*shape)


def _cx(parts):
    return torch.complex(*parts)


def _tensors(module, inputs):
    t = {f"in{i}": x for i, x in enumerate(inputs)}
    t.update(dict(module.named_parameters()))
    return t


def _full(module, *inputs):
    module = module.double()
    return max(check_full(module_closure(module, inputs), _tensors(module, inputs)).values())


def _directional(module, *inputs, n_dirs=3):
    module = module.double()
    return check_directional(module_closure(module, inputs), _tensors(module, inputs), n_dirs=n_dirs)


def _complex_leaves(**named):
    out = {}
    for name, (re, im) in named.items():
        out[f"{name}_re"], out[f"{name}_im"] = re, im
    return out


def primitive_checks():
    yield "conv3x3", lambda: _full(blocks.conv(2, 3), _leaf(1, 2, 6, 6))
    yield "conv3x3_dilated", lambda: _full(blocks.conv(2, 2, dilation=2), _leaf(1, 2, 7, 7))
    yield "conv3x3_circular", lambda: _full(_circular(blocks.conv(2, 2)), _leaf(1, 2, 5, 5))
    yield "conv1x1", lambda: _full(blocks.conv(3, 2, k=1), _leaf(1, 3, 4, 4))
    yield "group_norm", lambda: _full(torch.nn.GroupNorm(2, 4), _leaf(2, 4, 3, 3))
    yield "batch_norm", lambda: _full(torch.nn.BatchNorm2d(3), _leaf(2, 3, 3, 3))
    yield "silu", lambda: _full(torch.nn.SiLU(), _leaf(1, 3, 4, 4))
    yield "sigmoid", lambda: _full(torch.nn.Sigmoid(), _leaf(1, 3, 4, 4))
    yield "max_pool", lambda: _full(_Fn(lambda x: F.max_pool2d(x, 2, 2)), _leaf(1, 2, 6, 6))
    yield "upsample_nearest", lambda: _full(_Fn(lambda x: F.interpolate(x, scale_factor=2, mode="nearest")),
                                            _leaf(1, 2, 3, 3))
    yield "upsample_bilinear", lambda: _full(_Fn(lambda x: F.interpolate(x, scale_factor=2, mode="bilinear",
                                                                          align_corners=False)), _leaf(1, 2, 3, 3))
    yield "channel_attention", lambda: _full(blocks.ChannelAttention(3), _leaf(1, 3, 4, 4))
    yield "attention_se", lambda: _full(blocks.AttentionSE(4), _leaf(1, 4, 5, 5))

    def warp():
        img, u = _leaf(1, 2, 8, 8), _leaf(1, 2, 8, 8, scale=0.7)
        w = torch.randn(1, 2, 8, 8, dtype=torch.float64)
        return max(check_full(lambda: (w * losses.warp(img, u)).sum(), {"img": img, "u": u}).values())
    yield "warp", warp

    def photometric():
        fix, mov = _parts(1, 2, 8, 8), _parts(1, 2, 8, 8)
        u = _leaf(1, 2, 4, 4, scale=0.5)
        box = losses.box_mask([(1, 7, 2, 6)], (8, 8), torch.float64)
        return max(check_full(lambda: losses.photometric_loss(_cx(fix), _cx(mov), u, box),
                              {"u": u, **_complex_leaves(fix=fix, mov=mov)}).values())
    yield "photometric_loss", photometric

    def kdc():
        fix, mov = _parts(1, 2, 8, 8), _parts(1, 2, 8, 8)
        u = _leaf(1, 2, 8, 8, scale=0.5)
        return max(check_full(lambda: losses.kdc_loss(_cx(fix), _cx(mov), u),
                              {"u": u, **_complex_leaves(fix=fix, mov=mov)}).values())
    yield "kdc_loss", kdc

    def smooth():
        u = _leaf(2, 2, 5, 5)
        return max(check_full(lambda: losses.smoothness_loss(u), {"u": u}).values())
    yield "smoothness_loss", smooth

    def translation():
        fix, mov = _parts(2, 1, 6, 6), _parts(2, 1, 6, 6)
        t = _leaf(2, 2, scale=0.6)
        return max(check_full(lambda: losses.translation_loss(_cx(fix), _cx(mov), t),
                              {"t": t, **_complex_leaves(fix=fix, mov=mov)}).values())
    yield "translation_loss", translation


def composite_checks():
    yield "grm_level1", lambda: _directional(blocks.GlobalResidualModule(4, 3, 1), _leaf(2, 4, 8, 8))
    yield "grm_level3", lambda: _directional(blocks.GlobalResidualModule(4, 3, 3), _leaf(2, 4, 8, 8))
    yield "cim_pool", lambda: _directional(blocks.ChannelIntegration(3, 4, pool=True), _leaf(2, 3, 8, 8))
    yield "cim", lambda: _directional(blocks.ChannelIntegration(3, 4, pool=False), _leaf(2, 3, 6, 6))
    yield "dfm", lambda: _directional(blocks.DilatedFusion(4), _leaf(2, 4, 8, 8))
    yield "dfm_fuse3", lambda: _directional(blocks.DilatedFusion(4, fuse_kernel=3), _leaf(2, 4, 8, 8))
    yield "encoder", lambda: _directional(blocks.EncoderBlock(4, 2, 4), _leaf(2, 4, 8, 8), _leaf(2, 2, 8, 8))
    yield "encoder_add", lambda: _directional(blocks.EncoderBlock(4, 2, 4, combine="add"),
                                              _leaf(2, 4, 8, 8), _leaf(2, 2, 8, 8))
    yield "decoder", lambda: _directional(blocks.DecoderBlock(4, 2, 4), _leaf(2, 4, 4, 4), _leaf(2, 2, 8, 8))
    yield "motion_attention", lambda: _directional(blocks.MotionAttention(4), _leaf(2, 4, 4, 4),
                                                   _leaf(2, 2, 4, 4))
    yield "translation_head", lambda: _directional(blocks.TranslationHead(4, (3, 3)), _leaf(2, 4, 3, 3))

    def model_and_loss():
        cfg = desk_config(n_coils=1, size=32)
        model = build_model(cfg).double()
        x = _leaf(2, cfg.in_channels, 32, 32)
        fix, mov = _parts(2, 1, 32, 32), _parts(2, 1, 32, 32)
        box = losses.box_mask([(4, 28, 4, 28), (0, 32, 0, 32)], (32, 32), torch.float64)

        def f():
            return losses.total_loss(model(x), _cx(fix), _cx(mov), box)[0]
        return check_directional(f, {"x": x, **dict(model.named_parameters())}, n_dirs=2)
    yield "network_total_loss", model_and_loss


def run(seed=0):
    """``{check name: relative error}`` for every primitive and composite block."""
    torch.manual_seed(seed)
    results = {}
    for name, check in (*primitive_checks(), *composite_checks()):
        results[name] = float(check())
    return results
