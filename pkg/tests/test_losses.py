import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from lapanet import losses, motion
from lapanet.model import build_model, desk_config


def cimg(gen, *shape):
    return torch.complex(torch.randn(*shape, generator=gen, dtype=torch.float64),
                         torch.randn(*shape, generator=gen, dtype=torch.float64))


@pytest.fixture
def gen():
    return torch.Generator().manual_seed(7)


def test_warp_matches_numpy(gen):
    img = cimg(gen, 1, 1, 12, 10)
    u = 2 * torch.randn(1, 2, 12, 10, generator=gen, dtype=torch.float64)
    ref = motion.warp_bilinear(img[0, 0].numpy(), u[0].numpy())
    assert np.abs(losses.warp(img, u)[0, 0].numpy() - ref).max() < 1e-12


def test_upscale_matches_numpy(gen):
    u = torch.randn(1, 2, 4, 6, generator=gen, dtype=torch.float64)
    ref = motion.resize_field(u[0].numpy(), (8, 12))
    assert np.abs(losses.upscale_to(u, (8, 12))[0].numpy() - ref).max() < 1e-12
    assert losses.upscale_to(u, (4, 6)) is u


def test_warp_shape_mismatch():
    with pytest.raises(ValueError):
        losses.warp(torch.zeros(1, 1, 4, 4), torch.zeros(1, 2, 4, 5))


def test_box_mask():
    m = losses.box_mask([(1, 3, 0, 2), (0, 4, 0, 4)], (4, 4))
    assert m.shape == (2, 1, 4, 4)
    assert m[0].sum() == 4 and m[1].sum() == 16


def test_linear_ramp_smoothness():
    H, W = 5, 7
    u = torch.zeros(1, 2, H, W, dtype=torch.float64)
    u[0, 0] = torch.arange(W, dtype=torch.float64)
    assert float(losses.smoothness_loss(u)) == H * (W - 1)
    assert float(losses.smoothness_loss(torch.ones(3, 2, H, W))) == 0


def test_zero_field_losses(gen):
    img = cimg(gen, 2, 3, 8, 8)
    u = torch.zeros(2, 2, 8, 8, dtype=torch.float64)
    assert float(losses.photometric_loss(img, img, u)) == 0
    assert float(losses.kdc_loss(img, img, u)) == 0


def test_photometric_normalized_by_batch(gen):
    fix, mov = cimg(gen, 1, 2, 8, 8), cimg(gen, 1, 2, 8, 8)
    u = torch.zeros(1, 2, 8, 8, dtype=torch.float64)
    one = losses.photometric_loss(fix, mov, u)
    two = losses.photometric_loss(fix.repeat(2, 1, 1, 1), mov.repeat(2, 1, 1, 1), u.repeat(2, 1, 1, 1))
    assert torch.allclose(one, two)
    assert torch.isclose(one, (fix - mov).abs().sum())


def test_photometric_ignores_outside_box(gen):
    fix, mov = cimg(gen, 1, 2, 16, 16), cimg(gen, 1, 2, 16, 16)
    u = 0.3 * torch.randn(1, 2, 16, 16, generator=gen, dtype=torch.float64)
    box = losses.box_mask([(5, 11, 4, 12)], (16, 16), torch.float64)
    base = losses.photometric_loss(fix, mov, u, box)
    fix2 = fix.clone()
    fix2[..., :5, :] = 100
    u2 = u.clone()
    u2[..., 12:, :] = 0
    assert torch.isclose(losses.photometric_loss(fix2, mov, u2, box), base, atol=0, rtol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_kdc_global_phase_invariance(phi):
    gen = torch.Generator().manual_seed(3)
    fix, mov = cimg(gen, 1, 2, 8, 8), cimg(gen, 1, 2, 8, 8)
    u = 0.8 * torch.randn(1, 2, 8, 8, generator=gen, dtype=torch.float64)
    rot = torch.exp(torch.tensor(1j * phi, dtype=torch.complex128))
    a = losses.kdc_loss(fix, mov, u)
    b = losses.kdc_loss(fix * rot, mov * rot, u)
    assert abs(float(a - b)) <= 1e-10 * float(a)


def test_translation_loss_is_constant_field_photometric(gen):
    fix, mov = cimg(gen, 2, 1, 8, 8), cimg(gen, 2, 1, 8, 8)
    t = torch.tensor([[1.5, -0.5], [0.0, 2.0]], dtype=torch.float64)
    u = torch.stack([torch.from_numpy(motion.constant_field(v.numpy(), (8, 8))) for v in t])
    assert torch.isclose(losses.translation_loss(fix, mov, t), losses.photometric_loss(fix, mov, u))


def test_correct_shift_has_zero_photometric():
    gen = torch.Generator().manual_seed(0)
    mov = cimg(gen, 1, 1, 12, 12)
    u = torch.from_numpy(motion.constant_field((2, -1), (12, 12)))[None]
    fix = losses.warp(mov, u)
    assert float(losses.photometric_loss(fix, mov, u)) == 0


def test_total_loss_resums():
    cfg = desk_config(n_coils=2, size=32)
    model = build_model(cfg).double()
    gen = torch.Generator().manual_seed(1)
    x = torch.randn(2, cfg.in_channels, 32, 32, generator=gen, dtype=torch.float64)
    fix, mov = cimg(gen, 2, 2, 32, 32), cimg(gen, 2, 2, 32, 32)
    box = losses.box_mask([(2, 30, 3, 29), (0, 32, 0, 32)], (32, 32), torch.float64)
    with torch.no_grad():
        out = model(x)
    loss, parts = losses.total_loss(out, fix, mov, box)
    # independent re-summation from the term functions
    with torch.no_grad():
        ref = losses.ALPHA * losses.translation_loss(fix, mov, out["translation"], box)
        for u in out["fields"]:
            ref = ref + losses.photometric_loss(fix, mov, u, box)
            ref = ref + losses.BETA * losses.kdc_loss(fix, mov, u) + losses.GAMMA * losses.smoothness_loss(u)
    assert abs(float(loss) - float(ref)) <= 1e-10 * abs(float(ref))
    logged = losses.ALPHA * parts["translation"] + sum(
        parts[f"photo{i}"] + losses.BETA * parts[f"kdc{i}"] + losses.GAMMA * parts[f"smooth{i}"] for i in range(1, 5))
    assert abs(logged - parts["total"]) <= 1e-10 * parts["total"]


def test_default_weights():
    assert (losses.ALPHA, losses.BETA, losses.GAMMA) == (0.5, 0.05, 0.01)
