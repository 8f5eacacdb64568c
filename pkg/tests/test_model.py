import numpy as np
import pytest
import torch

from lapanet.model import (ModelConfig, build_model, count_parameters, desk_config, full_scale_config,
                           prepare_input, shape_ledger)
from lapanet.model import blocks
from lapanet.model.network import channels_to_kspace

from conftest import crandn


def expected_ledger(cfg):
    H, W = cfg.input_size
    L = cfg.levels
    rows = {"input": (1, cfg.in_channels, H, W)}
    for i in range(1, L + 1):
        rows[f"grm{i}"] = (1, cfg.grm[i - 1], *cfg.level_size(i))
        h, w = cfg.level_size(i)
        rows[f"enc{i}"] = (1, cfg.enc[i - 1], h // 2, w // 2)
        rows[f"u{i}"] = (1, 2, *cfg.field_size(i))
    rows["bottleneck"] = (1, cfg.bottleneck, *cfg.bottleneck_size)
    rows["translation"] = (1, 2)
    return rows


@pytest.mark.parametrize("multiplier", [1.0, 0.25])
@pytest.mark.parametrize("size", [160, 64])
def test_shape_ledger(multiplier, size):
    cfg = ModelConfig(input_size=(size, size), width_multiplier=multiplier, n_coils=2).validate()
    ledger = dict(shape_ledger(build_model(cfg)))
    assert ledger == expected_ledger(cfg)


def test_full_scale_numbers():
    cfg = full_scale_config()
    assert cfg.bottleneck_size == (5, 5)
    assert cfg.grm == (4, 16, 32, 128) and cfg.enc == (16, 32, 64, 192)
    n = count_parameters(build_model(cfg))
    assert abs(n - 17.2e6) / 17.2e6 < 0.15


def test_desk_is_small():
    full = count_parameters(build_model(full_scale_config(n_coils=4)))
    desk = count_parameters(build_model(desk_config()))
    assert desk * 8 < full


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(input_size=(48, 48)).validate()
    with pytest.raises(ValueError):
        ModelConfig(grm_channels=(4, 16)).validate()
    with pytest.raises(ValueError):
        ModelConfig(fuse_kernel=5).validate()
    with pytest.raises(ValueError):
        ModelConfig(combine="mul").validate()
    with pytest.raises(ValueError):
        ModelConfig(width_multiplier=0).validate()


def test_config_file_roundtrip(tmp_path):
    cfg = ModelConfig(input_size=(96, 96), n_coils=3, combine="add", use_mam=False)
    cfg.save(tmp_path / "m.txt")
    assert ModelConfig.load(tmp_path / "m.txt") == cfg


def test_build_is_seeded():
    a = build_model(desk_config(), seed=3).state_dict()
    b = build_model(desk_config(), seed=3).state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)


def test_prepare_input_layout(rng):
    kf = crandn(rng, 2, 4, 4)
    km = crandn(rng, 2, 4, 4)
    x = prepare_input(kf, km, dtype=torch.float64)
    assert x.shape == (1, 8, 4, 4)
    # centered k-space origin (2, 2) moves to the array origin
    assert x[0, 0, 0, 0] == kf[0, 2, 2].real
    assert x[0, 3, 0, 0] == kf[1, 2, 2].imag
    assert x[0, 5, 0, 0] == km[1, 2, 2].real
    fix, mov = channels_to_kspace(x[0].numpy())
    assert np.array_equal(fix[:, 0] + 1j * fix[:, 1], kf)
    assert np.array_equal(mov[:, 0] + 1j * mov[:, 1], km)
    with pytest.raises(ValueError):
        prepare_input(kf, km[:1])


def test_input_checks():
    model = build_model(desk_config())
    with pytest.raises(ValueError):
        model(torch.zeros(1, 16, 32, 32))
    with pytest.raises(ValueError):
        model(torch.zeros(1, 8, 64, 64))


def test_block_shape_errors():
    enc = blocks.EncoderBlock(4, 2, 8)
    with pytest.raises(ValueError):
        enc(torch.zeros(1, 4, 16, 16), torch.zeros(1, 2, 8, 8))
    with pytest.raises(ValueError):
        enc(torch.zeros(1, 4, 16, 16))
    dec = blocks.DecoderBlock(8, 4, 4)
    with pytest.raises(ValueError):
        dec(torch.zeros(1, 8, 4, 4), torch.zeros(1, 4, 4, 4))
    head = blocks.TranslationHead(8, (5, 5))
    with pytest.raises(ValueError):
        head(torch.zeros(1, 8, 4, 4))


def test_se_weights_in_unit_interval():
    torch.manual_seed(0)
    se = blocks.AttentionSE(8)
    w = se.weights(10 * torch.randn(3, 8, 6, 6))
    assert w.shape == (3, 8, 1, 1)
    assert ((w > 0) & (w < 1)).all()


def test_se_spatial_permutation_invariance():
    # 1x1 excitation on a softmax-pooled descriptor; a circular shift with
    # circular padding only permutes pixels, so the weights must not change
    torch.manual_seed(1)
    se = blocks.AttentionSE(6).double()
    se.proj.padding_mode = "circular"
    x = torch.randn(1, 6, 8, 8, dtype=torch.float64)
    w0 = se.weights(x)
    w1 = se.weights(torch.roll(x, (3, 5), dims=(2, 3)))
    assert torch.allclose(w0, w1, atol=1e-12)


def test_channel_attention_rows_sum_to_one():
    torch.manual_seed(2)
    ca = blocks.ChannelAttention(4).double()
    ca.v.weight.data.zero_()
    ca.v.weight.data[:, :, 1, 1] = 1
    ca.v.bias.data.zero_()
    x = torch.ones(1, 4, 5, 5, dtype=torch.float64)
    # constant values -> every output channel is a convex combination of ones
    assert torch.allclose(ca(x), x)


def test_grm_pooling_per_level():
    for level, size in [(1, 16), (2, 8), (3, 4), (4, 2)]:
        g = blocks.GlobalResidualModule(4, 3, level)
        assert g(torch.randn(2, 4, 16, 16)).shape == (2, 3, size, size)


def test_dfm_ablation_changes_output():
    torch.manual_seed(0)
    x = prepare_input(np.ones((4, 64, 64)) * (1 + 1j), np.ones((4, 64, 64)), dtype=torch.float32)
    x = x + torch.randn_like(x)
    with_dfm = build_model(desk_config(), seed=0).eval()
    cfg = desk_config()
    cfg.use_dfm = False
    without = build_model(cfg, seed=0).eval()
    assert count_parameters(without) < count_parameters(with_dfm)
    with torch.no_grad():
        a = with_dfm(x)["fields"][-1]
        b = without(x)["fields"][-1]
    assert not torch.allclose(a, b)


@pytest.mark.parametrize("flag", ["use_grm", "use_cim", "use_mam"])
def test_ablations_build_and_run(flag):
    cfg = desk_config()
    setattr(cfg, flag, False)
    out = build_model(cfg).eval()(torch.randn(1, 16, 64, 64))
    assert [tuple(u.shape[-2:]) for u in out["fields"]] == [(8, 8), (16, 16), (32, 32), (64, 64)]


def test_add_combine_variant():
    cfg = desk_config()
    cfg.combine = "add"
    out = build_model(cfg).eval()(torch.randn(1, 16, 64, 64))
    assert out["fields"][-1].shape == (1, 2, 64, 64)


def test_mam_zero_parameters_give_zero_field():
    mam = blocks.MotionAttention(6)
    for p in mam.parameters():
        torch.nn.init.zeros_(p)
    u = mam(torch.randn(2, 6, 4, 4), torch.zeros(2, 2, 4, 4))
    assert u.shape == (2, 2, 8, 8)
    assert not u.abs().max()


def test_mam_blends_with_previous_estimate():
    mam = blocks.MotionAttention(6)
    torch.nn.init.zeros_(mam.e3.weight)
    torch.nn.init.zeros_(mam.e3.bias)
    prev = torch.full((1, 2, 3, 3), 1.5)
    u = mam(torch.randn(1, 6, 3, 3), prev)
    mx, my = mam.masks(torch.zeros(1, 2, 6, 6), torch.full((1, 2, 6, 6), 3.0))
    # raw estimate is zero, so u = (1 - m) * 2 * prev
    assert torch.allclose(u[:, :1], (1 - mx) * 3.0)
    assert torch.allclose(u[:, 1:], (1 - my) * 3.0)


def test_translation_head_is_monotonic():
    head = blocks.TranslationHead(3, (5, 5))
    torch.nn.init.constant_(head.proj.weight, 0.5)
    torch.nn.init.zeros_(head.proj.bias)
    x = torch.rand(1, 3, 5, 5)
    base = head(x)
    bumped = x.clone()
    bumped[0, :, 2, 2] += 10
    assert (head(bumped) >= base).all()
    assert torch.allclose(head(bumped), torch.full((1, 2), float(1.5 * (x[0, :, 2, 2] + 10).sum() / 3)))


def test_eval_batch_independence():
    model = build_model(desk_config()).eval()
    torch.manual_seed(4)
    x = torch.randn(3, 16, 64, 64)
    with torch.no_grad():
        joint = model(x)["fields"][-1]
        single = model(x[1:2])["fields"][-1]
    assert torch.allclose(joint[1:2], single, atol=1e-5)


def test_forward_deterministic():
    torch.manual_seed(5)
    x = torch.randn(2, 16, 64, 64)
    model = build_model(desk_config()).eval()
    with torch.no_grad():
        a = model(x)
        b = model(x)
    assert all(torch.equal(p, q) for p, q in zip(a["fields"], b["fields"]))
