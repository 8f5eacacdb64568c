import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lapanet import kspace, sampling

from conftest import crandn


def test_acceleration_anchors():
    assert sampling.acceleration_report(156, 2).R == 78
    assert sampling.acceleration_report(312, 3).R == 104
    with pytest.raises(ValueError):
        sampling.acceleration_report(10, 0)


def test_count_for_acceleration_rounds():
    assert sampling.count_for_acceleration(156, 78) == 2
    assert sampling.count_for_acceleration(156, 31.2) == 5
    assert sampling.count_for_acceleration(156, 52) == 3
    assert sampling.count_for_acceleration(64, 500) == 1
    with pytest.raises(ValueError):
        sampling.count_for_acceleration(64, 0.5)


def test_golden_angle_value():
    assert np.degrees(sampling.GOLDEN_ANGLE) == pytest.approx(111.246, abs=1e-3)


@pytest.mark.parametrize("lines", [1, 2, 5, 16, 32])
def test_vista_mask_properties(lines):
    pats = sampling.vista_like_mask(32, 6, lines, seed=4)
    assert len(pats) == 6
    for p in pats:
        assert p.frame_count == lines
        assert p.lines[16]
        assert p.acceleration().R == pytest.approx(32 / lines)
    if 1 < lines < 32:
        for a, b in zip(pats, pats[1:]):
            assert not np.array_equal(a.lines, b.lines)


def test_vista_mask_is_seeded():
    a = sampling.vista_like_mask(40, 3, 4, seed=9)
    b = sampling.vista_like_mask(40, 3, 4, seed=9)
    assert all(np.array_equal(x.lines, y.lines) for x, y in zip(a, b))


def test_vista_mask_prefers_center():
    counts = np.zeros(64)
    for s in range(200):
        counts += sampling.vista_like_mask(64, 1, 6, seed=s)[0].lines
    assert counts[24:40].sum() > 3 * (counts[:16].sum() + counts[48:].sum())


def test_pattern_validation():
    with pytest.raises(ValueError):
        sampling.SamplingPattern(sampling.CARTESIAN, lines=np.zeros(8, bool))
    with pytest.raises(ValueError):
        sampling.SamplingPattern(sampling.RADIAL, angles=[4.0], n_readout=8)
    with pytest.raises(ValueError):
        sampling.make_pattern("spiral", 2, (8, 8))


def test_golden_angle_frames_continue():
    a = sampling.make_pattern("radial", 8, (32, 32), frame_index=0)
    b = sampling.make_pattern("radial", 8, (32, 32), frame_index=1)
    n = a.frame_count
    both = sampling.golden_angle_spokes(2 * n)
    assert np.allclose(np.concatenate([a.angles, b.angles]), both.angles)
    assert a.n_full == int(np.ceil(np.pi / 2 * 32))


@pytest.mark.parametrize("n_coils", [1, 4, 16])
def test_radial_adjoint(rng, n_coils):
    S = kspace.synthetic_coil_maps((12, 12), n_coils, seed=2)
    pat = sampling.golden_angle_spokes(5, n_readout=12)
    x = crandn(rng, 12, 12)
    Ax = kspace.multicoil_forward(x, S, pat)
    assert Ax.shape == (n_coils, 5, 12)
    y = crandn(rng, *Ax.shape)
    lhs = np.vdot(y, Ax)
    rhs = np.vdot(kspace.multicoil_adjoint(y, S, pat), x)
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_horizontal_spoke_hits_grid_samples(rng):
    img = crandn(rng, 8, 8)
    pat = sampling.SamplingPattern(sampling.RADIAL, angles=[0.0], n_readout=8)
    assert np.allclose(sampling.radial_sample(img, pat)[0], kspace.fft2c(img)[4], atol=1e-12)


def test_gridding_empty_and_support(rng):
    empty = sampling.golden_angle_spokes(0, n_readout=16)
    assert not sampling.radial_adjoint_grid(np.zeros((0, 16)), empty, (16, 16)).any()
    pat = sampling.golden_angle_spokes(4, n_readout=16)
    spokes = crandn(rng, 2, 4, 16)
    grid = sampling.radial_adjoint_grid(spokes, pat, (16, 16))
    support = sampling.grid_support(pat, (16, 16))
    assert grid.shape == (2, 16, 16)
    assert not grid[:, ~support].any()
    assert np.all(grid[:, support] != 0)


def test_gridding_averages_constant_data():
    pat = sampling.golden_angle_spokes(7, n_readout=16)
    grid = sampling.radial_adjoint_grid(np.full((7, 16), 2 + 1j), pat, (16, 16))
    support = sampling.grid_support(pat, (16, 16))
    assert np.allclose(grid[support], 2 + 1j)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["cartesian", "radial"]), st.sampled_from([1, 2, 4, 8, 31.2, 78]))
def test_make_pattern_bookkeeping(kind, R):
    p = sampling.make_pattern(kind, R, (32, 32), frame_index=2, seed=1)
    rep = p.acceleration()
    assert rep.frame_count == sampling.count_for_acceleration(rep.full_count, R)
    assert rep.R >= 1


def test_full_cartesian_undersample_is_identity(rng):
    k = crandn(rng, 2, 16, 16)
    p = sampling.make_pattern("cartesian", 1, (16, 16))
    assert np.array_equal(sampling.undersample(k, p), k)


def test_undersampled_lines_are_zero(rng):
    k = crandn(rng, 2, 16, 16)
    p = sampling.make_pattern("cartesian", 4, (16, 16), seed=3)
    out = sampling.undersample(k, p)
    assert not out[:, ~p.lines].any()
    assert np.array_equal(out[:, p.lines], k[:, p.lines])


def test_patterns_csv_roundtrip(tmp_path):
    cart = sampling.vista_like_mask(20, 3, 4, seed=1)
    sampling.write_patterns_csv(cart, tmp_path / "c.csv")
    back = sampling.read_patterns_csv(tmp_path / "c.csv", n_pe=20)
    assert all(np.array_equal(a.lines, b.lines) for a, b in zip(cart, back))
    rad = [sampling.golden_angle_spokes(3, start_index=3 * f, frame_index=f) for f in range(2)]
    sampling.write_patterns_csv(rad, tmp_path / "r.csv")
    back = sampling.read_patterns_csv(tmp_path / "r.csv")
    assert all(np.array_equal(a.angles, b.angles) for a, b in zip(rad, back))
