import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lapanet import kspace, lap, motion


def smooth_image(rng, n=32, sigma=2.0):
    from scipy import ndimage
    return ndimage.gaussian_filter(rng.standard_normal((n, n)), sigma, mode="wrap")


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_window_recovers_subpixel_shift(ux, uy):
    rng = np.random.default_rng(0)
    mov = smooth_image(rng)
    k = kspace.apply_phase_ramp(kspace.fft2c(mov), (ux, uy))
    fix = kspace.ifft2c(k).real
    f = lap.estimate_local_allpass(fix, mov, r=2)
    est = lap.filter_to_displacement(f)
    assert f.identifiable
    assert np.hypot(est[0] - ux, est[1] - uy) < 0.1
    assert f.residual < lap.REJECT_RESIDUAL


def test_zero_shift_gives_identity_filter():
    rng = np.random.default_rng(1)
    img = smooth_image(rng)
    f = lap.estimate_local_allpass(img, img, r=1)
    assert np.allclose(lap.filter_to_displacement(f), 0, atol=1e-10)


def test_flat_window_is_not_identifiable():
    f = lap.estimate_local_allpass(np.ones((16, 16)), np.ones((16, 16)))
    assert not f.identifiable


def test_filter_moment_examples():
    p = np.zeros((3, 3))
    p[1, 1] = p[1, 2] = 0.5
    assert lap.filter_to_displacement(p) == (1.0, 0.0)
    with pytest.raises(ValueError):
        lap.filter_to_displacement(np.zeros((3, 3)))


def test_estimator_input_checks():
    with pytest.raises(ValueError):
        lap.estimate_local_allpass(np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(ValueError):
        lap.estimate_local_allpass(np.zeros((8, 8)), np.zeros((8, 8)), r=4)


def test_noise_rejection_threshold_calibration():
    # independent noise windows must almost always exceed the threshold,
    # genuinely shifted content must almost never
    rng = np.random.default_rng(2)
    noise, shifted = [], []
    for _ in range(1000):
        a = smooth_image(rng, 16, 1.5)
        b = smooth_image(rng, 16, 1.5)
        noise.append(lap.estimate_local_allpass(a, b, r=2).residual)
    for _ in range(200):
        a = smooth_image(rng, 16, 1.5)
        u = rng.uniform(-1, 1, 2)
        b = kspace.ifft2c(kspace.apply_phase_ramp(kspace.fft2c(a), u)).real
        shifted.append(lap.estimate_local_allpass(b, a, r=2).residual)
    assert np.mean(np.asarray(noise) < lap.REJECT_RESIDUAL) < 0.01
    assert np.mean(np.asarray(shifted) >= lap.REJECT_RESIDUAL) < 0.01


def test_taper_window():
    rng = np.random.default_rng(3)
    k = kspace.fft2c(rng.standard_normal((32, 32)))
    assert np.allclose(lap.taper_window(k, (16, 16), 32), k)
    tapered = kspace.ifft2c(lap.taper_window(k, (16, 16), 12))
    assert np.allclose(tapered[:8], 0) and np.allclose(tapered[:, 24:], 0)
    with pytest.raises(ValueError):
        lap.taper_window(k, (2, 16), 12)
    with pytest.raises(ValueError):
        lap.taper_window(k, (16, 16), 2)


def test_schedules():
    assert lap.default_window_schedule(64) == [64, 32, 16, 8]
    assert lap.default_radius_schedule(4) == [3, 2, 2, 1]
    assert lap.default_radius_schedule(1) == [3]


def test_phantom_contraction_accuracy():
    scene = motion.phantom_cine(motion.PhantomConfig(size=64), n_frames=2)
    fix, mov = np.abs(scene.frames[0]), np.abs(scene.frames[1])
    u_true = scene.field(0, 1)
    u = lap.lap_register(fix, mov).field
    mask = scene.masks[0] > 0
    assert np.hypot(*(u - u_true))[mask].mean() < 0.5


def test_global_shift_from_kspace():
    scene = motion.phantom_cine(motion.PhantomConfig(size=64, motion="static"), n_frames=2)
    img = scene.frames[0]
    k_mov = kspace.fft2c(img)
    k_fix = kspace.apply_phase_ramp(k_mov, (1.5, -2.0))
    u = lap.lap_register_multiscale(k_fix, k_mov)
    box = motion.bounding_box(scene.masks[0], 4)
    est = u[:, box].mean(axis=1)
    assert np.hypot(est[0] - 1.5, est[1] + 2.0) < 0.1


def test_identical_images_give_zero_field():
    scene = motion.phantom_cine(motion.PhantomConfig(size=32, motion="static"), n_frames=2)
    img = np.abs(scene.frames[0])
    assert np.abs(lap.lap_register(img, img).field).max() < 1e-6


def test_unrelated_images_raise():
    rng = np.random.default_rng(4)
    with pytest.raises(lap.InsufficientSignal):
        lap.lap_register(rng.standard_normal((32, 32)), rng.standard_normal((32, 32)), levels=1)


def test_register_input_checks():
    with pytest.raises(ValueError):
        lap.lap_register(np.zeros((9, 9)), np.zeros((9, 9)))
    with pytest.raises(ValueError):
        lap.lap_register(np.zeros((8, 8)), np.zeros((8, 8)), levels=0)


def test_magnitude_image():
    rng = np.random.default_rng(5)
    coils = kspace.synthetic_coil_maps((16, 16), 3, seed=0)
    img = rng.standard_normal((16, 16))
    k = kspace.fft2c(coils * img[None])
    rss = lap.to_magnitude_image(k)
    assert np.allclose(rss, np.abs(img) * np.sqrt((np.abs(coils) ** 2).sum(0)))
    assert np.allclose(lap.to_magnitude_image(k[0]), np.abs(coils[0] * img))
