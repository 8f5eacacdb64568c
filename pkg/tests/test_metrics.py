import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lapanet import metrics, selftest


def test_dice_examples():
    a = np.zeros((6, 6), bool)
    a[1:4, 1:4] = True
    assert metrics.dice(a, a) == 1.0
    b = np.zeros_like(a)
    b[5, 5] = True
    assert metrics.dice(a, b) == 0.0
    big = np.zeros((4, 4), bool)
    big[:2] = True
    small = np.zeros_like(big)
    small[0] = True
    assert metrics.dice(small, big) == pytest.approx(2 / 3)
    assert metrics.dice(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0


def test_square_shift_in_mm():
    a = np.zeros((16, 16), bool)
    a[4:8, 4:8] = True
    b = np.roll(a, 3, axis=1)
    assert metrics.hausdorff(a, b, spacing=1.9) == pytest.approx(5.7)
    assert selftest._brute_hausdorff(a, b) * 1.9 == pytest.approx(5.7)


def test_hausdorff_identical_and_empty():
    a = np.zeros((8, 8), bool)
    a[2:5, 3:6] = True
    assert metrics.hausdorff(a, a) == 0.0
    with pytest.raises(ValueError):
        metrics.hausdorff(a, np.zeros_like(a))


def test_hausdorff_anisotropic_spacing():
    a = np.zeros((16, 16), bool)
    a[4:8, 4:8] = True
    assert metrics.hausdorff(a, np.roll(a, 2, axis=0), spacing=(1.5, 1.0)) == pytest.approx(3.0)
    assert metrics.hausdorff(a, np.roll(a, 2, axis=1), spacing=(1.5, 1.0)) == pytest.approx(2.0)


def test_percentile_variant_bounded_by_max(rng):
    a = rng.random((20, 20)) < 0.3
    b = rng.random((20, 20)) < 0.3
    assert metrics.hausdorff(a, b, percentile=95) <= metrics.hausdorff(a, b) + 1e-12


masks = arrays(bool, st.tuples(st.integers(2, 12), st.integers(2, 12)))


@settings(max_examples=60, deadline=None)
@given(masks, st.data())
def test_symmetry_and_brute_force(a, data):
    b = data.draw(arrays(bool, a.shape))
    a[0, 0] = b[-1, -1] = True
    assert metrics.hausdorff(a, b) == metrics.hausdorff(b, a)
    assert metrics.dice(a, b) == metrics.dice(b, a)
    assert abs(metrics.hausdorff(a, b) - selftest._brute_hausdorff(a, b)) < 1e-12
    assert abs(metrics.dice(a, b) - selftest._brute_dice(a, b)) < 1e-12


def test_boundary_points_of_filled_square():
    m = np.zeros((7, 7), bool)
    m[1:6, 1:6] = True
    pts = metrics.boundary_points(m)
    assert len(pts) == 16
    assert not any((p == [3, 3]).all() for p in pts)


def test_nrmse():
    ref = np.array([[0.0, 2.0], [1.0, 1.0]])
    test = ref + 0.5
    assert metrics.nrmse(ref, test) == pytest.approx(0.25)
    assert metrics.nrmse(ref, ref) == 0.0
    with pytest.raises(ValueError):
        metrics.nrmse(np.ones((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        metrics.nrmse(ref, ref[:1])


def test_evaluate_row_layout():
    img = np.arange(16.0).reshape(4, 4)
    m = np.zeros((4, 4), int)
    m[1:3, 1:3] = 1
    res = metrics.evaluate(img, img, m, m, {"myo": 1, "rv": 2})
    row = res.row()
    assert list(row) == ["nrmse", "dsc_myo", "dsc_rv", "hdd_myo", "hdd_rv"]
    assert row["dsc_myo"] == 1.0 and row["hdd_myo"] == 0.0
    assert np.isnan(row["hdd_rv"])


def test_write_rows_uses_repr(tmp_path):
    metrics.write_rows(tmp_path / "r.csv", [{"a": 0.1 + 0.2, "b": "x"}])
    assert (tmp_path / "r.csv").read_text() == "a,b\n0.30000000000000004,x\n"
