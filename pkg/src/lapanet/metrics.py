"""Registration quality metrics: NRMSE, Dice and Hausdorff distance."""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels


def nrmse(ref, test):
    """RMS of ``|ref - test|`` divided by the dynamic range of ``|ref|``."""
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise ValueError("nrmse needs equally shaped inputs")
    mag = np.abs(ref)
    span = mag.max() - mag.min()
    if not span > 0:
        raise ValueError("reference image has zero dynamic range")
    return float(np.sqrt(np.mean(np.abs(ref - test) ** 2)) / span)


def dice(a, b):
    """``2 |A & B| / (|A| + |B|)``; 1 when both masks are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("dice needs equally shaped masks")
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / total)


def boundary_points(mask):
    """Pixel coordinates ``(row, col)`` of mask pixels with a 4-neighbour outside the mask."""
    m = np.asarray(mask, dtype=bool)
    pad = np.pad(m, 1, constant_values=False)
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return np.argwhere(m & ~interior).astype(float)


def _scaled(points, spacing):
    return points * np.broadcast_to(np.asarray(spacing, dtype=float), (2,))


def hausdorff(a, b, spacing=1.0, percentile=None):
    """Symmetric Hausdorff distance between mask boundaries, in units of ``spacing``.

    ``percentile`` (e.g. 95) switches to the percentile variant over the
    pooled boundary-to-boundary distances.
    """
    pa = boundary_points(a)
    pb = boundary_points(b)
    if pa.size == 0 or pb.size == 0:
        raise ValueError("hausdorff needs two non-empty masks")
    pa, pb = _scaled(pa, spacing), _scaled(pb, spacing)
    if percentile is not None:
        d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
        return float(np.percentile(np.concatenate([d.min(1), d.min(0)]), percentile))
    return max(kernels.directed_hausdorff(pa, pb), kernels.directed_hausdorff(pb, pa))


@dataclass
class EvalResult:
    nrmse: float
    dsc: dict = field(default_factory=dict)
    hdd: dict = field(default_factory=dict)

    def row(self):
        out = {"nrmse": self.nrmse}
        for name in sorted(self.dsc):
            out[f"dsc_{name}"] = self.dsc[name]
        for name in sorted(self.hdd):
            out[f"hdd_{name}"] = self.hdd[name]
        return out


def evaluate(fix_img, warped_img, fix_mask, warped_mask, labels, spacing=1.0):
    """NRMSE on magnitudes plus per-label Dice and Hausdorff distance."""
    res = EvalResult(nrmse(np.abs(fix_img), np.abs(warped_img)))
    for name, lab in labels.items():
        a = np.asarray(fix_mask) == lab
        b = np.asarray(warped_mask) == lab
        res.dsc[name] = dice(a, b)
        res.hdd[name] = hausdorff(a, b, spacing) if a.any() and b.any() else float("nan")
    return res


def write_rows(path, rows, fieldnames=None):
    """Write dict rows as CSV with ``repr`` floats so reruns are byte-identical."""
    fieldnames = fieldnames or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})
