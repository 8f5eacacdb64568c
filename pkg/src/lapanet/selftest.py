"""Quick oracle suites: shift theorem, operator adjoints, metric brute force, gradients.

Each check returns a :class:`Check`; values are deterministic so reports
can be compared byte for byte.
"""
from dataclasses import dataclass

import numpy as np

from . import kspace, metrics, sampling


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value < self.tol)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {self.value:.3e} < {self.tol:.0e}"


def shift_theorem(n=20, size=64, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        img = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
        u = rng.integers(-size // 2, size // 2, 2)
        ramp = kspace.ifft2c(kspace.apply_phase_ramp(kspace.fft2c(img), u))
        worst = max(worst, np.abs(ramp - np.roll(img, (u[1], u[0]), axis=(0, 1))).max())
    return Check("shift_theorem", float(worst), 1e-10)


def _adjoint_gap(rng, shape, n_coils, pattern):
    coils = kspace.synthetic_coil_maps(shape, n_coils, seed=int(rng.integers(1000)))
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    Ax = kspace.multicoil_forward(x, coils, pattern)
    y = rng.standard_normal(Ax.shape) + 1j * rng.standard_normal(Ax.shape)
    lhs = np.vdot(y, Ax)
    rhs = np.vdot(kspace.multicoil_adjoint(y, coils, pattern), x)
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


def adjoint(n=4, shape=(32, 32), coil_counts=(1, 4), seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for nc in coil_counts:
        for i in range(n):
            cart = sampling.make_pattern("cartesian", 4, shape, frame_index=i, seed=seed)
            rad = sampling.make_pattern("radial", 8, shape, frame_index=i)
            worst = max(worst, _adjoint_gap(rng, shape, nc, cart), _adjoint_gap(rng, shape, nc, rad))
    return Check("adjoint", float(worst), 1e-10)


def _brute_dice(a, b):
    sa, sb = int(a.sum()), int(b.sum())
    if sa + sb == 0:
        return 1.0
    inter = sum(1 for i in range(a.shape[0]) for j in range(a.shape[1]) if a[i, j] and b[i, j])
    return 2.0 * inter / (sa + sb)


def _brute_hausdorff(a, b):
    def edge(m):
        pts = []
        H, W = m.shape
        for i in range(H):
            for j in range(W):
                if not m[i, j]:
                    continue
                for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    y, x = i + di, j + dj
                    if not (0 <= y < H and 0 <= x < W) or not m[y, x]:
                        pts.append((i, j))
                        break
        return pts

    pa, pb = edge(a), edge(b)

    def directed(p, q):
        return max(min(((y0 - y1) ** 2 + (x0 - x1) ** 2) ** 0.5 for y1, x1 in q) for y0, x0 in p)
    return max(directed(pa, pb), directed(pb, pa))


def metric_oracles(n=20, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        H, W = rng.integers(4, 17, 2)
        a = rng.random((H, W)) < 0.4
        b = rng.random((H, W)) < 0.4
        a[0, 0] = b[-1, -1] = True
        worst = max(worst, abs(metrics.dice(a, b) - _brute_dice(a, b)))
        worst = max(worst, abs(metrics.hausdorff(a, b) - _brute_hausdorff(a, b)))
        ref = rng.standard_normal((H, W))
        test = rng.standard_normal((H, W))
        brute = np.sqrt(np.mean((ref - test) ** 2)) / (np.abs(ref).max() - np.abs(ref).min())
        worst = max(worst, abs(metrics.nrmse(ref, test) - brute))
    return Check("metric_oracles", float(worst), 1e-12)


def gradients(seed=0):
    import torch

    from .model import blocks, gradcheck
    torch.manual_seed(seed)
    conv = blocks.conv(2, 3).double()
    x = torch.randn(1, 2, 6, 6, dtype=torch.float64, requires_grad=True)
    f = gradcheck.module_closure(conv, (x,), seed=seed)
    errs = gradcheck.check_full(f, {"input": x, **dict(conv.named_parameters())})
    se = blocks.AttentionSE(4).double()
    y = torch.randn(1, 4, 5, 5, dtype=torch.float64, requires_grad=True)
    g = gradcheck.module_closure(se, (y,), seed=seed)
    errs.update({f"se.{k}": v for k, v in gradcheck.check_full(g, {"input": y, **dict(se.named_parameters())}).items()})
    return Check("gradients", float(max(errs.values())), 1e-4)


SUITES = (shift_theorem, adjoint, metric_oracles, gradients)


def run(seed=0):
    return [suite(seed=seed) for suite in SUITES]
