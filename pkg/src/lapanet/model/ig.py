"""Integrated gradients with respect to the stacked k-space input."""
import copy
from dataclasses import dataclass

import numpy as np
import torch

from .network import channels_to_kspace, prepare_input


@dataclass
class Attribution:
    channels: np.ndarray     # (4 n_c, H, W) in network layout
    fix: np.ndarray          # (H, W) heatmap in centered k-space order
    mov: np.ndarray
    total: float             # sum of all attributions
    delta: float             # F(input) - F(baseline)
    alphas: np.ndarray = None  # path points where the gradient was taken

    @property
    def gap(self):
        """Relative completeness gap ``|sum - delta| / |delta|``."""
        return abs(self.total - self.delta) / max(abs(self.delta), 1e-300)


def field_energy(out):
    """Default attribution target: mean squared magnitude of the finest field."""
    u = out["fields"][-1]
    return (u ** 2).sum(dim=1).mean(dim=(1, 2))


_GL = 1.0 / np.sqrt(3.0)


class _Path:
    """Target values and gradients along ``alpha * x`` for ``alpha`` in [0, 1]."""

    def __init__(self, net, x, target, chunk):
        self.net, self.x, self.target, self.chunk = net, x, target, chunk

    def values(self, alphas):
        out = []
        with torch.no_grad():
            for start in range(0, len(alphas), self.chunk):
                a = torch.as_tensor(np.asarray(alphas[start:start + self.chunk], float)).view(-1, 1, 1, 1)
                out.append(self.target(self.net(a * self.x)).numpy())
        return np.concatenate(out)

    def grads(self, alphas):
        out = []
        for start in range(0, len(alphas), self.chunk):
            a = torch.as_tensor(np.asarray(alphas[start:start + self.chunk], float)).view(-1, 1, 1, 1)
            xs = (a * self.x).requires_grad_(True)
            (g,) = torch.autograd.grad(self.target(self.net(xs)).sum(), xs)
            out.append(g)
        return torch.cat(out)


class _Interval:
    """Two-point Gauss-Legendre rule on ``[a, b]`` with the exact change of the target."""

    def __init__(self, path, a, b, fa, fb):
        self.a, self.b, self.fa, self.fb = a, b, fa, fb
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        self.alphas = np.array([mid - _GL * half, mid + _GL * half])
        self.weight = half
        self.grads = path.grads(self.alphas)
        slope = (self.grads * path.x).sum(dim=(1, 2, 3)).numpy()
        self.error = float(abs(self.weight * slope.sum() - (fb - fa)))

    def split_point(self):
        if self.a == 0.0:
            return self.b * 1e-2
        if self.b / self.a > 4.0:
            return float(np.sqrt(self.a * self.b))
        return 0.5 * (self.a + self.b)


def adaptive_intervals(path, steps, initial=16, floor=1e-16):
    """Bisect the worst interval until the gradient budget ``steps`` is used.

    Starts from ``initial`` intervals on a log grid from ``floor`` to 1 (plus
    ``[0, floor]``); normalization layers respond to tiny inputs at every
    scale, so the target can move over many decades of ``alpha`` near the
    zero baseline. Each interval's error is known exactly because the target
    is evaluated at its ends, so refinement always goes where the rule is
    worst. Uses an even number of gradients, at most ``steps``.
    """
    n0 = max(1, min(initial, steps // 4))
    bounds = np.concatenate([[0.0], np.logspace(np.log10(floor), 0.0, n0)]) if n0 > 1 else np.array([0.0, 1.0])
    f = path.values(bounds)
    intervals = [_Interval(path, a, b, fa, fb) for a, b, fa, fb in zip(bounds[:-1], bounds[1:], f[:-1], f[1:])]
    used = 2 * len(intervals)
    while used + 2 <= steps:
        worst = max(range(len(intervals)), key=lambda i: intervals[i].error)
        iv = intervals[worst]
        m = iv.split_point()
        fm = float(path.values([m])[0])
        intervals[worst:worst + 1] = [_Interval(path, iv.a, m, iv.fa, fm), _Interval(path, m, iv.b, fm, iv.fb)]
        used += 2
    return intervals


def integrated_gradients(model, k_fix, k_mov, steps=100, target=field_energy, chunk=10, quadrature="adaptive"):
    """Path integral of gradients along the straight line from a zero input.

    ``quadrature="adaptive"`` spends the ``steps`` gradient evaluations on
    two-point Gauss-Legendre rules over intervals chosen by
    :func:`adaptive_intervals` (needs ``steps >= 4``, otherwise the midpoint
    rule is used). ``"uniform"`` is the midpoint rule on equal intervals.
    Runs on a double-precision copy of the model in inference mode.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if quadrature not in ("adaptive", "uniform"):
        raise ValueError(f"unknown quadrature {quadrature!r}")
    net = copy.deepcopy(model).double().eval()
    x = prepare_input(k_fix, k_mov, dtype=torch.float64)[0]
    path = _Path(net, x, target, chunk)
    if quadrature == "adaptive" and steps >= 4:
        intervals = adaptive_intervals(path, steps)
        grad_sum = sum(iv.weight * iv.grads.sum(0) for iv in intervals)
        alphas = np.sort(np.concatenate([iv.alphas for iv in intervals]))
    else:
        bounds = np.linspace(0.0, 1.0, steps + 1)
        alphas = 0.5 * (bounds[:-1] + bounds[1:])
        grad_sum = (path.grads(alphas) / steps).sum(0)
    attr = (x * grad_sum).numpy()
    f_in, f_0 = path.values([1.0, 0.0])
    fix, mov = channels_to_kspace(attr)
    return Attribution(attr, fix.sum(axis=(0, 1)), mov.sum(axis=(0, 1)), float(attr.sum()), float(f_in - f_0),
                       alphas)
