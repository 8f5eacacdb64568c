"""Central finite-difference oracle for autograd gradients (double precision)."""
import numpy as np
import torch


def rel_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), floor))


def numeric_grad(f, x, eps=1e-5):
    """Element-wise central differences of scalar ``f`` with respect to tensor ``x`` (modified in place, restored)."""
    g = torch.zeros_like(x)
    flat = x.data.view(-1)
    gflat = g.view(-1)
    for i in range(flat.numel()):
        old = flat[i].item()
        flat[i] = old + eps
        fp = float(f())
        flat[i] = old - eps
        fm = float(f())
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def check_full(f, tensors, eps=1e-5, floor=1e-6):
    """Compare autograd with element-wise central differences for every tensor.

    ``f`` is a zero-argument closure returning a scalar tensor that depends on
    ``tensors``. Returns ``{name: relative error}``. Errors are relative to the
    tensor's own gradient scale, but never to less than ``floor`` times the
    largest gradient in the set (tensors whose exact gradient vanishes would
    otherwise compare rounding noise to zero).
    """
    for t in tensors.values():
        t.grad = None
    f().backward()
    autos, nums = {}, {}
    for name, t in tensors.items():
        autos[name] = (t.grad if t.grad is not None else torch.zeros_like(t)).detach().clone()
        with torch.no_grad():
            nums[name] = numeric_grad(f, t, eps)
    scale = max(float(a.abs().max()) for a in autos.values())
    return {name: rel_error(autos[name], nums[name], max(floor * scale, 1e-300)) for name in tensors}


def check_directional(f, tensors, n_dirs=3, eps=1e-5, seed=0):
    """Directional-derivative check: ``<grad, v>`` against ``(f(p + eps v) - f(p - eps v)) / 2 eps``.

    Every tensor is perturbed along the same random unit direction; returns the
    worst relative error over ``n_dirs`` directions.
    """
    gen = torch.Generator().manual_seed(seed)
    params = list(tensors.values())
    for p in params:
        p.grad = None
    f().backward()
    grads = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    worst = 0.0
    for _ in range(n_dirs):
        dirs = [torch.randn(p.shape, generator=gen, dtype=p.dtype) for p in params]
        norm = torch.sqrt(sum((d ** 2).sum() for d in dirs))
        dirs = [d / norm for d in dirs]
        auto = float(sum((g * d).sum() for g, d in zip(grads, dirs)))
        with torch.no_grad():
            for p, d in zip(params, dirs):
                p.add_(eps * d)
            fp = float(f())
            for p, d in zip(params, dirs):
                p.sub_(2 * eps * d)
            fm = float(f())
            for p, d in zip(params, dirs):
                p.add_(eps * d)
        num = (fp - fm) / (2 * eps)
        worst = max(worst, abs(auto - num) / max(abs(auto), abs(num), 1e-12))
    return worst


def module_closure(module, inputs, weight=None, seed=0):
    """Scalar probe ``sum(w * module(*inputs))`` with a fixed random weighting."""
    with torch.no_grad():
        out = module(*inputs)
    outs = out if isinstance(out, (list, tuple)) else [out]
    gen = torch.Generator().manual_seed(seed)
    ws = weight or [torch.randn(o.shape, generator=gen, dtype=o.dtype) for o in outs]

    def f():
        res = module(*inputs)
        res = res if isinstance(res, (list, tuple)) else [res]
        return sum((w * r).sum() for w, r in zip(ws, res))
    return f


def nonfinite_gradients(module):
    """Names of parameters whose gradient holds a NaN or infinity."""
    return [name for name, p in module.named_parameters()
            if p.grad is not None and not torch.isfinite(p.grad).all()]
