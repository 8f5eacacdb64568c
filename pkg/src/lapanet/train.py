"""Self-supervised training on synthetic phantom pairs.

Each step draws one trajectory kind and one acceleration for the whole
batch, builds image pairs from the current curriculum stages, undersamples
both k-spaces and minimizes the multi-resolution loss against the fully
sampled coil images.
"""
import csv
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
import torch

from . import io, kspace, losses, motion, sampling
from .model import ModelConfig, build_model, prepare_input

STAGES = ("translation", "gaussian", "cine")


class TrainingDiverged(RuntimeError):
    def __init__(self, step, value):
        super().__init__(f"loss became non-finite ({value}) at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 8
    lr: float = 1e-3
    weight_decay: float = 1e-3
    accelerations: tuple = (1, 2, 4, 8)
    trajectories: tuple = ("cartesian", "radial")
    stages: tuple = ("translation", "gaussian")
    first_stage_share: float = None  # fraction of the run on the first stage alone; None = equal portions
    max_translation: float = 4.0
    max_bump: float = 3.0
    box_margin: int = 10
    coil_seed: int = 0               # receive array shared by all pairs; -1 draws one per pair
    alpha: float = losses.ALPHA
    beta: float = losses.BETA
    gamma: float = losses.GAMMA
    seed: int = 0

    def __post_init__(self):
        for key in ("accelerations", "trajectories", "stages"):
            v = getattr(self, key)
            setattr(self, key, tuple(v) if isinstance(v, (list, tuple)) else (v,))

    def validate(self):
        if self.steps < 0 or self.batch < 1:
            raise ValueError("steps must be >= 0 and batch >= 1")
        if not self.accelerations:
            raise ValueError("acceleration list is empty")
        if any(r < 1 for r in self.accelerations):
            raise ValueError("accelerations must be >= 1")
        for t in self.trajectories:
            if t not in ("cartesian", "radial"):
                raise ValueError(f"unknown trajectory {t!r}")
        for s in self.stages:
            if s not in STAGES:
                raise ValueError(f"unknown curriculum stage {s!r}")
        if self.first_stage_share is not None and not 0.0 < self.first_stage_share < 1.0:
            raise ValueError("first_stage_share must lie in (0, 1)")
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        return self


# --------------------------------------------------------------------------
# pair generation
# --------------------------------------------------------------------------

def random_phantom(rng, size):
    """Phantom geometry, texture and motion amplitude drawn at random."""
    cav = rng.uniform(0.10, 0.16)
    return motion.PhantomConfig(
        size=size,
        cavity_radius=cav,
        myo_radius=cav + rng.uniform(0.06, 0.09),
        contraction=rng.uniform(0.05, 0.15),
        rv_shift=tuple(rng.uniform(-1.5, 1.5, 2)),
        texture=rng.uniform(0.05, 0.25),
        seed=int(rng.integers(2 ** 31)),
    )


def translation_pair(rng, size, max_shift=4.0):
    cfg = random_phantom(rng, size)
    t = rng.uniform(-max_shift, max_shift, 2)
    u = motion.constant_field(t, (size, size))
    mov, fix, mask_fix, mask_mov = motion.render_deformed(cfg, u, base_phase=rng.uniform(0, 1))
    return fix, mov, mask_fix, mask_mov, u


def gaussian_pair(rng, size, max_amp=3.0):
    cfg = random_phantom(rng, size)
    n = int(rng.integers(1, 4))
    centers = size / 2 + rng.uniform(-0.2 * size, 0.2 * size, (n, 2))
    widths = rng.uniform(0.08 * size, 0.16 * size, n)
    amps = rng.uniform(-1, 1, (n, 2)) * np.minimum(max_amp, 0.5 * widths)[:, None]
    u = motion.synth_gaussian_field(centers, amps, widths, size, size)
    mov, fix, mask_fix, mask_mov = motion.render_deformed(cfg, u, base_phase=rng.uniform(0, 1))
    return fix, mov, mask_fix, mask_mov, u


def cine_pair(rng, size):
    cfg = random_phantom(rng, size)
    n = int(rng.integers(4, 13))
    i, j = rng.choice(n, 2, replace=False)
    scene = motion.phantom_cine(cfg, n_frames=n, pairs=[(int(i), int(j))])
    return scene.frames[i], scene.frames[j], scene.masks[i], scene.masks[j], scene.field(i, j)


def make_pair(rng, stage, size, tcfg=None):
    tcfg = tcfg or TrainConfig()
    if stage == "translation":
        return translation_pair(rng, size, tcfg.max_translation)
    if stage == "gaussian":
        return gaussian_pair(rng, size, tcfg.max_bump)
    if stage == "cine":
        return cine_pair(rng, size)
    raise ValueError(f"unknown curriculum stage {stage!r}")


def stage_for_step(step, total, stages, first_share=None):
    """Number of unlocked stages at ``step``; earlier stages stay in the mix.

    Stages unlock in equal portions of the run, or, with ``first_share``, the
    first stage runs alone for that fraction and the rest unlock in equal
    portions of the remainder.
    """
    n = len(stages)
    if total <= 0:
        return n
    if first_share is None or n == 1:
        return min(n, 1 + step * n // total)
    f = step / total
    if f < first_share:
        return 1
    return min(n, 2 + int((f - first_share) / (1.0 - first_share) * (n - 1)))


@dataclass
class Sample:
    k_fix: np.ndarray        # undersampled coil k-space (n_c, H, W)
    k_mov: np.ndarray
    img_fix: np.ndarray      # fully sampled coil images (n_c, H, W)
    img_mov: np.ndarray
    mask_fix: np.ndarray
    mask_mov: np.ndarray
    box: tuple               # (y0, y1, x0, x1), end exclusive
    field: np.ndarray


def box_extent(mask, margin):
    box = motion.bounding_box(mask, margin)
    ys, xs = np.nonzero(box)
    return int(ys.min()), int(ys.max()) + 1, int(xs.min()), int(xs.max()) + 1


def acquire(fix, mov, mask_fix, mask_mov, u, kind, R, n_coils, rng, box_margin=10, coil_seed=None):
    """Coil-weight, Fourier transform and undersample a fix/mov image pair.

    The two images get the sampling patterns of consecutive frames.
    """
    size = fix.shape
    scale = max(np.abs(fix).max(), np.abs(mov).max())
    fix, mov = fix / scale, mov / scale
    if coil_seed is None:
        coil_seed = int(rng.integers(2 ** 31))
    coils = kspace.synthetic_coil_maps(size, n_coils, seed=coil_seed)
    pat_seed = int(rng.integers(2 ** 31))
    frame = int(rng.integers(0, 16))
    k_full_fix = kspace.fft2c(coils * fix[None])
    k_full_mov = kspace.fft2c(coils * mov[None])
    p_fix = sampling.make_pattern(kind, R, size, frame_index=frame, seed=pat_seed)
    p_mov = sampling.make_pattern(kind, R, size, frame_index=frame + 1, seed=pat_seed)
    return Sample(
        k_fix=sampling.undersample(k_full_fix, p_fix),
        k_mov=sampling.undersample(k_full_mov, p_mov),
        img_fix=coils * fix[None],
        img_mov=coils * mov[None],
        mask_fix=mask_fix,
        mask_mov=mask_mov,
        box=box_extent(mask_fix, box_margin) if mask_fix is not None else (0, size[0], 0, size[1]),
        field=u,
    )


def to_tensors(samples):
    x = prepare_input(np.stack([s.k_fix for s in samples]), np.stack([s.k_mov for s in samples]))
    fix = torch.as_tensor(np.stack([s.img_fix for s in samples]), dtype=torch.complex64)
    mov = torch.as_tensor(np.stack([s.img_mov for s in samples]), dtype=torch.complex64)
    box = losses.box_mask([s.box for s in samples], fix.shape[-2:])
    return x, fix, mov, box


def make_batch(rng, step, tcfg, mcfg):
    kind = tcfg.trajectories[int(rng.integers(len(tcfg.trajectories)))]
    R = tcfg.accelerations[int(rng.integers(len(tcfg.accelerations)))]
    n_stage = stage_for_step(step, tcfg.steps, tcfg.stages, tcfg.first_stage_share)
    size = mcfg.input_size[0]
    samples = []
    for _ in range(tcfg.batch):
        stage = tcfg.stages[int(rng.integers(n_stage))]
        pair = make_pair(rng, stage, size, tcfg)
        coil_seed = None if tcfg.coil_seed < 0 else tcfg.coil_seed
        samples.append(acquire(*pair, kind, R, mcfg.n_coils, rng, tcfg.box_margin, coil_seed))
    return samples, kind, R


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

LOG_FIELDS = ["step", "total", "translation"]


def _log_fields(levels):
    out = list(LOG_FIELDS)
    for i in range(1, levels + 1):
        out += [f"photo{i}", f"kdc{i}", f"smooth{i}"]
    return out + ["lr", "R", "trajectory"]


def train(mcfg=None, tcfg=None, log_path=None, model=None, progress=None):
    """Run the training loop; returns ``(model, rows)``.

    ``rows`` holds one dict per step with every loss term, the learning rate,
    the acceleration and the trajectory kind. With ``log_path`` the rows are
    also written as CSV. Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    mcfg = (mcfg or ModelConfig()).validate()
    tcfg = (tcfg or TrainConfig()).validate()
    if mcfg.input_size[0] != mcfg.input_size[1]:
        raise ValueError("training phantoms are square")
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    model = model or build_model(mcfg, seed=tcfg.seed)
    torch.manual_seed(tcfg.seed)
    rng = np.random.default_rng(tcfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(tcfg.steps, 1))
    fields = _log_fields(mcfg.levels)
    fh = writer = None
    if log_path:
        fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
    rows = []
    model.train()
    try:
        for step in range(tcfg.steps):
            samples, kind, R = make_batch(rng, step, tcfg, mcfg)
            x, fix, mov, box = to_tensors(samples)
            out = model(x)
            loss, parts = losses.total_loss(out, fix, mov, box, tcfg.alpha, tcfg.beta, tcfg.gamma)
            if not math.isfinite(parts["total"]):
                raise TrainingDiverged(step, parts["total"])
            lr = opt.param_groups[0]["lr"]
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            row = {"step": step, **parts, "lr": lr, "R": R, "trajectory": kind}
            rows.append(row)
            if writer:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
            if progress:
                progress(row)
    finally:
        if fh:
            fh.close()
    model.eval()
    return model, rows


# --------------------------------------------------------------------------
# checkpoints and inference
# --------------------------------------------------------------------------

def save_checkpoint(directory, model):
    """Parameters and buffers as a CXA bundle plus ``config.txt``."""
    os.makedirs(directory, exist_ok=True)
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    io.save_bundle(directory, tensors)
    model.cfg.save(os.path.join(directory, "config.txt"))


def load_checkpoint(directory):
    cfg_path = os.path.join(directory, "config.txt")
    if not os.path.exists(cfg_path):
        raise FileNotFoundError(f"no checkpoint at {directory}")
    cfg = ModelConfig.load(cfg_path)
    model = build_model(cfg)
    state = {k: torch.as_tensor(v) for k, v in io.load_bundle(directory).items()}
    model.load_state_dict(state)
    model.eval()
    return model


def predict(model, k_fix, k_mov):
    """Inference-mode forward; returns ``(fields, translation)`` as numpy arrays for one pair."""
    model.eval()
    with torch.no_grad():
        out = model(prepare_input(k_fix, k_mov))
    return [u[0].double().numpy() for u in out["fields"]], out["translation"][0].double().numpy()


def config_dict(tcfg):
    d = asdict(tcfg)
    for k in ("accelerations", "trajectories", "stages"):
        d[k] = list(d[k])
    return d


# --------------------------------------------------------------------------
# post-training probes
# --------------------------------------------------------------------------

def box_mean(u, box):
    y0, y1, x0, x1 = box
    return u[:, y0:y1, x0:x1].reshape(2, -1).mean(axis=1)


def translation_probe(model, shifts, accelerations, trajectories=("cartesian", "radial"), seed=123, coil_seed=0):
    """Recover known global shifts of fresh phantoms; one row per (shift, R, kind).

    The estimate is the finest field averaged over the heart box.
    ``coil_seed=None`` draws a new receive array for every phantom.
    """
    cfg = model.cfg
    size = cfg.input_size[0]
    rows = []
    rng = np.random.default_rng(seed)
    for t in shifts:
        pcfg = random_phantom(rng, size)
        u = motion.constant_field(t, (size, size))
        mov, fix, mask_fix, mask_mov = motion.render_deformed(pcfg, u, base_phase=0.0)
        cs = int(rng.integers(2 ** 31)) if coil_seed is None else coil_seed
        for kind in trajectories:
            for R in accelerations:
                s = acquire(fix, mov, mask_fix, mask_mov, u, kind, R, cfg.n_coils,
                            np.random.default_rng([seed, int(R * 10)]), coil_seed=cs)
                fields, ut = predict(model, s.k_fix, s.k_mov)
                est = box_mean(fields[-1], s.box)
                rows.append({"tx": float(t[0]), "ty": float(t[1]), "R": R, "trajectory": kind,
                             "est_x": float(est[0]), "est_y": float(est[1]),
                             "error": float(np.hypot(*(est - np.asarray(t, float)))),
                             "head_x": float(ut[0]), "head_y": float(ut[1])})
    return rows


def identical_probe(model, n=4, accelerations=(1,), kind="cartesian", seed=321, coil_seed=0):
    """Mean ``|u|`` of the finest field when both inputs are the same k-space."""
    cfg = model.cfg
    size = cfg.input_size[0]
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n):
        pcfg = random_phantom(rng, size)
        img = motion.phantom_cine(pcfg, n_frames=2, pairs=[]).frames[0]
        zero = np.zeros((2, size, size))
        for R in accelerations:
            s = acquire(img, img, None, None, zero, kind, R, cfg.n_coils, rng, box_margin=0, coil_seed=coil_seed)
            fields, _ = predict(model, s.k_fix, s.k_fix)
            vals.append(float(np.hypot(*fields[-1]).mean()))
    return float(np.mean(vals))
