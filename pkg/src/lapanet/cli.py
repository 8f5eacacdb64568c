"""Command-line interface.

Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""
import argparse
import functools
import os
import sys

import numpy as np

from . import io, kspace, lap, metrics, motion, sampling

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

DEFAULTS = {
    "size": 64,
    "frames": 2,
    "motion": "cine",
    "contraction": 0.10,
    "coils": 4,
    "trajectory": "cartesian",
    "trajectories": ["cartesian"],
    "accelerations": [1, 2, 4, 8, 31.2, 52, 78, 104],
    "R": 1,
    "method": "lap",
    "fix": 0,
    "mov": 1,
    "pairs": 10,
    "scene": "",
    "checkpoint": "",
    "steps": 2000,
    "batch": 8,
    "lr": 1e-3,
    "weight_decay": 1e-3,
    "train_accelerations": [1, 2, 4, 8],
    "train_trajectories": ["cartesian", "radial"],
    "stages": ["translation", "gaussian"],
    "multiplier": 0.25,
    "ig_steps": 100,
    "spacing_mm": 1.9,
    "box_margin": 10,
}


class ValidationError(ValueError):
    pass


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        if not os.path.exists(args.config):
            raise ValidationError(f"config file {args.config} does not exist")
        cfg.update(io.read_kv(args.config))
    for key, val in vars(args).items():
        if val is not None and key not in ("command", "config", "func"):
            cfg[key] = val
    for key in ("trajectories", "accelerations", "train_accelerations", "train_trajectories", "stages"):
        cfg[key] = _as_list(cfg[key])
    if not cfg["accelerations"]:
        raise ValidationError("acceleration list is empty")
    if cfg["size"] % 2:
        raise ValidationError("size must be even")
    if cfg.get("seed") is None:
        cfg["seed"] = 0
    for key in ("scene", "checkpoint"):
        if cfg[key] and not os.path.exists(cfg[key]):
            raise ValidationError(f"{key} path {cfg[key]} does not exist")
    return cfg


# --------------------------------------------------------------------------
# scenes
# --------------------------------------------------------------------------

def phantom_config(cfg):
    return motion.PhantomConfig(size=int(cfg["size"]), motion=cfg["motion"], contraction=float(cfg["contraction"]),
                                spacing_mm=float(cfg["spacing_mm"]), seed=int(cfg["seed"]))


def make_scene(cfg, n_frames=None):
    n = int(n_frames or cfg["frames"])
    if n < 2:
        raise ValidationError("a scene needs at least 2 frames")
    pcfg = phantom_config(cfg)
    pcfg.validate()
    return motion.phantom_cine(pcfg, n_frames=n)


def save_scene(directory, scene):
    os.makedirs(directory, exist_ok=True)
    for i, (frame, mask) in enumerate(zip(scene.frames, scene.masks)):
        io.save_cxa(os.path.join(directory, f"frame_{i}.cxa"), frame)
        io.save_cxa(os.path.join(directory, f"mask_{i}.cxa"), mask.astype(np.int32))
        io.write_pgm(os.path.join(directory, f"frame_{i}.pgm"), np.abs(frame))
    for (i, j), u in sorted(scene.fields.items()):
        io.save_cxa(os.path.join(directory, f"field_{i}_{j}.cxa"), u)
    motion.write_masks_csv(os.path.join(directory, "masks.csv"), scene.masks)


def load_scene(directory):
    frames, masks, fields = [], [], {}
    i = 0
    while os.path.exists(os.path.join(directory, f"frame_{i}.cxa")):
        frames.append(io.load_cxa(os.path.join(directory, f"frame_{i}.cxa")))
        masks.append(io.load_cxa(os.path.join(directory, f"mask_{i}.cxa")))
        i += 1
    if not frames:
        raise ValidationError(f"no frames found in {directory}")
    for a in range(len(frames)):
        for b in range(len(frames)):
            path = os.path.join(directory, f"field_{a}_{b}.cxa")
            if os.path.exists(path):
                fields[(a, b)] = io.load_cxa(path)
    return motion.PhantomScene(frames=frames, masks=masks, fields=fields)


def get_scene(cfg, n_frames=None):
    if cfg["scene"]:
        return load_scene(cfg["scene"])
    return make_scene(cfg, n_frames)


def check_acceleration(cfg, R):
    if not any(abs(float(R) - float(r)) < 1e-9 for r in cfg["accelerations"]):
        raise ValidationError(f"R={R} is not in the configured grid {cfg['accelerations']}")


def acquire_pair(cfg, scene, fix, mov, kind, R):
    """Coil k-spaces of a frame pair, undersampled with the patterns of their frame indices."""
    shape = scene.frames[fix].shape
    coils = kspace.synthetic_coil_maps(shape, int(cfg["coils"]), seed=int(cfg["seed"]))
    out = []
    for idx in (fix, mov):
        k = kspace.fft2c(coils * scene.frames[idx][None])
        pat = sampling.make_pattern(kind, float(R), shape, frame_index=idx, seed=int(cfg["seed"]))
        out.append((sampling.undersample(k, pat), pat))
    return coils, out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_phantom(cfg, out):
    scene = make_scene(cfg)
    save_scene(out, scene)
    print(f"wrote {len(scene.frames)} frames and {len(scene.fields)} fields to {out}")


def cmd_undersample(cfg, out):
    scene = get_scene(cfg)
    R = cfg["R"]
    check_acceleration(cfg, R)
    kind = cfg["trajectory"]
    shape = scene.frames[0].shape
    coils = kspace.synthetic_coil_maps(shape, int(cfg["coils"]), seed=int(cfg["seed"]))
    os.makedirs(out, exist_ok=True)
    io.save_cxa(os.path.join(out, "coils.cxa"), coils)
    patterns, rows = [], []
    for i, frame in enumerate(scene.frames):
        k = kspace.fft2c(coils * frame[None])
        pat = sampling.make_pattern(kind, float(R), shape, frame_index=i, seed=int(cfg["seed"]))
        ku = sampling.undersample(k, pat)
        io.save_cxa(os.path.join(out, f"kspace_{i}.cxa"), ku)
        zf = np.sqrt(np.sum(np.abs(sampling.zero_filled(ku)) ** 2, axis=0))
        io.write_pgm(os.path.join(out, f"zerofilled_{i}.pgm"), zf)
        patterns.append(pat)
        rep = pat.acceleration()
        rows.append({"frame": i, "trajectory": kind, "R": float(R), "R_effective": float(rep.R),
                     "full_count": rep.full_count, "frame_count": rep.frame_count})
    sampling.write_patterns_csv(patterns, os.path.join(out, "patterns.csv"))
    metrics.write_rows(os.path.join(out, "undersample.csv"), rows)
    print(f"R={R} ({kind}): {rows[0]['frame_count']} of {rows[0]['full_count']} per frame, effective R={rows[0]['R_effective']:.4g}")


@functools.lru_cache(maxsize=4)
def _load_model(path):
    from . import train
    return train.load_checkpoint(path)


def _lapanet_field(cfg, k_fix, k_mov):
    from . import train
    path = cfg["checkpoint"]
    if not path:
        raise ValidationError("method lapanet requires --checkpoint")
    model = _load_model(path)
    if model.cfg.n_coils != k_fix.shape[0]:
        raise ValidationError(f"checkpoint expects {model.cfg.n_coils} coils, data has {k_fix.shape[0]}")
    fields, _ = train.predict(model, k_fix, k_mov)
    return fields[-1]


def register_pair(cfg, scene, fix, mov, kind, R, method, cell_dir=None):
    """Undersample, register, warp and score one pair; returns a result row."""
    coils, ((k_fix, p_fix), (k_mov, _)) = acquire_pair(cfg, scene, fix, mov, kind, R)
    row = {"method": method, "trajectory": kind, "R": float(R), "R_effective": float(p_fix.acceleration().R),
           "fix": fix, "mov": mov, "status": "ok"}
    try:
        if method == "lap":
            u = lap.lap_register_multiscale(k_fix, k_mov, coils=coils)
        elif method == "lapanet":
            u = _lapanet_field(cfg, k_fix, k_mov)
        else:
            raise ValidationError(f"unknown method {method!r}")
    except lap.InsufficientSignal:
        row["status"] = "insufficient_signal"
        u = None
    f_img, m_img = scene.frames[fix], scene.frames[mov]
    f_mask, m_mask = scene.masks[fix], scene.masks[mov]
    if u is None:
        u_eval = np.zeros((2,) + f_img.shape)
    else:
        u_eval = u
    warped = motion.warp_bilinear(m_img, u_eval)
    warped_mask = motion.warp_mask(m_mask, u_eval)
    res = metrics.evaluate(f_img, warped, f_mask, warped_mask, motion.LABELS, float(cfg["spacing_mm"]))
    row.update(res.row())
    truth = scene.fields.get((fix, mov))
    if truth is not None:
        box = motion.bounding_box(f_mask, int(cfg["box_margin"]))
        row["epe"] = float(motion.endpoint_error(u_eval, truth)[box].mean())
    if u is None:
        for k in list(row):
            if k not in ("method", "trajectory", "R", "R_effective", "fix", "mov", "status"):
                row[k] = float("nan")
    if cell_dir:
        os.makedirs(cell_dir, exist_ok=True)
        io.save_cxa(os.path.join(cell_dir, "field.cxa"), u_eval)
        io.write_pgm(os.path.join(cell_dir, "error.pgm"), np.abs(np.abs(f_img) - np.abs(warped)))
        rgb, mag = motion.flow_to_color(u_eval)
        io.write_ppm(os.path.join(cell_dir, "flow.ppm"), rgb, comment=f"max displacement {mag:.6g} px")
        metrics.write_rows(os.path.join(cell_dir, "flow.csv"), [{"max_displacement_px": mag}])
    return row


def cmd_register(cfg, out):
    R = cfg["R"]
    check_acceleration(cfg, R)
    scene = get_scene(cfg)
    fix, mov = int(cfg["fix"]), int(cfg["mov"])
    n = len(scene.frames)
    if not (0 <= fix < n and 0 <= mov < n):
        raise ValidationError(f"pair ({fix}, {mov}) outside the {n}-frame scene")
    row = register_pair(cfg, scene, fix, mov, cfg["trajectory"], R, cfg["method"], cell_dir=out)
    metrics.write_rows(os.path.join(out, "metrics.csv"), [row])
    print(f"{row['status']}: nrmse={row['nrmse']:.4g} epe={row.get('epe', float('nan')):.4g}")


def sweep_pairs(n_pairs, n_frames):
    pairs = [(i, j) for i in range(n_frames) for j in range(n_frames) if i != j]
    return pairs[:n_pairs]


def summarize(rows, keys=("nrmse", "epe")):
    """Per (trajectory, R) mean and population std of each metric over the ok rows."""
    groups = {}
    for r in rows:
        groups.setdefault((r["trajectory"], r["R"]), []).append(r)
    out = []
    for (kind, R), rs in sorted(groups.items()):
        ok = [r for r in rs if r["status"] == "ok"]
        s = {"trajectory": kind, "R": R, "n": len(rs), "n_ok": len(ok)}
        for k in keys:
            vals = np.array([r[k] for r in ok if k in r], dtype=float)
            s[f"{k}_mean"] = float(vals.mean()) if vals.size else float("nan")
            s[f"{k}_std"] = float(vals.std()) if vals.size else float("nan")
        out.append(s)
    return out


def cmd_sweep(cfg, out):
    n_pairs = int(cfg["pairs"])
    if n_pairs < 1:
        raise ValidationError("pair list is empty")
    n_frames = int(cfg["frames"])
    while n_frames * (n_frames - 1) < n_pairs:
        n_frames += 1
    scene = get_scene(cfg, n_frames)
    pairs = sweep_pairs(n_pairs, len(scene.frames))
    if len(pairs) < n_pairs:
        raise ValidationError(f"scene has only {len(pairs)} ordered pairs")
    rows = []
    for kind in cfg["trajectories"]:
        for R in cfg["accelerations"]:
            for fix, mov in pairs:
                rows.append(register_pair(cfg, scene, fix, mov, kind, R, cfg["method"]))
    os.makedirs(out, exist_ok=True)
    fields = list(dict.fromkeys(k for r in rows for k in r))
    metrics.write_rows(os.path.join(out, "sweep.csv"), rows, fields)
    summary = summarize(rows)
    metrics.write_rows(os.path.join(out, "summary.csv"), summary)
    for s in summary:
        print(f"{s['trajectory']} R={s['R']:g}: nrmse {s['nrmse_mean']:.4g} +- {s['nrmse_std']:.4g} ({s['n_ok']}/{s['n']} ok)")


def cmd_train(cfg, out):
    from . import train
    from .model import ModelConfig
    mcfg = ModelConfig(input_size=(int(cfg["size"]), int(cfg["size"])), n_coils=int(cfg["coils"]),
                       width_multiplier=float(cfg["multiplier"])).validate()
    tcfg = train.TrainConfig(steps=int(cfg["steps"]), batch=int(cfg["batch"]), lr=float(cfg["lr"]),
                             weight_decay=float(cfg["weight_decay"]),
                             accelerations=tuple(cfg["train_accelerations"]),
                             trajectories=tuple(cfg["train_trajectories"]), stages=tuple(cfg["stages"]),
                             seed=int(cfg["seed"])).validate()
    os.makedirs(out, exist_ok=True)
    model, rows = train.train(mcfg, tcfg, log_path=os.path.join(out, "log.csv"))
    train.save_checkpoint(os.path.join(out, "checkpoint"), model)
    if rows:
        print(f"trained {len(rows)} steps, final loss {rows[-1]['total']:.4g}")


def cmd_interpret(cfg, out):
    from . import nps, train
    from .model.ig import integrated_gradients
    if not cfg["checkpoint"]:
        raise ValidationError("interpret requires --checkpoint")
    steps = int(cfg["ig_steps"])
    if steps < 1:
        raise ValidationError("ig_steps must be >= 1")
    model = train.load_checkpoint(cfg["checkpoint"])
    cfg = dict(cfg, coils=model.cfg.n_coils, size=model.cfg.input_size[0])
    scene = get_scene(cfg)
    R = cfg["R"]
    check_acceleration(cfg, R)
    _, ((k_fix, p_fix), (k_mov, _)) = acquire_pair(cfg, scene, int(cfg["fix"]), int(cfg["mov"]),
                                                   cfg["trajectory"], R)
    att = integrated_gradients(model, k_fix, k_mov, steps=steps)
    os.makedirs(out, exist_ok=True)
    for name, h in (("fix", att.fix), ("mov", att.mov)):
        m = max(np.abs(h).max(), 1e-300)
        io.write_pgm(os.path.join(out, f"heatmap_{name}.pgm"), io.to_uint8(h, -m, m))
    summary = {"steps": steps, "sum_attributions": att.total, "output_difference": att.delta,
               "completeness_gap": att.gap,
               "low_frequency_fix": nps.low_frequency_fraction(att.fix),
               "low_frequency_mov": nps.low_frequency_fraction(att.mov)}
    metrics.write_rows(os.path.join(out, "ig.csv"), [summary])
    lines = p_fix.lines if p_fix.kind == sampling.CARTESIAN else None
    metrics.write_rows(os.path.join(out, "profiles.csv"),
                       nps.analysis_rows({"fix": att.fix, "mov": att.mov}, lines))
    nf = nps.noise_power_spectrum([att.fix])
    nm = nps.noise_power_spectrum([att.mov])
    metrics.write_rows(os.path.join(out, "nps.csv"),
                       [{"radius": r, "nps_fix": float(a), "nps_mov": float(b)} for r, (a, b) in enumerate(zip(nf, nm))])
    print(f"completeness gap {att.gap:.3%}, low-frequency share fix {summary['low_frequency_fix']:.2f}"
          f" mov {summary['low_frequency_mov']:.2f}")


def cmd_selftest(cfg, out):
    from . import selftest
    checks = selftest.run(seed=int(cfg["seed"]))
    for c in checks:
        print(c.line())
    if out:
        os.makedirs(out, exist_ok=True)
        metrics.write_rows(os.path.join(out, "selftest.csv"),
                           [{"check": c.name, "value": c.value, "tol": c.tol, "passed": c.passed} for c in checks])
    if not all(c.passed for c in checks):
        raise RuntimeError("selftest failed")


COMMANDS = {
    "phantom": (cmd_phantom, "generate a cine phantom scene"),
    "undersample": (cmd_undersample, "undersample every frame of a scene"),
    "register": (cmd_register, "register one frame pair and score it"),
    "sweep": (cmd_sweep, "register over the acceleration x trajectory x pair grid"),
    "train": (cmd_train, "train the network on the synthetic curriculum"),
    "interpret": (cmd_interpret, "integrated gradients and spectral analysis"),
    "selftest": (cmd_selftest, "run the oracle suites"),
}


def _common(suppress):
    p = argparse.ArgumentParser(add_help=False)
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--out", default=default)
    p.add_argument("--config", default=default)
    return p


def build_parser():
    # global flags are accepted before or after the subcommand
    parser = argparse.ArgumentParser(prog="lapanet", parents=[_common(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, parents=[_common(True)])
        if name in ("phantom", "undersample", "register", "sweep", "interpret"):
            p.add_argument("--size", type=int)
            p.add_argument("--frames", type=int)
            p.add_argument("--motion", choices=["cine", "translation", "static"])
            p.add_argument("--scene")
        if name in ("undersample", "register", "sweep", "interpret"):
            p.add_argument("--coils", type=int)
            p.add_argument("--trajectory", choices=["cartesian", "radial"])
            p.add_argument("--R", type=float)
        if name in ("register", "sweep", "interpret"):
            p.add_argument("--checkpoint")
            p.add_argument("--fix", type=int)
            p.add_argument("--mov", type=int)
        if name in ("register", "sweep"):
            p.add_argument("--method", choices=["lap", "lapanet"])
        if name == "sweep":
            p.add_argument("--pairs", type=int)
        if name == "train":
            p.add_argument("--steps", type=int)
            p.add_argument("--batch", type=int)
            p.add_argument("--lr", type=float)
            p.add_argument("--size", type=int)
            p.add_argument("--coils", type=int)
        if name == "interpret":
            p.add_argument("--ig-steps", dest="ig_steps", type=int)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION
    command = args.command
    try:
        cfg = load_config(args)
        out = cfg.get("out") or os.path.join("out", command)
        COMMANDS[command][0](cfg, out)
    except (ValidationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
