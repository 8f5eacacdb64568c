import numpy as np
import pytest
import torch

from lapanet import train
from lapanet.model import build_model, desk_config


def small():
    return desk_config(n_coils=2, size=32)


def quick(**kw):
    base = dict(steps=3, batch=2, accelerations=(1, 4), seed=5)
    base.update(kw)
    return train.TrainConfig(**base)


def test_zero_learning_rate_keeps_parameters():
    model = build_model(small(), seed=1)
    before = {k: v.clone() for k, v in model.named_parameters()}
    train.train(small(), quick(lr=0.0), model=model)
    assert all(torch.equal(before[k], v) for k, v in model.named_parameters())


def test_same_seed_same_curve(tmp_path):
    _, a = train.train(small(), quick(), log_path=tmp_path / "a.csv")
    _, b = train.train(small(), quick(), log_path=tmp_path / "b.csv")
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    _, c = train.train(small(), quick(seed=6))
    assert [r["total"] for r in a] != [r["total"] for r in c]


def test_log_columns(tmp_path):
    train.train(small(), quick(steps=2), log_path=tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0].split(",") == train._log_fields(4)
    assert len(lines) == 3
    assert lines[1].split(",")[-1] in ("cartesian", "radial")


def test_divergence_reports_step(monkeypatch):
    real = train.losses.total_loss
    calls = []

    def poisoned(*args, **kw):
        loss, parts = real(*args, **kw)
        calls.append(1)
        if len(calls) == 2:
            parts["total"] = float("nan")
        return loss, parts
    monkeypatch.setattr(train.losses, "total_loss", poisoned)
    with pytest.raises(train.TrainingDiverged) as err:
        train.train(small(), quick())
    assert err.value.step == 1


def test_config_validation():
    with pytest.raises(ValueError):
        train.TrainConfig(accelerations=()).validate()
    with pytest.raises(ValueError):
        train.TrainConfig(trajectories=("spiral",)).validate()
    with pytest.raises(ValueError):
        train.TrainConfig(stages=("warp",)).validate()
    with pytest.raises(ValueError):
        train.TrainConfig(beta=-1).validate()
    with pytest.raises(ValueError):
        train.TrainConfig(first_stage_share=1.0).validate()
    assert train.TrainConfig(accelerations=4).accelerations == (4,)


def test_stage_schedule():
    stages = ("translation", "gaussian")
    got = [train.stage_for_step(s, 10, stages) for s in range(10)]
    assert got == [1] * 5 + [2] * 5
    assert train.stage_for_step(0, 9, ("translation",)) == 1


def test_stage_schedule_first_share():
    two = ("translation", "gaussian")
    assert [train.stage_for_step(s, 8, two, 0.75) for s in range(8)] == [1] * 6 + [2] * 2
    three = ("translation", "gaussian", "cine")
    assert [train.stage_for_step(s, 8, three, 0.5) for s in range(8)] == [1] * 4 + [2] * 2 + [3] * 2


@pytest.mark.parametrize("stage", train.STAGES)
def test_pairs_are_consistent(stage):
    rng = np.random.default_rng(0)
    fix, mov, mask_fix, mask_mov, u = train.make_pair(rng, stage, 32)
    assert fix.shape == mov.shape == mask_fix.shape == (32, 32)
    assert u.shape == (2, 32, 32)
    assert np.abs(u).max() > 0


def test_translation_pair_bounded():
    rng = np.random.default_rng(1)
    for _ in range(5):
        *_, u = train.translation_pair(rng, 32, max_shift=2.0)
        assert np.abs(u).max() <= 2.0


def test_acquire_normalizes_and_boxes():
    rng = np.random.default_rng(2)
    fix, mov, mf, mm, u = train.make_pair(rng, "translation", 32)
    s = train.acquire(fix, mov, mf, mm, u, "cartesian", 4, 2, rng)
    assert s.k_fix.shape == s.img_fix.shape == (2, 32, 32)
    y0, y1, x0, x1 = s.box
    assert 0 <= y0 < y1 <= 32 and 0 <= x0 < x1 <= 32
    # unsampled lines are zero
    assert (np.abs(s.k_fix).sum(axis=(0, 2)) == 0).sum() > 0


def test_checkpoint_roundtrip(tmp_path):
    model = build_model(small(), seed=3).eval()
    train.save_checkpoint(tmp_path / "ck", model)
    back = train.load_checkpoint(tmp_path / "ck")
    assert back.cfg == model.cfg
    x = torch.randn(1, 8, 32, 32)
    with torch.no_grad():
        assert torch.equal(model(x)["fields"][-1], back(x)["fields"][-1])
    with pytest.raises(FileNotFoundError):
        train.load_checkpoint(tmp_path / "missing")


def test_probes_run():
    model = build_model(small(), seed=0)
    rows = train.translation_probe(model, [(1, 0)], (1,), ("cartesian",))
    assert len(rows) == 1 and rows[0]["error"] >= 0
    assert train.identical_probe(model, n=1) >= 0
