import dataclasses
import json
import math

import pytest
import torch

from linkmark import training as T
from linkmark.config import RunConfig
from linkmark.distortion import DistortionSeverity

from helpers import textured_cover

torch.set_num_threads(1)


def quick_config(**overrides):
    base = dict(image_size=64, message_length=16, batch_size=2, total_steps=8,
                ramp_end=4, base_width=8, seed=0, checkpoint_every=4)
    base.update(overrides)
    return RunConfig(**base)


def covers(n=4, size=64):
    return [textured_cover(size, s) for s in range(n)]


# --- weights / curriculum -------------------------------------------------------


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        T.LossWeights(message=0.0)
    with pytest.raises(ValueError):
        T.LossWeights(l2=-1.0)


def test_curriculum_step_zero():
    sched = T.CurriculumSchedule(ramp_end=100)
    weights, severity = T.curriculum(0, sched)
    assert weights.l2 == 0.0 and weights.jnd == 0.0
    assert weights.perceptual == 0.0 and weights.critic == 0.0
    assert weights.message == sched.final_weights.message  # never ramps
    assert severity == DistortionSeverity.zero()


def test_curriculum_at_ramp_end():
    sched = T.CurriculumSchedule(ramp_end=100)
    weights, severity = T.curriculum(100, sched)
    assert weights.l2 == sched.final_weights.l2
    assert severity.noise == 1.0 and severity.jpeg == 1.0
    assert severity.perspective == 0.5  # half-rate ramp


def test_curriculum_saturates():
    sched = T.CurriculumSchedule(ramp_end=100)
    weights, severity = T.curriculum(1000, sched)
    assert severity.perspective == 1.0
    assert weights == sched.final_weights


def test_curriculum_monotone():
    sched = T.CurriculumSchedule(ramp_end=50)
    last_sev, last_w = -1.0, -1.0
    for step in range(0, 200, 7):
        weights, severity = T.curriculum(step, sched)
        assert severity.noise >= last_sev and weights.l2 >= last_w
        last_sev, last_w = severity.noise, weights.l2
    with pytest.raises(ValueError):
        T.curriculum(-1, sched)


def test_curriculum_respects_per_op_scales():
    sched = T.CurriculumSchedule(
        ramp_end=10, severity_scales=DistortionSeverity(light=0.0, jpeg=0.5))
    _, severity = T.curriculum(100, sched)
    assert severity.light == 0.0
    assert severity.jpeg == 0.5
    assert severity.noise == 1.0


# --- total loss ------------------------------------------------------------------


def parts(**over):
    base = {n: torch.tensor(1.0) for n in T.LOSS_PART_NAMES}
    base.update({k: torch.tensor(v) for k, v in over.items()})
    return base


def test_total_loss_message_only():
    w = T.LossWeights(l2=0, jnd=0, perceptual=0, message=1.0, critic=0)
    total, logged = T.total_loss(parts(message=0.73), w)
    assert abs(total.item() - 0.73) < 1e-6
    assert logged["message"] == pytest.approx(0.73)


def test_total_loss_linearity():
    w1 = T.LossWeights(1.0, 1.0, 1.0, 1.0, 1.0)
    w2 = T.LossWeights(2.0, 2.0, 2.0, 2.0, 2.0)
    p = parts(l2=0.3, jnd=0.1, perceptual=0.2, message=0.5, critic=0.05)
    t1, _ = T.total_loss(p, w1)
    t2, _ = T.total_loss(p, w2)
    assert abs(t2.item() - 2 * t1.item()) < 1e-9


def test_total_loss_rejects_non_finite_with_name():
    w = T.LossWeights()
    with pytest.raises(T.NonFiniteLossError) as err:
        T.total_loss(parts(perceptual=float("nan")), w)
    assert err.value.term == "perceptual"


# --- train step / fit --------------------------------------------------------------


def test_train_step_decomposition_invariant():
    cfg = quick_config()
    state = T.create_train_state(cfg)
    batch = torch.stack(covers(2))
    for _ in range(4):
        rec = T.train_step(state, batch)
        w = rec["weights"]
        expected = (w["l2"] * rec["l2"] + w["jnd"] * rec["jnd"]
                    + w["perceptual"] * rec["perceptual"]
                    + w["message"] * rec["message"] + w["critic"] * rec["critic"])
        assert abs(rec["total"] - expected) < 1e-6


def test_train_step_increments_and_severity_logged():
    cfg = quick_config()
    state = T.create_train_state(cfg)
    batch = torch.stack(covers(2))
    rec = T.train_step(state, batch)
    assert rec["step"] == 1 and state.step == 1
    assert set(rec["severity"]) == set(dataclasses.asdict(DistortionSeverity()))


def test_gradient_flow_at_step_zero():
    cfg = quick_config()
    state = T.create_train_state(cfg)
    batch = torch.stack(covers(2))
    T.train_step(state, batch)
    enc_norm = sum(p.grad.abs().sum().item()
                   for p in state.encoder.parameters() if p.grad is not None)
    dec_norm = sum(p.grad.abs().sum().item()
                   for p in state.decoder.parameters() if p.grad is not None)
    assert enc_norm > 0 and dec_norm > 0


def test_fixed_batch_message_loss_decreases():
    cfg = quick_config(total_steps=150, ramp_end=75, message_length=16,
                       sev_perspective=0, sev_noise=0, sev_motion_blur=0,
                       sev_defocus_blur=0, sev_color=0, sev_light=0, sev_jpeg=0)
    state = T.create_train_state(cfg)
    batch = torch.stack(covers(2))
    bits = torch.randint(0, 2, (2, 16), generator=torch.Generator().manual_seed(3)).float()
    first = T.train_step(state, batch, bits)
    last = None
    for _ in range(149):
        last = T.train_step(state, batch, bits)
    assert last["message"] < first["message"]
    assert last["bit_accuracy"] >= 0.9


def test_two_runs_same_seed_identical_traces(tmp_path):
    cfg = quick_config(total_steps=6)
    cs = covers(3)
    traces = []
    for run in range(2):
        recs = []
        T.fit(cfg, cs, out_dir=tmp_path / f"run{run}", on_step=recs.append)
        traces.append([r["total"] for r in recs])
    assert traces[0] == traces[1]
    logs = [(tmp_path / f"run{r}" / "metrics.jsonl").read_text() for r in range(2)]
    assert logs[0] == logs[1]


def test_resume_matches_uninterrupted(tmp_path):
    cfg = quick_config(total_steps=8, checkpoint_every=4)
    cs = covers(3)

    straight = []
    T.fit(cfg, cs, out_dir=tmp_path / "straight", on_step=straight.append)

    resumed = []
    state = T.resume_train_state(tmp_path / "straight" / "ckpt_000004.pt")
    assert state.step == 4
    T.fit(cfg, cs, out_dir=tmp_path / "resumed", state=state,
          on_step=resumed.append)
    tail = [r["total"] for r in straight[4:]]
    assert [r["total"] for r in resumed] == tail


def test_metrics_log_is_json_lines(tmp_path):
    cfg = quick_config(total_steps=3)
    T.fit(cfg, covers(2), out_dir=tmp_path)
    lines = (tmp_path / "metrics.jsonl").read_text().strip().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[-1])
    assert rec["step"] == 3
    for name in T.LOSS_PART_NAMES:
        assert name in rec
    assert "severity" in rec and "weights" in rec


def test_checkpoints_written_periodically(tmp_path):
    cfg = quick_config(total_steps=8, checkpoint_every=4)
    T.fit(cfg, covers(2), out_dir=tmp_path)
    assert (tmp_path / "ckpt_000004.pt").exists()
    assert (tmp_path / "ckpt_000008.pt").exists()
    assert (tmp_path / "ckpt_final.pt").exists()
