"""Joint optimization: five-term loss, linear curricula, alternating critic.

The loop follows the classic encode -> attack -> decode layout. Image
quality weights and distortion severities ramp linearly from zero; the
message weight stays at its final value from step 0 so the decoder always
receives signal, and the perspective severity ramps at half the generic
rate (warp is the attack the pipeline is most sensitive to).
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import torch

from . import dataio
from .config import RunConfig
from .distortion import DistortionRanges, DistortionSeverity, apply_distortion_chain
from .jnd import JNDLossConfig, jnd_loss, jnd_map
from .losses import PerceptualDistance, message_loss_from_logits, yuv_l2
from .networks import (Critic, Decoder, Encoder, build_models, gradient_penalty,
                       to_hwc, to_nchw)

LOSS_PART_NAMES = ("l2", "jnd", "perceptual", "message", "critic")


class NonFiniteLossError(RuntimeError):
    """A loss term went NaN/inf; carries the offending term's name."""

    def __init__(self, term: str, value: float):
        super().__init__(f"non-finite loss term {term!r}: {value}")
        self.term = term


@dataclass
class LossWeights:
    l2: float = 2.0
    jnd: float = 1.5
    perceptual: float = 1.5
    message: float = 1.5
    critic: float = 0.1

    def __post_init__(self):
        for name, value in dataclasses.asdict(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")
        if self.message <= 0:
            raise ValueError("message weight must stay positive")


@dataclass
class CurriculumSchedule:
    """Linear ramps: 0 at step 0, final value at ramp_end, constant after.

    Perspective severity ramps `perspective_multiplier` times slower than
    everything else. Per-op scales let ablations disable individual attacks.
    """

    ramp_end: int = 2500
    perspective_multiplier: float = 2.0
    final_weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    severity_final: float = 1.0
    severity_scales: DistortionSeverity = dataclasses.field(
        default_factory=DistortionSeverity)

    def __post_init__(self):
        if self.ramp_end < 1:
            raise ValueError("ramp_end must be >= 1")
        if self.perspective_multiplier < 1:
            raise ValueError("perspective_multiplier must be >= 1")

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "CurriculumSchedule":
        return cls(
            ramp_end=cfg.ramp_end,
            final_weights=LossWeights(cfg.lambda_l2, cfg.lambda_jnd,
                                      cfg.lambda_perceptual, cfg.lambda_message,
                                      cfg.lambda_critic),
            severity_final=cfg.severity_final,
            severity_scales=DistortionSeverity(
                perspective=cfg.sev_perspective, noise=cfg.sev_noise,
                motion_blur=cfg.sev_motion_blur, defocus_blur=cfg.sev_defocus_blur,
                color=cfg.sev_color, light=cfg.sev_light, jpeg=cfg.sev_jpeg),
        )


def curriculum(step: int, schedule: CurriculumSchedule
               ) -> tuple[LossWeights, DistortionSeverity]:
    """Loss weights and severities at a step; message weight never ramps."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    ramp = min(step / schedule.ramp_end, 1.0)
    persp = min(step / (schedule.perspective_multiplier * schedule.ramp_end), 1.0)
    fw = schedule.final_weights
    weights = LossWeights(l2=ramp * fw.l2, jnd=ramp * fw.jnd,
                          perceptual=ramp * fw.perceptual, message=fw.message,
                          critic=ramp * fw.critic)
    top = schedule.severity_final
    sc = schedule.severity_scales
    severity = DistortionSeverity(
        perspective=persp * top * sc.perspective,
        noise=ramp * top * sc.noise,
        motion_blur=ramp * top * sc.motion_blur,
        defocus_blur=ramp * top * sc.defocus_blur,
        color=ramp * top * sc.color,
        light=ramp * top * sc.light,
        jpeg=ramp * top * sc.jpeg,
    )
    return weights, severity


def total_loss(parts: dict, weights: LossWeights) -> tuple[torch.Tensor, dict]:
    """Weighted sum of the five parts; returns the unweighted parts too."""
    logged = {}
    for name in LOSS_PART_NAMES:
        value = parts[name]
        scalar = float(value.detach()) if torch.is_tensor(value) else float(value)
        if scalar != scalar or scalar in (float("inf"), float("-inf")):
            raise NonFiniteLossError(name, scalar)
        logged[name] = scalar
    total = (weights.l2 * parts["l2"] + weights.jnd * parts["jnd"]
             + weights.perceptual * parts["perceptual"]
             + weights.message * parts["message"]
             + weights.critic * parts["critic"])
    return total, logged


@dataclass
class TrainState:
    config: RunConfig
    encoder: Encoder
    decoder: Decoder
    critic: Critic
    opt_joint: torch.optim.Optimizer
    opt_critic: torch.optim.Optimizer
    rng: torch.Generator
    schedule: CurriculumSchedule
    perceptual: PerceptualDistance
    ranges: DistortionRanges
    step: int = 0


def create_train_state(cfg: RunConfig) -> TrainState:
    encoder, decoder, critic = build_models(cfg.message_length, cfg.image_size,
                                            cfg.base_width, seed=cfg.seed)
    opt_joint = torch.optim.Adam(
        list(encoder.parameters()) + list(decoder.parameters()),
        lr=cfg.learning_rate)
    opt_critic = torch.optim.Adam(critic.parameters(), lr=cfg.learning_rate)
    rng = torch.Generator().manual_seed(cfg.seed + 1)
    perceptual = PerceptualDistance(cfg.perceptual_weights or None)
    return TrainState(config=cfg, encoder=encoder, decoder=decoder, critic=critic,
                      opt_joint=opt_joint, opt_critic=opt_critic, rng=rng,
                      schedule=CurriculumSchedule.from_config(cfg),
                      perceptual=perceptual, ranges=cfg.distortion_ranges())


def random_bits(state: TrainState, n: int) -> torch.Tensor:
    return torch.randint(0, 2, (n, state.config.message_length),
                         generator=state.rng).to(torch.float32)


def attack_batch(encoded_hwc: torch.Tensor, severity: DistortionSeverity,
                 rng: torch.Generator, ranges: DistortionRanges) -> torch.Tensor:
    """Fresh random attack parameters per image, as in training."""
    return torch.stack([
        apply_distortion_chain(encoded_hwc[i], severity, rng, ranges)
        for i in range(encoded_hwc.shape[0])
    ])


def train_step(state: TrainState, covers: torch.Tensor,
               bits: Optional[torch.Tensor] = None) -> dict:
    """One critic update then one encoder/decoder update on a cover batch.

    covers: (B,H,W,3) in [0,1]. Fresh uniform-random bits are drawn per
    image unless given. Returns the metrics record for the step.
    """
    cfg = state.config
    weights, severity = curriculum(state.step, state.schedule)
    if bits is None:
        bits = random_bits(state, covers.shape[0])
    cover_nchw = to_nchw(covers)

    residual, encoded = state.encoder(cover_nchw, bits)

    critic_active = cfg.lambda_critic > 0
    if critic_active:
        fake = encoded.detach()
        for _ in range(cfg.n_critic):
            state.opt_critic.zero_grad(set_to_none=True)
            gap = state.critic(fake).mean() - state.critic(cover_nchw).mean()
            penalty = gradient_penalty(state.critic, cover_nchw, fake, state.rng)
            critic_objective = gap + cfg.gradient_penalty_coef * penalty
            critic_objective.backward()
            state.opt_critic.step()

    enc_hwc = to_hwc(encoded)
    attacked = attack_batch(enc_hwc, severity, state.rng, state.ranges)
    logits = state.decoder(to_nchw(attacked))

    with torch.no_grad():
        jmaps = torch.stack([jnd_map(covers[i]) for i in range(covers.shape[0])])
    jnd_cfg = JNDLossConfig(sigma=cfg.jnd_sigma)

    parts = {
        "l2": yuv_l2(enc_hwc, covers,
                     (cfg.yuv_weight_y, cfg.yuv_weight_u, cfg.yuv_weight_v)),
        "jnd": jnd_loss(to_hwc(residual), jmaps, jnd_cfg),
        "perceptual": (state.perceptual(enc_hwc, covers)
                       if cfg.lambda_perceptual > 0 else torch.zeros(())),
        "message": message_loss_from_logits(logits, bits),
        "critic": (state.critic(cover_nchw).mean() - state.critic(encoded).mean()
                   if critic_active else torch.zeros(())),
    }
    total, logged = total_loss(parts, weights)

    state.opt_joint.zero_grad(set_to_none=True)
    total.backward()
    state.opt_joint.step()

    with torch.no_grad():
        pred = (torch.sigmoid(logits) > 0.5).to(bits.dtype)
        bit_acc = (pred == bits).to(torch.float32).mean().item()

    state.step += 1
    record = {"step": state.step, "total": float(total.detach()),
              "bit_accuracy": bit_acc}
    record.update(logged)
    record["weights"] = dataclasses.asdict(weights)
    record["severity"] = dataclasses.asdict(severity)
    return record


def save_train_checkpoint(state: TrainState, path: str | Path) -> None:
    dataio.save_checkpoint(
        path, config=state.config, step=state.step,
        encoder=state.encoder, decoder=state.decoder, critic=state.critic,
        opt_joint=state.opt_joint, opt_critic=state.opt_critic,
        rng_state=state.rng.get_state())


def resume_train_state(path: str | Path) -> TrainState:
    blob = dataio.load_checkpoint(path)
    cfg = RunConfig.from_dict(blob["config"])
    state = create_train_state(cfg)
    state.encoder.load_state_dict(blob["encoder"])
    state.decoder.load_state_dict(blob["decoder"])
    state.critic.load_state_dict(blob["critic"])
    if blob.get("opt_joint") is not None:
        state.opt_joint.load_state_dict(blob["opt_joint"])
    if blob.get("opt_critic") is not None:
        state.opt_critic.load_state_dict(blob["opt_critic"])
    if blob.get("rng_state") is not None:
        state.rng.set_state(blob["rng_state"])
    state.step = blob["step"]
    return state


def fit(cfg: RunConfig, covers: list[torch.Tensor],
        out_dir: str | Path | None = None,
        state: Optional[TrainState] = None,
        on_step: Optional[Callable[[dict], None]] = None,
        quiet: bool = True) -> TrainState:
    """Run the loop to cfg.total_steps, logging metrics and checkpoints.

    On a non-finite loss the last periodic checkpoint is left untouched and
    the error propagates. Identical config + seed + covers reproduce the
    metrics log exactly.
    """
    if state is None:
        state = create_train_state(cfg)
    out_dir = Path(out_dir) if out_dir is not None else None
    log_handle = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        mode = "a" if state.step > 0 else "w"
        log_handle = open(out_dir / "metrics.jsonl", mode, encoding="utf-8")

    stack = torch.stack
    n = len(covers)
    started = time.time()
    try:
        while state.step < cfg.total_steps:
            idx = torch.randint(n, (cfg.batch_size,), generator=state.rng)
            batch = stack([covers[i] for i in idx])
            record = train_step(state, batch)
            if log_handle is not None:
                log_handle.write(json.dumps(record) + "\n")
            if on_step is not None:
                on_step(record)
            if not quiet and state.step % 100 == 0:
                print(f"step {state.step}/{cfg.total_steps} "
                      f"total {record['total']:.4f} "
                      f"msg {record['message']:.4f} "
                      f"acc {record['bit_accuracy']:.3f} "
                      f"[{time.time() - started:.0f}s]", flush=True)
            if out_dir is not None and (state.step % cfg.checkpoint_every == 0
                                        or state.step == cfg.total_steps):
                save_train_checkpoint(state, out_dir / f"ckpt_{state.step:06d}.pt")
    finally:
        if log_handle is not None:
            log_handle.close()
    if out_dir is not None:
        save_train_checkpoint(state, out_dir / "ckpt_final.pt")
    return state
