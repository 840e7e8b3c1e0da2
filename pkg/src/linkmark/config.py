"""Run configuration: a validated flat key = value file.

The config file is UTF-8 text, one `key = value` per line, with blank
lines and `#` comments ignored. Unknown keys are rejected. The full config
is snapshotted into every checkpoint so models are self-describing.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .distortion import DistortionRanges

VALID_IMAGE_SIZES = (64, 128, 400)


@dataclass
class RunConfig:
    # geometry of the problem
    image_size: int = 64
    message_length: int = 32

    # training loop
    batch_size: int = 4
    total_steps: int = 5000
    ramp_end: int = 2500
    learning_rate: float = 1e-3
    n_critic: int = 1
    base_width: int = 32
    seed: int = 0
    checkpoint_every: int = 1000

    # five loss weights (final values; quality terms ramp, message does not)
    lambda_l2: float = 2.0
    lambda_jnd: float = 1.5
    lambda_perceptual: float = 1.5
    lambda_message: float = 1.5
    lambda_critic: float = 0.1
    jnd_sigma: float = 0.1
    yuv_weight_y: float = 1.0
    yuv_weight_u: float = 1.0
    yuv_weight_v: float = 1.0
    gradient_penalty_coef: float = 10.0

    # curriculum ceiling and per-op multipliers (0 disables an op entirely)
    severity_final: float = 1.0
    sev_perspective: float = 1.0
    sev_noise: float = 1.0
    sev_motion_blur: float = 1.0
    sev_defocus_blur: float = 1.0
    sev_color: float = 1.0
    sev_light: float = 1.0
    sev_jpeg: float = 1.0

    # distortion attack ranges at full severity
    max_angle_deg: float = 2.0
    focal: float = 2.0
    noise_sigma_max: float = 0.02
    blur_width_max: int = 7
    defocus_variance_min: float = 0.01
    defocus_variance_max: float = 1.0
    contrast_range: float = 0.2
    brightness_range: float = 0.1
    light_intensity_max: float = 1.0
    light_diffuse_min: float = 0.5
    light_shininess_max: float = 8.0
    light_height_min: float = 0.5
    light_height_max: float = 2.0
    jpeg_quality_floor: int = 50

    # paths
    data_dir: str = ""
    checkpoint_dir: str = ""
    perceptual_weights: str = ""  # empty selects the structural surrogate

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.image_size not in VALID_IMAGE_SIZES:
            raise ValueError(
                f"image_size must be one of {VALID_IMAGE_SIZES}, got {self.image_size}")
        capacity = 3 * (self.image_size // 8) ** 2
        if not 1 <= self.message_length <= capacity:
            raise ValueError(
                f"message_length must be in 1..{capacity} at image size "
                f"{self.image_size}, got {self.message_length}")
        for name in ("batch_size", "total_steps", "ramp_end", "n_critic",
                     "base_width", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lambda_message <= 0:
            raise ValueError("lambda_message must stay positive at all steps")
        for name in ("lambda_l2", "lambda_jnd", "lambda_perceptual", "lambda_critic",
                     "gradient_penalty_coef"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.jnd_sigma <= 0:
            raise ValueError("jnd_sigma must be positive")
        for name in ("severity_final", "sev_perspective", "sev_noise",
                     "sev_motion_blur", "sev_defocus_blur", "sev_color",
                     "sev_light", "sev_jpeg"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0,1]")
        self.distortion_ranges()  # raises on invalid range combinations

    def distortion_ranges(self) -> DistortionRanges:
        return DistortionRanges(
            max_angle_deg=self.max_angle_deg,
            focal=self.focal,
            noise_sigma_max=self.noise_sigma_max,
            blur_width_max=self.blur_width_max,
            defocus_variance_min=self.defocus_variance_min,
            defocus_variance_max=self.defocus_variance_max,
            contrast_range=self.contrast_range,
            brightness_range=self.brightness_range,
            light_intensity_max=self.light_intensity_max,
            light_diffuse_min=self.light_diffuse_min,
            light_shininess_max=self.light_shininess_max,
            light_height_min=self.light_height_min,
            light_height_max=self.light_height_max,
            jpeg_quality_floor=self.jpeg_quality_floor,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    def to_text(self) -> str:
        lines = ["# linkmark run configuration"]
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> RunConfig:
    fields = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in fields:
            raise ValueError(f"unknown config key on line {lineno}: {key!r}")
        if key in values:
            raise ValueError(f"duplicate config key on line {lineno}: {key!r}")
        values[key] = _coerce(key, val)
    return RunConfig.from_dict(values)


def _coerce(key: str, val: str):
    blank = {f.name: f.default for f in dataclasses.fields(RunConfig)}
    target = type(blank[key])
    if target is int:
        try:
            return int(val)
        except ValueError as exc:
            raise ValueError(f"config key {key} expects an integer, got {val!r}") from exc
    if target is float:
        try:
            return float(val)
        except ValueError as exc:
            raise ValueError(f"config key {key} expects a number, got {val!r}") from exc
    return val


def load_config(path: str | Path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_text(), encoding="utf-8")
