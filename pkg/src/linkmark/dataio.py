"""Cover-image loading, PNG round-tripping, and checkpoint persistence."""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .config import RunConfig
from .networks import build_models

CHECKPOINT_FORMAT_VERSION = 1
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class CheckpointError(RuntimeError):
    pass


def load_image(path: str | Path, size: int | None = None) -> torch.Tensor:
    """Read an 8-bit RGB image into an (H,W,3) float32 tensor in [0,1].

    Grayscale inputs are promoted to three identical channels; an optional
    square bilinear resize is applied.
    """
    with Image.open(path) as img:
        img = img.convert("RGB")
        if size is not None:
            img = img.resize((size, size), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr)


def save_image_png(image: torch.Tensor, path: str | Path) -> None:
    """Write an (H,W,3) [0,1] tensor as lossless 8-bit PNG."""
    arr = (image.detach().clamp(0, 1).numpy() * 255.0).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_image_jpeg(image: torch.Tensor, path: str | Path, quality: int) -> None:
    arr = (image.detach().clamp(0, 1).numpy() * 255.0).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="JPEG", quality=quality)


def load_cover_set(directory: str | Path, size: int) -> list[torch.Tensor]:
    """Load every readable image under `directory`, lexicographic by name.

    Unreadable files are skipped with a warning; an empty result is an error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"cover directory not found: {directory}")
    covers = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        try:
            covers.append(load_image(path, size))
        except Exception as exc:  # decode errors only affect that file
            warnings.warn(f"skipping unreadable cover {path.name}: {exc}")
    if not covers:
        raise ValueError(f"no readable cover images in {directory}")
    return covers


def save_checkpoint(path: str | Path, *, config: RunConfig, step: int,
                    encoder, decoder, critic,
                    opt_joint=None, opt_critic=None,
                    rng_state: torch.Tensor | None = None) -> None:
    """Single-file container: version, config snapshot, parameters, optimizer
    state, and the training RNG state (for exact resume)."""
    blob = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config.to_dict(),
        "step": int(step),
        "encoder": encoder.state_dict(),
        "decoder": decoder.state_dict(),
        "critic": critic.state_dict(),
        "opt_joint": opt_joint.state_dict() if opt_joint is not None else None,
        "opt_critic": opt_critic.state_dict() if opt_critic is not None else None,
        "rng_state": rng_state,
    }
    torch.save(blob, path)


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    version = blob.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})")
    return blob


def restore_models(blob: dict):
    """Rebuild (config, encoder, decoder, critic) from a checkpoint blob."""
    cfg = RunConfig.from_dict(blob["config"])
    encoder, decoder, critic = build_models(cfg.message_length, cfg.image_size,
                                            cfg.base_width)
    encoder.load_state_dict(blob["encoder"])
    decoder.load_state_dict(blob["decoder"])
    critic.load_state_dict(blob["critic"])
    encoder.eval()
    decoder.eval()
    critic.eval()
    return cfg, encoder, decoder, critic
