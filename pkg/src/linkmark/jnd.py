"""Just-noticeable-difference maps and the masking-aware residual loss.

The per-pixel JND threshold combines luminance adaptation (dark and very
bright regions tolerate more distortion) with pattern masking (busy,
textured regions hide more), using the classic closed-form construction:

    LA(p) = 17 (1 - sqrt(B/127)) + 3        for background B <= 127
          = 3/128 (B - 127) + 3             otherwise
    CM(p) = 0.117 * max_k |grad_k(p)|       four directional operators
    raw   = LA + CM - 0.3 min(LA, CM)

computed on the 8-bit BT.601 luminance, broadcast to all three channels
and normalized into [0,1]. The loss steers the encoder residual magnitude
toward a fixed fraction of the JND budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# raw-map value that an 8-bit image can never exceed: LA peaks at 20 on a
# black background, CM at 0.117 * 255; used for constant images where the
# map max carries no information.
THEORETICAL_MAX = 20.0 + 0.117 * 255.0

# 0, 45, 90, 135 degree gradient operators; each has positive taps summing
# to 16 and is applied normalized to a unit positive-tap sum.
_G1 = [
    [0, 0, 0, 0, 0],
    [1, 3, 8, 3, 1],
    [0, 0, 0, 0, 0],
    [-1, -3, -8, -3, -1],
    [0, 0, 0, 0, 0],
]
_G2 = [
    [0, 0, 1, 0, 0],
    [0, 8, 3, 0, 0],
    [1, 3, 0, -3, -1],
    [0, 0, -3, -8, 0],
    [0, 0, -1, 0, 0],
]
_G3 = [
    [0, 1, 0, -1, 0],
    [0, 3, 0, -3, 0],
    [0, 8, 0, -8, 0],
    [0, 3, 0, -3, 0],
    [0, 1, 0, -1, 0],
]
_G4 = [
    [0, 0, 1, 0, 0],
    [0, 0, 3, 8, 0],
    [-1, -3, 0, 3, 1],
    [0, -8, -3, 0, 0],
    [0, 0, -1, 0, 0],
]

_GRAD_OPS = torch.tensor([_G1, _G2, _G3, _G4], dtype=torch.float64) / 16.0


@dataclass
class JNDLossConfig:
    """sigma scales the residual budget relative to the JND map."""

    sigma: float = 0.1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def _conv2d_same(luma: torch.Tensor, kernels: torch.Tensor) -> torch.Tensor:
    # luma (H,W) -> responses (K,H,W), replicate padding
    x = luma.unsqueeze(0).unsqueeze(0)
    pad = kernels.shape[-1] // 2
    x = F.pad(x, (pad, pad, pad, pad), mode="replicate")
    k = kernels.to(luma.dtype).unsqueeze(1)
    return F.conv2d(x, k).squeeze(0)


def luminance_adaptation(luma: torch.Tensor) -> torch.Tensor:
    """Visibility threshold from the 5x5 mean background luminance (0..255)."""
    mean_kernel = torch.full((1, 5, 5), 1.0 / 25.0, dtype=torch.float64)
    bg = _conv2d_same(luma, mean_kernel).squeeze(0)
    dark = 17.0 * (1.0 - torch.sqrt(bg.clamp(min=0.0) / 127.0)) + 3.0
    bright = (3.0 / 128.0) * (bg - 127.0) + 3.0
    return torch.where(bg <= 127.0, dark, bright)


def pattern_masking(luma: torch.Tensor) -> torch.Tensor:
    """Texture masking from the strongest of four directional gradients."""
    responses = _conv2d_same(luma, _GRAD_OPS)
    return 0.117 * responses.abs().max(dim=0).values


def jnd_map(image: torch.Tensor) -> torch.Tensor:
    """Per-channel JND thresholds of an (H,W,3) image in [0,1], scaled to [0,1].

    Normalization divides by the map maximum; for constant images (zero
    dynamic range in the raw map) the theoretical 8-bit maximum is used
    instead so the output is not spuriously saturated.
    """
    if image.dim() != 3 or image.shape[-1] != 3:
        raise ValueError(f"expected (H,W,3) image, got shape {tuple(image.shape)}")
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    luma = (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b) * 255.0
    la = luminance_adaptation(luma)
    cm = pattern_masking(luma)
    raw = la + cm - 0.3 * torch.minimum(la, cm)
    spread = raw.max() - raw.min()
    denom = THEORETICAL_MAX if spread < 1e-9 else raw.max()
    normalized = raw / denom
    return normalized.unsqueeze(-1).expand(-1, -1, 3).to(image.dtype)


def jnd_loss(residual: torch.Tensor, jmap: torch.Tensor,
             cfg: JNDLossConfig = JNDLossConfig()) -> torch.Tensor:
    """Mean squared gap between sigma-scaled JND budget and |residual|."""
    if residual.shape != jmap.shape:
        raise ValueError(
            f"residual shape {tuple(residual.shape)} != map shape {tuple(jmap.shape)}")
    return ((cfg.sigma * jmap - residual.abs()) ** 2).mean()
