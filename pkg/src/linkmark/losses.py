"""Image-quality and message losses used by the joint training objective.

All image arguments are channels-last, (H,W,3) or (B,H,W,3), in [0,1].
"""

from __future__ import annotations

import os

import torch
import torch.nn as nn
import torch.nn.functional as F

_EPS = 1e-7


def rgb_to_yuv(image: torch.Tensor) -> torch.Tensor:
    """BT.601 YUV: Y = 0.299R + 0.587G + 0.114B, U = 0.492(B-Y), V = 0.877(R-Y)."""
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = 0.492 * (b - y)
    v = 0.877 * (r - y)
    return torch.stack([y, u, v], dim=-1)


def yuv_l2(a: torch.Tensor, b: torch.Tensor,
           channel_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> torch.Tensor:
    """Mean channel-weighted squared difference in YUV space."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    w = torch.tensor(channel_weights, dtype=a.dtype)
    diff = rgb_to_yuv(a) - rgb_to_yuv(b)
    return (w * diff ** 2).mean()


def _luma_nchw(image: torch.Tensor) -> torch.Tensor:
    if image.dim() == 3:
        image = image.unsqueeze(0)
    y = (0.299 * image[..., 0] + 0.587 * image[..., 1] + 0.114 * image[..., 2])
    return y.unsqueeze(1)  # (B,1,H,W)


def _gaussian_window(size: int, sigma: float, dtype) -> torch.Tensor:
    ax = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(ax ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g).to(dtype).view(1, 1, size, size)


def _ssim_terms(x: torch.Tensor, y: torch.Tensor, window: torch.Tensor,
                c1: float, c2: float) -> tuple[torch.Tensor, torch.Tensor]:
    mu_x = F.conv2d(x, window)
    mu_y = F.conv2d(y, window)
    xx = F.conv2d(x * x, window) - mu_x ** 2
    yy = F.conv2d(y * y, window) - mu_y ** 2
    xy = F.conv2d(x * y, window) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    cs = (2 * xy + c2) / (xx + yy + c2)
    return lum.mean(dim=(1, 2, 3)), cs.mean(dim=(1, 2, 3))


_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def ms_ssim(a: torch.Tensor, b: torch.Tensor, window_size: int = 11,
            sigma: float = 1.5) -> torch.Tensor:
    """Differentiable multi-scale structural similarity on luminance.

    The scale count adapts to the image (each scale must fit the window);
    the standard five weights are truncated and renormalized accordingly.
    Returns a (B,) tensor.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    x, y = _luma_nchw(a), _luma_nchw(b)
    side = min(x.shape[-2], x.shape[-1])
    n_scales = 1
    while n_scales < 5 and side // 2 >= window_size:
        n_scales += 1
        side //= 2
    weights = torch.tensor(_MSSSIM_WEIGHTS[:n_scales], dtype=a.dtype)
    weights = weights / weights.sum()
    window = _gaussian_window(window_size, sigma, a.dtype)
    c1, c2 = 0.01 ** 2, 0.03 ** 2

    value = torch.ones(x.shape[0], dtype=a.dtype)
    for i in range(n_scales):
        lum, cs = _ssim_terms(x, y, window, c1, c2)
        if i < n_scales - 1:
            value = value * cs.clamp(min=_EPS) ** weights[i]
            x = F.avg_pool2d(x, 2)
            y = F.avg_pool2d(y, 2)
        else:
            value = value * (lum.clamp(min=_EPS) * cs.clamp(min=_EPS)) ** weights[i]
    return value


class _FeatureNet(nn.Module):
    """Conv feature stack for the learned perceptual distance."""

    def __init__(self, channels: list[int]):
        super().__init__()
        layers = []
        prev = 3
        for c in channels:
            layers.append(nn.Conv2d(prev, c, 3, padding=1))
            prev = c
        self.convs = nn.ModuleList(layers)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for i, conv in enumerate(self.convs):
            x = F.relu(conv(x))
            feats.append(x)
            if i % 2 == 1:
                x = F.avg_pool2d(x, 2)
        return feats


PERCEPTUAL_FORMAT = "linkmark-perceptual-v1"


class PerceptualDistance:
    """Learned feature-space distance with a structural-similarity fallback.

    With a weights file (torch container: format tag, conv channel list,
    per-layer weights, state dict) the distance is the weighted squared gap
    between unit-normalized feature stacks. Without one, the documented
    surrogate 1 - ms_ssim is used. A configured but unreadable file raises
    at construction time so training never dies mid-run.
    """

    def __init__(self, weights_path: str | os.PathLike | None = None):
        self.net = None
        self.layer_weights = None
        if weights_path is None:
            return
        if not os.path.exists(weights_path):
            raise FileNotFoundError(f"perceptual weights file not found: {weights_path}")
        try:
            blob = torch.load(weights_path, map_location="cpu", weights_only=True)
            if blob.get("format") != PERCEPTUAL_FORMAT:
                raise ValueError(f"unexpected format tag {blob.get('format')!r}")
            net = _FeatureNet(list(blob["channels"]))
            net.load_state_dict(blob["state"])
            self.layer_weights = [float(w) for w in blob["layer_weights"]]
            if len(self.layer_weights) != len(net.convs):
                raise ValueError("layer_weights length does not match channels")
        except (ValueError, KeyError, RuntimeError) as exc:
            raise ValueError(f"corrupt perceptual weights file {weights_path}: {exc}") from exc
        net.eval()
        for p in net.parameters():
            p.requires_grad_(False)
        self.net = net

    def __call__(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        if self.net is None:
            return (1.0 - ms_ssim(a, b)).mean()
        fa = self.net(_nchw_rgb(a))
        fb = self.net(_nchw_rgb(b))
        total = a.new_zeros(())
        for w, xa, xb in zip(self.layer_weights, fa, fb):
            na = F.normalize(xa, dim=1)
            nb = F.normalize(xb, dim=1)
            total = total + w * ((na - nb) ** 2).mean()
        return total


def _nchw_rgb(image: torch.Tensor) -> torch.Tensor:
    if image.dim() == 3:
        image = image.unsqueeze(0)
    return image.permute(0, 3, 1, 2)


def message_loss(probs: torch.Tensor, bits: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy between decoded probabilities and the bits.

    Probabilities are clamped away from 0/1 before the logs; the sigmoid
    guarantees the open interval mathematically but float32 can saturate.
    """
    p = probs.clamp(_EPS, 1.0 - _EPS)
    b = bits.to(probs.dtype)
    return -(b * torch.log(p) + (1.0 - b) * torch.log(1.0 - p)).mean()


def message_loss_from_logits(logits: torch.Tensor, bits: torch.Tensor) -> torch.Tensor:
    """Numerically stable equivalent of message_loss for the training path."""
    return F.binary_cross_entropy_with_logits(logits, bits.to(logits.dtype))
