"""Trainable modules: message projector, U-Net encoder, STN decoder, critic.

All modules work on NCHW float batches with pixel values in [0,1]; the
channels-last (H,W,3) convention used elsewhere converts via `to_nchw` /
`to_hwc`. Image sizes must be multiples of 16 (four stride-2 stages).
Encoder and decoder use Conv-BN-ReLU blocks; the critic stays free of
normalization so its gradient penalty is well-behaved.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def to_nchw(image: torch.Tensor) -> torch.Tensor:
    """(H,W,3) -> (1,3,H,W) or (B,H,W,3) -> (B,3,H,W)."""
    if image.dim() == 3:
        return image.permute(2, 0, 1).unsqueeze(0)
    return image.permute(0, 3, 1, 2)


def to_hwc(batch: torch.Tensor, squeeze: bool = False) -> torch.Tensor:
    out = batch.permute(0, 2, 3, 1)
    return out.squeeze(0) if squeeze else out


def _check_image_size(size: int) -> int:
    if size % 16 != 0:
        raise ValueError(f"image size must be a multiple of 16, got {size}")
    return size


class ConvBNRelu(nn.Module):
    """3x3 conv, batch norm, ReLU; the workhorse block."""

    def __init__(self, c_in: int, c_out: int, stride: int = 1):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
        )
        nn.init.kaiming_normal_(self.layers[0].weight, nonlinearity="relu")

    def forward(self, x):
        return self.layers(x)


class MessageProjector(nn.Module):
    """Maps an L-bit string to an image-sized plane.

    Bits are recentered to +/-1, projected by a learned affine map onto a
    coarse (H/8, W/8, 3) grid and bilinearly upsampled by 8, so the same
    recipe scales across message lengths and image sizes.
    """

    def __init__(self, message_length: int, image_size: int):
        super().__init__()
        _check_image_size(image_size)
        self.message_length = message_length
        self.image_size = image_size
        coarse = image_size // 8
        if message_length > 3 * coarse * coarse:
            raise ValueError(
                f"message length {message_length} exceeds plane capacity "
                f"{3 * coarse * coarse} at image size {image_size}")
        self.coarse = coarse
        self.proj = nn.Linear(message_length, 3 * coarse * coarse)

    def forward(self, bits: torch.Tensor) -> torch.Tensor:
        if bits.shape[-1] != self.message_length:
            raise ValueError(
                f"expected {self.message_length} bits, got {bits.shape[-1]}")
        centered = bits.to(self.proj.weight.dtype) * 2.0 - 1.0
        grid = self.proj(centered).view(-1, 3, self.coarse, self.coarse)
        return F.interpolate(grid, scale_factor=8, mode="bilinear",
                             align_corners=False)


class Encoder(nn.Module):
    """U-Net producing a tanh-bounded residual from (cover, message plane).

    Four stride-2 stages with widths w/2w/4w/8w and a mirrored up path with
    skip connections; 3x3 kernels throughout.
    """

    def __init__(self, message_length: int, image_size: int, base_width: int = 32):
        super().__init__()
        _check_image_size(image_size)
        w = base_width
        self.projector = MessageProjector(message_length, image_size)
        self.down1 = ConvBNRelu(6, w, 2)
        self.down2 = ConvBNRelu(w, 2 * w, 2)
        self.down3 = ConvBNRelu(2 * w, 4 * w, 2)
        self.down4 = ConvBNRelu(4 * w, 8 * w, 2)
        self.up3 = ConvBNRelu(8 * w + 4 * w, 4 * w)
        self.up2 = ConvBNRelu(4 * w + 2 * w, 2 * w)
        self.up1 = ConvBNRelu(2 * w + w, w)
        self.up0 = ConvBNRelu(w + 6, w)
        self.out = nn.Conv2d(w, 3, 3, padding=1)

    def forward(self, cover: torch.Tensor, bits: torch.Tensor):
        """cover (B,3,H,W), bits (B,L) -> (residual, encoded), both (B,3,H,W)."""
        plane = self.projector(bits)
        x0 = torch.cat([cover, plane], dim=1)
        d1 = self.down1(x0)
        d2 = self.down2(d1)
        d3 = self.down3(d2)
        d4 = self.down4(d3)
        u3 = self.up3(torch.cat([F.interpolate(d4, scale_factor=2), d3], 1))
        u2 = self.up2(torch.cat([F.interpolate(u3, scale_factor=2), d2], 1))
        u1 = self.up1(torch.cat([F.interpolate(u2, scale_factor=2), d1], 1))
        u0 = self.up0(torch.cat([F.interpolate(u1, scale_factor=2), x0], 1))
        residual = torch.tanh(self.out(u0))
        encoded = torch.clamp(cover + residual, 0.0, 1.0)
        return residual, encoded


class SpatialTransformer(nn.Module):
    """Predicts a 6-parameter affine correction, initialized to the identity."""

    def __init__(self, width: int = 16):
        super().__init__()
        self.loc = nn.Sequential(
            ConvBNRelu(3, width, 2),
            ConvBNRelu(width, 2 * width, 2),
            nn.AdaptiveAvgPool2d(1),
        )
        self.fc = nn.Linear(2 * width, 6)
        nn.init.zeros_(self.fc.weight)
        with torch.no_grad():
            self.fc.bias.copy_(torch.tensor([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]))

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        feat = self.loc(image).flatten(1)
        theta = self.fc(feat).view(-1, 2, 3)
        grid = F.affine_grid(theta, list(image.shape), align_corners=True)
        return F.grid_sample(image, grid, mode="bilinear",
                             padding_mode="border", align_corners=True)


class Decoder(nn.Module):
    """STN alignment, then 7 alternating stride-2/1 convs and a dense head.

    forward returns raw logits; `probabilities` applies the sigmoid so the
    decoded string lives strictly in (0,1).
    """

    def __init__(self, message_length: int, image_size: int, base_width: int = 32):
        super().__init__()
        _check_image_size(image_size)
        w = base_width
        self.stn = SpatialTransformer()
        self.convs = nn.Sequential(
            ConvBNRelu(3, w, 2),
            ConvBNRelu(w, w, 1),
            ConvBNRelu(w, 2 * w, 2),
            ConvBNRelu(2 * w, 2 * w, 1),
            ConvBNRelu(2 * w, 4 * w, 2),
            ConvBNRelu(4 * w, 4 * w, 1),
            ConvBNRelu(4 * w, 4 * w, 2),
        )
        feat = image_size // 16
        self.head = nn.Linear(4 * w * feat * feat, message_length)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        aligned = self.stn(image)
        feat = self.convs(aligned).flatten(1)
        return self.head(feat)

    def probabilities(self, image: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward(image))


class Critic(nn.Module):
    """Unbounded conv score head; no normalization layers (penalty-friendly)."""

    def __init__(self, base_width: int = 32):
        super().__init__()
        w = base_width

        def block(c_in, c_out):
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
            nn.init.kaiming_normal_(conv.weight, a=0.2,
                                    nonlinearity="leaky_relu")
            return conv

        self.convs = nn.Sequential(
            block(3, w), nn.LeakyReLU(0.2, inplace=True),
            block(w, 2 * w), nn.LeakyReLU(0.2, inplace=True),
            block(2 * w, 4 * w), nn.LeakyReLU(0.2, inplace=True),
        )
        self.head = nn.Linear(4 * w, 1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        feat = self.convs(image).mean(dim=(2, 3))
        return self.head(feat).squeeze(-1)


def gradient_penalty(critic: Critic, real: torch.Tensor, fake: torch.Tensor,
                     rng: torch.Generator | None = None) -> torch.Tensor:
    """WGAN-GP term: squared deviation of the critic gradient norm from 1,
    on random interpolates between real and fake batches."""
    eps = torch.rand(real.shape[0], 1, 1, 1, generator=rng, dtype=real.dtype)
    mixed = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    scores = critic(mixed)
    grads, = torch.autograd.grad(scores.sum(), mixed, create_graph=True)
    norms = grads.flatten(1).norm(2, dim=1)
    return ((norms - 1.0) ** 2).mean()


def build_models(message_length: int, image_size: int, base_width: int = 32,
                 seed: int | None = None) -> tuple[Encoder, Decoder, Critic]:
    """Construct the three networks with a reproducible initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    encoder = Encoder(message_length, image_size, base_width)
    decoder = Decoder(message_length, image_size, base_width)
    critic = Critic(base_width)
    return encoder, decoder, critic
