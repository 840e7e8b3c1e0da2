"""Differentiable simulation of the camera imaging process.

Implements the attack chain applied between the encoder and the decoder:
perspective warp from a random 3D plane rotation, sensor noise, motion or
defocus blur, global color change, spot-light reflection rendering, and an
approximate JPEG compression whose rounding step keeps nonzero gradients.

Images are torch tensors shaped (H, W, 3) or (B, H, W, 3), RGB in [0, 1].
Every random draw goes through an explicit torch.Generator, so ops are pure
given the generator and safe to use concurrently when each caller owns its
own generator. A severity factor of exactly 0 makes the corresponding op
the identity (the op is bypassed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

DEFAULT_MAX_ANGLE = math.radians(2.0)  # +/- 2 degrees per axis
DEFAULT_FOCAL = 2.0  # pinhole distance, in image half-widths
NOISE_SIGMA_MAX = 0.02
BLUR_WIDTHS = (3, 5, 7)
DEFOCUS_VARIANCE_RANGE = (0.01, 1.0)  # sigma^2 in pixel^2
CONTRAST_RANGE = 0.2
BRIGHTNESS_RANGE = 0.1
LIGHT_INTENSITY_MAX = 1.0
JPEG_QUALITY_FLOOR = 50


@dataclass
class DistortionRanges:
    """Full-severity endpoints of every random attack range."""

    max_angle_deg: float = 2.0
    focal: float = DEFAULT_FOCAL
    noise_sigma_max: float = NOISE_SIGMA_MAX
    blur_width_max: int = 7
    defocus_variance_min: float = DEFOCUS_VARIANCE_RANGE[0]
    defocus_variance_max: float = DEFOCUS_VARIANCE_RANGE[1]
    contrast_range: float = CONTRAST_RANGE
    brightness_range: float = BRIGHTNESS_RANGE
    light_intensity_max: float = LIGHT_INTENSITY_MAX
    light_diffuse_min: float = 0.5
    light_shininess_max: float = 8.0
    light_height_min: float = 0.5
    light_height_max: float = 2.0
    jpeg_quality_floor: int = JPEG_QUALITY_FLOOR

    def __post_init__(self):
        if self.blur_width_max % 2 == 0 or not 1 <= self.blur_width_max <= 7:
            raise ValueError("blur_width_max must be an odd integer in 1..7")
        if not 1 <= self.jpeg_quality_floor <= 100:
            raise ValueError("jpeg_quality_floor must be in [1,100]")
        if self.defocus_variance_min <= 0:
            raise ValueError("defocus_variance_min must be positive")
        if self.light_height_min <= 0:
            raise ValueError("light_height_min must be positive")

    @property
    def max_angle(self) -> float:
        return math.radians(self.max_angle_deg)

    @property
    def blur_widths(self) -> tuple[int, ...]:
        return tuple(range(3, self.blur_width_max + 1, 2)) or (1,)


def _to_nchw(image: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if image.dim() == 3:
        return image.permute(2, 0, 1).unsqueeze(0), False
    if image.dim() == 4:
        return image.permute(0, 3, 1, 2), True
    raise ValueError(f"expected (H,W,3) or (B,H,W,3) image, got shape {tuple(image.shape)}")


def _from_nchw(x: torch.Tensor, batched: bool) -> torch.Tensor:
    x = x.permute(0, 2, 3, 1)
    return x if batched else x.squeeze(0)


def _rand(rng: Optional[torch.Generator], n: int = 1) -> torch.Tensor:
    return torch.rand(n, generator=rng, dtype=torch.float64)


# ---------------------------------------------------------------------------
# geometry: Euler angles -> homography -> bilinear warp


def sample_euler(severity: float, rng: Optional[torch.Generator],
                 max_angle: float = DEFAULT_MAX_ANGLE) -> tuple[float, float, float]:
    """Three independent rotation angles, each ~ U[-severity*max_angle, +...]."""
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must be in [0,1], got {severity}")
    u = _rand(rng, 3) * 2.0 - 1.0
    a = u * (severity * max_angle)
    return (float(a[0]), float(a[1]), float(a[2]))


def _rotation_matrix(alpha: float, beta: float, gamma: float) -> np.ndarray:
    ca, sa = math.cos(alpha), math.sin(alpha)
    cb, sb = math.cos(beta), math.sin(beta)
    cg, sg = math.cos(gamma), math.sin(gamma)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return rz @ ry @ rx


def homography_from_rotation(angles: tuple[float, float, float],
                             focal: float = DEFAULT_FOCAL) -> torch.Tensor:
    """Perspective matrix mapping plane coords to their projections.

    The image plane is the square [-1,1]^2 at z=0, the pinhole sits at
    (0,0,-focal). Corners are rotated in 3D, projected back onto z=0, and
    the 8-unknown direct linear transform is solved from the four corner
    correspondences. The result is normalized so H[2,2] = 1.
    """
    if focal <= 0:
        raise ValueError(f"focal must be positive, got {focal}")
    rot = _rotation_matrix(*angles)
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64)
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, (x, y) in enumerate(corners):
        px, py, pz = rot @ np.array([x, y, 0.0])
        denom = focal + pz
        if denom <= 1e-9:
            raise ValueError("corner rotated behind the pinhole")
        u = focal * px / denom
        v = focal * py / denom
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate corner configuration") from exc
    hm = np.array([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    return torch.from_numpy(hm)


def warp_bilinear(image: torch.Tensor, homography: torch.Tensor) -> torch.Tensor:
    """Resample through a homography with bilinear weights.

    Output pixel (u,v) reads the input at H^-1 (u,v,1); out-of-bounds
    samples take edge-clamped values. Gradients flow to the input pixels;
    the homography itself is treated as a constant.
    """
    hm = torch.as_tensor(homography, dtype=torch.float64)
    if abs(float(torch.linalg.det(hm))) < 1e-12:
        raise ValueError("singular homography")
    hinv = torch.linalg.inv(hm)

    x, batched = _to_nchw(image)
    bsz, _, height, width = x.shape
    ys = torch.linspace(-1.0, 1.0, height, dtype=torch.float64)
    xs = torch.linspace(-1.0, 1.0, width, dtype=torch.float64)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    ones = torch.ones_like(gx)
    pts = torch.stack([gx, gy, ones], dim=-1) @ hinv.T
    grid = pts[..., :2] / pts[..., 2:3]
    grid = grid.to(image.dtype).unsqueeze(0).expand(bsz, -1, -1, -1)
    out = F.grid_sample(x, grid, mode="bilinear", padding_mode="border",
                        align_corners=True)
    return _from_nchw(out, batched)


# ---------------------------------------------------------------------------
# photometric ops


def add_gaussian_noise(image: torch.Tensor, sigma: float,
                       rng: Optional[torch.Generator]) -> torch.Tensor:
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return image
    noise = torch.randn(image.shape, generator=rng, dtype=image.dtype) * sigma
    return torch.clamp(image + noise, 0.0, 1.0)


def _check_blur_width(width: int) -> int:
    width = int(width)
    if width % 2 == 0:
        raise ValueError(f"blur width must be odd, got {width}")
    if not 1 <= width <= max(BLUR_WIDTHS):
        raise ValueError(f"blur width must be in 1..{max(BLUR_WIDTHS)}, got {width}")
    return width


def motion_blur_kernel(angle: float, width: int, dtype=torch.float64) -> torch.Tensor:
    """Normalized line kernel of the given width along the given angle."""
    width = _check_blur_width(width)
    k = torch.zeros(width, width, dtype=torch.float64)
    c = (width - 1) / 2.0
    dx, dy = math.cos(angle), math.sin(angle)
    for i in range(width):
        t = i - c
        px, py = c + t * dx, c + t * dy
        x0, y0 = int(math.floor(px)), int(math.floor(py))
        fx, fy = px - x0, py - y0
        for (xx, yy, w) in ((x0, y0, (1 - fx) * (1 - fy)), (x0 + 1, y0, fx * (1 - fy)),
                            (x0, y0 + 1, (1 - fx) * fy), (x0 + 1, y0 + 1, fx * fy)):
            if 0 <= xx < width and 0 <= yy < width and w > 0:
                k[yy, xx] += w
    return (k / k.sum()).to(dtype)


def defocus_blur_kernel(width: int, variance: float, dtype=torch.float64) -> torch.Tensor:
    """Isotropic Gaussian kernel (sigma^2 = variance), truncated and renormalized."""
    width = _check_blur_width(width)
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    c = (width - 1) / 2.0
    ax = torch.arange(width, dtype=torch.float64) - c
    gy, gx = torch.meshgrid(ax, ax, indexing="ij")
    k = torch.exp(-(gx ** 2 + gy ** 2) / (2.0 * variance))
    return (k / k.sum()).to(dtype)


def _conv_per_channel(image: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    x, batched = _to_nchw(image)
    width = kernel.shape[-1]
    if width == 1:
        return image
    pad = width // 2
    x = F.pad(x, (pad, pad, pad, pad), mode="replicate")
    k = kernel.to(image.dtype).view(1, 1, width, width).expand(3, 1, width, width)
    out = F.conv2d(x, k, groups=3)
    return _from_nchw(out, batched)


def motion_blur(image: torch.Tensor, angle: float, width: int) -> torch.Tensor:
    """Line blur along `angle`; width 1 is the identity. Linear, no clamp."""
    return _conv_per_channel(image, motion_blur_kernel(angle, width, image.dtype))


def defocus_blur(image: torch.Tensor, width: int, variance: float) -> torch.Tensor:
    """Truncated Gaussian blur; width 1 is the identity. Linear, no clamp."""
    if width == 1:
        _check_blur_width(width)
        if variance <= 0:
            raise ValueError(f"variance must be positive, got {variance}")
        return image
    return _conv_per_channel(image, defocus_blur_kernel(width, variance, image.dtype))


def adjust_color(image: torch.Tensor, contrast: float, brightness: float) -> torch.Tensor:
    """Scale around the per-channel mean, then shift; clamped to [0,1]."""
    mean = image.mean(dim=(-3, -2), keepdim=True)
    out = (image - mean) * contrast + mean + brightness
    return torch.clamp(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# light reflection rendering


@dataclass
class LightParams:
    """Spot light over the image plane plus surface reflectance.

    ambient: scale on the unlit image (identity render has ambient=1,
    intensity=0). diffuse_weight mixes Lambertian vs Phong terms; shininess
    is the Phong exponent; light_pos is (x, y, h) with x,y in normalized
    image coords [-1,1] and height h > 0 in half-width units.
    """

    ambient: float = 1.0
    intensity: float = 0.0
    diffuse_weight: float = 1.0
    shininess: float = 1.0
    light_pos: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not 0.0 <= self.diffuse_weight <= 1.0:
            raise ValueError(f"diffuse_weight must be in [0,1], got {self.diffuse_weight}")
        if self.intensity < 0 or self.ambient < 0:
            raise ValueError("intensity and ambient must be nonnegative")
        if self.shininess < 1:
            raise ValueError(f"shininess must be >= 1, got {self.shininess}")
        if self.light_pos[2] <= 0:
            raise ValueError("light height must be positive")


def sample_light(severity: float, rng: Optional[torch.Generator],
                 ranges: Optional["DistortionRanges"] = None) -> LightParams:
    """Random light: intensity grows with severity, ambient dips toward 0.8."""
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must be in [0,1], got {severity}")
    rr = ranges or DistortionRanges()
    u = _rand(rng, 7)
    return LightParams(
        ambient=float(1.0 - 0.2 * severity * u[0]),
        intensity=float(severity * rr.light_intensity_max * u[1]),
        diffuse_weight=float(rr.light_diffuse_min + (1.0 - rr.light_diffuse_min) * u[2]),
        shininess=float(1.0 + (rr.light_shininess_max - 1.0) * u[3]),
        light_pos=(float(u[4] * 2 - 1), float(u[5] * 2 - 1),
                   float(rr.light_height_min
                         + (rr.light_height_max - rr.light_height_min) * u[6])),
    )


def render_reflection(image: torch.Tensor, light: LightParams) -> torch.Tensor:
    """Ambient + Lambertian diffuse + Phong specular shading of the flat image.

    The surface normal and the view vector are both (0,0,1); the incident
    vector at each pixel is the L2-normalized direction to the light. The
    pixel color weights both the diffuse and the specular radiance.
    """
    height, width = image.shape[-3], image.shape[-2]
    dtype = image.dtype
    lx, ly, lh = light.light_pos
    ys = torch.linspace(-1.0, 1.0, height, dtype=dtype)
    xs = torch.linspace(-1.0, 1.0, width, dtype=dtype)
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    dx = lx - gx
    dy = ly - gy
    norm = torch.sqrt(dx * dx + dy * dy + lh * lh)
    cos_in = lh / norm  # L_hat . N_hat, always > 0 for positive height
    # R_hat = 2 (L.N) N - L, so R_hat . V_hat reduces to the same cosine
    refl_cos = torch.clamp(2.0 * cos_in - lh / norm, min=0.0)
    factor = (light.ambient
              + light.diffuse_weight * light.intensity * cos_in
              + (1.0 - light.diffuse_weight) * light.intensity
              * refl_cos ** light.shininess)
    out = image * factor.unsqueeze(-1)
    return torch.clamp(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# approximate JPEG


def soft_round(x: torch.Tensor) -> torch.Tensor:
    """Rounding with a cubic relaxation: nearest(x) + (x - nearest(x))^3.

    The derivative 3 (x - nearest(x))^2 vanishes only exactly at integers,
    unlike hard rounding whose derivative is zero almost everywhere.
    Ties round to even, matching torch.round.
    """
    nearest = torch.round(x).detach()
    return nearest + (x - nearest) ** 3


_LUMA_QUANT = torch.tensor([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=torch.float64)

_CHROMA_QUANT = torch.tensor([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=torch.float64)


def quantization_tables(quality: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Baseline tables scaled with the common libjpeg quality rule."""
    quality = int(quality)
    if not 1 <= quality <= 100:
        raise ValueError(f"jpeg quality must be in [1,100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    luma = torch.clamp(torch.floor((_LUMA_QUANT * scale + 50.0) / 100.0), 1.0, 255.0)
    chroma = torch.clamp(torch.floor((_CHROMA_QUANT * scale + 50.0) / 100.0), 1.0, 255.0)
    return luma, chroma


def _dct_matrix(dtype) -> torch.Tensor:
    n = torch.arange(8, dtype=torch.float64)
    k = n.view(8, 1)
    mat = torch.cos(math.pi * (2 * n + 1) * k / 16.0)
    mat[0] *= math.sqrt(1.0 / 2.0)
    mat *= math.sqrt(2.0 / 8.0)
    return mat.to(dtype)


_KR, _KG, _KB = 0.299, 0.587, 0.114  # BT.601 luma weights


def rgb_to_ycbcr(image: torch.Tensor) -> torch.Tensor:
    """ITU-R BT.601 full-range conversion; all channels stay in [0,1]."""
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    y = _KR * r + _KG * g + _KB * b
    cb = (b - y) / (2.0 * (1.0 - _KB)) + 0.5
    cr = (r - y) / (2.0 * (1.0 - _KR)) + 0.5
    return torch.stack([y, cb, cr], dim=-1)


def ycbcr_to_rgb(image: torch.Tensor) -> torch.Tensor:
    y, cb, cr = image[..., 0], image[..., 1] - 0.5, image[..., 2] - 0.5
    r = y + 2.0 * (1.0 - _KR) * cr
    b = y + 2.0 * (1.0 - _KB) * cb
    g = (y - _KR * r - _KB * b) / _KG
    return torch.stack([r, g, b], dim=-1)


def _blockify(channel: torch.Tensor) -> torch.Tensor:
    # (..., H, W) -> (..., H/8, W/8, 8, 8)
    shape = channel.shape
    h, w = shape[-2], shape[-1]
    x = channel.reshape(*shape[:-2], h // 8, 8, w // 8, 8)
    return x.transpose(-3, -2)


def _unblockify(blocks: torch.Tensor) -> torch.Tensor:
    x = blocks.transpose(-3, -2)
    shape = x.shape
    return x.reshape(*shape[:-4], shape[-4] * 8, shape[-2] * 8)


def jpeg_approx(image: torch.Tensor, quality: int) -> torch.Tensor:
    """Differentiable JPEG: blockwise DCT quantization with soft rounding.

    No chroma subsampling; padding to 8-pixel multiples uses edge
    replication and is cropped away afterwards.
    """
    luma_q, chroma_q = quantization_tables(quality)
    dtype = image.dtype
    height, width = image.shape[-3], image.shape[-2]
    pad_h = (-height) % 8
    pad_w = (-width) % 8
    x = image
    if pad_h or pad_w:
        nchw, batched = _to_nchw(x)
        nchw = F.pad(nchw, (0, pad_w, 0, pad_h), mode="replicate")
        x = _from_nchw(nchw, batched)

    ycc = rgb_to_ycbcr(x) * 255.0 - 128.0
    dct = _dct_matrix(dtype)
    out_channels = []
    for c in range(3):
        q = (luma_q if c == 0 else chroma_q).to(dtype)
        blocks = _blockify(ycc[..., c])
        coeff = dct @ blocks @ dct.T
        coeff = soft_round(coeff / q) * q
        rec = dct.T @ coeff @ dct
        out_channels.append(_unblockify(rec))
    ycc_rec = (torch.stack(out_channels, dim=-1) + 128.0) / 255.0
    out = ycbcr_to_rgb(ycc_rec)
    if pad_h or pad_w:
        out = out[..., :height, :width, :]
    return torch.clamp(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# the composed chain


@dataclass
class DistortionSeverity:
    """Per-op scale factors in [0,1]; factor 0 bypasses the op entirely."""

    perspective: float = 1.0
    noise: float = 1.0
    motion_blur: float = 1.0
    defocus_blur: float = 1.0
    color: float = 1.0
    light: float = 1.0
    jpeg: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"severity factor {name} must be in [0,1], got {value}")

    @classmethod
    def uniform(cls, s: float) -> "DistortionSeverity":
        return cls(**{k: s for k in cls().__dict__})

    @classmethod
    def zero(cls) -> "DistortionSeverity":
        return cls.uniform(0.0)


@dataclass
class ChainParams:
    """A frozen random draw for one pass of the chain; None means skip."""

    homography: Optional[torch.Tensor] = None
    noise_field: Optional[torch.Tensor] = None
    blur_kind: Optional[str] = None  # "motion" | "defocus"
    blur_angle: float = 0.0
    blur_width: int = 1
    blur_variance: float = DEFOCUS_VARIANCE_RANGE[0]
    color: Optional[tuple[float, float]] = None  # (contrast, brightness)
    light: Optional[LightParams] = None
    jpeg_quality: Optional[int] = None


def _scaled_blur_width(severity: float, full_width: int) -> int:
    # nearest odd width to 1 + severity * (full_width - 1), ties downward
    w = 1 + 2 * int(math.floor(severity * (full_width - 1) / 2.0 + 0.5))
    return min(w, full_width)


def sample_chain_params(shape: tuple[int, ...], severity: DistortionSeverity,
                        rng: Optional[torch.Generator],
                        ranges: Optional[DistortionRanges] = None) -> ChainParams:
    """Draw one set of attack parameters, each range scaled by its severity.

    `shape` is the (H, W, 3) shape of the image the params will be applied
    to (the noise field is drawn here so a frozen draw is reusable).
    """
    rr = ranges or DistortionRanges()
    params = ChainParams()
    if severity.perspective > 0:
        angles = sample_euler(severity.perspective, rng, rr.max_angle)
        params.homography = homography_from_rotation(angles, rr.focal)
    if severity.noise > 0:
        sigma = float(_rand(rng)) * rr.noise_sigma_max * severity.noise
        params.noise_field = torch.randn(*shape[-3:], generator=rng,
                                         dtype=torch.float32) * sigma
    if severity.motion_blur > 0 or severity.defocus_blur > 0:
        widths = rr.blur_widths
        pick_motion = bool(_rand(rng) < 0.5)
        if pick_motion and severity.motion_blur > 0:
            params.blur_kind = "motion"
            params.blur_angle = float(_rand(rng)) * 2.0 * math.pi
            full = widths[int(_rand(rng) * len(widths)) % len(widths)]
            params.blur_width = _scaled_blur_width(severity.motion_blur, full)
        elif not pick_motion and severity.defocus_blur > 0:
            params.blur_kind = "defocus"
            full = widths[int(_rand(rng) * len(widths)) % len(widths)]
            params.blur_width = _scaled_blur_width(severity.defocus_blur, full)
            lo, hi = rr.defocus_variance_min, rr.defocus_variance_max
            params.blur_variance = lo + float(_rand(rng)) * severity.defocus_blur * (hi - lo)
    if severity.color > 0:
        u = _rand(rng, 2) * 2.0 - 1.0
        params.color = (1.0 + float(u[0]) * rr.contrast_range * severity.color,
                        float(u[1]) * rr.brightness_range * severity.color)
    if severity.light > 0:
        params.light = sample_light(severity.light, rng, rr)
    if severity.jpeg > 0:
        q_lo = int(math.ceil(100.0 - (100 - rr.jpeg_quality_floor) * severity.jpeg))
        params.jpeg_quality = q_lo + int(_rand(rng) * (101 - q_lo)) % (101 - q_lo)
    return params


def apply_chain_params(image: torch.Tensor, params: ChainParams) -> torch.Tensor:
    """Apply a frozen parameter draw; differentiable w.r.t. the image."""
    out = image
    if params.homography is not None:
        out = warp_bilinear(out, params.homography)
    if params.noise_field is not None:
        out = torch.clamp(out + params.noise_field.to(out.dtype), 0.0, 1.0)
    if params.blur_kind == "motion":
        out = motion_blur(out, params.blur_angle, params.blur_width)
    elif params.blur_kind == "defocus":
        out = defocus_blur(out, params.blur_width, params.blur_variance)
    if params.color is not None:
        out = adjust_color(out, *params.color)
    if params.light is not None:
        out = render_reflection(out, params.light)
    if params.jpeg_quality is not None:
        out = jpeg_approx(out, params.jpeg_quality)
    return out


def apply_distortion_chain(image: torch.Tensor, severity: DistortionSeverity,
                           rng: Optional[torch.Generator],
                           ranges: Optional[DistortionRanges] = None) -> torch.Tensor:
    """Warp, noise, blur, color, light, JPEG, in that order, freshly drawn."""
    params = sample_chain_params(image.shape, severity, rng, ranges)
    return apply_chain_params(image, params)
