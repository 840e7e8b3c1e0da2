"""Shared test utilities: gradient checking and synthetic images."""

import numpy as np
import torch


def weighted_sum_loss(weights: torch.Tensor):
    """Per-image scalar: fixed random-weighted sum of output pixels."""

    def loss(batch: torch.Tensor) -> torch.Tensor:
        return (batch * weights).sum(dim=(-3, -2, -1))

    return loss


def finite_diff_check(fn, image: torch.Tensor, h: float = 1e-4,
                      chunk: int = 512) -> tuple[float, float]:
    """Compare backprop gradients against central finite differences.

    fn maps a (B,H,W,3) batch to (B,) scalars and must be deterministic.
    Runs central differences at steps h and h/2 for every pixel; pixels
    where the two estimates disagree at the tolerance scale sit on a
    non-smooth point (clamp edge or rounding boundary) and are excluded,
    mirroring the clamp-boundary exclusion the gradient contract allows.
    A wrong analytic gradient is still caught: at smooth points both FD
    estimates agree with each other and expose the mismatch.

    Returns (max relative error over stable pixels, excluded fraction).
    """
    x = image.detach().to(torch.float64).clone().requires_grad_(True)
    loss = fn(x.unsqueeze(0))[0]
    grad, = torch.autograd.grad(loss, x)
    grad = grad.detach().reshape(-1)

    n = x.numel()
    flat = x.detach().reshape(-1)
    eye = torch.eye(n, dtype=torch.float64)
    deltas = torch.cat([eye * h, -eye * h, eye * (h / 2), -eye * (h / 2)], dim=0)
    points = (flat.unsqueeze(0) + deltas).reshape(-1, *x.shape)
    vals = []
    with torch.no_grad():
        for part in points.split(chunk):
            vals.append(fn(part))
    vals = torch.cat(vals)
    f_p, f_m = vals[:n], vals[n:2 * n]
    f_p2, f_m2 = vals[2 * n:3 * n], vals[3 * n:]
    fd = (f_p - f_m) / (2 * h)
    fd_half = (f_p2 - f_m2) / h

    scale = grad.abs().max().clamp(min=1e-9)
    denom = torch.maximum(fd.abs(), grad.abs()).clamp(min=1e-2 * scale)
    unstable = (fd - fd_half).abs() > 7.5e-4 * denom
    rel = (fd - grad).abs() / denom
    stable = ~unstable
    worst = rel[stable].max().item() if stable.any() else float("nan")
    return worst, unstable.double().mean().item()


def assert_gradients_match(fn, image: torch.Tensor, rtol: float = 1e-3,
                           max_excluded: float = 0.5) -> None:
    worst, excluded = finite_diff_check(fn, image)
    assert excluded < max_excluded, f"too many non-smooth pixels excluded: {excluded:.1%}"
    assert worst < rtol, f"gradient mismatch: rel err {worst:.2e} (excluded {excluded:.1%})"


def random_image(h: int, w: int, seed: int, lo: float = 0.0, hi: float = 1.0,
                 dtype=torch.float64) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return torch.rand(h, w, 3, generator=g, dtype=dtype) * (hi - lo) + lo


def textured_cover(size: int, seed: int, dtype=torch.float32) -> torch.Tensor:
    """Synthetic natural-ish cover: smooth gradients + blobs + texture patches."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    img = np.zeros((size, size, 3))
    for c in range(3):
        img[..., c] = (0.35 + 0.3 * rng.random()
                       + 0.25 * np.sin(2 * np.pi * (rng.random() * 2 + 0.5)
                                       * (xx * rng.random() + yy * (1 - rng.random()))))
    for _ in range(4):
        cy, cx = rng.random(2) * size
        r = size * (0.1 + 0.2 * rng.random())
        blob = np.exp(-((yy * size - cy) ** 2 + (xx * size - cx) ** 2) / (2 * r ** 2))
        img += blob[..., None] * (rng.random(3) - 0.5) * 0.8
    # high-frequency texture in one quadrant
    q = size // 2
    img[:q, :q] += (rng.random((q, q, 1)) - 0.5) * 0.35
    img = np.clip(img, 0.0, 1.0)
    return torch.from_numpy(img).to(dtype)
