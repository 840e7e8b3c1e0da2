import pytest
import torch

from linkmark import jnd

from helpers import assert_gradients_match, random_image, textured_cover


def flat_luma(value, size=16):
    return torch.full((size, size), float(value), dtype=torch.float64)


def test_luminance_adaptation_formula_anchors():
    assert torch.allclose(jnd.luminance_adaptation(flat_luma(0)),
                          torch.full((16, 16), 20.0, dtype=torch.float64))
    assert torch.allclose(jnd.luminance_adaptation(flat_luma(127)),
                          torch.full((16, 16), 3.0, dtype=torch.float64))
    assert torch.allclose(jnd.luminance_adaptation(flat_luma(255)),
                          torch.full((16, 16), 6.0, dtype=torch.float64))


def test_pattern_masking_zero_on_constant():
    assert jnd.pattern_masking(flat_luma(80)).abs().max() == 0.0


def test_pattern_masking_responds_to_step_edge():
    luma = torch.zeros(16, 16, dtype=torch.float64)
    luma[:, 8:] = 255.0
    cm = jnd.pattern_masking(luma)
    assert cm[:, 6:10].min() > 0.0
    assert cm[:, 0].max() == 0.0  # far from the edge


def test_pattern_masking_invariant_to_constant_shift():
    g = torch.Generator().manual_seed(4)
    luma = torch.rand(16, 16, generator=g, dtype=torch.float64) * 100
    assert torch.allclose(jnd.pattern_masking(luma), jnd.pattern_masking(luma + 55.0),
                          atol=1e-9)


def test_jnd_map_range_and_max():
    img = textured_cover(32, 3, dtype=torch.float64)
    m = jnd.jnd_map(img)
    assert m.shape == (32, 32, 3)
    assert m.min() >= 0.0
    assert abs(m.max().item() - 1.0) < 1e-9


def test_jnd_map_constant_image_rule():
    img = torch.full((16, 16, 3), 0.5, dtype=torch.float64)
    m = jnd.jnd_map(img)
    assert (m.max() - m.min()).abs() < 1e-9
    assert 0.0 < m.max() < 1.0  # normalized by the theoretical max, not its own


def test_jnd_map_higher_in_textured_region():
    # flat base with a checkerboard patch: the patch must get more budget
    img = torch.full((32, 32, 3), 0.5, dtype=torch.float64)
    yy, xx = torch.meshgrid(torch.arange(16), torch.arange(16), indexing="ij")
    checker = ((yy + xx) % 2).to(torch.float64) * 0.4 + 0.3
    img[8:24, 8:24, :] = checker.unsqueeze(-1)
    m = jnd.jnd_map(img)
    textured = m[10:22, 10:22].mean()
    flat = m[:6, :6].mean()
    assert textured > flat


def test_masking_monotonicity_under_added_texture():
    base = textured_cover(32, 5, dtype=torch.float64)
    # flatten a region, then compare against the same region with texture added
    smooth = base.clone()
    smooth[20:30, 2:12] = 0.45
    noisy = smooth.clone()
    g = torch.Generator().manual_seed(8)
    noisy[20:30, 2:12] += (torch.rand(10, 10, 3, generator=g, dtype=torch.float64)
                           - 0.5) * 0.2
    noisy = noisy.clamp(0, 1)
    before = jnd.jnd_map(smooth)[20:30, 2:12].mean()
    after = jnd.jnd_map(noisy)[20:30, 2:12].mean()
    assert after >= before


def test_jnd_loss_zero_when_residual_matches_budget():
    img = textured_cover(16, 7, dtype=torch.float64)
    m = jnd.jnd_map(img)
    cfg = jnd.JNDLossConfig(sigma=0.1)
    assert jnd.jnd_loss(cfg.sigma * m, m, cfg).item() == 0.0


def test_jnd_loss_zero_residual_value():
    m = jnd.jnd_map(textured_cover(16, 9, dtype=torch.float64))
    cfg = jnd.JNDLossConfig(sigma=0.1)
    expected = (cfg.sigma ** 2) * (m ** 2).mean()
    assert torch.allclose(jnd.jnd_loss(torch.zeros_like(m), m, cfg), expected)


def test_jnd_loss_arithmetic_example():
    m = torch.ones(4, 4, 3, dtype=torch.float64)
    r = torch.full((4, 4, 3), 0.2, dtype=torch.float64)
    loss = jnd.jnd_loss(r, m, jnd.JNDLossConfig(sigma=0.1))
    assert abs(loss.item() - 0.01) < 1e-12


def test_jnd_loss_shape_mismatch():
    with pytest.raises(ValueError):
        jnd.jnd_loss(torch.zeros(4, 4, 3), torch.zeros(8, 8, 3))


def test_jnd_loss_nonnegative_and_config_validation():
    m = jnd.jnd_map(textured_cover(16, 11, dtype=torch.float64))
    r = random_image(16, 16, 12) * 2 - 1
    assert jnd.jnd_loss(r, m).item() >= 0.0
    with pytest.raises(ValueError):
        jnd.JNDLossConfig(sigma=0.0)


def test_jnd_loss_gradient_wrt_residual():
    m = jnd.jnd_map(textured_cover(16, 13, dtype=torch.float64))
    # keep residual away from 0 where |.| is non-smooth
    r = random_image(16, 16, 14, 0.05, 0.45)

    def fn(batch):
        return torch.stack([jnd.jnd_loss(b, m) for b in batch])

    assert_gradients_match(fn, r)
