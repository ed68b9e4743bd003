"""Training objective: six weighted terms over the two decoder outputs.

Lightness: Charbonnier reconstruction, SSIM, and total variation.
Chrominance: L1 reconstruction, perceptual distance on the stacked Lab
planes, and cross-entropy against soft-encoded quantized color targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .colorspace import AB_BOUND
from .quantizer import ColorGamut, soft_encode

PERCEPTUAL_SEED = 0x5EED


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term evaluates to NaN or infinity."""

    def __init__(self, term: str, value: float):
        super().__init__(f"loss term '{term}' is non-finite ({value})")
        self.term = term


@dataclass
class LossWeights:
    """Weight factors for the six loss terms, in objective order."""

    rec_l: float = 1.0
    ssim: float = 0.1
    tv: float = 0.01
    rec_c: float = 1.0
    per: float = 0.01
    q: float = 0.01

    def __post_init__(self) -> None:
        for name, value in self.as_dict().items():
            if value < 0:
                raise ValueError(f"weight {name} must be nonnegative, got {value}")

    def as_dict(self) -> dict[str, float]:
        return {
            "rec_l": self.rec_l,
            "ssim": self.ssim,
            "tv": self.tv,
            "rec_c": self.rec_c,
            "per": self.per,
            "q": self.q,
        }


@dataclass
class LossReport:
    terms: dict[str, float]
    weighted: dict[str, float]
    total: float


def charbonnier(pred: torch.Tensor, target: torch.Tensor, eps: float = 1e-3) -> torch.Tensor:
    """Mean over pixels of sqrt(diff^2 + eps^2); eps floors the loss."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return torch.sqrt((target - pred) ** 2 + eps * eps).mean()


def _gaussian_window(win_size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(win_size, dtype=dtype, device=device) - (win_size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_map(
    x: torch.Tensor,
    y: torch.Tensor,
    win_size: int = 11,
    sigma: float = 1.5,
    data_range: float = 1.0,
) -> torch.Tensor:
    """Per-pixel SSIM over the valid (unpadded) region of (B, C, H, W) maps."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if min(x.shape[-2:]) < win_size:
        raise ValueError(f"image smaller than the {win_size}x{win_size} window")
    c = x.shape[1]
    w = _gaussian_window(win_size, sigma, x.dtype, x.device).expand(c, 1, win_size, win_size)
    mu_x = F.conv2d(x, w, groups=c)
    mu_y = F.conv2d(y, w, groups=c)
    xx = F.conv2d(x * x, w, groups=c) - mu_x * mu_x
    yy = F.conv2d(y * y, w, groups=c) - mu_y * mu_y
    xy = F.conv2d(x * y, w, groups=c) - mu_x * mu_y
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    return ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    )


def ssim_loss(
    pred: torch.Tensor, target: torch.Tensor, win_size: int = 11, sigma: float = 1.5
) -> torch.Tensor:
    """1 - mean SSIM with an 11x11 Gaussian window (sigma 1.5) by default."""
    return 1.0 - ssim_map(pred, target, win_size=win_size, sigma=sigma).mean()


def tv_loss(pred: torch.Tensor) -> torch.Tensor:
    """Anisotropic total variation: mean |horizontal| + mean |vertical|
    forward differences."""
    dh = pred[..., :, 1:] - pred[..., :, :-1]
    dv = pred[..., 1:, :] - pred[..., :-1, :]
    return dh.abs().mean() + dv.abs().mean()


def l1_chroma(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (target - pred).abs().mean()


class FeaturePyramid(nn.Module):
    """Small frozen convolutional feature extractor for the perceptual term.

    Weights are drawn from a fixed seed so the extractor is reproducible
    without shipping pretrained parameters; a learned extractor can be
    plugged in through the ``extractor`` argument of ``perceptual``.
    """

    def __init__(self, in_ch: int = 3, seed: int = PERCEPTUAL_SEED):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = [in_ch, 16, 32, 64]
        strides = [1, 2, 2]
        self.convs = nn.ModuleList()
        for i in range(3):
            conv = nn.Conv2d(chans[i], chans[i + 1], 3, stride=strides[i], padding=1)
            fan_in = chans[i] * 9
            with torch.no_grad():
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5
                )
                conv.bias.zero_()
            self.convs.append(conv)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
            feats.append(x)
        return feats


_extractor_cache: dict[tuple[torch.dtype, str], FeaturePyramid] = {}


def default_extractor(dtype: torch.dtype, device: torch.device | str = "cpu") -> FeaturePyramid:
    key = (dtype, str(device))
    if key not in _extractor_cache:
        _extractor_cache[key] = FeaturePyramid().to(dtype=dtype, device=device)
    return _extractor_cache[key]


def perceptual(
    pred: torch.Tensor, target: torch.Tensor, extractor: nn.Module | None = None
) -> torch.Tensor:
    """Mean squared distance between extractor features of the stacked
    3-channel (L, C) predictions and ground truth."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if extractor is None:
        extractor = default_extractor(pred.dtype, pred.device)
    feats_p = extractor(pred)
    feats_t = extractor(target)
    if isinstance(feats_p, torch.Tensor):
        feats_p, feats_t = [feats_p], [feats_t]
    terms = [F.mse_loss(fp, ft) for fp, ft in zip(feats_p, feats_t)]
    return torch.stack(terms).mean()


def class_loss(logits: torch.Tensor, q_target: torch.Tensor) -> torch.Tensor:
    """Soft-target cross-entropy over the quantized-color bins.

    ``logits`` and ``q_target`` are (B, Q, h, w); the target must be a valid
    per-pixel simplex.
    """
    if logits.shape != q_target.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(q_target.shape)}")
    sums = q_target.sum(dim=1)
    if q_target.min() < 0 or (sums - 1.0).abs().max() > 1e-4:
        raise ValueError("q_target is not a valid per-pixel simplex")
    return -(q_target * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


def quarter_class_target(C_actual: torch.Tensor, gamut: ColorGamut) -> torch.Tensor:
    """Build the classification target from network-range chrominance.

    Bilinearly resizes (B, 2, H, W) to quarter resolution, rescales to ab
    units, and soft-encodes each map. Returns (B, Q, H/4, W/4).
    """
    h, w = C_actual.shape[-2:]
    small = F.interpolate(C_actual, size=(h // 4, w // 4), mode="bilinear", align_corners=False)
    ab = small.detach().cpu().numpy().transpose(0, 2, 3, 1) * AB_BOUND
    encoded = np.stack([soft_encode(m, gamut) for m in ab])
    return torch.from_numpy(encoded.transpose(0, 3, 1, 2)).to(C_actual.device, C_actual.dtype)


TERM_ORDER = ("rec_l", "ssim", "tv", "rec_c", "per", "q")


def total_loss(
    terms: dict[str, torch.Tensor], weights: LossWeights | None = None
) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum of the provided terms; missing terms count as zero.

    Raises NonFiniteLossError naming the first non-finite term.
    """
    weights = weights or LossWeights()
    wdict = weights.as_dict()
    unknown = set(terms) - set(TERM_ORDER)
    if unknown:
        raise ValueError(f"unknown loss terms: {sorted(unknown)}")
    total = None
    report_terms: dict[str, float] = {}
    weighted: dict[str, float] = {}
    for name in TERM_ORDER:
        if name not in terms:
            continue
        value = terms[name]
        scalar = float(value.detach())
        if not np.isfinite(scalar):
            raise NonFiniteLossError(name, scalar)
        report_terms[name] = scalar
        weighted[name] = wdict[name] * scalar
        contrib = wdict[name] * value
        total = contrib if total is None else total + contrib
    if total is None:
        raise ValueError("no loss terms provided")
    return total, LossReport(terms=report_terms, weighted=weighted, total=float(total.detach()))
