"""Multi-task enhancement model: a lightness encoder shared by a
brightening decoder (modulated by inverted-lightness and edge priors) and a
colorization decoder (fed by a chrominance guidance encoder through gated
fusion), plus a quantized-color classification head at quarter resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class ModelConfig:
    base_channels: int = 16
    num_scales: int = 4
    use_lam: bool = True
    use_cem: bool = True
    use_class_head: bool = True
    shared_encoder: bool = True
    decouple: bool = True
    n_bins: int = 313

    def __post_init__(self) -> None:
        if self.base_channels < 4:
            raise ValueError("base_channels must be >= 4")
        if self.num_scales != 4:
            raise ValueError("the four-block design requires num_scales == 4")

    def channels(self, scale: int) -> int:
        # doubled per downsample, capped at 8x base
        return min(self.base_channels * (2**scale), self.base_channels * 8)


_SOBEL_X = torch.tensor(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
).view(1, 1, 3, 3)
_SOBEL_Y = _SOBEL_X.transpose(2, 3)


def compute_priors(L_in: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Brightening priors from a network-range lightness map (B, 1, H, W).

    Returns (inverted map, edge map): the inverted map is 1 - L and the edge
    map is the 3x3 Sobel gradient magnitude with reflective padding.
    """
    inv = 1.0 - L_in
    padded = F.pad(L_in, (1, 1, 1, 1), mode="reflect")
    gx = F.conv2d(padded, _SOBEL_X.to(L_in.dtype).to(L_in.device))
    gy = F.conv2d(padded, _SOBEL_Y.to(L_in.dtype).to(L_in.device))
    edge = torch.sqrt(gx * gx + gy * gy)
    return inv, edge


def lam_apply(feat: torch.Tensor, inv: torch.Tensor, edge: torch.Tensor) -> torch.Tensor:
    """Modulate features by the resized priors: F * psi(B) * (1 + psi(E))."""
    size = feat.shape[-2:]
    if inv.shape[-2:] != size:
        inv = F.interpolate(inv, size=size, mode="bilinear", align_corners=False)
    if edge.shape[-2:] != size:
        edge = F.interpolate(edge, size=size, mode="bilinear", align_corners=False)
    return feat * inv * (1.0 + edge)


class ChannelGate(nn.Module):
    """Squeeze-excite style per-channel gate."""

    def __init__(self, ch: int):
        super().__init__()
        hidden = max(ch // 4, 4)
        self.fc1 = nn.Conv2d(ch, hidden, 1)
        self.fc2 = nn.Conv2d(hidden, ch, 1)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        g = F.adaptive_avg_pool2d(x, 1)
        g = torch.sigmoid(self.fc2(self.act(self.fc1(g))))
        return x * g


class ContextBlock(nn.Module):
    """Residual feature block: two 3x3 convs plus a channel-attention gate."""

    def __init__(self, ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)
        self.gate = ChannelGate(ch)
        self.act = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv2(self.act(self.conv1(x)))
        return x + self.gate(y)


class Downsample(nn.Module):
    def __init__(self, ch_in: int, ch_out: int):
        super().__init__()
        self.conv = nn.Conv2d(ch_in, ch_out, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    """Bilinear x2 followed by a 1x1 projection."""

    def __init__(self, ch_in: int, ch_out: int):
        super().__init__()
        self.conv = nn.Conv2d(ch_in, ch_out, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.conv(x)


class ColorEmbed(nn.Module):
    """Gated fusion of lightness-path and guidance features.

    A_l and A_c are sigmoid affinity maps computed from the element-wise sum
    of the two inputs by 1x1 convolutions; the output is
    F_l * A_l + F_c * A_c.
    """

    def __init__(self, ch: int):
        super().__init__()
        self.conv_l = nn.Conv2d(ch, ch, 1)
        self.conv_c = nn.Conv2d(ch, ch, 1)

    def affinities(self, f_l: torch.Tensor, f_c: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if f_l.shape != f_c.shape:
            raise ValueError(f"shape mismatch: {tuple(f_l.shape)} vs {tuple(f_c.shape)}")
        s = f_l + f_c
        return torch.sigmoid(self.conv_l(s)), torch.sigmoid(self.conv_c(s))

    def forward(self, f_l: torch.Tensor, f_c: torch.Tensor) -> torch.Tensor:
        a_l, a_c = self.affinities(f_l, f_c)
        return f_l * a_l + f_c * a_c


class ConcatFuse(nn.Module):
    """Fusion fallback used by the no-gated-fusion ablation: concat + 1x1."""

    def __init__(self, ch: int):
        super().__init__()
        self.conv = nn.Conv2d(2 * ch, ch, 1)

    def forward(self, f_l: torch.Tensor, f_c: torch.Tensor) -> torch.Tensor:
        return self.conv(torch.cat([f_l, f_c], dim=1))


class Encoder(nn.Module):
    """Four blocks of (context block, downsample) plus a bottleneck block.

    Returns the per-scale skip features (recorded after each block's context
    block) and the bottleneck feature at 1/16 resolution.
    """

    def __init__(self, config: ModelConfig, in_ch: int = 1, width_div: int = 1):
        super().__init__()
        self.num_scales = config.num_scales
        chans = [max(config.channels(s) // width_div, 2) for s in range(config.num_scales + 1)]
        self.stem = nn.Conv2d(in_ch, chans[0], 3, padding=1)
        self.blocks = nn.ModuleList(ContextBlock(chans[s]) for s in range(config.num_scales))
        self.downs = nn.ModuleList(
            Downsample(chans[s], chans[s + 1]) for s in range(config.num_scales)
        )
        self.bottleneck = ContextBlock(chans[-1])
        self.chans = chans

    def forward(self, x: torch.Tensor) -> tuple[list[torch.Tensor], torch.Tensor]:
        h, w = x.shape[-2:]
        div = 2**self.num_scales
        if h % div or w % div:
            raise ValueError(f"spatial dims must be divisible by {div}, got {h}x{w}")
        skips = []
        y = self.stem(x)
        for block, down in zip(self.blocks, self.downs):
            y = block(y)
            skips.append(y)
            y = down(y)
        return skips, self.bottleneck(y)


class BrightenDecoder(nn.Module):
    """Lightness decoder: four (upsample, skip merge, context block) stages
    with prior modulation at the bottleneck and after every stage."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.use_lam = config.use_lam
        chans = [config.channels(s) for s in range(config.num_scales + 1)]
        self.ups = nn.ModuleList(
            Upsample(chans[s + 1], chans[s]) for s in reversed(range(config.num_scales))
        )
        self.merges = nn.ModuleList(
            nn.Conv2d(2 * chans[s], chans[s], 1) for s in reversed(range(config.num_scales))
        )
        self.blocks = nn.ModuleList(
            ContextBlock(chans[s]) for s in reversed(range(config.num_scales))
        )
        self.head = nn.Conv2d(chans[0], 1, 1)

    def forward(
        self,
        skips: list[torch.Tensor],
        bottom: torch.Tensor,
        inv: torch.Tensor,
        edge: torch.Tensor,
    ) -> torch.Tensor:
        y = lam_apply(bottom, inv, edge) if self.use_lam else bottom
        for up, merge, block, skip in zip(self.ups, self.merges, self.blocks, reversed(skips)):
            y = up(y)
            y = merge(torch.cat([y, skip], dim=1))
            y = block(y)
            if self.use_lam:
                y = lam_apply(y, inv, edge)
        return torch.sigmoid(self.head(y))


class ColorizeDecoder(nn.Module):
    """Chrominance decoder: mirrors the brightening decoder but fuses
    guidance features at every stage and branches the classification head
    from the quarter-resolution stage."""

    def __init__(self, config: ModelConfig, guide_chans: list[int]):
        super().__init__()
        self.use_class_head = config.use_class_head
        chans = [config.channels(s) for s in range(config.num_scales + 1)]
        scales = list(reversed(range(config.num_scales)))  # [3, 2, 1, 0]
        self.scales = scales
        self.ups = nn.ModuleList(Upsample(chans[s + 1], chans[s]) for s in scales)
        self.merges = nn.ModuleList(nn.Conv2d(2 * chans[s], chans[s], 1) for s in scales)
        self.blocks = nn.ModuleList(ContextBlock(chans[s]) for s in scales)
        self.guide_projs = nn.ModuleList(
            nn.Conv2d(guide_chans[s], chans[s], 1) for s in scales
        )
        fuse = ColorEmbed if config.use_cem else ConcatFuse
        self.fusers = nn.ModuleList(fuse(chans[s]) for s in scales)
        self.head = nn.Conv2d(chans[0], 2, 1)
        if config.use_class_head:
            self.class_head = nn.Conv2d(chans[2], config.n_bins, 1)

    def forward(
        self,
        skips: list[torch.Tensor],
        bottom: torch.Tensor,
        guide: list[torch.Tensor],
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        y = bottom
        logits = None
        for i, s in enumerate(self.scales):
            y = self.ups[i](y)
            y = self.merges[i](torch.cat([y, skips[s]], dim=1))
            y = self.blocks[i](y)
            y = self.fusers[i](y, self.guide_projs[i](guide[s]))
            if s == 2 and self.use_class_head:
                logits = self.class_head(y)
        return torch.tanh(self.head(y)), logits


class BrightColorNet(nn.Module):
    """The decoupled enhancement model over network-range Lab planes.

    forward(L_in, C_in, inv, edge, C_ref=None, gamma=0.0) returns
    (L_pred, C_pred, q_logits); q_logits is None without the class head.
    When a reference guidance map is given, guidance features from C_in and
    C_ref are blended per scale as (1 - gamma) * F_c + gamma * F_ref.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        if not config.decouple:
            raise ValueError("use FusedRgbNet for the non-decoupled variant")
        self.config = config
        self.encoder = Encoder(config, in_ch=1)
        self.encoder_color = None if config.shared_encoder else Encoder(config, in_ch=1)
        self.guidance = Encoder(config, in_ch=2, width_div=2)
        self.brighten = BrightenDecoder(config)
        self.colorize = ColorizeDecoder(config, guide_chans=self.guidance.chans)

    def forward(
        self,
        L_in: torch.Tensor,
        C_in: torch.Tensor,
        inv: torch.Tensor,
        edge: torch.Tensor,
        C_ref: torch.Tensor | None = None,
        gamma: float = 0.0,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor | None]:
        if gamma > 0.0 and C_ref is None:
            raise ValueError("reference guidance required when gamma > 0")
        skips, bottom = self.encoder(L_in)
        if self.encoder_color is None:
            skips_c, bottom_c = skips, bottom
        else:
            skips_c, bottom_c = self.encoder_color(L_in)
        guide, _ = self.guidance(C_in)
        if gamma > 0.0:
            guide_ref, _ = self.guidance(C_ref)
            guide = [(1.0 - gamma) * g + gamma * r for g, r in zip(guide, guide_ref)]
        L_pred = self.brighten(skips, bottom, inv, edge)
        C_pred, q_logits = self.colorize(skips_c, bottom_c, guide)
        return L_pred, C_pred, q_logits


class FusedRgbNet(nn.Module):
    """Single RGB encoder-decoder used by the no-decoupling ablation."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config, in_ch=3)
        chans = [config.channels(s) for s in range(config.num_scales + 1)]
        scales = list(reversed(range(config.num_scales)))
        self.ups = nn.ModuleList(Upsample(chans[s + 1], chans[s]) for s in scales)
        self.merges = nn.ModuleList(nn.Conv2d(2 * chans[s], chans[s], 1) for s in scales)
        self.blocks = nn.ModuleList(ContextBlock(chans[s]) for s in scales)
        self.head = nn.Conv2d(chans[0], 3, 1)

    def forward(self, rgb: torch.Tensor) -> torch.Tensor:
        skips, y = self.encoder(rgb)
        for up, merge, block, skip in zip(self.ups, self.merges, self.blocks, reversed(skips)):
            y = up(y)
            y = merge(torch.cat([y, skip], dim=1))
            y = block(y)
        return torch.sigmoid(self.head(y))


def build_model(config: ModelConfig) -> nn.Module:
    return BrightColorNet(config) if config.decouple else FusedRgbNet(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def count_lams(model: nn.Module) -> int:
    """Number of prior-modulation applications in one brighten pass."""
    dec = getattr(model, "brighten", None)
    if dec is None or not dec.use_lam:
        return 0
    return len(dec.blocks) + 1  # one at the bottleneck plus one per stage
