"""Post-training customization of the color guidance.

Both knobs operate purely on chrominance before it enters the colorization
path, so the predicted lightness is untouched by any customization:
saturation control scales the guidance by (1 + omega), and style control
adapts the guidance statistics toward a reference image's chrominance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .colorspace import AB_BOUND, rgb_to_lab


@dataclass
class CustomizeParams:
    """User-facing knobs: saturation gain omega, reference blend gamma,
    and the optional reference image (RGB float [0, 1])."""

    omega: float = 0.0
    gamma: float = 0.7
    reference: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.omega):
            raise ValueError("omega must be finite")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass
class GuidanceInputs:
    """Prepared inputs for the colorization guidance path (ab units)."""

    C_in: np.ndarray
    C_ref: np.ndarray | None
    gamma: float


def reinhard_adapt(
    C_in: np.ndarray, C_ref: np.ndarray, variant: str = "moments"
) -> np.ndarray:
    """Transfer per-channel chroma statistics from a reference map.

    The default ``moments`` variant rescales each centered channel by
    std_ref / std_in and re-adds the reference mean, so the output matches
    the reference's first two moments. The ``centered`` variant instead
    scales by std_in / std_ref and leaves channels zero-mean; it is kept
    only for comparison. Results are clipped to the ab bounds. A channel of
    C_in with zero spread keeps scale 1 and is only mean-shifted.
    """
    C_in = np.asarray(C_in, dtype=np.float64)
    C_ref = np.asarray(C_ref, dtype=np.float64)
    if C_in.size == 0 or C_ref.size == 0:
        raise ValueError("empty chrominance map")
    if C_in.shape[-1] != 2 or C_ref.shape[-1] != 2:
        raise ValueError("chrominance maps must have 2 channels")
    if variant not in ("moments", "centered"):
        raise ValueError(f"unknown variant '{variant}'")
    out = np.empty_like(C_in)
    for ch in range(2):
        x = C_in[..., ch]
        mean_in, std_in = x.mean(), x.std()
        mean_ref, std_ref = C_ref[..., ch].mean(), C_ref[..., ch].std()
        if variant == "moments":
            if mean_in == mean_ref and std_in == std_ref:
                out[..., ch] = x  # statistics already match; exact no-op
                continue
            scale = std_ref / std_in if std_in > 0 else 1.0
            out[..., ch] = (x - mean_in) * scale + mean_ref
        else:
            scale = std_in / std_ref if std_ref > 0 else 1.0
            out[..., ch] = (x - mean_in) * scale
    return np.clip(out, -AB_BOUND, AB_BOUND).astype(np.float32)


def amplify_saturation(C_in: np.ndarray, omega: float) -> np.ndarray:
    """Scale chroma by (1 + omega), clipped to the ab bounds."""
    if not np.isfinite(omega):
        raise ValueError("omega must be finite")
    if omega < 0.0 or omega > 1.0:
        warnings.warn(
            f"omega={omega} outside [0, 1]; result may be over dull or saturated",
            stacklevel=2,
        )
    out = np.asarray(C_in, dtype=np.float64) * (1.0 + omega)
    return np.clip(out, -AB_BOUND, AB_BOUND).astype(np.float32)


def customize_guidance(C_in: np.ndarray, params: CustomizeParams) -> GuidanceInputs:
    """Build the guidance inputs for the colorization path.

    Style adaptation (if a reference is present) runs on the raw guidance,
    then saturation amplification applies to both guidance maps, so a
    reference identical to the input is a no-op for any gamma. Without a
    reference the blend weight is forced to 0.
    """
    if params.reference is None:
        return GuidanceInputs(C_in=amplify_saturation(C_in, params.omega), C_ref=None, gamma=0.0)
    ref_planes = rgb_to_lab(params.reference)
    adapted = reinhard_adapt(C_in, ref_planes.C)
    return GuidanceInputs(
        C_in=amplify_saturation(C_in, params.omega),
        C_ref=amplify_saturation(adapted, params.omega),
        gamma=params.gamma,
    )
