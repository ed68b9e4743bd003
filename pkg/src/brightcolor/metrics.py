"""Full-reference quality metrics: PSNR, SSIM, and mean Lab distance."""

from __future__ import annotations

import numpy as np
import torch

from .colorspace import rgb_to_lab_array
from .losses import ssim_map

PSNR_CAP_DB = 100.0


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on [0, 1] images, capped at 100."""
    a, b = _check_pair(a, b)
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def ssim_metric(a: np.ndarray, b: np.ndarray, win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over channels; same windowed kernel as the SSIM loss."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    ta = torch.from_numpy(a.transpose(2, 0, 1)[None])
    tb = torch.from_numpy(b.transpose(2, 0, 1)[None])
    with torch.no_grad():
        return float(ssim_map(ta, tb, win_size=win_size, sigma=sigma).mean())


def delta_e_ab(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-pixel Euclidean distance between full Lab triples."""
    a, b = _check_pair(a, b)
    lab_a = rgb_to_lab_array(a)
    lab_b = rgb_to_lab_array(b)
    return float(np.sqrt(((lab_a - lab_b) ** 2).sum(axis=-1)).mean())
