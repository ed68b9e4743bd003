"""Paired-dataset ingestion, synthetic pair generation, and augmentation.

Real datasets follow the low/ + high/ directory layout with matching
filenames. For desk-scale work the synthetic generator renders colorful
procedural scenes and degrades them (gamma darkening, chroma
desaturation in Lab, Gaussian noise) into low/normal pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colorspace import lab_to_rgb, read_png, rgb_to_lab, write_png

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class DatasetError(Exception):
    """Dataset layout or decoding problem (maps to CLI exit code 2)."""


@dataclass
class ImagePair:
    low: np.ndarray
    normal: np.ndarray
    id: str


@dataclass
class PairPaths:
    id: str
    low: Path
    normal: Path


class PairDataset:
    """Deterministically ordered, lazily loaded list of image pairs."""

    def __init__(self, entries: list[PairPaths]):
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> ImagePair:
        entry = self.entries[index]
        try:
            low = read_png(entry.low)
            normal = read_png(entry.normal)
        except ValueError as exc:
            raise DatasetError(str(exc)) from exc
        if low.shape != normal.shape:
            raise DatasetError(
                f"pair '{entry.id}' dimensions differ: {low.shape} vs {normal.shape}"
            )
        return ImagePair(low=low, normal=normal, id=entry.id)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]


def load_pairs(low_dir: str | Path, high_dir: str | Path) -> PairDataset:
    """Scan two directories for identically named images, sorted by name.

    Raises DatasetError listing orphan files when the directories do not
    match one-to-one.
    """
    low_dir, high_dir = Path(low_dir), Path(high_dir)
    for d in (low_dir, high_dir):
        if not d.is_dir():
            raise DatasetError(f"not a directory: {d}")

    def listing(d: Path) -> dict[str, Path]:
        return {
            p.name: p
            for p in sorted(d.iterdir())
            if p.suffix.lower() in IMAGE_EXTENSIONS
        }

    low_files, high_files = listing(low_dir), listing(high_dir)
    orphans_low = sorted(set(low_files) - set(high_files))
    orphans_high = sorted(set(high_files) - set(low_files))
    if orphans_low or orphans_high:
        parts = []
        if orphans_low:
            parts.append(f"only in {low_dir}: {', '.join(orphans_low)}")
        if orphans_high:
            parts.append(f"only in {high_dir}: {', '.join(orphans_high)}")
        raise DatasetError("unmatched files; " + "; ".join(parts))
    if not low_files:
        raise DatasetError(f"no images found in {low_dir}")
    entries = [
        PairPaths(id=Path(name).stem, low=low_files[name], normal=high_files[name])
        for name in sorted(low_files)
    ]
    return PairDataset(entries)


def _soft_ellipse(yy: np.ndarray, xx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(0.15, 0.85, size=2)
    ry, rx = rng.uniform(0.1, 0.35, size=2)
    d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    softness = rng.uniform(8.0, 30.0)
    z = np.clip((1.0 - d) * softness, -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(-z))


def make_scene(seed: int, size: int = 64) -> np.ndarray:
    """Render a deterministic colorful test scene (smooth gradients plus
    soft-edged colored shapes), RGB float32 in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    c0 = rng.uniform(0.15, 0.9, size=3)
    c1 = rng.uniform(0.15, 0.9, size=3)
    angle = rng.uniform(0, 2 * np.pi)
    t = (np.cos(angle) * xx + np.sin(angle) * yy + 1.0) / 2.0
    img = c0[None, None, :] * (1 - t[..., None]) + c1[None, None, :] * t[..., None]
    for _ in range(rng.integers(3, 7)):
        mask = _soft_ellipse(yy, xx, rng)[..., None]
        color = rng.uniform(0.05, 0.98, size=3)[None, None, :]
        img = img * (1 - mask) + color * mask
    # gentle illumination field to vary lightness across the frame
    ly, lx = rng.uniform(0.0, 1.0, size=2)
    falloff = 1.0 - 0.25 * np.sqrt((yy - ly) ** 2 + (xx - lx) ** 2)
    img = img * falloff[..., None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_darken(
    img: np.ndarray,
    gamma_range: tuple[float, float] = (2.0, 3.0),
    noise_sigma: float = 0.01,
    desat: float = 0.5,
    seed: int = 0,
    pair_id: str | None = None,
) -> ImagePair:
    """Degrade a normal-light image into a synthetic low-light partner.

    Applies gamma darkening, scales chroma by (1 - desat) in Lab, and adds
    Gaussian noise; every step is seeded. desat=1 produces a grayscale low
    image, and (gamma=1, desat=0, sigma=0) is the identity.
    """
    if desat < 0.0 or desat > 1.0:
        raise ValueError("desat must be in [0, 1]")
    if noise_sigma < 0.0:
        raise ValueError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    gamma = float(rng.uniform(*gamma_range))
    low = np.asarray(img, dtype=np.float32)
    if gamma != 1.0:
        low = np.power(low, gamma)
    if desat > 0.0:
        planes = rgb_to_lab(low)
        planes.C = planes.C * (1.0 - desat)
        low = lab_to_rgb(planes)
    if noise_sigma > 0.0:
        low = low + rng.normal(0.0, noise_sigma, size=low.shape).astype(np.float32)
        low = np.clip(low, 0.0, 1.0)
    return ImagePair(
        low=low.astype(np.float32),
        normal=np.asarray(img, dtype=np.float32),
        id=pair_id if pair_id is not None else f"synth_{seed:04d}",
    )


def augment(pair: ImagePair, crop: int, seed: int) -> ImagePair:
    """Apply one random crop window and one k*90-degree rotation to both
    members of a pair, preserving pixel alignment."""
    h, w = pair.low.shape[:2]
    if crop > min(h, w):
        raise ValueError(f"crop {crop} exceeds image size {h}x{w}")
    if crop % 16 != 0:
        raise ValueError("crop must be divisible by 16")
    rng = np.random.default_rng(seed)
    y0 = int(rng.integers(0, h - crop + 1))
    x0 = int(rng.integers(0, w - crop + 1))
    k = int(rng.integers(0, 4))

    def transform(img: np.ndarray) -> np.ndarray:
        window = img[y0 : y0 + crop, x0 : x0 + crop]
        return np.ascontiguousarray(np.rot90(window, k))

    return ImagePair(low=transform(pair.low), normal=transform(pair.normal), id=pair.id)


def generate_synthetic_dataset(
    out_dir: str | Path,
    count: int = 16,
    size: int = 64,
    seed: int = 0,
    gamma_range: tuple[float, float] = (2.0, 3.0),
    noise_sigma: float = 0.01,
    desat: float = 0.5,
) -> PairDataset:
    """Write a seeded synthetic dataset (low/, high/, manifest.json)."""
    out_dir = Path(out_dir)
    low_dir, high_dir = out_dir / "low", out_dir / "high"
    low_dir.mkdir(parents=True, exist_ok=True)
    high_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        pair_id = f"scene_{i:04d}"
        scene = make_scene(seed=seed * 100003 + i, size=size)
        pair = synth_darken(
            scene,
            gamma_range=gamma_range,
            noise_sigma=noise_sigma,
            desat=desat,
            seed=seed * 100003 + i,
            pair_id=pair_id,
        )
        write_png(low_dir / f"{pair_id}.png", pair.low)
        write_png(high_dir / f"{pair_id}.png", pair.normal)
        entries.append({"id": pair_id, "low": f"low/{pair_id}.png", "high": f"high/{pair_id}.png", "split": "train"})
    manifest = {
        "version": 1,
        "seed": seed,
        "count": count,
        "size": size,
        "degradation": {
            "gamma_range": list(gamma_range),
            "noise_sigma": noise_sigma,
            "desat": desat,
        },
        "entries": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return load_pairs(low_dir, high_dir)
