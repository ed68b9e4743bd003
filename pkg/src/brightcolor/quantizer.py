"""Quantized ab color gamut: construction, soft-encoding, and decoding.

The gamut is the set of grid-size-10 lattice points over
[-AB_BOUND, AB_BOUND]^2 whose sampling neighborhood contains at least one
sRGB-representable chroma value. The frozen construction parameters below
land the bin count at exactly 313; regenerate with ``brightcolor gamut
--regenerate`` and see ``fixtures/ab_gamut_313.txt``.

Frozen construction parameters:
  * neighborhood: disc of radius sqrt(2) * grid around each lattice point
    (one cell diagonal), inclusive of the boundary
  * chroma offsets sampled on a unit-step integer grid inside the disc
  * lightness sampled at L = 0, 1, ..., 100
  * a sample is representable when its linear-RGB image lies in [0, 1]^3
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import colorspace
from .colorspace import AB_BOUND

DEFAULT_GRID = 10.0
SOFT_ENCODE_K = 5
SOFT_ENCODE_SIGMA = 5.0
DECODE_TEMPERATURE = 0.38

_FIXTURE_NAME = "ab_gamut_313.txt"


@dataclass
class ColorGamut:
    """Immutable table of quantized ab bin centers.

    Centers are lattice points (multiples of ``grid``) sorted by (a, b);
    the sort order defines the bin indexing used everywhere else.
    """

    centers: np.ndarray  # (Q, 2) float64
    grid: float = DEFAULT_GRID

    @property
    def n_bins(self) -> int:
        return len(self.centers)

    def nearest(self, ab: np.ndarray) -> np.ndarray:
        """Indices of the Euclidean-nearest center for each (..., 2) value.

        Ties resolve to the lowest index (argmin keeps the first minimum).
        """
        ab = np.asarray(ab, dtype=np.float64)
        flat = ab.reshape(-1, 2)
        d2 = ((flat[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1).reshape(ab.shape[:-1])


def _representable_chroma_table(grid: float) -> np.ndarray:
    """Boolean table over integer (a, b) in the padded lattice extent:
    True where some L in 0..100 maps (L, a, b) into sRGB."""
    pad = int(math.floor(math.sqrt(2.0) * grid))
    lo, hi = int(-AB_BOUND) - pad, int(AB_BOUND) + pad
    coords = np.arange(lo, hi + 1)
    aa, bb = np.meshgrid(coords, coords, indexing="ij")
    Ls = np.arange(0.0, 101.0, 1.0)
    ok = np.zeros(aa.shape, dtype=bool)
    lab = np.empty(aa.shape + (3,), dtype=np.float64)
    lab[..., 1] = aa
    lab[..., 2] = bb
    for L in Ls:
        lab[..., 0] = L
        lin = _lab_to_linear(lab)
        ok |= ((lin >= 0.0) & (lin <= 1.0)).all(axis=-1)
    return ok


def _lab_to_linear(lab: np.ndarray) -> np.ndarray:
    # Same math as colorspace.lab_to_rgb_array but stopping at linear RGB,
    # which is where gamut membership is decided.
    delta = 6.0 / 29.0
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0

    def f_inv(t: np.ndarray) -> np.ndarray:
        return np.where(t > delta, t**3, 3.0 * delta**2 * (t - 4.0 / 29.0))

    white = colorspace._WHITE
    xyz = np.stack([f_inv(fx) * white[0], f_inv(fy) * white[1], f_inv(fz) * white[2]], axis=-1)
    return xyz @ colorspace._M_XYZ2RGB.T


def build_gamut(grid: float = DEFAULT_GRID) -> ColorGamut:
    """Enumerate in-gamut lattice points under the frozen sampling parameters.

    With grid=10 this yields exactly 313 bins.
    """
    if grid <= 0 or (2 * AB_BOUND) % grid != 0:
        raise ValueError(f"grid must be positive and divide {2 * AB_BOUND}")
    table = _representable_chroma_table(grid)
    pad = int(math.floor(math.sqrt(2.0) * grid))
    lo = int(-AB_BOUND) - pad
    radius2 = 2.0 * grid * grid  # (sqrt(2) * grid)^2

    span = int(math.floor(math.sqrt(2.0) * grid))
    offs = np.arange(-span, span + 1)
    da, db = np.meshgrid(offs, offs, indexing="ij")
    disc = (da**2 + db**2) <= radius2 + 1e-9
    da, db = da[disc], db[disc]

    lattice = np.arange(int(-AB_BOUND), int(AB_BOUND) + 1, int(grid))
    members = []
    for ca in lattice:
        for cb in lattice:
            ia = ca + da - lo
            ib = cb + db - lo
            if table[ia, ib].any():
                members.append((float(ca), float(cb)))
    centers = np.array(sorted(members), dtype=np.float64)
    return ColorGamut(centers=centers, grid=float(grid))


def format_gamut_text(gamut: ColorGamut) -> str:
    """Serialize the gamut as the versioned fixture text (bit-exact)."""
    lines = [
        "# ab gamut bin centers (a b), one per line",
        f"# grid={gamut.grid:g} bins={gamut.n_bins}",
        "# construction: lattice over [-110,110]^2; disc radius sqrt(2)*grid;",
        "# unit-step chroma offsets; L=0..100 step 1; linear RGB in [0,1]",
    ]
    for a, b in gamut.centers:
        lines.append(f"{int(a)} {int(b)}")
    return "\n".join(lines) + "\n"


def parse_gamut_text(text: str) -> ColorGamut:
    grid = DEFAULT_GRID
    centers = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "grid=" in line:
                grid = float(line.split("grid=")[1].split()[0])
            continue
        a, b = line.split()
        centers.append((float(a), float(b)))
    return ColorGamut(centers=np.array(centers, dtype=np.float64), grid=grid)


def fixture_path() -> Path:
    return Path(str(resources.files("brightcolor") / "fixtures" / _FIXTURE_NAME))


def load_gamut() -> ColorGamut:
    """Load the shipped 313-bin fixture."""
    return parse_gamut_text(fixture_path().read_text())


def gamut_hash(gamut: ColorGamut | None = None) -> str:
    """sha256 of the fixture serialization; embedded in checkpoints."""
    text = format_gamut_text(gamut) if gamut is not None else fixture_path().read_text()
    return hashlib.sha256(text.encode()).hexdigest()


def nearest_bin(ab: tuple[float, float] | np.ndarray, gamut: ColorGamut) -> int:
    """Index of the nearest bin center for a single (a, b) value."""
    ab = np.asarray(ab, dtype=np.float64)
    if np.abs(ab).max() > AB_BOUND:
        raise ValueError(f"ab outside [-{AB_BOUND}, {AB_BOUND}] bounding box")
    return int(gamut.nearest(ab.reshape(1, 2))[0])


def soft_encode(
    C: np.ndarray,
    gamut: ColorGamut,
    k: int = SOFT_ENCODE_K,
    sigma: float = SOFT_ENCODE_SIGMA,
) -> np.ndarray:
    """Soft-encode a chrominance map (h, w, 2) into per-pixel distributions.

    Each pixel puts Gaussian-weighted mass (std ``sigma``) on its ``k``
    nearest bin centers, normalized to sum to one. Returns (h, w, Q) float32.
    """
    C = np.asarray(C, dtype=np.float64)
    h, w = C.shape[:2]
    flat = C.reshape(-1, 2)
    d2 = ((flat[:, None, :] - gamut.centers[None, :, :]) ** 2).sum(axis=2)
    idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
    nd2 = np.take_along_axis(d2, idx, axis=1)
    weights = np.exp(-nd2 / (2.0 * sigma**2))
    weights /= weights.sum(axis=1, keepdims=True)
    out = np.zeros((h * w, gamut.n_bins), dtype=np.float64)
    np.put_along_axis(out, idx, weights, axis=1)
    return out.reshape(h, w, gamut.n_bins).astype(np.float32)


def decode(
    q: np.ndarray, gamut: ColorGamut, temperature: float = DECODE_TEMPERATURE
) -> np.ndarray:
    """Annealed-mean decoding of (h, w, Q) distributions to (h, w, 2) chroma.

    Re-normalizes exp(log p / T) and takes the expectation over centers;
    T -> 0 approaches the argmax center.
    """
    q = np.asarray(q, dtype=np.float64)
    if not np.isfinite(q).all():
        raise ValueError("distribution contains non-finite probabilities")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logp = np.full_like(q, -np.inf)
    np.log(q, out=logp, where=q > 0)
    z = logp / temperature
    z -= z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    return (p @ gamut.centers).astype(np.float32)
