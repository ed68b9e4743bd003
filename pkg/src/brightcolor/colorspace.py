"""sRGB <-> CIELAB conversion and network-range scaling.

Conversions assume the sRGB primaries with a D65 white point and the
standard sRGB transfer function. The white point is taken as the row sums
of the forward matrix so that neutral pixels (r=g=b) land exactly on the
a=b=0 axis. All math runs in float64; stored planes are float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

# Upper bound of |a| and |b| considered by this system; covers the sRGB
# gamut with margin and matches the quantizer's lattice extent.
AB_BOUND = 110.0

_M_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
_M_XYZ2RGB = np.linalg.inv(_M_RGB2XYZ)
_WHITE = _M_RGB2XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0


@dataclass
class LabPlanes:
    """Lightness plane L (H, W, 1) and chrominance planes C (H, W, 2).

    In Lab units L lies in [0, 100] and each C channel in
    [-AB_BOUND, AB_BOUND]; after ``to_network_range`` the same container
    holds L in [0, 1] and C in [-1, 1].
    """

    L: np.ndarray
    C: np.ndarray

    @property
    def height(self) -> int:
        return self.L.shape[0]

    @property
    def width(self) -> int:
        return self.L.shape[1]

    def validate(self) -> "LabPlanes":
        """Check shapes and Lab-unit ranges; returns self for chaining."""
        if self.L.ndim != 3 or self.L.shape[2] != 1:
            raise ValueError(f"L must be (H, W, 1), got {self.L.shape}")
        if self.C.ndim != 3 or self.C.shape[2] != 2:
            raise ValueError(f"C must be (H, W, 2), got {self.C.shape}")
        if self.L.shape[:2] != self.C.shape[:2]:
            raise ValueError(
                f"L and C disagree on spatial dims: {self.L.shape[:2]} vs {self.C.shape[:2]}"
            )
        if self.L.min() < -1e-4 or self.L.max() > 100.0 + 1e-4:
            raise ValueError("L outside [0, 100]")
        if np.abs(self.C).max() > AB_BOUND + 1e-4:
            raise ValueError(f"C outside [-{AB_BOUND}, {AB_BOUND}]")
        return self


def _check_rgb(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("empty image")
    img = np.asarray(img, dtype=np.float64)
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(
            f"channel values outside [0, 1]: min={img.min():.4g} max={img.max():.4g}"
        )
    return img


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    """Undo the sRGB transfer function (gamma expansion)."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 0.04045, ((v + 0.055) / 1.055) ** 2.4, v / 12.92)


def linear_to_srgb(v: np.ndarray) -> np.ndarray:
    """Apply the sRGB transfer function (gamma compression)."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 0.0031308, 1.055 * np.power(np.maximum(v, 0.0), 1.0 / 2.4) - 0.055, 12.92 * v)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3.0 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab_array(img: np.ndarray) -> np.ndarray:
    """sRGB (..., 3) in [0, 1] -> Lab (..., 3) in float64, unvalidated."""
    lin = srgb_to_linear(np.asarray(img, dtype=np.float64))
    xyz = lin @ _M_RGB2XYZ.T
    fx = _lab_f(xyz[..., 0] / _WHITE[0])
    fy = _lab_f(xyz[..., 1] / _WHITE[1])
    fz = _lab_f(xyz[..., 2] / _WHITE[2])
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_rgb_array(lab: np.ndarray) -> np.ndarray:
    """Lab (..., 3) -> sRGB (..., 3) clipped to [0, 1], float64."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack(
        [_lab_f_inv(fx) * _WHITE[0], _lab_f_inv(fy) * _WHITE[1], _lab_f_inv(fz) * _WHITE[2]],
        axis=-1,
    )
    lin = xyz @ _M_XYZ2RGB.T
    return np.clip(linear_to_srgb(lin), 0.0, 1.0)


def rgb_to_lab(img: np.ndarray) -> LabPlanes:
    """Decompose an sRGB image into lightness and chrominance planes.

    Raises ValueError for out-of-range or malformed input.
    """
    lab = rgb_to_lab_array(_check_rgb(img))
    L = lab[..., :1].astype(np.float32)
    C = lab[..., 1:].astype(np.float32)
    return LabPlanes(L=L, C=C)


def lab_to_rgb(planes: LabPlanes) -> np.ndarray:
    """Recompose an sRGB image; out-of-gamut results are clipped to [0, 1]."""
    lab = np.concatenate(
        [np.asarray(planes.L, dtype=np.float64), np.asarray(planes.C, dtype=np.float64)], axis=-1
    )
    return lab_to_rgb_array(lab).astype(np.float32)


def to_network_range(planes: LabPlanes) -> LabPlanes:
    """Scale L to [0, 1] (divide by 100) and C to [-1, 1] (divide by AB_BOUND).

    Returns float64 planes so that ``from_network_range`` is an exact inverse
    for float32 inputs.
    """
    return LabPlanes(
        L=np.asarray(planes.L, dtype=np.float64) / 100.0,
        C=np.asarray(planes.C, dtype=np.float64) / AB_BOUND,
    )


def from_network_range(planes: LabPlanes) -> LabPlanes:
    """Inverse of ``to_network_range``; returns float32 Lab-unit planes."""
    return LabPlanes(
        L=(np.asarray(planes.L, dtype=np.float64) * 100.0).astype(np.float32),
        C=(np.asarray(planes.C, dtype=np.float64) * AB_BOUND).astype(np.float32),
    )


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8- or 16-bit PNG (or other cv2-decodable file) as float32 [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"could not decode image: {path}")
    return decode_image_array(raw, origin=str(path))


def decode_image_array(raw: np.ndarray, origin: str = "<buffer>") -> np.ndarray:
    """Normalize a cv2-decoded array (BGR/BGRA/gray, uint8/uint16) to RGB float32."""
    if raw.ndim == 2:
        raw = raw[:, :, None].repeat(3, axis=2)
    elif raw.shape[2] == 4:
        raw = raw[:, :, :3]
    elif raw.shape[2] != 3:
        raise ValueError(f"unsupported channel count {raw.shape[2]} in {origin}")
    if raw.dtype == np.uint8:
        img = raw.astype(np.float32) / 255.0
    elif raw.dtype == np.uint16:
        img = raw.astype(np.float32) / 65535.0
    else:
        raise ValueError(f"unsupported dtype {raw.dtype} in {origin}")
    return img[:, :, ::-1].copy()  # BGR -> RGB


def encode_png(img: np.ndarray, bit_depth: int = 8) -> bytes:
    """Encode a float32 [0, 1] RGB image to PNG bytes at 8 or 16 bits."""
    img = _check_rgb(img)
    if bit_depth == 8:
        arr = np.round(img * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        arr = np.round(img * 65535.0).astype(np.uint16)
    else:
        raise ValueError("bit_depth must be 8 or 16")
    ok, buf = cv2.imencode(".png", arr[:, :, ::-1])
    if not ok:
        raise ValueError("PNG encoding failed")
    return buf.tobytes()


def write_png(path: str | Path, img: np.ndarray, bit_depth: int = 8) -> None:
    Path(path).write_bytes(encode_png(img, bit_depth=bit_depth))
