"""sRGB <-> CIELab conversion (D65) and the Lab-space L2 distance metric.

All conversions use the standard sRGB transfer function and the
sRGB -> XYZ matrix for a D65 white point.  The white point is taken as
the row sums of the matrix itself, so neutral inputs (R = G = B) map to
exactly a = b = 0 and reference white to exactly L = 100 up to float
rounding.
"""

from __future__ import annotations

import numpy as np

# sRGB (linear) -> XYZ, D65.  Bradford-consistent values as published by
# IEC 61966-2-1 / Lindbloom.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ],
    dtype=np.float64,
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

# White point = image of (1,1,1); using the row sums keeps grays exactly
# neutral instead of inheriting the ~1e-7 rounding of the published D65
# triple.
_WHITE = _RGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0
_DELTA3 = _DELTA**3


def _srgb_to_linear(v: np.ndarray) -> np.ndarray:
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(v: np.ndarray) -> np.ndarray:
    v = np.clip(v, 0.0, 1.0)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * v ** (1.0 / 2.4) - 0.055)


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3.0 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Convert an 8-bit sRGB raster of shape (..., 3) to float64 CIELab.

    L lands in [0, 100]; a and b nominally in [-128, 127].  Pixels are
    converted independently.
    """
    image = np.asarray(image)
    if image.ndim < 1 or image.shape[-1] != 3:
        raise ValueError(f"expected a (..., 3) sRGB array, got shape {image.shape}")
    rgb = image.astype(np.float64) / 255.0
    xyz = _srgb_to_linear(rgb) @ _RGB_TO_XYZ.T
    fxyz = _f(xyz / _WHITE)
    fx, fy, fz = fxyz[..., 0], fxyz[..., 1], fxyz[..., 2]
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    return lab


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """Convert CIELab of shape (..., 3) back to uint8 sRGB.

    Out-of-gamut colors are clipped channel-wise; in-gamut colors
    round-trip within 1 per 8-bit channel.
    """
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim < 1 or lab.shape[-1] != 3:
        raise ValueError(f"expected a (..., 3) Lab array, got shape {lab.shape}")
    if not np.all(np.isfinite(lab)):
        raise ValueError("Lab values must be finite")
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * _WHITE
    rgb = _linear_to_srgb(xyz @ _XYZ_TO_RGB.T)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def lab_l2_distance(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean over pixels of the per-pixel Euclidean Lab distance.

    ``mask`` (optional) is a boolean array over pixels selecting which
    pixels enter the mean.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    dist = np.sqrt(np.sum((a - b) ** 2, axis=-1))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != dist.shape:
            raise ValueError(f"mask shape {mask.shape} does not match pixel shape {dist.shape}")
        if not mask.any():
            raise ValueError("mask selects no pixels")
        dist = dist[mask]
    return float(dist.mean())
