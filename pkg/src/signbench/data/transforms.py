"""Pixel-space preprocessing: resize to the model grid, scale to [0,1], rotate.

Resampling is written out with numpy (half-pixel-center bilinear, edge
replication) so results are identical wherever the package runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import SplitMix64


@dataclass(frozen=True)
class PreprocessConfig:
    """Target grid and rotation policy. target_size must divide by 8."""

    target_size: int = 64
    rotation_range_deg: tuple[float, float] = (-90.0, 90.0)
    rotate_splits: frozenset[str] = frozenset({"train"})

    def __post_init__(self):
        if self.target_size % 8:
            raise ValueError(f"target_size must be divisible by 8, got {self.target_size}")


def _bilinear_gather(plane: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Sample plane (H,W) at float coords, clamped to edges."""
    h, w = plane.shape
    sy = np.clip(sy, 0.0, h - 1.0)
    sx = np.clip(sx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = sy - y0
    fx = sx - x0
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (H,W) or (H,W,C) with half-pixel-center bilinear sampling."""
    h, w = image.shape[:2]
    if (h, w) == (out_h, out_w):
        return image.astype(np.float64, copy=True)
    sy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    sx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    gy, gx = np.meshgrid(sy, sx, indexing="ij")
    src = image.astype(np.float64)
    if src.ndim == 2:
        return _bilinear_gather(src, gy, gx)
    return np.stack(
        [_bilinear_gather(src[:, :, c], gy, gx) for c in range(src.shape[2])], axis=2
    )


def preprocess(image_raw: np.ndarray, config: PreprocessConfig) -> np.ndarray:
    """8-bit RGB (H,W,3) -> float32 (3,S,S) scaled to [0,1]."""
    if image_raw.ndim != 3 or image_raw.shape[2] != 3:
        raise ValueError(f"expected RGB (H,W,3) input, got shape {image_raw.shape}")
    if image_raw.dtype != np.uint8:
        raise ValueError(f"expected 8-bit input, got dtype {image_raw.dtype}")
    s = config.target_size
    resized = resize_bilinear(image_raw, s, s)
    return (resized / 255.0).transpose(2, 0, 1).astype(np.float32)


def rotate_image(image: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a (C,H,W) image about its center; positive angles turn clockwise.

    Bilinear resampling; out-of-frame samples replicate the nearest edge.
    Zero angle returns a bit-equal copy.
    """
    if angle_deg == 0.0:
        return image.copy()
    c, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    t = np.deg2rad(angle_deg)
    ct, st = np.cos(t), np.sin(t)
    sx = cx + (xx - cx) * ct + (yy - cy) * st
    sy = cy - (xx - cx) * st + (yy - cy) * ct
    out = np.stack([_bilinear_gather(image[ch].astype(np.float64), sy, sx) for ch in range(c)])
    return out.astype(image.dtype)


def random_rotation(image: np.ndarray, rng: SplitMix64,
                    degrees: tuple[float, float] = (-90.0, 90.0)) -> np.ndarray:
    """Rotate the whole image (all channels together) by a uniform random angle."""
    angle = rng.uniform(degrees[0], degrees[1])
    return rotate_image(image, angle)


def scale_bbox(
    bbox: tuple[int, int, int, int], from_wh: tuple[int, int], to_wh: tuple[int, int]
) -> tuple[int, int, int, int]:
    """Rescale a half-open pixel rect between image sizes, kept non-empty."""
    fw, fh = from_wh
    tw, th = to_wh
    x0, y0, x1, y1 = bbox
    nx0 = int(np.floor(x0 * tw / fw))
    ny0 = int(np.floor(y0 * th / fh))
    nx1 = int(np.ceil(x1 * tw / fw))
    ny1 = int(np.ceil(y1 * th / fh))
    nx1 = min(max(nx1, nx0 + 1), tw)
    ny1 = min(max(ny1, ny0 + 1), th)
    nx0 = min(nx0, nx1 - 1)
    ny0 = min(ny0, ny1 - 1)
    return nx0, ny0, nx1, ny1
