"""Synthetic desk-scale data: four sign archetypes and four plain shapes.

Renders colored geometry on noisy backgrounds and writes the same on-disk
layout the ingester reads (images/*.png + annotations/*.xml), so generated
datasets round-trip losslessly through load_annotations.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
from PIL import Image

from .ingest import DatasetManifest, SampleRecord
from .labels import SHAPE_CLASSES, SIGN_CLASSES

_RED = (0.72, 0.10, 0.12)
_WHITE = (0.93, 0.93, 0.93)
_YELLOW = (0.95, 0.78, 0.12)
_DARK = (0.16, 0.16, 0.18)
_AMBER = (0.95, 0.65, 0.10)
_GREEN = (0.15, 0.70, 0.25)


def _grid(size: int):
    yy, xx = np.mgrid[0:size, 0:size]
    return yy + 0.5, xx + 0.5


def _polygon_mask(size, cx, cy, r, n_sides, phase):
    yy, xx = _grid(size)
    angles = phase + 2 * np.pi * np.arange(n_sides) / n_sides
    vx = cx + r * np.cos(angles)
    vy = cy + r * np.sin(angles)
    inside = np.ones((size, size), dtype=bool)
    for i in range(n_sides):
        j = (i + 1) % n_sides
        cross = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
        inside &= cross >= 0
    return inside


def _disc_mask(size, cx, cy, r):
    yy, xx = _grid(size)
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _rect_mask(size, cx, cy, hw, hh):
    yy, xx = _grid(size)
    return (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)


def _paint(img, mask, color, jitter=0.0, rng=None):
    col = np.asarray(color, dtype=float)
    if jitter and rng is not None:
        col = np.clip(col + rng.uniform(-jitter, jitter, 3), 0.0, 1.0)
    img[mask] = col


_DISTRACTOR_PALETTE = (_RED, _WHITE, _YELLOW, _DARK, _GREEN, _AMBER)


def _add_distractors(img, rng: np.random.Generator, size: int):
    """Background clutter: palette-colored bars blended toward the backdrop.

    Breaks global color statistics without planting sign lookalikes, so
    classifiers must rely on shape structure.
    """
    base = img.mean(axis=(0, 1))
    for _ in range(rng.integers(2, 5)):
        col = np.asarray(_DISTRACTOR_PALETTE[rng.integers(0, len(_DISTRACTOR_PALETTE))])
        col = 0.45 * col + 0.55 * base
        cx, cy = rng.uniform(0, size, 2)
        r = rng.uniform(0.04, 0.12) * size
        blob = _rect_mask(size, cx, cy, r, rng.uniform(1.5, 4.0) * r)
        if rng.random() < 0.5:
            blob = blob.T
        _paint(img, blob, np.clip(col, 0, 1), 0.04, rng)


def _render(label: str, rng: np.random.Generator, size: int):
    """Returns (float image HWC in [0,1], boolean shape mask)."""
    img = np.empty((size, size, 3))
    base = rng.uniform(0.25, 0.70, 3)
    img[:] = base
    img += rng.uniform(-0.07, 0.07, (size, size, 3))
    _add_distractors(img, rng, size)

    cx = size / 2 + rng.uniform(-0.10, 0.10) * size
    cy = size / 2 + rng.uniform(-0.10, 0.10) * size
    r = rng.uniform(0.26, 0.40) * size
    tilt = rng.uniform(-0.14, 0.14)

    if label in ("stop", "octagon"):
        mask = _polygon_mask(size, cx, cy, r, 8, np.pi / 8 + tilt)
        _paint(img, mask, _RED, 0.04, rng)
        if label == "stop":
            rim = mask & ~_polygon_mask(size, cx, cy, 0.9 * r, 8, np.pi / 8 + tilt)
            _paint(img, rim, _WHITE)
            band = mask & (np.abs(_grid(size)[0] - cy) < 0.22 * r)
            _paint(img, band, _WHITE, 0.02, rng)
    elif label in ("speed_limit", "circle"):
        mask = _disc_mask(size, cx, cy, r)
        if label == "circle":
            _paint(img, mask, _WHITE, 0.03, rng)
        else:
            _paint(img, mask, _WHITE)
            ring = mask & ~_disc_mask(size, cx, cy, 0.76 * r)
            _paint(img, ring, _RED, 0.04, rng)
            for dx in (-0.17, 0.17):
                bar = _rect_mask(size, cx + dx * r, cy, 0.075 * r, 0.30 * r)
                _paint(img, bar & mask, _DARK)
    elif label in ("crosswalk", "triangle"):
        mask = _polygon_mask(size, cx, cy, r, 3, -np.pi / 2 + tilt)
        _paint(img, mask, _YELLOW, 0.04, rng)
        if label == "crosswalk":
            border = mask & ~_polygon_mask(size, cx, cy + 0.06 * r, 0.78 * r, 3, -np.pi / 2 + tilt)
            _paint(img, border, _DARK)
            head = _disc_mask(size, cx, cy + 0.05 * r, 0.11 * r)
            body = _rect_mask(size, cx, cy + 0.32 * r, 0.06 * r, 0.18 * r)
            _paint(img, (head | body) & mask, _DARK)
    elif label in ("traffic_light", "square"):
        if label == "square":
            mask = _polygon_mask(size, cx, cy, r, 4, np.pi / 4 + tilt)
            _paint(img, mask, _DARK, 0.04, rng)
        else:
            mask = _rect_mask(size, cx, cy, 0.52 * r, r)
            _paint(img, mask, _DARK, 0.02, rng)
            for dy, col in ((-0.62, _RED), (0.0, _AMBER), (0.62, _GREEN)):
                lamp = _disc_mask(size, cx, cy + dy * r, 0.26 * r)
                _paint(img, lamp & mask, col, 0.03, rng)
    else:
        raise ValueError(f"unknown class {label!r}")

    return np.clip(img, 0.0, 1.0), mask


def _bbox_of(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def _write_annotation(path: Path, filename: str, size: int, label: str, bbox):
    ann = ET.Element("annotation")
    ET.SubElement(ann, "filename").text = filename
    sz = ET.SubElement(ann, "size")
    ET.SubElement(sz, "width").text = str(size)
    ET.SubElement(sz, "height").text = str(size)
    ET.SubElement(sz, "depth").text = "3"
    obj = ET.SubElement(ann, "object")
    ET.SubElement(obj, "name").text = label
    box = ET.SubElement(obj, "bndbox")
    for tag, val in zip(("xmin", "ymin", "xmax", "ymax"), bbox):
        ET.SubElement(box, tag).text = str(val)
    ET.ElementTree(ann).write(path, encoding="unicode", xml_declaration=True)


def synth_generate(
    per_class: int, kind: str, seed: int, out_dir, size: int = 64
) -> DatasetManifest:
    """Render per_class images for each of the four classes and write them out.

    kind selects the class set: 'signs' (detailed archetypes) or 'shapes'
    (plain solid geometry). Deterministic per seed, including pixel data.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if kind == "signs":
        classes = SIGN_CLASSES
    elif kind == "shapes":
        classes = SHAPE_CLASSES
    else:
        raise ValueError(f"kind must be 'signs' or 'shapes', got {kind!r}")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    ann_dir = out_dir / "annotations"
    img_dir.mkdir(parents=True, exist_ok=True)
    ann_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(np.random.PCG64(seed))
    records = []
    for label in classes:
        for i in range(per_class):
            img, mask = _render(label, rng, size)
            bbox = _bbox_of(mask)
            stem = f"{label}_{i:04d}"
            filename = f"{stem}.png"
            pixels = (img * 255.0).round().astype(np.uint8)
            Image.fromarray(pixels).save(img_dir / filename)
            _write_annotation(ann_dir / f"{stem}.xml", filename, size, label, bbox)
            records.append(
                SampleRecord(
                    source_id=stem,
                    image_path=str(img_dir / filename),
                    label=label,
                    width=size,
                    height=size,
                    bbox=bbox,
                )
            )
    return DatasetManifest(records, [], str(out_dir))
