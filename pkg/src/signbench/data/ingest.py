"""Ingestion of the on-disk dataset layout: images/*.png + annotations/*.xml.

Annotation files follow the familiar VOC-ish schema::

    <annotation>
      <filename>road001.png</filename>
      <size><width>64</width><height>64</height><depth>3</depth></size>
      <object>
        <name>stop</name>
        <bndbox><xmin>12</xmin><ymin>9</ymin><xmax>50</xmax><ymax>47</ymax></bndbox>
      </object>
    </annotation>

Bounding boxes are half-open pixel rects (xmin, ymin, xmax, ymax). One label
per sample: the first object with a known class wins, extras are counted.
Malformed files become recorded issues, never crashes.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .labels import is_known_label

log = logging.getLogger(__name__)


class DataError(Exception):
    """Unrecoverable dataset problem (missing root, too few samples, ...)."""


@dataclass(frozen=True)
class SampleRecord:
    """Manifest entry: one labeled image on disk (pixels not loaded yet)."""

    source_id: str
    image_path: str
    label: str
    width: int
    height: int
    bbox: tuple[int, int, int, int] | None = None

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "image_path": self.image_path,
            "label": self.label,
            "width": self.width,
            "height": self.height,
            "bbox": list(self.bbox) if self.bbox else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        bbox = tuple(d["bbox"]) if d.get("bbox") else None
        return cls(d["source_id"], d["image_path"], d["label"], d["width"], d["height"], bbox)


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    issues: list[dict] = field(default_factory=list)
    root: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.records]

    def to_json(self) -> str:
        return json.dumps(
            {
                "root": self.root,
                "records": [r.to_dict() for r in self.records],
                "issues": self.issues,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        return cls(
            [SampleRecord.from_dict(r) for r in d["records"]],
            d.get("issues", []),
            d.get("root", ""),
        )


def _parse_annotation(path: Path) -> tuple[str, int, int, list[tuple[str, tuple | None]]]:
    tree = ET.parse(path)
    ann = tree.getroot()
    filename = ann.findtext("filename")
    if not filename:
        raise ValueError("missing <filename>")
    size = ann.find("size")
    if size is None:
        raise ValueError("missing <size>")
    width = int(size.findtext("width"))
    height = int(size.findtext("height"))
    objects = []
    for obj in ann.findall("object"):
        name = obj.findtext("name") or ""
        box = obj.find("bndbox")
        bbox = None
        if box is not None:
            bbox = tuple(int(float(box.findtext(k))) for k in ("xmin", "ymin", "xmax", "ymax"))
        objects.append((name, bbox))
    return filename, width, height, objects


def load_annotations(root) -> DatasetManifest:
    """Build a manifest from a dataset directory.

    Unknown class names, malformed XML and out-of-bounds boxes are recorded
    as issues and skipped; a missing root directory raises DataError.
    """
    root = Path(root)
    if not root.exists():
        raise DataError(f"dataset root {root} does not exist")
    ann_dir = root / "annotations"
    img_dir = root / "images"
    records: list[SampleRecord] = []
    issues: list[dict] = []
    for ann_path in sorted(ann_dir.glob("*.xml")) if ann_dir.is_dir() else []:
        try:
            filename, width, height, objects = _parse_annotation(ann_path)
        except (ET.ParseError, ValueError, TypeError) as exc:
            issues.append({"file": ann_path.name, "reason": f"malformed annotation: {exc}"})
            continue
        img_path = img_dir / filename
        if not img_path.is_file():
            issues.append({"file": ann_path.name, "reason": f"missing image {filename}"})
            continue
        known = [(n, b) for n, b in objects if is_known_label(n)]
        unknown = [n for n, _ in objects if not is_known_label(n)]
        for name in unknown:
            issues.append({"file": ann_path.name, "reason": f"unknown class {name!r}"})
        if not known:
            continue
        if len(known) > 1:
            log.info("%s: %d labeled objects, keeping the first", ann_path.name, len(known))
        name, bbox = known[0]
        if bbox is not None:
            x0, y0, x1, y1 = bbox
            if not (0 <= x0 < x1 <= width and 0 <= y0 < y1 <= height):
                issues.append(
                    {"file": ann_path.name, "reason": f"bbox {bbox} outside {width}x{height}"}
                )
                continue
        records.append(
            SampleRecord(
                source_id=ann_path.stem,
                image_path=str(img_path),
                label=name,
                width=width,
                height=height,
                bbox=bbox,
            )
        )
    return DatasetManifest(records, issues, str(root))


def load_image(record: SampleRecord) -> np.ndarray:
    """Read a record's PNG as an 8-bit RGB (H,W,3) array."""
    with Image.open(record.image_path) as im:
        rgb = im.convert("RGB")
        return np.asarray(rgb, dtype=np.uint8)
