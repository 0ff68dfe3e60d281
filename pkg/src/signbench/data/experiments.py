"""Materialization of the six experiment configurations.

The adversarial-content matrix (which split of which dataset gets the
half-attack treatment) is:

    id 1: clean signs everywhere (control)
    id 2: clean sign train; half-adversarial sign val + test
    id 3: half-adversarial sign train + val + test
    id 4: clean shape train + val; clean sign test (transfer control)
    id 5: clean shape train + val; half-adversarial sign test
    id 6: half-adversarial shape train + val; half-adversarial sign test

Shape-trained models classify signs directly through the label bijection:
samples keep their native label strings, label_index() folds both sets into
one 4-way index space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..attacks import DEFAULT_POLICY, AttackPolicy, AttackSpec, apply_attack, sample_attack_spec
from ..rng import SplitMix64, derive_seed
from .ingest import DataError, DatasetManifest, load_image
from .labels import SIGN_CLASSES
from .splits import augment_half, split_dataset
from .transforms import PreprocessConfig, preprocess, random_rotation, scale_bbox

SPLIT_NAMES = ("train", "val", "test")

# per experiment id: (dataset for train/val, which splits are adversarial)
_MATRIX = {
    1: ("signs", frozenset()),
    2: ("signs", frozenset({"val", "test"})),
    3: ("signs", frozenset({"train", "val", "test"})),
    4: ("shapes", frozenset()),
    5: ("shapes", frozenset({"test"})),
    6: ("shapes", frozenset({"train", "val", "test"})),
}


def experiment_plan(experiment_id: int) -> tuple[str, frozenset]:
    """(training dataset kind, splits that get the half-attack treatment)."""
    if experiment_id not in _MATRIX:
        raise ValueError(f"experiment id must be 1..6, got {experiment_id}")
    return _MATRIX[experiment_id]


@dataclass
class Sample:
    """One materialized, preprocessed (and possibly attacked) image."""

    image: np.ndarray  # float32 (3,S,S) in [0,1]
    label: str
    source_id: str
    bbox: tuple[int, int, int, int] | None = None
    attack: AttackSpec | None = None


def attack_region(bbox, size) -> tuple[int, int, int, int] | None:
    """Use the sign's box when it is big enough, else the whole image."""
    if bbox is None:
        return None
    x0, y0, x1, y1 = bbox
    if (x1 - x0) * (y1 - y0) < 16:
        return None
    return bbox


def materialize_split(
    manifest: DatasetManifest,
    indices,
    split_name: str,
    adversarial: bool,
    seed: int,
    config: PreprocessConfig,
    policy: AttackPolicy = DEFAULT_POLICY,
) -> list[Sample]:
    """Load, preprocess and (optionally) attack one split's samples."""
    kind_tag = (
        "signs" if manifest.records and manifest.records[0].label in SIGN_CLASSES else "shapes"
    )
    assignment = {}
    if adversarial:
        aug_rng = SplitMix64(derive_seed(seed, "augment", kind_tag, split_name))
        assignment = augment_half(tuple(indices), aug_rng)
    samples: list[Sample] = []
    s = config.target_size
    for idx in indices:
        rec = manifest.records[idx]
        img = preprocess(load_image(rec), config)
        bbox = scale_bbox(rec.bbox, (rec.width, rec.height), (s, s)) if rec.bbox else None
        spec = None
        if idx in assignment:
            spec_rng = SplitMix64(derive_seed(seed, "attack", split_name, rec.source_id))
            spec = sample_attack_spec(
                assignment[idx], spec_rng, attack_region(bbox, s), policy
            )
            img, _ = apply_attack(img, spec)
        if split_name in config.rotate_splits:
            rot_rng = SplitMix64(derive_seed(seed, "rotate", split_name, rec.source_id))
            img = random_rotation(img, rot_rng, config.rotation_range_deg)
        samples.append(Sample(img, rec.label, rec.source_id, bbox, spec))
    return samples


def build_experiment_dataset(
    experiment_id: int,
    sign_manifest: DatasetManifest,
    shape_manifest: DatasetManifest | None,
    seed: int,
    config: PreprocessConfig | None = None,
    policy: AttackPolicy = DEFAULT_POLICY,
) -> dict[str, list[Sample]]:
    """Assemble {train, val, test} sample lists for one experiment id."""
    train_source, adv_splits = experiment_plan(experiment_id)
    if train_source == "shapes" and shape_manifest is None:
        raise DataError(f"experiment {experiment_id} needs a shapes manifest")
    config = config or PreprocessConfig()

    sign_split = split_dataset(sign_manifest, seed)
    out: dict[str, list[Sample]] = {}
    if train_source == "signs":
        per_split = {"train": sign_split.train, "val": sign_split.val, "test": sign_split.test}
        for name in SPLIT_NAMES:
            out[name] = materialize_split(
                sign_manifest, per_split[name], name, name in adv_splits, seed, config, policy
            )
    else:
        shape_split = split_dataset(shape_manifest, seed)
        out["train"] = materialize_split(
            shape_manifest, shape_split.train, "train", "train" in adv_splits, seed, config, policy
        )
        out["val"] = materialize_split(
            shape_manifest, shape_split.val, "val", "val" in adv_splits, seed, config, policy
        )
        out["test"] = materialize_split(
            sign_manifest, sign_split.test, "test", "test" in adv_splits, seed, config, policy
        )
    return out
