"""Dataset pipeline: ingestion, preprocessing, splits, augmentation, synthesis."""

from .labels import (
    SHAPE_CLASSES,
    SHAPE_TO_SIGN,
    SIGN_CLASSES,
    SIGN_TO_SHAPE,
    label_index,
    to_sign_label,
)
from .ingest import DataError, DatasetManifest, SampleRecord, load_annotations, load_image
from .transforms import PreprocessConfig, preprocess, random_rotation, resize_bilinear, rotate_image, scale_bbox
from .splits import SplitAssignment, augment_half, split_dataset
from .synth import synth_generate
from .experiments import Sample, build_experiment_dataset

__all__ = [
    "SHAPE_CLASSES",
    "SHAPE_TO_SIGN",
    "SIGN_CLASSES",
    "SIGN_TO_SHAPE",
    "label_index",
    "to_sign_label",
    "DataError",
    "DatasetManifest",
    "SampleRecord",
    "load_annotations",
    "load_image",
    "PreprocessConfig",
    "preprocess",
    "random_rotation",
    "resize_bilinear",
    "rotate_image",
    "scale_bbox",
    "SplitAssignment",
    "augment_half",
    "split_dataset",
    "synth_generate",
    "Sample",
    "build_experiment_dataset",
]
