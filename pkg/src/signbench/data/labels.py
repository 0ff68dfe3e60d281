"""Class labels for the two four-way datasets and the shape-to-sign bijection.

A shape's class index is its mapped sign's index, so a network trained on
shapes emits logits directly comparable with sign ground truth.
"""

SIGN_CLASSES = ("stop", "speed_limit", "crosswalk", "traffic_light")
SHAPE_CLASSES = ("octagon", "circle", "triangle", "square")

SHAPE_TO_SIGN = {
    "octagon": "stop",
    "circle": "speed_limit",
    "triangle": "crosswalk",
    "square": "traffic_light",
}
SIGN_TO_SHAPE = {sign: shape for shape, sign in SHAPE_TO_SIGN.items()}


def to_sign_label(label: str) -> str:
    """Map any known label into the sign class set."""
    if label in SIGN_CLASSES:
        return label
    if label in SHAPE_TO_SIGN:
        return SHAPE_TO_SIGN[label]
    raise KeyError(f"unknown class label {label!r}")


def to_shape_label(label: str) -> str:
    """Map any known label into the shape class set."""
    if label in SHAPE_CLASSES:
        return label
    if label in SIGN_TO_SHAPE:
        return SIGN_TO_SHAPE[label]
    raise KeyError(f"unknown class label {label!r}")


def label_index(label: str) -> int:
    """Class index 0..3, shared by signs and their shape counterparts."""
    return SIGN_CLASSES.index(to_sign_label(label))


def is_known_label(label: str) -> bool:
    return label in SIGN_CLASSES or label in SHAPE_CLASSES
