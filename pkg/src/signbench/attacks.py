"""Synthetic physical attacks: tape strips, graffiti strokes, glare.

Each generator perturbs a (3,H,W) float image inside a target region,
deterministically under (image, spec). Geometry never depends on pixel
content, so the same spec always stamps the same mask; the report counts the
pixels that actually changed.

Coverage targeting: the natural geometry (rectangles, stroked curves, an
ellipse) is rasterized first, then the mask is nudged to the exact pixel
budget by adding/removing boundary pixels, so achieved coverage tracks the
requested fraction well inside the documented tolerances.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

from .rng import SplitMix64

ATTACK_KINDS = ("tape", "graffiti", "illumination")


class DegenerateRegionError(ValueError):
    """Attack region smaller than 16 pixels."""


@dataclass(frozen=True)
class AttackSpec:
    """One parameterized attack instance.

    region is a half-open pixel rect (x0, y0, x1, y1); None means the whole
    image. coverage is the fraction of region pixels to alter, capped at 0.5.
    intensity is kind-specific: peak brightness delta for illumination,
    unused by tape, saturated-color probability for graffiti.
    """

    kind: str
    seed: int
    coverage: float
    region: tuple[int, int, int, int] | None = None
    intensity: float = 0.5

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.coverage <= 0.5:
            raise ValueError(f"coverage must be in [0, 0.5], got {self.coverage}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"intensity must be in [0, 1], got {self.intensity}")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "coverage": self.coverage,
            "region": list(self.region) if self.region else None,
            "intensity": self.intensity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        region = tuple(d["region"]) if d.get("region") else None
        return cls(d["kind"], d["seed"], d["coverage"], region, d.get("intensity", 0.5))


@dataclass
class AttackReport:
    pixels_altered: int
    achieved_coverage: float
    params_drawn: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AttackPolicy:
    """Sampling ranges used when the pipeline fabricates attack specs.

    Defaults are tuned so the attacks visibly degrade a clean-trained model
    at desk scale while an adversarially trained one still learns them.
    """

    tape_coverage: tuple[float, float] = (0.4, 0.5)
    graffiti_coverage: tuple[float, float] = (0.4, 0.5)
    illumination_coverage: tuple[float, float] = (0.45, 0.5)
    illumination_intensity: tuple[float, float] = (0.75, 0.9)


DEFAULT_POLICY = AttackPolicy()


def sample_attack_spec(
    kind: str,
    rng: SplitMix64,
    region: tuple[int, int, int, int] | None = None,
    policy: AttackPolicy = DEFAULT_POLICY,
) -> AttackSpec:
    """Draw a concrete AttackSpec for one sample from the policy ranges."""
    seed = rng.next_u64()
    if kind == "tape":
        return AttackSpec(kind, seed, rng.uniform(*policy.tape_coverage), region)
    if kind == "graffiti":
        return AttackSpec(kind, seed, rng.uniform(*policy.graffiti_coverage), region)
    if kind == "illumination":
        return AttackSpec(
            kind,
            seed,
            rng.uniform(*policy.illumination_coverage),
            region,
            intensity=rng.uniform(*policy.illumination_intensity),
        )
    raise ValueError(f"unknown attack kind {kind!r}")


# ---------------------------------------------------------------------------
# shared geometry helpers
# ---------------------------------------------------------------------------

def _validate_image(image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"image must be (3,H,W), got {image.shape}")
    if not np.isfinite(image).all():
        raise ValueError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")


def _resolve_region(image: np.ndarray, spec: AttackSpec) -> tuple[int, int, int, int]:
    _, h, w = image.shape
    if spec.region is None:
        x0, y0, x1, y1 = 0, 0, w, h
    else:
        x0, y0, x1, y1 = (int(v) for v in spec.region)
        if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
            raise ValueError(
                f"region {spec.region} outside image bounds {w}x{h}"
            )
    if (x1 - x0) * (y1 - y0) < 16:
        raise DegenerateRegionError(
            f"region {x0, y0, x1, y1} has area < 16 px"
        )
    return x0, y0, x1, y1


def _pixel_budget(coverage: float, area: int) -> int:
    return min(int(round(coverage * area)), area // 2)


def _rect_mask(rw, rh, cx, cy, length, width, angle) -> np.ndarray:
    yy, xx = np.mgrid[0:rh, 0:rw]
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    c, s = np.cos(angle), np.sin(angle)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (np.abs(u) <= length / 2.0) & (np.abs(v) <= width / 2.0)


def _interior(mask: np.ndarray) -> np.ndarray:
    it = mask.copy()
    it[1:, :] &= mask[:-1, :]
    it[0, :] = False
    it[:-1, :] &= mask[1:, :]
    it[-1, :] = False
    it[:, 1:] &= mask[:, :-1]
    it[:, 0] = False
    it[:, :-1] &= mask[:, 1:]
    it[:, -1] = False
    return it


def _ring(mask: np.ndarray) -> np.ndarray:
    r = np.zeros_like(mask)
    r[1:, :] |= mask[:-1, :]
    r[:-1, :] |= mask[1:, :]
    r[:, 1:] |= mask[:, :-1]
    r[:, :-1] |= mask[:, 1:]
    return r & ~mask


def _fit_mask_to_target(mask: np.ndarray, target: int) -> np.ndarray:
    """Grow/shrink the mask by boundary pixels (row-major) to exactly target."""
    count = int(mask.sum())
    if count == 0 and target > 0:
        mask[mask.shape[0] // 2, mask.shape[1] // 2] = True
        count = 1
    while count < target:
        cand = np.flatnonzero(_ring(mask).ravel())
        if cand.size == 0:
            break
        take = cand[: target - count]
        mask.ravel()[take] = True
        count += take.size
    while count > target:
        boundary = mask & ~_interior(mask)
        cand = np.flatnonzero(boundary.ravel())
        if cand.size == 0:
            cand = np.flatnonzero(mask.ravel())
        drop = cand[: count - target]
        mask.ravel()[drop] = False
        count -= drop.size
    return mask


def _disc_offsets(radius: float) -> tuple[np.ndarray, np.ndarray]:
    r = int(np.ceil(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dy * dy + dx * dx <= radius * radius
    return dy[keep], dx[keep]


def _report(image: np.ndarray, out: np.ndarray, area: int, params: dict) -> AttackReport:
    altered = int((out != image).any(axis=0).sum())
    return AttackReport(altered, altered / area, params)


# ---------------------------------------------------------------------------
# the three generators
# ---------------------------------------------------------------------------

def apply_tape(image: np.ndarray, spec: AttackSpec) -> tuple[np.ndarray, AttackReport]:
    """Stamp 1-3 opaque light-gray strips (rotated rectangles) in the region."""
    _validate_image(image)
    x0, y0, x1, y1 = _resolve_region(image, spec)
    rh, rw = y1 - y0, x1 - x0
    area = rh * rw
    out = image.copy()
    target = _pixel_budget(spec.coverage, area)
    params: dict = {"strips": []}
    if target == 0:
        return out, _report(image, out, area, params)

    rng = SplitMix64(spec.seed)
    short = min(rh, rw)
    max_len = float(np.hypot(rw, rh))
    k = rng.randint(1, 3)
    params["num_strips"] = k
    mask = np.zeros((rh, rw), dtype=bool)
    gray_map = np.full((rh, rw), -1.0)
    gray = 0.82
    for i in range(k):
        remaining = target - int(mask.sum())
        if remaining <= 0:
            break
        per = remaining / (k - i)
        width = max(2.0, rng.uniform(0.10, 0.20) * short)
        length = per / width
        if length > max_len:
            # coverage demands more area than the nominal band allows: widen
            length = max_len
            width = per / length
        length = max(length, width)
        angle = rng.uniform(0.0, np.pi)
        gray = 0.82 + rng.uniform(-0.05, 0.05)
        best_m, best_new, best_c = None, -1, (0.0, 0.0)
        for _ in range(8):
            cx = rng.uniform(0.15 * rw, 0.85 * rw)
            cy = rng.uniform(0.15 * rh, 0.85 * rh)
            m = _rect_mask(rw, rh, cx, cy, length, width, angle)
            new = int((m & ~mask).sum())
            if new > best_new:
                best_m, best_new, best_c = m, new, (cx, cy)
        mask |= best_m
        gray_map[best_m] = gray
        params["strips"].append(
            {
                "center": [round(best_c[0], 3), round(best_c[1], 3)],
                "length": round(float(length), 3),
                "width": round(float(width), 3),
                "angle": round(float(angle), 5),
                "gray": round(float(gray), 5),
            }
        )
    _fit_mask_to_target(mask, target)
    gray_map[mask & (gray_map < 0)] = gray
    view = out[:, y0:y1, x0:x1]
    view[:, mask] = gray_map[mask]
    return out, _report(image, out, area, params)


def apply_graffiti(image: np.ndarray, spec: AttackSpec) -> tuple[np.ndarray, AttackReport]:
    """Stamp 1-4 quadratic-curve strokes, discs swept along each curve."""
    _validate_image(image)
    x0, y0, x1, y1 = _resolve_region(image, spec)
    rh, rw = y1 - y0, x1 - x0
    area = rh * rw
    out = image.copy()
    target = _pixel_budget(spec.coverage, area)
    params: dict = {"strokes": []}
    if target == 0:
        return out, _report(image, out, area, params)

    rng = SplitMix64(spec.seed)
    short = min(rh, rw)
    n_strokes = rng.randint(1, 4)
    params["num_strokes"] = n_strokes
    mask = np.zeros((rh, rw), dtype=bool)
    color_map = np.zeros((rh, rw, 3))
    color = np.zeros(3)
    count = 0
    for _ in range(n_strokes):
        if count >= target:
            break
        pts = np.array(
            [[rng.uniform(0, rw), rng.uniform(0, rh)] for _ in range(3)]
        )
        thickness = max(2.0, rng.uniform(0.03, 0.08) * short)
        radius = thickness / 2.0
        if rng.random() >= spec.intensity:  # intensity = saturated-color probability
            color = np.full(3, rng.uniform(0.02, 0.12))  # near-black
        else:
            color = np.array(colorsys.hsv_to_rgb(rng.random(), 0.9, 0.9))
        dy, dx = _disc_offsets(radius)
        approx_len = float(
            np.linalg.norm(pts[1] - pts[0]) + np.linalg.norm(pts[2] - pts[1])
        )
        steps = max(16, int(2 * approx_len))
        params["strokes"].append(
            {
                "control_points": np.round(pts, 3).tolist(),
                "thickness": round(float(thickness), 3),
                "color": np.round(color, 5).tolist(),
            }
        )
        for t in np.linspace(0.0, 1.0, steps):
            b = (1 - t) ** 2 * pts[0] + 2 * (1 - t) * t * pts[1] + t**2 * pts[2]
            py = np.clip(np.round(b[1]).astype(int) + dy, 0, rh - 1)
            px = np.clip(np.round(b[0]).astype(int) + dx, 0, rw - 1)
            fresh = ~mask[py, px]
            if fresh.any():
                mask[py[fresh], px[fresh]] = True
                color_map[py[fresh], px[fresh]] = color
                count += int(fresh.sum())
            if count >= target:
                break
    _fit_mask_to_target(mask, target)
    uncolored = mask & ~color_map.any(axis=-1)
    color_map[uncolored] = color
    view = out[:, y0:y1, x0:x1]
    view[:, mask] = color_map[mask].T
    return out, _report(image, out, area, params)


def apply_illumination(image: np.ndarray, spec: AttackSpec) -> tuple[np.ndarray, AttackReport]:
    """Add an elliptical glare patch: quadratic falloff from center, clamped."""
    _validate_image(image)
    x0, y0, x1, y1 = _resolve_region(image, spec)
    rh, rw = y1 - y0, x1 - x0
    area = rh * rw
    out = image.copy()
    target = _pixel_budget(spec.coverage, area)
    params: dict = {}
    if target == 0 or spec.intensity == 0.0:
        return out, _report(image, out, area, params)

    rng = SplitMix64(spec.seed)
    aspect = rng.uniform(0.5, 1.0)
    a = float(np.sqrt(target / (np.pi * aspect)))
    b = a * aspect
    theta = rng.uniform(0.0, np.pi)
    cx = int(round(rng.uniform(0.25 * rw, 0.75 * rw)))
    cy = int(round(rng.uniform(0.25 * rh, 0.75 * rh)))
    params.update(
        {
            "center": [cx, cy],
            "semi_axes": [round(a, 3), round(b, 3)],
            "angle": round(float(theta), 5),
            "intensity": spec.intensity,
        }
    )
    yy, xx = np.mgrid[0:rh, 0:rw]
    dx = (xx - cx).astype(float)
    dy = (yy - cy).astype(float)
    c, s = np.cos(theta), np.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    r2 = (u / a) ** 2 + (v / b) ** 2
    # exact pixel budget: keep the `target` pixels closest to the center
    take = np.argpartition(r2.ravel(), target - 1)[:target]
    sel = np.zeros(area, dtype=bool)
    sel[take] = True
    falloff = np.clip(1.0 - r2, 0.0, None) * sel.reshape(rh, rw)
    view = out[:, y0:y1, x0:x1]
    np.clip(view + spec.intensity * falloff[None, :, :], 0.0, 1.0, out=view)
    return out, _report(image, out, area, params)


def apply_attack(image: np.ndarray, spec: AttackSpec) -> tuple[np.ndarray, AttackReport]:
    """Dispatch to the generator matching spec.kind."""
    if spec.kind == "tape":
        return apply_tape(image, spec)
    if spec.kind == "graffiti":
        return apply_graffiti(image, spec)
    if spec.kind == "illumination":
        return apply_illumination(image, spec)
    raise ValueError(f"unknown attack kind {spec.kind!r}")
