import numpy as np
import pytest

from signbench.attacks import (
    ATTACK_KINDS,
    AttackSpec,
    DegenerateRegionError,
    apply_attack,
    apply_graffiti,
    apply_illumination,
    apply_tape,
    sample_attack_spec,
)
from signbench.rng import SplitMix64


def checker_image(h=64, w=64, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.1, 0.9, size=(3, h, w))


# ---------------------------------------------------------------------------
# spec validation
# ---------------------------------------------------------------------------

def test_spec_rejects_bad_fields():
    with pytest.raises(ValueError, match="kind"):
        AttackSpec("mud", 1, 0.1)
    with pytest.raises(ValueError, match="coverage"):
        AttackSpec("tape", 1, 0.6)
    with pytest.raises(ValueError, match="intensity"):
        AttackSpec("tape", 1, 0.1, intensity=1.5)


def test_spec_round_trips_through_dict():
    spec = AttackSpec("graffiti", 99, 0.2, (4, 4, 40, 40), intensity=0.7)
    assert AttackSpec.from_dict(spec.to_dict()) == spec


# ---------------------------------------------------------------------------
# identity / determinism / range (all kinds)
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ATTACK_KINDS)
def test_zero_coverage_is_identity(kind):
    img = checker_image()
    out, report = apply_attack(img, AttackSpec(kind, 7, 0.0))
    np.testing.assert_array_equal(out, img)
    assert report.pixels_altered == 0
    assert report.achieved_coverage == 0.0


@pytest.mark.parametrize("kind", ATTACK_KINDS)
def test_same_seed_bit_identical(kind):
    img = checker_image()
    spec = AttackSpec(kind, 1234, 0.2, intensity=0.6)
    out1, _ = apply_attack(img, spec)
    out2, _ = apply_attack(img, spec)
    assert (out1 == out2).all()


@pytest.mark.parametrize("kind", ATTACK_KINDS)
def test_outputs_stay_in_unit_range(kind):
    img = checker_image()
    for seed in range(5):
        out, _ = apply_attack(img, AttackSpec(kind, seed, 0.4, intensity=0.9))
        assert out.min() >= 0.0 and out.max() <= 1.0


@pytest.mark.parametrize("kind", ATTACK_KINDS)
def test_locality_no_pixel_outside_region(kind):
    img = checker_image()
    region = (10, 14, 42, 50)
    out, _ = apply_attack(img, AttackSpec(kind, 3, 0.3, region, intensity=0.8))
    x0, y0, x1, y1 = region
    outside = np.ones((64, 64), dtype=bool)
    outside[y0:y1, x0:x1] = False
    np.testing.assert_array_equal(out[:, outside], img[:, outside])


def test_input_image_never_mutated():
    img = checker_image()
    ref = img.copy()
    apply_attack(img, AttackSpec("tape", 5, 0.3))
    np.testing.assert_array_equal(img, ref)


def test_three_kinds_pairwise_different():
    img = checker_image()
    outs = [apply_attack(img, AttackSpec(k, 11, 0.25, intensity=0.7))[0] for k in ATTACK_KINDS]
    for i in range(3):
        for j in range(i + 1, 3):
            assert (outs[i] != outs[j]).any()


def test_degenerate_region_rejected():
    img = checker_image()
    with pytest.raises(DegenerateRegionError):
        apply_tape(img, AttackSpec("tape", 1, 0.2, (0, 0, 3, 3)))


def test_region_outside_bounds_rejected():
    img = checker_image()
    with pytest.raises(ValueError, match="bounds"):
        apply_tape(img, AttackSpec("tape", 1, 0.2, (0, 0, 65, 64)))


def test_unknown_kind_in_dispatch():
    spec = AttackSpec("tape", 1, 0.2)
    object.__setattr__(spec, "kind", "mystery")
    with pytest.raises(ValueError, match="unknown"):
        apply_attack(checker_image(), spec)


# ---------------------------------------------------------------------------
# coverage accuracy (pixel-diff oracle)
# ---------------------------------------------------------------------------

def test_tape_coverage_example():
    img = checker_image()
    _, report = apply_tape(img, AttackSpec("tape", 21, 0.15))
    assert abs(report.achieved_coverage - 0.15) <= 0.03


def test_tape_coverage_sweep():
    img = checker_image()
    rng = SplitMix64(77)
    for _ in range(25):
        cov = rng.uniform(0.0, 0.5)
        spec = AttackSpec("tape", rng.next_u64(), cov)
        out, report = apply_tape(img, spec)
        diff = int((out != img).any(axis=0).sum())
        assert report.pixels_altered == diff
        assert abs(report.achieved_coverage - cov) <= 0.03, cov


def test_graffiti_coverage_sweep():
    img = checker_image()
    rng = SplitMix64(88)
    for _ in range(25):
        cov = rng.uniform(0.0, 0.5)
        spec = AttackSpec("graffiti", rng.next_u64(), cov, intensity=0.5)
        out, report = apply_graffiti(img, spec)
        diff = int((out != img).any(axis=0).sum())
        assert report.pixels_altered == diff
        assert abs(report.achieved_coverage - cov) <= 0.05, cov


def test_achieved_coverage_never_exceeds_half():
    img = checker_image()
    for kind in ATTACK_KINDS:
        for seed in (1, 2, 3):
            _, report = apply_attack(img, AttackSpec(kind, seed, 0.5, intensity=0.9))
            assert report.achieved_coverage <= 0.5 + 1e-12


# ---------------------------------------------------------------------------
# graffiti containment
# ---------------------------------------------------------------------------

def test_graffiti_contained_in_region():
    img = checker_image()
    region = (8, 8, 56, 56)
    out, _ = apply_graffiti(img, AttackSpec("graffiti", 42, 0.2, region))
    x0, y0, x1, y1 = region
    outside = np.ones((64, 64), dtype=bool)
    outside[y0:y1, x0:x1] = False
    np.testing.assert_array_equal(out[:, outside], img[:, outside])


# ---------------------------------------------------------------------------
# illumination formula
# ---------------------------------------------------------------------------

def test_illumination_zero_intensity_identity():
    img = checker_image()
    out, report = apply_illumination(img, AttackSpec("illumination", 9, 0.3, intensity=0.0))
    np.testing.assert_array_equal(out, img)
    assert report.pixels_altered == 0


def test_illumination_white_image_unchanged():
    img = np.ones((3, 64, 64))
    out, report = apply_illumination(img, AttackSpec("illumination", 9, 0.3, intensity=0.8))
    np.testing.assert_array_equal(out, img)
    assert report.pixels_altered == 0


def test_illumination_center_pixel_formula():
    # mid-gray 0.5 + intensity 0.4 * falloff(center)=1 -> 0.9 exactly
    img = np.full((3, 64, 64), 0.5)
    out, report = apply_illumination(img, AttackSpec("illumination", 4, 0.3, intensity=0.4))
    cx, cy = report.params_drawn["center"]
    np.testing.assert_allclose(out[:, cy, cx], 0.9, atol=1e-12)


def test_illumination_brightens_only():
    img = checker_image()
    out, _ = apply_illumination(img, AttackSpec("illumination", 13, 0.4, intensity=0.5))
    assert (out >= img - 1e-12).all()


# ---------------------------------------------------------------------------
# spec factory
# ---------------------------------------------------------------------------

def test_sample_attack_spec_ranges():
    rng = SplitMix64(5)
    for kind in ATTACK_KINDS:
        spec = sample_attack_spec(kind, rng)
        assert spec.kind == kind
        assert 0.0 <= spec.coverage <= 0.5
        if kind == "illumination":
            assert 0.3 <= spec.intensity <= 0.9
    with pytest.raises(ValueError):
        sample_attack_spec("mud", rng)


def test_sample_attack_spec_deterministic():
    a = sample_attack_spec("tape", SplitMix64(1))
    b = sample_attack_spec("tape", SplitMix64(1))
    assert a == b
