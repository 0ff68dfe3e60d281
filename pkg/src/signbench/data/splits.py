"""Split protocol (70/20/10, stratified) and the augment-half selection rule.

Global split sizes follow the floor rule exactly: floor(0.7n) / floor(0.2n) /
remainder. Stratification distributes those totals across classes by largest
remainder (capped by class size), so the per-class proportions hold while the
global sizes stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from collections import OrderedDict

from ..rng import SplitMix64
from .ingest import DataError, DatasetManifest

TRAIN_FRAC, VAL_FRAC = 0.7, 0.2
MIN_SAMPLES = 10


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]
    seed: int

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
            "seed": self.seed,
        }


def split_sizes(n: int) -> tuple[int, int, int]:
    """Global 70/20/10 sizes: floors for train and val, remainder to test.

    Integer arithmetic so floor(0.7n) is exact (float 0.7*520 lands below 364).
    """
    n_train = 7 * n // 10
    n_val = 2 * n // 10
    return n_train, n_val, n - n_train - n_val


def _apportion(quotas: list[float], total: int, caps: list[int]) -> list[int]:
    """Largest-remainder apportionment of `total` across classes, capped."""
    base = [min(int(q), cap) for q, cap in zip(quotas, caps)]
    short = total - sum(base)
    # hand out the shortfall by descending fractional remainder, skipping
    # saturated classes; ties resolve in class order
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - int(quotas[i])), i))
    while short > 0:
        progressed = False
        for i in order:
            if short == 0:
                break
            if base[i] < caps[i]:
                base[i] += 1
                short -= 1
                progressed = True
        if not progressed:
            raise DataError("cannot apportion split: all classes saturated")
    return base


def split_dataset(manifest: DatasetManifest, seed: int) -> SplitAssignment:
    """Seeded, per-class stratified 70/20/10 split over manifest records."""
    n = len(manifest)
    if n < MIN_SAMPLES:
        raise DataError(f"need at least {MIN_SAMPLES} samples to split, got {n}")
    n_train, n_val, _ = split_sizes(n)

    by_class: "OrderedDict[str, list[int]]" = OrderedDict()
    for i, label in enumerate(manifest.labels):
        by_class.setdefault(label, []).append(i)
    classes = list(by_class)
    counts = [len(by_class[c]) for c in classes]

    train_per = _apportion([n_train * c / n for c in counts], n_train, counts)
    val_caps = [c - t for c, t in zip(counts, train_per)]
    val_per = _apportion([n_val * c / n for c in counts], n_val, val_caps)

    rng = SplitMix64(seed)
    train: list[int] = []
    val: list[int] = []
    test: list[int] = []
    for cls, tr_k, va_k in zip(classes, train_per, val_per):
        idx = list(by_class[cls])
        rng.split(f"class:{cls}").shuffle(idx)
        train += idx[:tr_k]
        val += idx[tr_k : tr_k + va_k]
        test += idx[tr_k + va_k :]
    return SplitAssignment(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)), seed)


def augment_half(
    indices: tuple[int, ...] | list[int],
    rng: SplitMix64,
    kinds: tuple[str, ...] = ("tape", "graffiti", "illumination"),
) -> "OrderedDict[int, str]":
    """Pick floor(half) of a split for attack, kinds round-robin in draw order.

    Returns an ordered mapping index -> attack kind; unmapped indices stay
    clean. The attacked half replaces its clean copies downstream.
    """
    if not indices:
        raise DataError("cannot augment an empty split")
    n = len(indices)
    chosen = rng.sample_indices(n, n // 2)
    assignment: "OrderedDict[int, str]" = OrderedDict()
    for j, pos in enumerate(chosen):
        assignment[indices[pos]] = kinds[j % len(kinds)]
    return assignment
