"""Experiment execution: train the fixed CNN on one matrix cell, record the
learning curve, test once, and derive the three ranking criteria inputs
(efficiency seconds, test accuracy, generalizability).
"""

from __future__ import annotations

import json
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .attacks import ATTACK_KINDS, DEFAULT_POLICY, apply_attack, sample_attack_spec
from .data import (
    PreprocessConfig,
    build_experiment_dataset,
    label_index,
    load_annotations,
    split_dataset,
    synth_generate,
)
from .data.experiments import Sample, attack_region, experiment_plan, materialize_split
from .rng import SplitMix64, derive_seed

GENERALIZABILITY_WINDOW = 5


class ExperimentDiverged(RuntimeError):
    """Training produced a non-finite loss; carries the partial curve."""

    def __init__(self, message: str, partial_curve: list):
        super().__init__(message)
        self.partial_curve = partial_curve


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: int
    seed: int = 0
    epochs: int = 30
    lr: float = 0.03
    batch_size: int = 32
    target_size: int = 64
    sign_root: str | None = None
    shape_root: str | None = None
    synth_per_class: int = 50
    fine_tune: bool = False
    fine_tune_epochs: int = 5
    reaugment: bool = True  # redraw train-split rotation/attacks each epoch
    dtype: str = "float32"

    def __post_init__(self):
        if not 1 <= self.experiment_id <= 6:
            raise ValueError(f"experiment id must be 1..6, got {self.experiment_id}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32/float64, got {self.dtype}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float
    wall_ms: float


@dataclass
class ExperimentResult:
    experiment_id: int
    seed: int
    curve: list[EpochRecord]
    test_accuracy: float  # on the experiment's own (possibly mixed) test set
    clean_test_accuracy: float  # probe: full sign test split, no attacks
    adversarial_test_accuracy: float  # probe: full sign test split, all attacked
    confusion_matrix: list[list[int]]
    efficiency_raw: float  # training wall-clock seconds
    generalizability: float
    control_similarity: float | None = None
    fine_tune_curve: list[EpochRecord] = field(default_factory=list)
    params: nn.NetworkParams | None = None  # not serialized

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "seed": self.seed,
            "curve": [asdict(r) for r in self.curve],
            "test_accuracy": self.test_accuracy,
            "clean_test_accuracy": self.clean_test_accuracy,
            "adversarial_test_accuracy": self.adversarial_test_accuracy,
            "confusion_matrix": self.confusion_matrix,
            "efficiency_raw": self.efficiency_raw,
            "generalizability": self.generalizability,
            "control_similarity": self.control_similarity,
            "fine_tune_curve": [asdict(r) for r in self.fine_tune_curve],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        return cls(
            experiment_id=d["experiment_id"],
            seed=d["seed"],
            curve=[EpochRecord(**r) for r in d["curve"]],
            test_accuracy=d["test_accuracy"],
            clean_test_accuracy=d["clean_test_accuracy"],
            adversarial_test_accuracy=d["adversarial_test_accuracy"],
            confusion_matrix=d["confusion_matrix"],
            efficiency_raw=d["efficiency_raw"],
            generalizability=d["generalizability"],
            control_similarity=d.get("control_similarity"),
            fine_tune_curve=[EpochRecord(**r) for r in d.get("fine_tune_curve", [])],
        )


# ---------------------------------------------------------------------------
# training machinery
# ---------------------------------------------------------------------------

def _to_arrays(samples: list[Sample], dtype) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([s.image for s in samples]).astype(dtype)
    y = np.array([label_index(s.label) for s in samples], dtype=np.int64)
    return x, y


def evaluate(spec, params, x, y, batch_size=64) -> tuple[float, float, np.ndarray]:
    """Full-pass mean loss, accuracy and predictions, in batches."""
    total_loss, correct = 0.0, 0
    preds = np.empty(len(y), dtype=np.int64)
    for lo in range(0, len(y), batch_size):
        hi = min(lo + batch_size, len(y))
        logits, _ = nn.forward(spec, params, x[lo:hi])
        loss, _ = nn.softmax_cross_entropy(logits, y[lo:hi])
        total_loss += loss * (hi - lo)
        p = logits.argmax(axis=1)
        preds[lo:hi] = p
        correct += int((p == y[lo:hi]).sum())
    return total_loss / len(y), correct / len(y), preds


def _run_epoch(
    spec, params, x_train, y_train, lr, batch_size, shuffle_seed,
    curve, epoch_label, trainable=None,
) -> tuple[float, float]:
    """One shuffled pass of minibatch SGD; returns (mean loss, accuracy)."""
    order = list(range(len(y_train)))
    SplitMix64(shuffle_seed).shuffle(order)
    epoch_loss, epoch_correct = 0.0, 0
    for lo in range(0, len(order), batch_size):
        sel = order[lo : lo + batch_size]
        xb, yb = x_train[sel], y_train[sel]
        try:
            loss, logits, grads = nn.loss_and_grads(spec, params, xb, yb)
        except nn.NonFiniteError as exc:
            raise ExperimentDiverged(f"epoch {epoch_label}: {exc}", list(curve)) from exc
        if not np.isfinite(loss):
            raise ExperimentDiverged(
                f"epoch {epoch_label}: loss diverged to {loss}", list(curve)
            )
        if trainable is not None:
            grads = {k: g for k, g in grads.items() if k in trainable}
        nn.sgd_step(params, grads, lr)
        epoch_loss += loss * len(sel)
        epoch_correct += int((logits.argmax(axis=1) == yb).sum())
    return epoch_loss / len(order), epoch_correct / len(order)


def _resolve_data(config: ExperimentConfig, workdir: Path):
    """Load manifests from the configured roots, synthesizing when absent."""
    if config.sign_root:
        signs = load_annotations(config.sign_root)
    else:
        signs = synth_generate(
            config.synth_per_class, "signs", derive_seed(config.seed, "synth-signs") % 2**32,
            workdir / "signs", size=config.target_size,
        )
    needs_shapes = config.experiment_id >= 4
    shapes = None
    if needs_shapes:
        if config.shape_root:
            shapes = load_annotations(config.shape_root)
        else:
            shapes = synth_generate(
                config.synth_per_class, "shapes", derive_seed(config.seed, "synth-shapes") % 2**32,
                workdir / "shapes", size=config.target_size,
            )
    return signs, shapes


def _probe_sets(signs, seed: int, pre: PreprocessConfig) -> tuple[list[Sample], list[Sample]]:
    """Clean and fully-attacked variants of the sign test split.

    Every experiment is probed on the same two sets, so clean/adversarial
    accuracies are comparable across ids regardless of each id's own test mix.
    """
    test_idx = split_dataset(signs, seed).test
    clean = materialize_split(signs, test_idx, "test", False, seed, pre)
    attacked = []
    for s in clean:
        for kind in ATTACK_KINDS:  # every sample under every attack kind
            rng = SplitMix64(derive_seed(seed, "probe-attack", kind, s.source_id))
            spec_a = sample_attack_spec(
                kind, rng, attack_region(s.bbox, pre.target_size), DEFAULT_POLICY
            )
            img, _ = apply_attack(s.image, spec_a)
            attacked.append(Sample(img, s.label, s.source_id, s.bbox, spec_a))
    return clean, attacked


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Train one matrix cell end to end; fully seeded and reproducible.

    The training split's augmentation (rotation, and attack instances for the
    adversarial ids) is redrawn every epoch from the seed chain, generator
    style; validation and test materializations are static.
    """
    dtype = np.float64 if config.dtype == "float64" else np.float32
    pre = PreprocessConfig(target_size=config.target_size)
    with tempfile.TemporaryDirectory(prefix="signbench-data-") as tmp:
        signs, shapes = _resolve_data(config, Path(tmp))
        data = build_experiment_dataset(
            config.experiment_id, signs, shapes, config.seed, pre
        )
        clean_probe, adv_probe = _probe_sets(signs, config.seed, pre)

        train_source, adv_splits = experiment_plan(config.experiment_id)
        train_manifest = signs if train_source == "signs" else shapes
        train_idx = split_dataset(train_manifest, config.seed).train
        adv_train = "train" in adv_splits

        fine_tune_samples = None
        if config.fine_tune and config.experiment_id >= 4:
            sign_split = split_dataset(signs, config.seed)
            fine_tune_samples = materialize_split(
                signs, sign_split.train, "train", config.experiment_id == 6,
                config.seed, pre,
            )

        spec = nn.NetworkSpec(height=config.target_size, width=config.target_size)
        params = nn.init_params(spec, derive_seed(config.seed, "init") % 2**32, dtype)

        x_train, y_train = _to_arrays(data["train"], dtype)
        x_val, y_val = _to_arrays(data["val"], dtype)
        x_test, y_test = _to_arrays(data["test"], dtype)

        t_start = time.perf_counter()
        curve: list[EpochRecord] = []
        t0 = time.perf_counter()
        for epoch in range(1, config.epochs + 1):
            if config.reaugment and epoch > 1:
                fresh = materialize_split(
                    train_manifest, train_idx, "train", adv_train,
                    derive_seed(config.seed, "epoch", str(epoch)), pre,
                )
                x_train, y_train = _to_arrays(fresh, dtype)
            train_loss, train_acc = _run_epoch(
                spec, params, x_train, y_train, config.lr, config.batch_size,
                derive_seed(config.seed, "shuffle", str(epoch)), curve, epoch,
            )
            val_loss, val_acc, _ = evaluate(spec, params, x_val, y_val, config.batch_size)
            curve.append(
                EpochRecord(epoch, train_loss, val_loss, train_acc, val_acc,
                            (time.perf_counter() - t0) * 1000.0)
            )
        fine_curve: list[EpochRecord] = []
        if fine_tune_samples:
            x_ft, y_ft = _to_arrays(fine_tune_samples, dtype)
            head = {"fc1.w", "fc1.b", "fc2.w", "fc2.b", "out.w", "out.b"}
            t0 = time.perf_counter()
            for epoch in range(1, config.fine_tune_epochs + 1):
                label = config.epochs + epoch
                train_loss, train_acc = _run_epoch(
                    spec, params, x_ft, y_ft, config.lr, config.batch_size,
                    derive_seed(config.seed, "shuffle", str(label)), fine_curve, label,
                    trainable=head,
                )
                val_loss, val_acc, _ = evaluate(spec, params, x_val, y_val, config.batch_size)
                fine_curve.append(
                    EpochRecord(label, train_loss, val_loss, train_acc, val_acc,
                                (time.perf_counter() - t0) * 1000.0)
                )
        efficiency = time.perf_counter() - t_start

    _, test_acc, preds = evaluate(spec, params, x_test, y_test, config.batch_size)
    confusion = np.zeros((spec.num_classes, spec.num_classes), dtype=np.int64)
    for truth, pred in zip(y_test, preds):
        confusion[truth, pred] += 1

    x_cp, y_cp = _to_arrays(clean_probe, dtype)
    x_ap, y_ap = _to_arrays(adv_probe, dtype)
    _, clean_acc, _ = evaluate(spec, params, x_cp, y_cp, config.batch_size)
    _, adv_acc, _ = evaluate(spec, params, x_ap, y_ap, config.batch_size)

    return ExperimentResult(
        experiment_id=config.experiment_id,
        seed=config.seed,
        curve=curve,
        test_accuracy=float(test_acc),
        clean_test_accuracy=float(clean_acc),
        adversarial_test_accuracy=float(adv_acc),
        confusion_matrix=confusion.tolist(),
        efficiency_raw=efficiency,
        generalizability=compute_generalizability(curve),
        fine_tune_curve=fine_curve,
        params=params,
    )


# ---------------------------------------------------------------------------
# derived metrics
# ---------------------------------------------------------------------------

def compute_generalizability(curve: list[EpochRecord], window: int = GENERALIZABILITY_WINDOW) -> float:
    """1 minus the normalized train/val loss gap over the last `window` epochs."""
    if not curve:
        raise ValueError("cannot compute generalizability of an empty curve")
    tail = curve[-window:]
    gaps = [
        abs(r.val_loss - r.train_loss) / max(r.val_loss, r.train_loss, 1e-9)
        for r in tail
    ]
    return float(np.clip(1.0 - np.mean(gaps), 0.0, 1.0))


def compute_control_similarity(curve: list[EpochRecord], control: list[EpochRecord]) -> float:
    """RMSE between validation-loss trajectories, truncated to the shorter."""
    if not curve or not control:
        raise ValueError("cannot compare empty curves")
    n = min(len(curve), len(control))
    diffs = [curve[i].val_loss - control[i].val_loss for i in range(n)]
    return float(np.sqrt(np.mean(np.square(diffs))))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

CSV_HEADER = "epoch,train_loss,val_loss,train_acc,val_acc,wall_ms"


def curve_csv(curve: list[EpochRecord]) -> str:
    lines = [CSV_HEADER]
    for r in curve:
        lines.append(
            f"{r.epoch},{r.train_loss:.6f},{r.val_loss:.6f},"
            f"{r.train_acc:.6f},{r.val_acc:.6f},{r.wall_ms:.1f}"
        )
    return "\n".join(lines) + "\n"


def curve_svg(curve: list[EpochRecord], title: str = "Training vs. validation loss") -> str:
    """Minimal standalone SVG: axes, two loss polylines, a small legend."""
    width, height = 640, 400
    ml, mr, mt, mb = 60, 20, 40, 50
    plot_w, plot_h = width - ml - mr, height - mt - mb
    epochs = [r.epoch for r in curve]
    max_epoch = max(epochs) if epochs else 1
    min_epoch = min(epochs) if epochs else 0
    losses = [r.train_loss for r in curve] + [r.val_loss for r in curve]
    top = max(max(losses), 1e-9) * 1.05 if losses else 1.0

    def sx(e):
        span = max(max_epoch - min_epoch, 1)
        return ml + (e - min_epoch) / span * plot_w

    def sy(v):
        return mt + (1.0 - v / top) * plot_h

    def points(key):
        return " ".join(f"{sx(r.epoch):.1f},{sy(getattr(r, key)):.1f}" for r in curve)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{mt + plot_h}" x2="{ml + plot_w}" y2="{mt + plot_h}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + plot_h}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">epoch</text>',
        f'<text x="16" y="{mt + plot_h / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {mt + plot_h / 2:.0f})">loss</text>',
        f'<text x="{ml}" y="{mt + plot_h + 16}" font-size="10" text-anchor="middle">{min_epoch}</text>',
        f'<text x="{ml + plot_w}" y="{mt + plot_h + 16}" font-size="10" text-anchor="middle">{max_epoch}</text>',
        f'<text x="{ml - 6}" y="{mt + 4}" font-size="10" text-anchor="end">{top:.3f}</text>',
        f'<text x="{ml - 6}" y="{mt + plot_h + 4}" font-size="10" text-anchor="end">0</text>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{points("train_loss")}"/>',
        f'<polyline fill="none" stroke="#ff7f0e" stroke-width="2" points="{points("val_loss")}"/>',
        f'<rect x="{ml + plot_w - 150}" y="{mt + 6}" width="12" height="3" fill="#1f77b4"/>',
        f'<text x="{ml + plot_w - 132}" y="{mt + 12}" font-size="11">training loss</text>',
        f'<rect x="{ml + plot_w - 150}" y="{mt + 24}" width="12" height="3" fill="#ff7f0e"/>',
        f'<text x="{ml + plot_w - 132}" y="{mt + 30}" font-size="11">validation loss</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def export_result(result: ExperimentResult, out_dir) -> dict[str, str]:
    """Write curve.csv, result.json, curve.svg (and checkpoint.bin if params)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    (out / "curve.csv").write_text(curve_csv(result.curve))
    written["curve.csv"] = str(out / "curve.csv")
    (out / "result.json").write_text(json.dumps(result.to_dict(), indent=2))
    written["result.json"] = str(out / "result.json")
    title = f"Experiment {result.experiment_id} (seed {result.seed}): training vs. validation loss"
    (out / "curve.svg").write_text(curve_svg(result.curve, title))
    written["curve.svg"] = str(out / "curve.svg")
    if result.params is not None:
        nn.save_checkpoint(out / "checkpoint.bin", result.params)
        written["checkpoint.bin"] = str(out / "checkpoint.bin")
    return written
