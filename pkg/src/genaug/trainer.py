"""Image-classification training harness.

Implements the fixed recipe: SGD with momentum and weight decay, multi-step
learning-rate schedule with linear warmup, per-epoch validation with
best-checkpoint selection, and multi-seed experiment averaging. The classifier
is pluggable; the desk-scale default is SmallConvNet.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .convnet import SmallConvNet
from .errors import ConfigError
from .imagegen import ImageSpec

Data = tuple[np.ndarray, np.ndarray]  # (images uint8 NxHxWxC, labels int)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. Defaults are the standard recipe."""

    epochs: int = 200
    batch_size: int = 128
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0005
    milestones: tuple[int, ...] = (60, 120, 160)
    gamma: float = 0.2
    warmup_epochs: int = 10
    seeds: tuple[int, ...] = (7, 17, 42)
    loss: str = "cross_entropy"

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(self.milestones))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if list(self.milestones) != sorted(set(self.milestones)):
            raise ValueError("milestones must be strictly increasing")
        if self.milestones and self.milestones[-1] >= self.epochs:
            raise ValueError("milestones must be < epochs")
        if not (0 < self.gamma < 1):
            raise ValueError("gamma must be in (0, 1)")
        if self.milestones and self.warmup_epochs >= self.milestones[0]:
            raise ValueError("warmup_epochs must be < first milestone")
        if self.loss != "cross_entropy":
            raise ValueError("only cross_entropy loss is supported")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()


class Classifier(Protocol):
    """Pluggable classifier: parameter dict plus forward/backward."""

    params: dict[str, np.ndarray]

    def forward(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        ...

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):  # pragma: no cover - interface
        ...


ClassifierFactory = Callable[[int, ImageSpec, int], Classifier]


def make_small_convnet(num_classes: int, image_spec: ImageSpec, seed: int) -> SmallConvNet:
    return SmallConvNet(num_classes, image_spec, seed)


class TrainingDiverged(Exception):
    """Loss became non-finite; carries the history collected so far."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_accuracy: float


@dataclass
class TrainResult:
    best_params: dict[str, np.ndarray]
    best_epoch: int
    best_val_accuracy: float
    history: list[EpochStats]


@dataclass(frozen=True)
class SeedResult:
    seed: int
    best_val_accuracy: float
    best_epoch: int
    test_accuracy: float
    checkpoint_path: str = ""
    checkpoint_digest: str = ""


@dataclass(frozen=True)
class RunReport:
    """Per-seed results plus their mean/std, keyed to config and data digests."""

    seed_results: tuple[SeedResult, ...]
    mean_test_accuracy: float
    std_test_accuracy: float
    config_digest: str
    manifest_digest: str
    partial: bool = False

    def to_json(self) -> str:
        doc = {
            "seed_results": [asdict(r) for r in self.seed_results],
            "mean_test_accuracy": self.mean_test_accuracy,
            "std_test_accuracy": self.std_test_accuracy,
            "config_digest": self.config_digest,
            "manifest_digest": self.manifest_digest,
            "partial": self.partial,
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def lr_schedule(config: TrainConfig, epoch: int) -> float:
    """Learning rate at an epoch: linear warmup then multi-step decay.

    Warmup epoch e (0-based) uses base_lr * (e+1)/warmup_epochs, reaching
    base_lr exactly at the last warmup epoch; afterwards the rate is
    base_lr * gamma^(number of milestones <= epoch). Milestones are absolute
    epoch indices that include the warmup epochs.
    """
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    if config.warmup_epochs > 0 and epoch < config.warmup_epochs:
        return config.base_lr * (epoch + 1) / config.warmup_epochs
    decays = sum(1 for m in config.milestones if m <= epoch)
    return config.base_lr * config.gamma**decays


def _to_float(images: np.ndarray) -> np.ndarray:
    if images.dtype == np.uint8:
        return images.astype(np.float64) / 255.0
    return images.astype(np.float64)


def select_best(history: Sequence[EpochStats]) -> EpochStats:
    """Entry with maximal val accuracy; ties go to the earlier epoch."""
    if not history:
        raise ValueError("empty history")
    best = history[0]
    for entry in history[1:]:
        if entry.val_accuracy > best.val_accuracy:
            best = entry
    return best


def train(
    classifier: Classifier,
    train_data: Data,
    val_data: Data,
    config: TrainConfig,
    seed: int,
) -> TrainResult:
    """Run the full recipe for one seed and return the best checkpoint.

    Per-epoch data order is a shuffle keyed by (seed, epoch). The update rule
    is v <- momentum*v + g + weight_decay*w; w <- w - lr*v. Validation runs
    after every epoch; the retained checkpoint maximizes val accuracy with
    ties broken toward the earlier epoch.
    """
    x_train, y_train = _to_float(train_data[0]), np.asarray(train_data[1])
    if len(x_train) == 0 or len(val_data[0]) == 0:
        raise ConfigError("train and val datasets must be non-empty")

    velocity = {k: np.zeros_like(v) for k, v in classifier.params.items()}
    history: list[EpochStats] = []
    best_params = copy.deepcopy(classifier.params)
    best_epoch = 0
    best_acc = -1.0

    n = len(x_train)
    for epoch in range(config.epochs):
        lr = lr_schedule(config, epoch)
        perm = np.random.default_rng((seed, epoch)).permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            loss, grads = classifier.loss_and_grads(x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
            for k, p in classifier.params.items():
                velocity[k] = config.momentum * velocity[k] + grads[k] + config.weight_decay * p
                p -= lr * velocity[k]
            losses.append(loss)
        val_acc = evaluate(classifier, val_data)
        history.append(
            EpochStats(epoch=epoch, lr=lr, train_loss=float(np.mean(losses)), val_accuracy=val_acc)
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_params = copy.deepcopy(classifier.params)
    return TrainResult(
        best_params=best_params,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
        history=history,
    )


def evaluate(classifier: Classifier, data: Data, batch_size: int = 256) -> float:
    """Accuracy of argmax predictions over a dataset."""
    x, y = _to_float(data[0]), np.asarray(data[1])
    if len(x) == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    correct = 0
    for start in range(0, len(x), batch_size):
        logits = classifier.forward(x[start : start + batch_size])
        correct += int((logits.argmax(axis=1) == y[start : start + batch_size]).sum())
    return correct / len(x)


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], num_classes: int,
                    image_spec: ImageSpec) -> str:
    """Save parameters to .npz; returns the file's sha256 digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(
        {"num_classes": num_classes, "image_spec": [image_spec.height, image_spec.width, 3]}
    )
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **params)
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], int, ImageSpec]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        params = {k: data[k] for k in data.files if k != "__meta__"}
    spec = meta["image_spec"]
    return params, meta["num_classes"], ImageSpec(width=spec[1], height=spec[0], channels=spec[2])


def write_history(path: str | Path, history: Sequence[EpochStats]) -> Path:
    """Serialize a training history as a small CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,lr,train_loss,val_accuracy"]
    for h in history:
        lines.append(f"{h.epoch},{h.lr!r},{h.train_loss!r},{h.val_accuracy!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def run_experiment(
    train_data: Data,
    val_data: Data,
    test_data: Data | None,
    config: TrainConfig,
    make_classifier: ClassifierFactory = make_small_convnet,
    num_classes: int | None = None,
    image_spec: ImageSpec | None = None,
    manifest_digest: str = "",
    checkpoint_dir: str | Path | None = None,
) -> RunReport:
    """Train and evaluate once per configured seed and aggregate the results.

    test_data=None scores the selected checkpoint on the validation set
    instead. A seed whose training diverges is dropped and the report is
    marked partial. Runs share no mutable state, and results are keyed by
    seed, so aggregation is order-independent. With checkpoint_dir set, the
    best checkpoint and the per-epoch history of every seed are written there.
    """
    if num_classes is None:
        num_classes = int(np.asarray(train_data[1]).max()) + 1
    if image_spec is None:
        h, w = train_data[0].shape[1:3]
        image_spec = ImageSpec(width=w, height=h)

    results = []
    partial = False
    for seed in config.seeds:
        classifier = make_classifier(num_classes, image_spec, seed)
        try:
            outcome = train(classifier, train_data, val_data, config, seed)
        except TrainingDiverged:
            partial = True
            continue
        classifier.params = outcome.best_params
        score_data = test_data if test_data is not None else val_data
        test_acc = evaluate(classifier, score_data)
        ckpt_path = ""
        ckpt_digest = ""
        if checkpoint_dir is not None:
            ckpt = Path(checkpoint_dir) / f"seed{seed}.npz"
            ckpt_digest = save_checkpoint(ckpt, outcome.best_params, num_classes, image_spec)
            ckpt_path = str(ckpt)
            write_history(Path(checkpoint_dir) / f"seed{seed}_history.csv", outcome.history)
        results.append(
            SeedResult(
                seed=seed,
                best_val_accuracy=outcome.best_val_accuracy,
                best_epoch=outcome.best_epoch,
                test_accuracy=test_acc,
                checkpoint_path=ckpt_path,
                checkpoint_digest=ckpt_digest,
            )
        )
    accs = [r.test_accuracy for r in results]
    return RunReport(
        seed_results=tuple(results),
        mean_test_accuracy=float(np.mean(accs)) if accs else 0.0,
        std_test_accuracy=float(np.std(accs)) if accs else 0.0,
        config_digest=config.digest(),
        manifest_digest=manifest_digest,
        partial=partial,
    )
