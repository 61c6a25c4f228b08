"""Adam optimization, the training loop, and subject-wise fold plans.

Determinism contract: given a seed, every run on one machine produces
bit-identical parameter trajectories and metric values.  All randomness
(shuffling, dropout) flows from one Generator seeded from the config;
fold-level seeds derive from (seed, fold index) so results do not depend
on whether folds run sequentially or in parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, TrainingError
from .metrics import MetricBundle, bundle, confusion
from .tensor import Tensor

__all__ = [
    "TrainingConfig",
    "AdamState",
    "adam_step",
    "subject_kfold",
    "derive_seed",
    "train",
    "evaluate",
    "TrainReport",
]


@dataclass
class TrainingConfig:
    epochs: int = 40
    batch_size: int = 100
    lr: float = 0.001
    weight_decay: float = 0.0001
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.weight_decay < 1.0:
            raise ConfigError(
                f"weight decay must be in [0,1), got {self.weight_decay}"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: dict[str, Tensor]):
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: dict[str, Tensor], state: AdamState, cfg: TrainingConfig):
    """Bias-corrected Adam update, then decoupled decay p *= 1 - lr*wd."""
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name} at step {state.t}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if cfg.weight_decay:
            p.data *= 1.0 - cfg.lr * cfg.weight_decay


def subject_kfold(subjects, k: int, seed: int):
    """Split subject ids into k folds of near-equal size (differ by <= 1).

    Returns a list of (train_ids, val_ids) tuples.  The shuffle is a
    deterministic function of the seed; validation sets are disjoint and
    cover all subjects.
    """
    ids = list(subjects)
    if len(set(ids)) != len(ids):
        raise ConfigError("subject ids must be unique")
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if k > len(ids):
        raise ConfigError(f"cannot make {k} folds from {len(ids)} subjects")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    plan = []
    for chunk in np.array_split(np.arange(len(ids)), k):
        val = [shuffled[i] for i in chunk]
        val_set = set(val)
        train = [s for s in shuffled if s not in val_set]
        plan.append((train, val))
    return plan


def derive_seed(seed: int, *path: int) -> int:
    """Stable sub-seed for (seed, index...) independent of execution order."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = -1.0
    final: dict | None = None

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_val_accuracy": self.best_val_accuracy,
            "final": self.final,
        }


def _forward_batch(model, x: np.ndarray, train: bool, rng) -> Tensor:
    return model.forward(Tensor(x), train=train, rng=rng)


def evaluate(model, x: np.ndarray, y: np.ndarray, batch_size: int = 100):
    """Frozen-model metrics; returns (confusion matrix, MetricBundle, loss)."""
    k = model.params["head.b"].shape[0]
    preds = np.empty(len(y), dtype=np.int64)
    total_nll = 0.0
    with T.no_grad():
        for lo in range(0, len(y), batch_size):
            hi = min(lo + batch_size, len(y))
            logits = _forward_batch(model, x[lo:hi], train=False, rng=None)
            loss = T.softmax_cross_entropy(logits, y[lo:hi])
            total_nll += loss.item() * (hi - lo)
            preds[lo:hi] = np.argmax(logits.data, axis=1)
    cm = confusion(y, preds, k)
    return cm, bundle(cm), total_nll / max(len(y), 1)


def train(
    model,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: TrainingConfig,
    checkpoint_dir=None,
    train_subjects=None,
    val_subjects=None,
) -> TrainReport:
    """Optimize ``model`` and keep the checkpoint with best val accuracy.

    When subject id arrays are passed, the subject-disjointness of the
    fold is re-asserted here so a bad split cannot slip through a caller.
    """
    if len(train_y) == 0 or len(val_y) == 0:
        raise ConfigError("fold has an empty train or validation side")
    if train_subjects is not None and val_subjects is not None:
        overlap = set(np.unique(train_subjects)) & set(np.unique(val_subjects))
        if overlap:
            raise ConfigError(f"subjects on both sides of the fold: {sorted(overlap)}")

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    state = AdamState(model.params)
    report = TrainReport()
    best_params = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_y))
        epoch_nll = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            model.zero_grads()
            logits = _forward_batch(model, train_x[idx], train=True, rng=rng)
            loss = T.softmax_cross_entropy(logits, train_y[idx])
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite training loss at epoch {epoch}, batch {lo // cfg.batch_size}"
                )
            T.backward(loss)
            adam_step(model.params, state, cfg)
            epoch_nll += loss.item() * len(idx)
        _, mb, val_loss = evaluate(model, val_x, val_y, cfg.batch_size)
        report.epochs.append(
            {
                "epoch": epoch,
                "train_loss": epoch_nll / len(train_y),
                "val_loss": val_loss,
                "val_accuracy": mb.accuracy,
                "val_macro_f1": mb.macro_f1,
                "val_kappa": mb.kappa,
            }
        )
        if mb.accuracy > report.best_val_accuracy:
            report.best_val_accuracy = mb.accuracy
            report.best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in model.params.items()}
    if best_params is not None:
        for k, p in model.params.items():
            p.data = best_params[k]
    cm, mb, val_loss = evaluate(model, val_x, val_y, cfg.batch_size)
    report.final = {
        "val_loss": val_loss,
        "confusion": cm.tolist(),
        "metrics": mb.to_dict(),
    }
    if checkpoint_dir is not None:
        model.save(checkpoint_dir)
    return report
