"""Teacher-forced training with Adam, per-epoch checkpoints and loss curves."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from ..chem.tokenizer import tokenize
from ..voxel import CoverageError, augmented_grid, voxelize
from .checkpoint import save_checkpoint
from .model import CaptionerModel, pad_batch, teacher_forced_accuracy

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    augment: bool = True
    max_translation: float = 1.0
    stop_accuracy: float | None = None  # stop once training accuracy exceeds this
    checkpoint_dir: str | None = None

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= (self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)).astype(params[k].dtype)


@dataclass
class Example:
    smiles: str
    profile: object  # PharmacophoreProfile
    ids: tuple = ()


def prepare(model: CaptionerModel, items):
    """(SMILES, profile) pairs -> Examples with token ids; UNK-bearing strings are rejected."""
    out = []
    for smi, prof in items:
        seq = tokenize(smi, model.vocab)
        if seq.has_unk:
            raise ValueError(f"{smi!r} contains tokens outside the vocabulary")
        out.append(Example(smi, prof, seq.ids))
    return out


def static_grids(model, examples):
    spec = model.config.grid
    return np.stack([voxelize(e.profile, spec, dtype=model.dtype).values for e in examples])


def evaluate(model, examples, grids=None, batch_size=32):
    """(mean summed-NLL per sequence, teacher-forced token accuracy) without augmentation."""
    if not examples:
        return float("nan"), float("nan")
    grids = static_grids(model, examples) if grids is None else grids
    total, correct, count = 0.0, 0.0, 0.0
    for s in range(0, len(examples), batch_size):
        batch = examples[s:s + batch_size]
        ids = pad_batch([e.ids for e in batch])
        g = grids[s:s + batch_size]
        total += model.sequence_loss(g, ids)
        c, n = teacher_forced_accuracy(model, g, ids)
        correct += c
        count += n
    return total / len(examples), correct / count


def _clip(grads, max_norm):
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def fit(model: CaptionerModel, train_items, val_items=(), config: TrainConfig = TrainConfig(), on_epoch=None):
    """Train in place. Returns the history: one dict per epoch (epoch 0 = initialization)."""
    rng = np.random.default_rng(config.seed)
    train = prepare(model, train_items)
    val = prepare(model, val_items)
    if not train:
        raise ValueError("empty training set")
    fixed = static_grids(model, train)
    val_grids = static_grids(model, val) if val else None
    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)

    history = []
    loss0, acc0 = evaluate(model, train, fixed)
    history.append({"epoch": 0, "train_loss": loss0, "train_accuracy": acc0,
                    "val_loss": evaluate(model, val, val_grids)[0] if val else None, "skipped": 0})
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        skipped = 0
        running = 0.0
        seen = 0
        for s in range(0, len(order), config.batch_size):
            idx = order[s:s + config.batch_size]
            batch, grids = [], []
            for i in idx:
                if config.augment:
                    try:
                        g = augmented_grid(train[i].profile, model.config.grid, rng, config.max_translation,
                                           dtype=model.dtype).values
                    except CoverageError:
                        skipped += 1
                        continue
                else:
                    g = fixed[i]
                batch.append(train[i])
                grids.append(g)
            if not batch:
                continue
            ids = pad_batch([e.ids for e in batch])
            loss, grads, _, _, mask = model.loss_and_grads(np.stack(grids), ids)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch starting {s}")
            ntok = max(1.0, float(mask.sum()))
            grads = {k: g / ntok for k, g in grads.items()}
            grads, _ = _clip(grads, config.clip_norm)
            opt.step(model.params, grads)
            running += loss
            seen += len(batch)
        train_loss, train_acc = evaluate(model, train, fixed)
        row = {"epoch": epoch, "train_loss": train_loss, "train_accuracy": train_acc,
               "batch_loss": running / max(seen, 1), "skipped": skipped,
               "val_loss": evaluate(model, val, val_grids)[0] if val else None}
        if config.checkpoint_dir:
            path = os.path.join(config.checkpoint_dir, f"epoch{epoch:04d}.vcpt")
            save_checkpoint(model, path, {"epoch": epoch, "train_loss": train_loss})
            row["checkpoint"] = path
        history.append(row)
        log.info("epoch %d loss %.4f acc %.4f", epoch, train_loss, train_acc)
        if on_epoch is not None:
            on_epoch(row)
        if config.stop_accuracy is not None and train_acc > config.stop_accuracy:
            break
    return history
