"""Baseline and complement-objective (COT) training loops.

A COT step runs two SGD updates on the same mini-batch: first on the cross
entropy (with weight decay), then, after a fresh forward pass, on the negative
normalized complement entropy (without weight decay).  Each objective keeps
its own momentum buffer by default, so a zero complement gradient (K = 2)
leaves the parameters untouched; ``shared_velocity=True`` uses one buffer.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datasets import Dataset
from .models import ModelState, backward, forward, init_model, MlpArchitecture
from .numerics import InputError, Rng, argmax_rows
from .objectives import complement_loss, cross_entropy

log = logging.getLogger(__name__)

MODES = ("baseline_ce", "cot")


class TrainingError(RuntimeError):
    pass


@dataclass
class Schedule:
    initial_lr: float
    milestones: tuple[int, ...] = ()
    factor: float = 0.1

    def lr(self, epoch: int) -> float:
        """Learning rate for 0-based ``epoch``: one decay per milestone <= epoch."""
        passed = sum(1 for m in self.milestones if m <= epoch)
        return self.initial_lr * self.factor**passed


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float
    weight_decay: float
    velocity: list[np.ndarray]
    # second buffer for the complement step when velocities are not shared
    complement_velocity: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: ModelState, lr: float, momentum: float = 0.9, weight_decay: float = 1e-4):
        if lr < 0 or momentum < 0 or weight_decay < 0:
            raise InputError("optimizer hyperparameters must be non-negative")
        params = model.parameters()
        return cls(lr, momentum, weight_decay, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class TrainConfig:
    mode: str = "cot"
    epochs: int = 200
    batch_size: int = 128
    lr: float = 0.1
    milestones: tuple[int, ...] = (100, 150)
    lr_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    shared_velocity: bool = False
    complement_batch: str = "same"
    normalized_complement: bool = True

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InputError(f"train.mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 1:
            raise InputError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InputError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0 or self.momentum < 0 or self.weight_decay < 0 or self.lr_factor <= 0:
            raise InputError("learning rate, momentum, weight decay must be >= 0 and lr_factor > 0")
        if list(self.milestones) != sorted(self.milestones):
            raise InputError(f"train.milestones must be sorted, got {self.milestones}")
        if self.complement_batch not in ("same", "fresh"):
            raise InputError(f"train.complement_batch must be 'same' or 'fresh', got {self.complement_batch!r}")

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.lr, tuple(self.milestones), self.lr_factor)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    ce_loss: float
    comp_loss: float | None
    test_error: float | None
    epoch_seconds: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    COLUMNS = ("epoch", "lr", "ce_loss", "comp_loss", "test_error", "epoch_seconds")

    def rows(self, include_time: bool = True) -> list[list[str]]:
        out = []
        for r in self.records:
            row = [
                str(r.epoch),
                repr(r.lr),
                repr(r.ce_loss),
                "" if r.comp_loss is None else repr(r.comp_loss),
                "" if r.test_error is None else repr(r.test_error),
                repr(r.epoch_seconds) if include_time else "",
            ]
            out.append(row)
        return out

    def write_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            writer.writerows(self.rows())

    def mean_epoch_seconds(self, skip_first: bool = True) -> float:
        recs = self.records[1:] if skip_first and len(self.records) > 1 else self.records
        return float(np.mean([r.epoch_seconds for r in recs]))


def sgd_step(model: ModelState, grads, opt: OptimizerState, apply_weight_decay: bool = True, velocity=None) -> None:
    """In-place momentum SGD: ``v = mu*v + g (+ wd*theta)``, ``theta -= lr*v``."""
    params = model.parameters()
    flat = [g for pair in grads for g in pair]
    velocity = opt.velocity if velocity is None else velocity
    if len(flat) != len(params):
        raise InputError(f"expected {len(params)} gradient tensors, got {len(flat)}")
    for p, g, v in zip(params, flat, velocity):
        if g.shape != p.shape:
            raise InputError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if apply_weight_decay and opt.weight_decay:
            g = g + opt.weight_decay * p
        v *= opt.momentum
        v += g
        p -= opt.learning_rate * v
    model.bump()


def _batches(n: int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def _loss(fn, logits, labels, epoch: int, batch: int, **kw):
    # non-finite parameters surface here as non-finite logits on the next pass
    try:
        return fn(logits, labels, **kw)
    except InputError as exc:
        raise TrainingError(f"{fn.__name__} failed at epoch {epoch}, batch {batch}: {exc}") from exc


def train_epoch_baseline(model: ModelState, data: Dataset, opt: OptimizerState, rng: Rng, batch_size: int, epoch: int = 0) -> float:
    """One epoch of cross-entropy SGD; returns the mean mini-batch loss."""
    losses = []
    for b, idx in enumerate(_batches(len(data), batch_size, rng)):
        trace = forward(model, data.features[idx])
        res = _loss(cross_entropy, trace.logits, data.labels[idx], epoch, b)
        sgd_step(model, backward(model, trace, res.grad_logits), opt, apply_weight_decay=True)
        losses.append(res.value)
    return float(np.mean(losses))


def train_epoch_cot(
    model: ModelState,
    data: Dataset,
    opt: OptimizerState,
    rng: Rng,
    batch_size: int,
    epoch: int = 0,
    shared_velocity: bool = False,
    complement_batch: str = "same",
    normalized: bool = True,
) -> tuple[float, float]:
    """One epoch of alternating primary/complement updates.

    Returns the mean cross entropy and mean complement loss over batches.
    """
    batches = _batches(len(data), batch_size, rng)
    if complement_batch == "fresh":
        comp_batches = _batches(len(data), batch_size, rng)
    else:
        comp_batches = batches
    if not shared_velocity and not opt.complement_velocity:
        raise InputError("separate velocity buffers requested but the optimizer has none")
    ce_losses, comp_losses = [], []
    for b, (idx, cidx) in enumerate(zip(batches, comp_batches)):
        x, y = data.features[idx], data.labels[idx]
        trace = forward(model, x)
        res = _loss(cross_entropy, trace.logits, y, epoch, b)
        sgd_step(model, backward(model, trace, res.grad_logits), opt, apply_weight_decay=True)
        ce_losses.append(res.value)

        if cidx is not idx:
            x, y = data.features[cidx], data.labels[cidx]
        trace = forward(model, x)
        comp = _loss(complement_loss, trace.logits, y, epoch, b, normalized=normalized)
        sgd_step(
            model,
            backward(model, trace, comp.grad_logits),
            opt,
            apply_weight_decay=False,
            velocity=None if shared_velocity else opt.complement_velocity,
        )
        comp_losses.append(comp.value)
    return float(np.mean(ce_losses)), float(np.mean(comp_losses))


def error_rate(model: ModelState, data: Dataset) -> float:
    if len(data) == 0:
        return 0.0
    pred = argmax_rows(forward(model, data.features).logits)
    return float(np.mean(pred != data.labels))


def run_training(
    config: TrainConfig,
    arch: MlpArchitecture,
    train: Dataset,
    test: Dataset | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[ModelState, TrainLog]:
    """Train from a seeded initialization under ``config``'s step schedule.

    ``epoch_seconds`` covers the parameter updates only; test-error
    evaluation is timed separately and excluded.
    """
    config.validate()
    if train.dim != arch.input_dim or train.num_classes != arch.num_classes:
        raise InputError(
            f"dataset (D={train.dim}, K={train.num_classes}) does not match architecture "
            f"(D={arch.input_dim}, K={arch.num_classes})"
        )
    root = Rng(config.seed)
    model = init_model(arch, root.child("init"))
    model.meta.update({"mode": config.mode, "seed": config.seed})
    shuffle = root.child("shuffle")
    opt = OptimizerState.for_model(model, config.lr, config.momentum, config.weight_decay)
    schedule = config.schedule
    trainlog = TrainLog()
    for epoch in range(config.epochs):
        opt.learning_rate = schedule.lr(epoch)
        start = time.perf_counter()
        if config.mode == "cot":
            ce, comp = train_epoch_cot(
                model, train, opt, shuffle, config.batch_size, epoch,
                shared_velocity=config.shared_velocity,
                complement_batch=config.complement_batch,
                normalized=config.normalized_complement,
            )
        else:
            ce = train_epoch_baseline(model, train, opt, shuffle, config.batch_size, epoch)
            comp = None
        elapsed = time.perf_counter() - start
        test_err = error_rate(model, test) if test is not None else None
        rec = EpochRecord(epoch, opt.learning_rate, ce, comp, test_err, elapsed)
        trainlog.records.append(rec)
        log.debug("epoch %d lr=%g ce=%.5f comp=%s test_err=%s", epoch, rec.lr, ce, comp, test_err)
        if on_epoch is not None:
            on_epoch(rec)
    return model, trainlog
