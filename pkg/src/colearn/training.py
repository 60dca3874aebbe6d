"""Optimization loop: Adam, plateau learning-rate decay, early stopping on
the unimodal validation loss, and strict seed discipline.

One integer seed fully determines a run. It is split into three
independent streams (model init, shuffling, modality masks), so drawing a
mask never perturbs the shuffle order; a run with dropout probabilities
at zero is byte-equivalent to one with masking skipped outright.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import DimensionError, Tape, Tensor, backward
from .data import DatasetSplit, stack_batch
from .dropout import PER_TIMESTEP, DropoutPolicy, apply_mask, draw_mask, mask_for_unimodal_eval


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 15
    max_epochs: int = 40
    hidden_size: int = 128
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    plateau_threshold: float = 1e-4
    early_stop_patience: int = 7
    grad_clip_norm: float | None = 5.0
    dropout_policy: DropoutPolicy | None = None
    validation_modality: str = "language"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    p_language: float = 0.0
    p_audio: float = 0.0
    p_visual: float = 0.0


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    early_stop_epoch: int | None = None

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """(init, shuffle, mask) generators derived from one seed."""
    init_ss, shuffle_ss, mask_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(init_ss),
        np.random.default_rng(shuffle_ss),
        np.random.default_rng(mask_ss),
    )


# ---------------------------------------------------------------------------
# optimizer and schedules


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Standard Adam update with bias correction, in place on the params."""
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter is {p.data.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def clip_gradients(grads: dict[str, np.ndarray | None], max_norm: float) -> dict[str, np.ndarray | None]:
    """Scale gradients so their global L2 norm is at most ``max_norm``."""
    total_sq = sum(float((g * g).sum()) for g in grads.values() if g is not None)
    total = math.sqrt(total_sq)
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {k: (None if g is None else g * scale) for k, g in grads.items()}


def reduce_lr_on_plateau(
    val_losses,
    initial_lr: float,
    factor: float = 0.5,
    patience: int = 3,
    threshold: float = 1e-4,
) -> float:
    """Learning rate after the given validation-loss history.

    A loss counts as an improvement when it beats the best seen so far by
    the relative ``threshold``. Each run of ``patience`` non-improving
    epochs multiplies the rate by ``factor``; it never increases.
    """
    lr = initial_lr
    best = math.inf
    wait = 0
    for loss in val_losses:
        if loss < best * (1.0 - threshold):
            best = loss
            wait = 0
        else:
            wait += 1
            if wait >= patience:
                lr *= factor
                wait = 0
    return lr


def early_stop_check(val_losses, patience: int = 7) -> tuple[bool, int]:
    """(stop now?, best epoch), epochs numbered from 1, ties to the earliest."""
    if not len(val_losses):
        raise ValueError("early_stop_check needs at least one epoch")
    best_epoch = int(np.argmin(val_losses)) + 1
    stop = (len(val_losses) - best_epoch) > patience
    return stop, best_epoch


# ---------------------------------------------------------------------------
# training loop


def train(model, split: DatasetSplit, config: TrainConfig):
    """Train ``model`` on the split; returns (best parameter arrays, history).

    Each epoch shuffles the training set with the seeded shuffle stream
    and draws a fresh modality mask per batch from the mask stream; the
    validation loss that drives scheduling, early stopping, and the best
    checkpoint is always computed on the unimodal-masked validation set.
    """
    if not split.train or not split.validation:
        raise ValueError("train and validation splits must be nonempty")
    if model.task_kind != split.task.kind:
        raise ValueError(f"model expects a {model.task_kind} task, dataset is {split.task.kind}")

    _, shuffle_rng, mask_rng = seed_streams(config.seed)
    params = model.parameters()
    state = AdamState.for_params(params)
    policy = config.dropout_policy
    rates = (0.0, 0.0, 0.0) if policy is None else (policy.p_language, policy.p_audio, policy.p_visual)

    val_batch = mask_for_unimodal_eval(stack_batch(split.validation), config.validation_modality)
    history = TrainHistory()
    best_val = math.inf
    best_params: dict[str, np.ndarray] = {k: p.data.copy() for k, p in params.items()}

    n = len(split.train)
    for epoch in range(1, config.max_epochs + 1):
        lr = reduce_lr_on_plateau(
            history.val_losses,
            config.learning_rate,
            config.plateau_factor,
            config.plateau_patience,
            config.plateau_threshold,
        )
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = stack_batch([split.train[i] for i in idx])
            if policy is not None:
                mask = draw_mask(
                    len(idx),
                    policy,
                    mask_rng,
                    timesteps=batch.timesteps if policy.granularity == PER_TIMESTEP else None,
                )
                batch = apply_mask(batch, mask)
            with Tape():
                loss = model.loss(batch)
                backward(loss)
            grads = {k: p.grad for k, p in params.items()}
            if config.grad_clip_norm is not None:
                grads = clip_gradients(grads, config.grad_clip_norm)
            adam_step(params, grads, state, lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
            for p in params.values():
                p.grad = None
            loss_sum += loss.item() * len(idx)

        val_loss = model.loss(val_batch).item()  # no tape: plain evaluation
        history.records.append(
            EpochRecord(epoch, loss_sum / n, val_loss, lr, rates[0], rates[1], rates[2])
        )
        if val_loss < best_val:
            best_val = val_loss
            history.best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in params.items()}
        stop, _ = early_stop_check(history.val_losses, config.early_stop_patience)
        if stop:
            history.early_stop_epoch = epoch
            break

    return best_params, history


# ---------------------------------------------------------------------------
# history file: one epoch per line


def save_history(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss", "learning_rate"])
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.learning_rate)])


def load_history(path) -> TrainHistory:
    history = TrainHistory()
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["epoch", "train_loss", "val_loss", "learning_rate"]:
            raise ValueError(f"unrecognized history header: {header}")
        for row in reader:
            history.records.append(
                EpochRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
            )
    if history.records:
        history.best_epoch = int(np.argmin([r.val_loss for r in history.records])) + 1
    return history
