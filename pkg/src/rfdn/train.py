"""Minibatch training loop: L1 loss, Adam, halving learning rate."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .arch import Model, WeightStore, rfdn_forward
from .autograd import AdamState, LrSchedule, Tape, adam_step, backward, l1_loss, lr_at
from .data import ImagePair, augment, sample_batch
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1_000_000
    batch: int = 64
    patch: int = 64  # LR side
    lr: float = 5e-4
    half_life: int = 200_000
    seed: int = 0
    checkpoint_every: int = 0
    augment: bool = True

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.half_life)


@dataclass(frozen=True)
class StepRecord:
    step: int
    lr: float
    loss: float

    def line(self) -> str:
        return f"{self.step} {self.lr:.6g} {self.loss:.8f}"


def training_step(model: Model, weights: WeightStore, state: AdamState,
                  lr_batch: np.ndarray, hr_batch: np.ndarray, lr: float):
    """One forward/backward/update on a batch of [0, 255] images. Returns (weights, state, loss)."""
    tape = Tape()
    params = tape.params(weights)
    pred = rfdn_forward(model, params, lr_batch / np.float32(255))
    loss = l1_loss(pred, hr_batch / np.float32(255))
    grads = backward(tape, loss)
    new, state = adam_step(weights, grads, state, lr)
    return WeightStore(new), state, float(loss.value)


def train_loop(model: Model, weights: WeightStore, dataset: Sequence[ImagePair],
               config: TrainConfig,
               on_checkpoint: Callable[[int, WeightStore], None] | None = None,
               ) -> tuple[WeightStore, list[StepRecord]]:
    """Run ``config.steps`` updates; deterministic for a given seed.

    Batches are drawn and augmented on the calling thread from one seeded
    generator, which is what makes two runs bitwise identical.
    """
    if not dataset:
        raise ConfigError("training dataset is empty")
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    trace: list[StepRecord] = []
    for step in range(config.steps):
        lr_b, hr_b = sample_batch(dataset, config.patch, config.batch, rng)
        if config.augment:
            for b in range(config.batch):
                lr_b[b], hr_b[b] = augment(lr_b[b], hr_b[b], rng)
        lr = lr_at(config.schedule, step)
        weights, state, loss = training_step(model, weights, state, lr_b, hr_b, lr)
        trace.append(StepRecord(step + 1, lr, loss))
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss became {loss} at step {step + 1}")
        if step % 50 == 0:
            log.info("step %d lr %.3g loss %.5f", step + 1, lr, loss)
        if on_checkpoint and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            on_checkpoint(step + 1, weights)
    return weights, trace
