"""Epoch loop with per-case optimizer steps (batch size 1)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from volumetrica.nn.layers import avg_pool
from volumetrica.nn.network import Network, backward, gradient_list, input_cols
from volumetrica.nn.optim import AdamState, SgdState, optimizer_step


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 1
    loss: str = "bce"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seed: int = 0
    split_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size != 1:
            raise ValueError("only batch size 1 is supported")
        if self.loss not in ("mse", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must be in (0, 1)")


@dataclass
class TrainingLog:
    losses: list[float] = field(default_factory=list)

    def rows(self) -> list[tuple[int, float]]:
        return [(i + 1, l) for i, l in enumerate(self.losses)]

    def to_csv(self) -> str:
        lines = ["epoch,loss"]
        lines.extend(f"{epoch},{value!r}" for epoch, value in self.rows())
        return "\n".join(lines) + "\n"


def split_cases(n: int, test_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Shuffled train/test split; each index lands on exactly one side,
    test size rounded from n * test_fraction."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1) if n > 1 else n_test
    return sorted(int(i) for i in order[n_test:]), sorted(int(i) for i in order[:n_test])


def fit_target_to_output(net: Network, target: np.ndarray, input_spatial=None) -> np.ndarray:
    """Average-pool a full-resolution target down to the network's
    output grid when the architecture downsamples.

    ``input_spatial`` is the actual case input size; it defaults to the
    network's declared input shape (convolutions preserve extents, so
    the output grid is the input divided by the pooling factors).
    """
    target = np.asarray(target, dtype=np.float64)
    if input_spatial is None:
        input_spatial = net.input_shape[:-1]
    pool_factor = [1] * (len(net.input_shape) - 1)
    for layer in net.layers:
        if hasattr(layer, "pool"):
            for ax, p in enumerate(layer.pool):
                pool_factor[ax] *= p
    out_spatial = tuple(s // f for s, f in zip(input_spatial, pool_factor))
    t_spatial = target.shape[:-1]
    if t_spatial == out_spatial:
        return target
    factors = []
    for t, o in zip(t_spatial, out_spatial):
        if t % o != 0:
            raise ValueError(f"target spatial {t_spatial} incompatible with output {out_spatial}")
        factors.append(t // o)
    return avg_pool(target, tuple(factors))


def train(net: Network, cases, config: TrainConfig) -> TrainingLog:
    """Run the epoch loop; targets of None mean autoencoder mode (the
    input itself, pooled to the output resolution, is the label).

    Deterministic for a fixed configuration: cases are visited in order
    and all arithmetic is pure float64.
    """
    cases = list(cases)
    if not cases:
        raise ValueError("no valid images")
    prepared = []
    for item in cases:
        x, target = item if isinstance(item, tuple) else (item, None)
        x = np.asarray(x, dtype=np.float64)
        target = x if target is None else np.asarray(target, dtype=np.float64)
        target = fit_target_to_output(net, target, input_spatial=x.shape[:-1])
        # the first layer sees the same input every epoch: im2col once
        prepared.append((x, target, input_cols(net, x)))

    params = net.parameters()
    if config.optimizer == "adam":
        state = AdamState.for_params(params, learning_rate=config.learning_rate)
    else:
        state = SgdState(config.learning_rate)

    log = TrainingLog()
    for _ in range(config.epochs):
        total = 0.0
        for x, target, cols in prepared:
            value, grads = backward(net, x, target, config.loss, first_cols=cols)
            if not math.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss {value!r}")
            optimizer_step(params, gradient_list(grads), state)
            total += value
        log.losses.append(total / len(prepared))
    return log
