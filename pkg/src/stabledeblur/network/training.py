"""Mini-batch training with optional noise injection."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from ..errors import InvalidParameterError, TrainingDivergedError
from .models import NetworkModel
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.9
    eps: float = 1e-8
    batch_size: int = 8
    injection_sigma: float = 0.0
    seed: int = 0
    loss: str = "mse"
    threads: int = 1

    def __post_init__(self):
        if self.loss != "mse":
            raise InvalidParameterError(f"only the 'mse' loss is supported, got {self.loss!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidParameterError("epochs must be >= 0 and batch_size >= 1")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidParameterError("beta1 and beta2 must lie in (0, 1)")
        if self.injection_sigma < 0:
            raise InvalidParameterError("injection_sigma must be non-negative")


def train(model: NetworkModel, inputs, targets, config: TrainConfig, preprocess=None,
          callback=None):
    """Fit ``model`` so that ``model(preprocess(inputs + e)) ~ targets``.

    ``inputs`` and ``targets`` are stacks of shape (N, H, W).  When
    ``config.injection_sigma > 0`` a fresh noise field is drawn for every input
    at every epoch; ``preprocess`` (a stabilizer) is applied after the noise.
    Returns the per-epoch mean loss history.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape != targets.shape or len(inputs) == 0:
        raise InvalidParameterError(
            f"need non-empty (N, H, W) stacks of equal shape, got {inputs.shape} and {targets.shape}"
        )
    n = len(inputs)
    shuffle_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)

    params = dict(model.named_params())
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)

    def prepared(noisy):
        return noisy if preprocess is None else np.asarray(preprocess(noisy))

    fixed = prepared(inputs) if config.injection_sigma == 0 else None
    history = []
    with threadpool_limits(limits=config.threads):
        for epoch in range(config.epochs):
            if fixed is None:
                noisy = inputs + config.injection_sigma * noise_rng.standard_normal(inputs.shape)
                data = prepared(noisy)
            else:
                data = fixed
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                loss, grads = model.loss_and_grads(data[idx], targets[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch + 1}; lower the learning rate",
                        epoch=epoch + 1, history=history,
                    )
                opt.step(grads)
                total += loss * len(idx)
            history.append(total / n)
            log.info("epoch %d/%d loss %.6g", epoch + 1, config.epochs, history[-1])
            if callback is not None:
                callback(epoch + 1, history[-1])
    return history
