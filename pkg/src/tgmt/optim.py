"""Plain SGD with a step-divisor learning-rate schedule and weight decay."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, OptimizerError


@dataclass(frozen=True)
class SgdConfig:
    lr: float
    weight_decay: float = 0.0
    # lr is divided by divisors[i] once iteration reaches milestones[i]
    milestones: tuple = ()
    divisors: tuple = ()
    total_iterations: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.total_iterations < 0:
            raise ConfigError(
                f"total_iterations must be >= 0, got {self.total_iterations}"
            )
        milestones = tuple(int(m) for m in self.milestones)
        divisors = tuple(float(d) for d in self.divisors)
        if len(milestones) != len(divisors):
            raise ConfigError(
                f"{len(milestones)} milestones but {len(divisors)} divisors"
            )
        if any(m2 <= m1 for m1, m2 in zip(milestones, milestones[1:])):
            raise ConfigError(f"milestones must be strictly increasing: {milestones}")
        if any(m < 0 for m in milestones):
            raise ConfigError(f"milestones must be non-negative: {milestones}")
        if any(d <= 1.0 for d in divisors):
            raise ConfigError(f"divisors must be > 1: {divisors}")
        object.__setattr__(self, "milestones", milestones)
        object.__setattr__(self, "divisors", divisors)
        object.__setattr__(self, "total_iterations", int(self.total_iterations))

    def effective_lr(self, iteration: int) -> float:
        lr = self.lr
        for m, d in zip(self.milestones, self.divisors):
            if iteration >= m:
                lr /= d
        return lr


def sgd_step(params, config: SgdConfig, iteration: int) -> float:
    """In-place decoupled update p -= lr * (grad + wd * p), then clear grads.

    Returns the learning rate that was applied. Every param must carry a
    gradient; passing an untouched tensor is a caller bug, not a no-op.
    """
    lr = config.effective_lr(iteration)
    params = list(params)
    for p in params:
        if p.grad is None:
            raise OptimizerError("sgd_step got a parameter with no gradient")
    for p in params:
        if config.weight_decay:
            p.data -= lr * (p.grad + config.weight_decay * p.data)
        else:
            p.data -= lr * p.grad
        p.grad = None
    return lr
