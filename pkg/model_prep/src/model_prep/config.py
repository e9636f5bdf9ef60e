"""Training configuration with validated invariants."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_EPOCHS = 4
DEFAULT_WARMUP_STEPS = 100
DEFAULT_EVAL_EVERY = 500

# sum-to-one check: ratios come from user input, 0.8+0.1+0.1 is not
# exactly 1.0 in binary, so compare with a tolerance
_RATIO_TOL = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs beyond the pair files themselves.

    The split ratios drive how ``build_training_pairs`` divides the
    labeled pairs; the remaining fields drive ``fine_tune``. Instances
    are validated on construction and never mutated afterwards.
    """

    output_dir: str
    train_ratio: float = 0.8
    val_ratio: float = 0.1
    test_ratio: float = 0.1
    epochs: int = DEFAULT_EPOCHS
    warmup_steps: int = DEFAULT_WARMUP_STEPS
    eval_every: int = DEFAULT_EVAL_EVERY
    seed: int = 0

    def __post_init__(self):
        if not self.output_dir:
            raise ConfigError("output_dir must be a non-empty path")
        ratios = (self.train_ratio, self.val_ratio, self.test_ratio)
        for name, value in zip(("train_ratio", "val_ratio", "test_ratio"), ratios):
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name}={value}, must lie in [0, 1]")
        total = math.fsum(ratios)
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=_RATIO_TOL):
            raise ConfigError(
                f"split ratios sum to {total}, must sum to 1"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs={self.epochs}, must be >= 1")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps={self.warmup_steps}, must be >= 0")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every={self.eval_every}, must be >= 1")

    def resolve(self, *parts: str) -> str:
        return os.path.join(self.output_dir, *parts)
