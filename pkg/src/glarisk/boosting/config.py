"""Training hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Defaults follow the reference protocol: learning rate 0.05, depth 6,
    100 estimators, subsample 0.9, column sample 0.8, seed 42, histogram
    split finding.  ``base_score=None`` resolves to the train-set log-odds.
    ``n_threads`` only controls internal parallelism; results are
    bit-identical to the single-threaded run and it is never echoed into
    model files.
    """

    learning_rate: float = 0.05
    max_depth: int = 6
    n_estimators: int = 100
    subsample: float = 0.9
    colsample: float = 0.8
    n_bins: int = 256
    lambda_l2: float = 1.0
    gamma_split: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 42
    n_classes: int = 2
    base_score: Optional[float] = None
    n_threads: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if not 0 < self.colsample <= 1:
            raise ValueError("colsample must be in (0, 1]")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.lambda_l2 < 0:
            raise ValueError("lambda_l2 must be >= 0")
        if self.gamma_split < 0:
            raise ValueError("gamma_split must be >= 0")
        if self.min_child_weight < 0:
            raise ValueError("min_child_weight must be >= 0")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.n_threads < 1:
            raise ValueError("n_threads must be >= 1")

    def echo(self) -> dict:
        """Serializable view of the model-relevant parameters."""
        out = {}
        for f in fields(self):
            if f.name == "n_threads":
                continue
            out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_echo(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in payload.items() if k in known})
