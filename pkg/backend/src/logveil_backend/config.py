"""Training configuration: the published token-classification recipe."""
from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class BridgeConfig:
    """Fine-tuning hyperparameters.

    Defaults follow the standard recipe for adapting a code-pretrained
    encoder to token classification: AdamW at 5e-5 with 0.01 weight decay,
    2 epochs under a linear learning-rate schedule, evaluation and
    checkpointing every 300 steps, best-by-validation-loss retention.
    """

    base_checkpoint: str = "microsoft/codebert-base"
    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    epochs: int = 2
    eval_every: int = 300
    scheduler: str = "linear"
    seed: int = 0
    val_fraction: float = 0.1
    batch_size: int = 8
    max_length: int = 256

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be positive, weight decay >= 0")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.eval_every <= 0 or self.batch_size <= 0 or self.max_length <= 0:
            raise ValueError("eval_every, batch_size, max_length must be positive")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.scheduler != "linear":
            raise ValueError(f"unsupported scheduler {self.scheduler!r}")

    def to_dict(self) -> dict:
        return asdict(self)
