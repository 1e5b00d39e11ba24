from __future__ import annotations

from dataclasses import dataclass

MODES = ("inference", "finetune")


@dataclass
class AdapterConfig:
    """Knobs for serving and fine-tuning; defaults follow the reference
    training recipe (Adam, lr 1e-4, batch 16, 200 epochs)."""

    checkpoint: str
    mode: str = "inference"
    learning_rate: float = 0.0001
    epochs: int = 200
    batch_size: int = 16
    output_dir: str | None = None
    device: str = "cpu"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs, and batch_size must be positive")
