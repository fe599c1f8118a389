"""Model and training configuration presets."""

from __future__ import annotations

from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Encoder-decoder dimensions. num_layers applies to each stack."""

    num_layers: int
    num_heads: int
    hidden_size: int
    feedforward_size: int
    vocab_size: int
    max_seq_len: int
    relpos_buckets: int = 32
    relpos_max_distance: int = 128
    tie_embeddings: bool = True

    def __post_init__(self) -> None:
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        for name in ("num_layers", "num_heads", "hidden_size", "feedforward_size", "vocab_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_seq_len < 2:
            raise ConfigError("max_seq_len must be at least 2")

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads


def paper_preset(vocab_size: int) -> ModelConfig:
    """Full-scale dimensions: 12+12 layers, 12 heads, 768 hidden, 512 positions."""
    return ModelConfig(
        num_layers=12,
        num_heads=12,
        hidden_size=768,
        feedforward_size=3072,
        vocab_size=vocab_size,
        max_seq_len=512,
    )


def desk_preset(vocab_size: int, max_seq_len: int = 128) -> ModelConfig:
    """Laptop-scale dimensions: 2+2 layers, 4 heads, 128 hidden."""
    return ModelConfig(
        num_layers=2,
        num_heads=4,
        hidden_size=128,
        feedforward_size=512,
        vocab_size=vocab_size,
        max_seq_len=max_seq_len,
    )


PRESETS = {"paper": paper_preset, "desk": desk_preset}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    batch_size: int
    total_steps: int | None = None
    epochs: int | None = None
    warmup_fraction: float = 0.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.warmup_fraction <= 1:
            raise ConfigError("warmup_fraction must be in [0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.total_steps is None and self.epochs is None:
            raise ConfigError("one of total_steps or epochs is required")


def pretrain_defaults(total_steps: int = 1_000_000, seed: int = 0) -> TrainConfig:
    """Pre-training setup: constant lr 1e-4, batch 128."""
    return TrainConfig(learning_rate=1e-4, batch_size=128, total_steps=total_steps, seed=seed)


def finetune_defaults(epochs: int = 10, seed: int = 0) -> TrainConfig:
    """Fine-tuning setup: lr 1e-4, batch 8, linear warmup over 10% of steps."""
    return TrainConfig(
        learning_rate=1e-4, batch_size=8, epochs=epochs, warmup_fraction=0.1, seed=seed
    )
