"""Training loops: Adam with bias correction, lr schedules, checkpointing.

Pre-training runs a fixed step count over a deterministic cycle of batches;
fine-tuning runs epochs with a seeded per-epoch shuffle. Both halt on a
non-finite loss, keeping the last good checkpoint, and both are exactly
resumable: loading a checkpoint and continuing reproduces the uninterrupted
run bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import subword
from ..denoise import Batch, DenoisedPair, make_batches
from ..seeding import make_rng, restore_rng, rng_state
from . import autodiff as ad
from .config import ModelConfig, TrainConfig
from .network import Tensor, forward, init, loss, shift_right

CHECKPOINT_VERSION = 1

Schedule = Callable[[int], float]


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    pass


def constant_schedule(learning_rate: float) -> Schedule:
    return lambda step: learning_rate


def warmup_schedule(learning_rate: float, warmup_steps: int) -> Schedule:
    """Linear ramp from 0 to the full rate over warmup_steps, constant after."""
    if warmup_steps <= 0:
        return constant_schedule(learning_rate)
    return lambda step: learning_rate * min(1.0, step / warmup_steps)


def make_schedule(train_config: TrainConfig, total_steps: int) -> Schedule:
    warmup_steps = int(round(train_config.warmup_fraction * total_steps))
    if warmup_steps > 0:
        return warmup_schedule(train_config.learning_rate, warmup_steps)
    return constant_schedule(train_config.learning_rate)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def fresh(cls, params: dict[str, Tensor]) -> AdamState:
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            step=0,
        )


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    grads: dict[str, np.ndarray],
    schedule: Schedule,
    step: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    """Bias-corrected moment update; mutates params and state in place."""
    if step < 1:
        raise TrainingError(f"step must be >= 1, got {step}")
    lr = schedule(step)
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for name, param in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        param.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + epsilon)
    state.step = step
    return state


def gradients(
    params: dict[str, Tensor], batch: Batch, config: ModelConfig
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss value and exact per-parameter gradients for one batch."""
    for p in params.values():
        p.zero_grad()
    decoder_input = shift_right(batch.target_ids, subword.PAD_ID)
    logits, _ = forward(params, config, batch.input_ids, decoder_input, batch.input_mask)
    out = loss(logits, batch.target_ids, batch.target_mask)
    ad.backward(out)
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in parameter {name!r}")
        grads[name] = g
    return float(out.data), grads


# -- checkpoints ----------------------------------------------------------------


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray]
    opt_v: dict[str, np.ndarray]
    step: int
    rng: dict = field(default_factory=dict)
    vocab_hash: str = ""

    def as_params(self) -> dict[str, Tensor]:
        return {k: Tensor(v.copy(), requires_grad=True) for k, v in self.params.items()}

    def save(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": self.config.__dict__,
            "step": self.step,
            "rng": self.rng,
            "vocab_hash": self.vocab_hash,
        }
        arrays: dict[str, np.ndarray] = {
            "__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
        }
        for name, value in self.params.items():
            arrays[f"p/{name}"] = value
        for name, value in self.opt_m.items():
            arrays[f"m/{name}"] = value
        for name, value in self.opt_v.items():
            arrays[f"v/{name}"] = value
        with Path(path).open("wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        with np.load(Path(path), allow_pickle=False) as archive:
            meta = json.loads(bytes(archive["__meta__"]).decode("utf-8"))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise TrainingError(
                    f"{path}: checkpoint version {meta.get('version')} unsupported"
                )
            params = {}
            opt_m = {}
            opt_v = {}
            for key in archive.files:
                if key.startswith("p/"):
                    params[key[2:]] = archive[key]
                elif key.startswith("m/"):
                    opt_m[key[2:]] = archive[key]
                elif key.startswith("v/"):
                    opt_v[key[2:]] = archive[key]
        return cls(
            config=ModelConfig(**meta["config"]),
            params=params,
            opt_m=opt_m,
            opt_v=opt_v,
            step=meta["step"],
            rng=meta["rng"],
            vocab_hash=meta["vocab_hash"],
        )


def _snapshot(
    config: ModelConfig,
    params: dict[str, Tensor],
    state: AdamState,
    rng: np.random.Generator | None,
    vocab_hash: str,
) -> Checkpoint:
    return Checkpoint(
        config=config,
        params={k: p.data.copy() for k, p in params.items()},
        opt_m={k: v.copy() for k, v in state.m.items()},
        opt_v={k: v.copy() for k, v in state.v.items()},
        step=state.step,
        rng=rng_state(rng) if rng is not None else {},
        vocab_hash=vocab_hash,
    )


@dataclass
class TrainLog:
    path: Path | None

    def record(self, step: int, loss_value: float, lr: float) -> None:
        if self.path is None:
            return
        entry = {"step": step, "loss": loss_value, "lr": lr, "wall_time": time.time()}
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _run_steps(
    params: dict[str, Tensor],
    state: AdamState,
    batches: Sequence[Batch],
    batch_order: Sequence[int],
    config: ModelConfig,
    train_config: TrainConfig,
    schedule: Schedule,
    rng: np.random.Generator | None,
    vocab_hash: str,
    checkpoint_dir: Path | None,
    checkpoint_every: int | None,
    log: TrainLog,
) -> Checkpoint:
    checkpoint_path = None
    if checkpoint_dir is not None:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    for index in batch_order:
        step = state.step + 1
        batch = batches[index]
        try:
            loss_value, grads = gradients(params, batch, config)
        except TrainingDiverged:
            loss_value, grads = float("nan"), None
        if grads is None or not np.isfinite(loss_value):
            snap = _snapshot(config, params, state, rng, vocab_hash)
            if checkpoint_dir is not None:
                checkpoint_path = checkpoint_dir / f"halt-step{state.step:08d}.npz"
                snap.save(checkpoint_path)
            raise TrainingDiverged(
                f"non-finite loss at step {step}; last good state at step {state.step}"
                + (f" saved to {checkpoint_path}" if checkpoint_path else "")
            )
        adam_step(
            params, state, grads, schedule, step,
            beta1=train_config.beta1, beta2=train_config.beta2, epsilon=train_config.epsilon,
        )
        log.record(step, loss_value, schedule(step))
        if checkpoint_dir is not None and checkpoint_every and step % checkpoint_every == 0:
            _snapshot(config, params, state, rng, vocab_hash).save(
                checkpoint_dir / f"step{step:08d}.npz"
            )
    return _snapshot(config, params, state, rng, vocab_hash)


def pretrain(
    pairs: Sequence[DenoisedPair],
    config: ModelConfig,
    train_config: TrainConfig,
    *,
    vocab_hash: str = "",
    resume_from: Checkpoint | None = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int | None = None,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Denoising pre-training over a fixed pair set, cycled deterministically."""
    if train_config.total_steps is None:
        raise TrainingError("pretrain requires train_config.total_steps")
    batches = make_batches(
        pairs, config.max_seq_len, train_config.batch_size, subword.PAD_ID, subword.EOS_ID
    )
    if not batches:
        raise TrainingError("no training pairs supplied")
    if resume_from is not None:
        if resume_from.vocab_hash and vocab_hash and resume_from.vocab_hash != vocab_hash:
            raise TrainingError("checkpoint was trained with a different vocabulary")
        params = resume_from.as_params()
        state = AdamState(
            m={k: v.copy() for k, v in resume_from.opt_m.items()},
            v={k: v.copy() for k, v in resume_from.opt_v.items()},
            step=resume_from.step,
        )
        rng = restore_rng(resume_from.rng) if resume_from.rng else make_rng(train_config.seed)
    else:
        params = init(config, train_config.seed)
        state = AdamState.fresh(params)
        rng = make_rng(train_config.seed)
    schedule = make_schedule(train_config, train_config.total_steps)
    order = [step % len(batches) for step in range(state.step, train_config.total_steps)]
    return _run_steps(
        params, state, batches, order, config, train_config, schedule, rng, vocab_hash,
        Path(checkpoint_dir) if checkpoint_dir else None, checkpoint_every, TrainLog(Path(log_path) if log_path else None),
    )


def encode_task_pairs(
    examples: Sequence,
    vocab: subword.Vocabulary,
    max_seq_len: int,
    prefix: bool = True,
) -> list[DenoisedPair]:
    """Sequence-to-sequence encoding of task examples: task-prefixed input text
    against target text, both eos-terminated and clipped to max_seq_len."""

    def clip(ids: list[int]) -> tuple[int, ...]:
        if len(ids) > max_seq_len:
            ids = ids[:max_seq_len]
            ids[-1] = subword.EOS_ID
        return tuple(ids)

    pairs = []
    for ex in examples:
        text = f"{ex.task}: {ex.input_text}" if prefix else ex.input_text
        pairs.append(DenoisedPair(clip(vocab.encode(text)), clip(vocab.encode(ex.target_text))))
    return pairs


def finetune(
    checkpoint: Checkpoint,
    train_pairs: Sequence[DenoisedPair],
    train_config: TrainConfig,
    *,
    vocab_hash: str = "",
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int | None = None,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Epoch-based seq2seq tuning from a pre-trained checkpoint, fresh optimizer."""
    if train_config.epochs is None:
        raise TrainingError("finetune requires train_config.epochs")
    if vocab_hash and checkpoint.vocab_hash and vocab_hash != checkpoint.vocab_hash:
        raise TrainingError("checkpoint vocabulary does not match the task encoding")
    config = checkpoint.config
    params = checkpoint.as_params()
    state = AdamState.fresh(params)
    rng = make_rng(train_config.seed)
    if not train_pairs:
        raise TrainingError("no training examples supplied")
    if train_config.epochs == 0:
        return _snapshot(config, params, state, rng, vocab_hash or checkpoint.vocab_hash)

    batches: list[Batch] = []
    order: list[int] = []
    pairs = list(train_pairs)
    for _ in range(train_config.epochs):
        perm = rng.permutation(len(pairs))
        shuffled = [pairs[int(i)] for i in perm]
        epoch_batches = make_batches(
            shuffled, config.max_seq_len, train_config.batch_size, subword.PAD_ID, subword.EOS_ID
        )
        order.extend(range(len(batches), len(batches) + len(epoch_batches)))
        batches.extend(epoch_batches)
    schedule = make_schedule(train_config, len(order))
    return _run_steps(
        params, state, batches, order, config, train_config, schedule, rng,
        vocab_hash or checkpoint.vocab_hash,
        Path(checkpoint_dir) if checkpoint_dir else None, checkpoint_every,
        TrainLog(Path(log_path) if log_path else None),
    )


def initial_checkpoint(
    config: ModelConfig, seed: int, vocab_hash: str = ""
) -> Checkpoint:
    """Untrained checkpoint, useful as a fine-tuning starting point."""
    params = init(config, seed)
    state = AdamState.fresh(params)
    return _snapshot(config, params, state, make_rng(seed), vocab_hash)
