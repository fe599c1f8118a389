"""Greedy and beam decoding for the encoder-decoder.

Beam search scores completed hypotheses by total log-probability divided by
(generated length)**alpha; width 1 reduces exactly to greedy. By default the
text-level entry point bans sentinel ids so corruption markers can never leak
into task output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import subword
from .config import ModelConfig
from .network import Tensor, decode, encode
from .training import Checkpoint


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "greedy"  # "greedy" or "beam"
    beam_width: int = 1
    max_new_tokens: int = 64
    alpha: float = 0.6

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "beam"):
            raise DecodeError(f"unknown decode mode {self.mode!r}")
        if self.beam_width < 1:
            raise DecodeError("beam_width must be at least 1")
        if self.max_new_tokens < 1:
            raise DecodeError("max_new_tokens must be at least 1")


def _log_softmax(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _next_logprobs(
    params: dict[str, Tensor],
    config: ModelConfig,
    encoder_out: Tensor,
    input_mask: np.ndarray,
    prefixes: np.ndarray,
    banned: np.ndarray,
) -> np.ndarray:
    """Log-probabilities of the next token for each prefix row."""
    logits = decode(params, config, encoder_out, input_mask, prefixes).data[:, -1, :]
    logits = logits.astype(np.float64, copy=True)
    if banned.size:
        logits[:, banned] = -np.inf
    return _log_softmax(logits)


def generate_ids(
    params: dict[str, Tensor],
    config: ModelConfig,
    input_ids: list[int],
    decode_config: DecodeConfig = DecodeConfig(),
    banned_ids: tuple[int, ...] = (),
) -> list[int]:
    """Decode token ids for one input sequence until eos or the length cap."""
    eos, pad = subword.EOS_ID, subword.PAD_ID
    batch = np.asarray([input_ids], dtype=np.int64)
    mask = np.ones_like(batch, dtype=bool)
    encoder_out = encode(params, config, batch, mask)
    banned = np.asarray(sorted(set(banned_ids)), dtype=np.int64)

    if decode_config.mode == "greedy":
        prefix = [pad]
        out: list[int] = []
        for _ in range(decode_config.max_new_tokens):
            logprobs = _next_logprobs(
                params, config, encoder_out, mask, np.asarray([prefix], dtype=np.int64), banned
            )
            token = int(np.argmax(logprobs[0]))
            if token == eos:
                break
            out.append(token)
            prefix.append(token)
        return out

    # Beam search: hypotheses share the encoder pass; all live prefixes are
    # decoded as one batch per step.
    width = decode_config.beam_width
    live: list[tuple[list[int], float]] = [([pad], 0.0)]
    finished: list[tuple[list[int], float]] = []
    enc_data = encoder_out.data
    for _ in range(decode_config.max_new_tokens):
        if not live:
            break
        prefixes = np.asarray([ids for ids, _ in live], dtype=np.int64)
        tiled = Tensor(np.repeat(enc_data, len(live), axis=0))
        tiled_mask = np.repeat(mask, len(live), axis=0)
        logprobs = _next_logprobs(params, config, tiled, tiled_mask, prefixes, banned)
        candidates: list[tuple[float, int, int]] = []  # (score, beam index, token)
        for b, (ids, score) in enumerate(live):
            top = np.argsort(-logprobs[b], kind="stable")[: width + 1]
            for token in top:
                candidates.append((score + float(logprobs[b, int(token)]), b, int(token)))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_live: list[tuple[list[int], float]] = []
        for score, b, token in candidates:
            if len(next_live) >= width:
                break
            ids = live[b][0] + [token]
            if token == eos:
                finished.append((ids, score))
            else:
                next_live.append((ids, score))
        live = next_live
        if len(finished) >= width:
            break

    def normalized(item: tuple[list[int], float]) -> float:
        ids, score = item
        gen_len = max(len(ids) - 1, 1)  # exclude the start token
        return score / (gen_len**decode_config.alpha)

    pool = finished if finished else live
    if not pool:
        return []
    best_ids, _ = max(pool, key=normalized)
    return [t for t in best_ids[1:] if t != eos]


def generate(
    checkpoint: Checkpoint,
    vocab: subword.Vocabulary,
    text: str,
    decode_config: DecodeConfig = DecodeConfig(),
    banned_ids: tuple[int, ...] | None = None,
) -> str:
    """Text-level generation; sentinel ids are banned unless overridden."""
    params = checkpoint.as_params()
    for p in params.values():
        p.requires_grad = False
    if banned_ids is None:
        banned_ids = tuple(vocab.sentinel_ids)
    input_ids = vocab.encode(text)
    max_input = checkpoint.config.max_seq_len
    if len(input_ids) > max_input:
        input_ids = input_ids[:max_input]
        input_ids[-1] = subword.EOS_ID
    out_ids = generate_ids(
        params, checkpoint.config, input_ids, decode_config, banned_ids=tuple(banned_ids)
    )
    return vocab.decode(out_ids)
