"""Span-corruption pairs for denoising pre-training.

Each input position is dropped independently with the configured rate;
every maximal run of dropped positions is replaced by one sentinel in the
input, and the target enumerates the dropped runs behind their sentinels.
reconstruct() inverts the operation exactly, which is what the tests lean on.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DenoiseError(ValueError):
    pass


@dataclass(frozen=True)
class DenoisedPair:
    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]


@dataclass
class Batch:
    input_ids: np.ndarray  # (batch, in_len) int32
    input_mask: np.ndarray  # (batch, in_len) bool, True on real tokens
    target_ids: np.ndarray  # (batch, out_len) int32
    target_mask: np.ndarray  # (batch, out_len) bool


def corrupt(
    ids: Sequence[int],
    rate: float,
    rng: np.random.Generator,
    sentinels: Sequence[int],
    eos_id: int,
) -> DenoisedPair:
    """Drop each token with probability ``rate``; collapse runs to sentinels.

    The input keeps surviving tokens with each maximal dropped run replaced
    by sentinel k (in order of appearance) and ends with eos. The target
    lists sentinel k followed by the k-th dropped run, then eos.
    """
    if not 0 <= rate < 1:
        raise DenoiseError(f"rate must be in [0, 1), got {rate}")
    if len(ids) == 0:
        raise DenoiseError("cannot corrupt an empty sequence")
    ids_arr = np.asarray(ids, dtype=np.int64)
    n = len(ids_arr)
    dropped = np.asarray(rng.random(n)) < rate
    starts = np.flatnonzero(dropped & ~np.concatenate(([False], dropped[:-1])))
    ends = np.flatnonzero(dropped & ~np.concatenate((dropped[1:], [False]))) + 1
    if len(starts) > len(sentinels):
        raise DenoiseError(
            f"corruption produced {len(starts)} dropped runs but only "
            f"{len(sentinels)} sentinels are available; increase the sentinel "
            "budget or lower the rate"
        )
    # Input: kept tokens with each run collapsed to its sentinel, in position
    # order. Emitting the sentinel at the run's start index keeps the order.
    emit_vals = ids_arr.copy()
    for k, start in enumerate(starts):
        emit_vals[start] = int(sentinels[k])
    keep = ~dropped
    keep[starts] = True
    input_ids = emit_vals[keep].tolist()
    input_ids.append(eos_id)
    target_ids: list[int] = []
    for k, (start, end) in enumerate(zip(starts, ends)):
        target_ids.append(int(sentinels[k]))
        target_ids.extend(int(t) for t in ids_arr[start:end])
    target_ids.append(eos_id)
    return DenoisedPair(tuple(input_ids), tuple(target_ids))


def reconstruct(pair: DenoisedPair, sentinels: Sequence[int], eos_id: int) -> list[int]:
    """Splice each target span back at its sentinel's input position."""
    sentinel_set = set(int(s) for s in sentinels)
    spans: list[tuple[int, list[int]]] = []
    current: list[int] | None = None
    for token in pair.target_ids:
        token = int(token)
        if token == eos_id:
            break
        if token in sentinel_set:
            current = []
            spans.append((token, current))
        else:
            if current is None:
                raise DenoiseError("target contains tokens before the first sentinel")
            current.append(token)
    span_index = 0
    out: list[int] = []
    for token in pair.input_ids:
        token = int(token)
        if token == eos_id:
            break
        if token in sentinel_set:
            if span_index >= len(spans) or spans[span_index][0] != token:
                raise DenoiseError(
                    f"input sentinel {token} has no matching target span at position {span_index}"
                )
            out.extend(spans[span_index][1])
            span_index += 1
        else:
            out.append(token)
    if span_index != len(spans):
        raise DenoiseError(f"target has {len(spans) - span_index} spans with no input sentinel")
    return out


def make_batches(
    pairs: Sequence[DenoisedPair],
    max_len: int,
    batch_size: int,
    pad_id: int,
    eos_id: int,
) -> list[Batch]:
    """Group pairs into padded batches; overlong sequences truncate with eos forced last."""
    if max_len < 2:
        raise DenoiseError(f"max_len must be at least 2, got {max_len}")
    if batch_size < 1:
        raise DenoiseError(f"batch_size must be positive, got {batch_size}")

    def clip(ids: tuple[int, ...]) -> list[int]:
        if len(ids) <= max_len:
            return list(ids)
        clipped = list(ids[:max_len])
        clipped[-1] = eos_id
        return clipped

    batches: list[Batch] = []
    for start in range(0, len(pairs), batch_size):
        group = pairs[start : start + batch_size]
        inputs = [clip(p.input_ids) for p in group]
        targets = [clip(p.target_ids) for p in group]
        in_len = max(len(s) for s in inputs)
        out_len = max(len(s) for s in targets)
        input_ids = np.full((len(group), in_len), pad_id, dtype=np.int32)
        target_ids = np.full((len(group), out_len), pad_id, dtype=np.int32)
        input_mask = np.zeros((len(group), in_len), dtype=bool)
        target_mask = np.zeros((len(group), out_len), dtype=bool)
        for row, (inp, tgt) in enumerate(zip(inputs, targets)):
            input_ids[row, : len(inp)] = inp
            input_mask[row, : len(inp)] = True
            target_ids[row, : len(tgt)] = tgt
            target_mask[row, : len(tgt)] = True
        batches.append(Batch(input_ids, input_mask, target_ids, target_mask))
    return batches


def save_pairs(pairs: Iterable[DenoisedPair], path: str | Path) -> None:
    """One pair per line: space-joined input ids, a tab, space-joined target ids."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(
                " ".join(str(i) for i in pair.input_ids)
                + "\t"
                + " ".join(str(i) for i in pair.target_ids)
                + "\n"
            )


def load_pairs(path: str | Path) -> list[DenoisedPair]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        try:
            left, right = line.split("\t")
            pairs.append(
                DenoisedPair(
                    tuple(int(t) for t in left.split()),
                    tuple(int(t) for t in right.split()),
                )
            )
        except ValueError as exc:
            raise DenoiseError(f"{path}:{lineno}: malformed pair line: {exc}") from exc
    return pairs
