"""Byte-level pair-merge subword vocabulary.

Byte fallback guarantees any unicode text round-trips, which matters for a
corpus full of diacritics and code-switched text. The top of the id space is
reserved for sentinel tokens used by the span-corruption objective; encode()
can never produce them.

Id layout: ``0=pad, 1=unk, 2=eos``, then the 256 byte pieces, then merged
pieces in learned order, with ``sentinel(k) = vocab_size - 1 - k`` on top.
"""

from __future__ import annotations

import hashlib
import heapq
import re
from collections import Counter, defaultdict
from collections.abc import Iterable
from pathlib import Path

PAD_ID = 0
UNK_ID = 1
EOS_ID = 2
NUM_SPECIALS = 3
FIRST_BYTE_ID = NUM_SPECIALS
FIRST_MERGE_ID = FIRST_BYTE_ID + 256

VOCAB_FORMAT = "luxgen-vocab"
VOCAB_VERSION = 1

_CHUNK_RE = re.compile(r"\S+|\s+")


class VocabError(ValueError):
    pass


class Vocabulary:
    """Immutable piece inventory with encode/decode and sentinel bookkeeping."""

    def __init__(self, merges: list[tuple[bytes, bytes]], vocab_size: int, num_sentinels: int):
        expected = vocab_size - FIRST_MERGE_ID - num_sentinels
        if len(merges) != expected:
            raise VocabError(
                f"vocab_size {vocab_size} with {num_sentinels} sentinels needs "
                f"{expected} merges, got {len(merges)}"
            )
        self.merges = list(merges)
        self.vocab_size = vocab_size
        self.num_sentinels = num_sentinels
        self.pieces: dict[int, bytes] = {FIRST_BYTE_ID + b: bytes([b]) for b in range(256)}
        self.ranks: dict[tuple[bytes, bytes], int] = {}
        seen = set(self.pieces.values())
        for rank, (left, right) in enumerate(self.merges):
            piece = left + right
            if piece in seen:
                raise VocabError(f"duplicate piece surface {piece!r}")
            seen.add(piece)
            self.pieces[FIRST_MERGE_ID + rank] = piece
            self.ranks[(left, right)] = rank
        self.piece_ids = {piece: pid for pid, piece in self.pieces.items()}
        self._encode_cache: dict[str, tuple[int, ...]] = {}

    # -- id space ----------------------------------------------------------

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    def sentinel(self, k: int) -> int:
        if not 0 <= k < self.num_sentinels:
            raise VocabError(f"sentinel index {k} outside [0, {self.num_sentinels})")
        return self.vocab_size - 1 - k

    @property
    def sentinel_ids(self) -> list[int]:
        return [self.vocab_size - 1 - k for k in range(self.num_sentinels)]

    def is_sentinel(self, token_id: int) -> bool:
        return self.vocab_size - self.num_sentinels <= token_id < self.vocab_size

    # -- encode / decode ----------------------------------------------------

    def _merge_chunk(self, chunk: str) -> tuple[int, ...]:
        cached = self._encode_cache.get(chunk)
        if cached is not None:
            return cached
        pieces = [bytes([b]) for b in chunk.encode("utf-8")]
        # Repeatedly merging the lowest-rank adjacent pair reproduces the
        # result of applying the merge list in learned order.
        while len(pieces) > 1:
            best_rank = None
            for i in range(len(pieces) - 1):
                rank = self.ranks.get((pieces[i], pieces[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
            if best_rank is None:
                break
            left, right = self.merges[best_rank]
            merged: list[bytes] = []
            i = 0
            while i < len(pieces):
                if i + 1 < len(pieces) and pieces[i] == left and pieces[i + 1] == right:
                    merged.append(left + right)
                    i += 2
                else:
                    merged.append(pieces[i])
                    i += 1
            pieces = merged
        ids = tuple(self.piece_ids[p] for p in pieces)
        if len(self._encode_cache) < 1 << 20:
            self._encode_cache[chunk] = ids
        return ids

    def encode(self, text: str, append_eos: bool = True) -> list[int]:
        """Greedy merge encoding; appends eos unless told otherwise."""
        ids: list[int] = []
        for chunk in _CHUNK_RE.findall(text):
            ids.extend(self._merge_chunk(chunk))
        if append_eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        """Inverse of encode up to the appended eos; sentinels render as <extra_k>."""
        out: list[str] = []
        buffer = bytearray()

        def flush() -> None:
            if buffer:
                out.append(buffer.decode("utf-8", errors="replace"))
                buffer.clear()

        for pos, token_id in enumerate(ids):
            if not 0 <= token_id < self.vocab_size:
                raise VocabError(f"id {token_id} at position {pos} outside [0, {self.vocab_size})")
            if token_id in (PAD_ID, EOS_ID):
                continue
            if token_id == UNK_ID:
                flush()
                out.append("<unk>")
            elif self.is_sentinel(token_id):
                flush()
                out.append(f"<extra_{self.vocab_size - 1 - token_id}>")
            else:
                piece = self.pieces.get(token_id)
                if piece is None:
                    raise VocabError(f"id {token_id} at position {pos} maps to no piece")
                buffer.extend(piece)
        flush()
        return "".join(out)

    # -- persistence ---------------------------------------------------------

    def to_text(self) -> str:
        lines = [
            f"{VOCAB_FORMAT} v{VOCAB_VERSION}",
            f"vocab_size={self.vocab_size}",
            f"num_sentinels={self.num_sentinels}",
        ]
        for left, right in self.merges:
            lines.append(f"{left.hex()} {right.hex()}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")

    @classmethod
    def from_text(cls, text: str) -> Vocabulary:
        lines = text.splitlines()
        if not lines or not lines[0].startswith(VOCAB_FORMAT):
            raise VocabError("not a vocabulary file")
        if lines[0] != f"{VOCAB_FORMAT} v{VOCAB_VERSION}":
            raise VocabError(f"unsupported vocabulary version: {lines[0]!r}")
        vocab_size = int(lines[1].split("=", 1)[1])
        num_sentinels = int(lines[2].split("=", 1)[1])
        merges = []
        for line in lines[3:]:
            if not line:
                continue
            left_hex, right_hex = line.split(" ")
            merges.append((bytes.fromhex(left_hex), bytes.fromhex(right_hex)))
        return cls(merges, vocab_size, num_sentinels)

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _texts(docs: Iterable) -> Iterable[str]:
    for item in docs:
        yield item.text if hasattr(item, "text") else item


def train_vocab(docs: Iterable, vocab_size: int, num_sentinels: int = 100) -> Vocabulary:
    """Induce merges by iterative pair counting over the corpus.

    Deterministic given corpus order: the most frequent adjacent piece pair
    wins each round, ties broken by the lexicographically smaller pair, and
    pairs whose merged surface already exists are skipped (surfaces stay
    unique). Stops with an error if the corpus cannot support vocab_size.
    """
    num_merges = vocab_size - FIRST_MERGE_ID - num_sentinels
    if num_merges < 0:
        raise VocabError(
            f"vocab_size must be at least {FIRST_MERGE_ID + num_sentinels} "
            f"(256 bytes + {NUM_SPECIALS} specials + {num_sentinels} sentinels), got {vocab_size}"
        )

    chunk_freq: Counter[str] = Counter()
    for text in _texts(docs):
        chunk_freq.update(_CHUNK_RE.findall(text))
    if not chunk_freq:
        raise VocabError("empty corpus")

    words: list[list[bytes]] = []
    freqs: list[int] = []
    for chunk, freq in chunk_freq.items():
        words.append([bytes([b]) for b in chunk.encode("utf-8")])
        freqs.append(freq)

    pair_counts: Counter[tuple[bytes, bytes]] = Counter()
    pair_words: dict[tuple[bytes, bytes], set[int]] = defaultdict(set)
    for w, word in enumerate(words):
        for pair in zip(word, word[1:]):
            pair_counts[pair] += freqs[w]
            pair_words[pair].add(w)

    # Lazy max-heap: entries go stale when counts change and are discarded on
    # pop. Tuple order (-count, pair) realizes the smaller-pair tie-break.
    heap = [(-count, pair) for pair, count in pair_counts.items()]
    heapq.heapify(heap)

    def push(pair: tuple[bytes, bytes]) -> None:
        heapq.heappush(heap, (-pair_counts[pair], pair))

    surfaces = {bytes([b]) for b in range(256)}
    merges: list[tuple[bytes, bytes]] = []
    while len(merges) < num_merges:
        best = None
        while heap:
            neg_count, pair = heapq.heappop(heap)
            if pair_counts.get(pair) != -neg_count:
                continue  # stale entry
            if -neg_count < 2:
                break
            if (pair[0] + pair[1]) in surfaces:
                continue
            best = pair
            break
        if best is None:
            raise VocabError(
                f"corpus supports only {len(merges)} merges; "
                f"vocab_size {vocab_size} needs {num_merges}"
            )
        merged_piece = best[0] + best[1]
        surfaces.add(merged_piece)
        merges.append(best)
        touched: set[tuple[bytes, bytes]] = set()
        for w in sorted(pair_words[best]):
            word = words[w]
            for pair in zip(word, word[1:]):
                pair_counts[pair] -= freqs[w]
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
                pair_words[pair].discard(w)
                touched.add(pair)
            new_word: list[bytes] = []
            i = 0
            while i < len(word):
                if i + 1 < len(word) and word[i] == best[0] and word[i + 1] == best[1]:
                    new_word.append(merged_piece)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            words[w] = new_word
            for pair in zip(new_word, new_word[1:]):
                pair_counts[pair] += freqs[w]
                pair_words[pair].add(w)
                touched.add(pair)
        for pair in touched:
            if pair in pair_counts:
                push(pair)
    return Vocabulary(merges, vocab_size, num_sentinels)
