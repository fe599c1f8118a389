"""Construction of the LuxGen generation tasks and the moderation task.

Four generation tasks (headline, positive comment, negative comment, short
description) plus archived/published moderation, all built from a document
store. Comment selection uses the smoothed vote ratio (up+1)/(down+1) with a
deterministic tie-break chain, and splits are grouped by article id so no
article straddles train and test.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .corpus import Document
from .seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

TASKS = ("headline", "positive_comment", "negative_comment", "description", "moderation")
MODERATION_LABELS = ("archived", "published")


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskExample:
    task: str
    input_text: str
    target_text: str
    source_ids: tuple[str, ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise TaskError(f"unknown task {self.task!r}")
        if not self.input_text or not self.target_text:
            raise TaskError(f"task {self.task}: input and target must be non-empty")
        if self.task == "moderation" and self.target_text not in MODERATION_LABELS:
            raise TaskError(f"moderation target must be one of {MODERATION_LABELS}")

    @property
    def group_id(self) -> str:
        """Split-group key: the article-level source id."""
        return self.source_ids[0]

    @property
    def example_id(self) -> str:
        return ":".join(self.source_ids)


@dataclass
class TaskSplit:
    task: str
    train: list[TaskExample]
    test: list[TaskExample]
    seed: int


@dataclass
class BuildCounts:
    built: int = 0
    skipped: Counter = field(default_factory=Counter)

    def skip(self, reason: str) -> None:
        self.skipped[reason] += 1


def _collapse_ws(text: str) -> str:
    return " ".join(text.split())


def build_headline(docs: list[Document]) -> tuple[list[TaskExample], BuildCounts]:
    """Input: news article body with its title stripped; target: the title."""
    counts = BuildCounts()
    examples = []
    for doc in docs:
        if doc.domain != "news":
            continue
        title = doc.meta.get("title")
        if not title:
            counts.skip("missing_title")
            continue
        body = _collapse_ws(doc.text.replace(title, " ", 1)) if title in doc.text else doc.text
        if not body:
            counts.skip("empty_body")
            continue
        examples.append(
            TaskExample(task="headline", input_text=body, target_text=title, source_ids=(doc.id,))
        )
        counts.built += 1
    return examples, counts


def _vote_key_positive(comment: Document) -> tuple:
    up = comment.meta["upvotes"]
    down = comment.meta["downvotes"]
    return (-Fraction(up + 1, down + 1), -(up + down), comment.id)


def _vote_key_negative(comment: Document) -> tuple:
    up = comment.meta["upvotes"]
    down = comment.meta["downvotes"]
    return (Fraction(up + 1, down + 1), -(up + down), comment.id)


def build_comments(
    docs: list[Document], polarity: str
) -> tuple[list[TaskExample], BuildCounts]:
    """Per article, the comment with the extreme smoothed up/down ratio.

    polarity "positive" selects the maximum ratio, "negative" the minimum;
    ties go to the higher total vote count, then the smaller comment id.
    Articles whose comments carry no votes are skipped. A single voted
    comment serves both polarities and is flagged.
    """
    if polarity not in ("positive", "negative"):
        raise TaskError(f"polarity must be 'positive' or 'negative', got {polarity!r}")
    counts = BuildCounts()
    by_id = {doc.id: doc for doc in docs}
    by_article: dict[str, list[Document]] = defaultdict(list)
    for doc in docs:
        if doc.domain != "comments":
            continue
        if "upvotes" not in doc.meta or "downvotes" not in doc.meta:
            counts.skip("unvoted_comment")
            continue
        article_id = doc.meta.get("article_id")
        if not article_id:
            counts.skip("missing_article_id")
            continue
        by_article[article_id].append(doc)

    key = _vote_key_positive if polarity == "positive" else _vote_key_negative
    examples = []
    for article_id in sorted(by_article):
        article = by_id.get(article_id)
        if article is None:
            counts.skip("dangling_article_id")
            continue
        candidates = by_article[article_id]
        chosen = min(candidates, key=key)
        flags = ("single_voted_comment",) if len(candidates) == 1 else ()
        examples.append(
            TaskExample(
                task=f"{polarity}_comment",
                input_text=article.text,
                target_text=chosen.text,
                source_ids=(article_id, chosen.id),
                flags=flags,
            )
        )
        counts.built += 1
    return examples, counts


def build_description(docs: list[Document]) -> tuple[list[TaskExample], BuildCounts]:
    """Input: wiki article text; target: its short description."""
    counts = BuildCounts()
    examples = []
    for doc in docs:
        if doc.domain != "wiki":
            continue
        description = doc.meta.get("short_description")
        if not description:
            counts.skip("missing_description")
            continue
        examples.append(
            TaskExample(
                task="description", input_text=doc.text, target_text=description,
                source_ids=(doc.id,),
            )
        )
        counts.built += 1
    return examples, counts


def build_moderation(docs: list[Document]) -> tuple[list[TaskExample], BuildCounts]:
    """Input: comment text; target: its archived/published status.

    Class counts and the imbalance ratio (majority over minority support)
    are logged, since the label distribution is typically skewed.
    """
    counts = BuildCounts()
    examples = []
    label_counts: Counter[str] = Counter()
    for doc in docs:
        if doc.domain != "comments":
            continue
        status = doc.meta.get("moderation_status")
        if status is None:
            counts.skip("missing_status")
            continue
        group = doc.meta.get("article_id") or doc.id
        examples.append(
            TaskExample(
                task="moderation", input_text=doc.text, target_text=status,
                source_ids=(group, doc.id),
            )
        )
        label_counts[status] += 1
        counts.built += 1
    if label_counts:
        log.info("moderation class counts: %s", dict(sorted(label_counts.items())))
        if len(label_counts) > 1 and min(label_counts.values()) > 0:
            ratio = max(label_counts.values()) / min(label_counts.values())
            log.info("moderation imbalance ratio: %.2f", ratio)
    return examples, counts


def imbalance_ratio(examples: list[TaskExample]) -> float:
    label_counts = Counter(ex.target_text for ex in examples)
    if len(label_counts) < 2:
        return float("inf") if label_counts else 0.0
    return max(label_counts.values()) / min(label_counts.values())


# -- splitting -------------------------------------------------------------------


def _shuffled_groups(examples: list[TaskExample], seed: int) -> list[str]:
    groups = sorted({ex.group_id for ex in examples})
    rng = make_rng(derive_seed(seed, "task-split"))
    return [groups[int(i)] for i in rng.permutation(len(groups))]


def split(examples: list[TaskExample], test_fraction: float, seed: int) -> TaskSplit:
    """Seeded, article-grouped partition: no group id appears on both sides."""
    if not 0 < test_fraction < 1:
        raise TaskError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not examples:
        raise TaskError("cannot split an empty example list")
    group_sizes = Counter(ex.group_id for ex in examples)
    target = int(round(len(examples) * test_fraction))
    test_groups: set[str] = set()
    test_count = 0
    for group in _shuffled_groups(examples, seed):
        if test_count >= target:
            break
        test_groups.add(group)
        test_count += group_sizes[group]
    return TaskSplit(
        task=examples[0].task,
        train=[ex for ex in examples if ex.group_id not in test_groups],
        test=[ex for ex in examples if ex.group_id in test_groups],
        seed=seed,
    )


def split_exact(
    examples: list[TaskExample], train_count: int, test_count: int, seed: int
) -> TaskSplit:
    """Partition into exact train/test counts (count-targets mode).

    Requires train_count + test_count == len(examples); groups that would
    overshoot the test quota are passed over, so exactness is achievable
    whenever group sizes permit.
    """
    if train_count < 0 or test_count < 0:
        raise TaskError("counts must be non-negative")
    if train_count + test_count != len(examples):
        raise TaskError(
            f"counts {train_count}+{test_count} do not cover {len(examples)} examples"
        )
    group_sizes = Counter(ex.group_id for ex in examples)
    test_groups: set[str] = set()
    remaining = test_count
    for group in _shuffled_groups(examples, seed):
        if remaining == 0:
            break
        if group_sizes[group] <= remaining:
            test_groups.add(group)
            remaining -= group_sizes[group]
    if remaining != 0:
        raise TaskError(
            f"group sizes cannot realize an exact test count of {test_count}"
        )
    return TaskSplit(
        task=examples[0].task,
        train=[ex for ex in examples if ex.group_id not in test_groups],
        test=[ex for ex in examples if ex.group_id in test_groups],
        seed=seed,
    )


def leaked_groups(split_: TaskSplit) -> set[str]:
    return {ex.group_id for ex in split_.train} & {ex.group_id for ex in split_.test}


# -- persistence ------------------------------------------------------------------


def save_examples(examples: list[TaskExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "task": ex.task,
                        "input": ex.input_text,
                        "target": ex.target_text,
                        "source_ids": list(ex.source_ids),
                        "flags": list(ex.flags),
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def load_examples(path: str | Path) -> list[TaskExample]:
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        try:
            obj = json.loads(line)
            examples.append(
                TaskExample(
                    task=obj["task"],
                    input_text=obj["input"],
                    target_text=obj["target"],
                    source_ids=tuple(obj["source_ids"]),
                    flags=tuple(obj.get("flags", [])),
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise TaskError(f"{path}:{lineno}: malformed task example: {exc}") from exc
    return examples


def write_manifest(
    path: str | Path,
    seed: int,
    counts: dict[str, BuildCounts],
    splits: dict[str, tuple[int, int]],
) -> None:
    """Record builder version, seed, and per-task build/skip/split counts."""
    payload = {
        "builder_version": 1,
        "seed": seed,
        "tasks": {
            task: {
                "built": counts[task].built,
                "skipped": dict(sorted(counts[task].skipped.items())),
                "train": splits[task][0],
                "test": splits[task][1],
            }
            for task in sorted(counts)
        },
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
