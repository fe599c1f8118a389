"""Scoring and reporting: corpus BLEU, classification metrics, tables, sampling.

BLEU is corpus-level with one reference per hypothesis: modified n-gram
precisions (n = 1..4) pooled over the corpus, geometric mean, brevity
penalty. Orders with no hypothesis n-grams are left out of the mean; an
order with hypothesis n-grams but zero matches is floored at
1 / (2 * corpus hypothesis length) so that one-word targets cannot zero out
whole corpora. Tokenization is shared with the corpus statistics counter.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import tokenize
from .seeding import derive_seed, make_rng


class EvalError(ValueError):
    pass


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: list[str],
    references: list[str],
    max_n: int = 4,
    sentence_level: bool = False,
) -> float:
    """Corpus BLEU in [0, 1]; identical corpora score exactly 1.

    With sentence_level=True, returns the mean of per-pair corpus scores
    instead (for comparison only).
    """
    if len(hypotheses) != len(references):
        raise EvalError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EvalError("empty corpus")
    if sentence_level:
        return sum(bleu([h], [r], max_n) for h, r in zip(hypotheses, references)) / len(hypotheses)

    matches = [0] * (max_n + 1)
    possible = [0] * (max_n + 1)
    hyp_len = 0
    ref_len = 0
    for hypothesis, reference in zip(hypotheses, references):
        hyp_tokens = tokenize(hypothesis)
        ref_tokens = tokenize(reference)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp_tokens, n)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref_tokens, n)
            possible[n] += sum(hyp_counts.values())
            matches[n] += sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
    if hyp_len == 0:
        return 0.0
    floor = 1.0 / (2.0 * hyp_len)
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        if possible[n] == 0:
            continue
        precision = matches[n] / possible[n] if matches[n] > 0 else floor
        log_sum += math.log(precision)
        orders += 1
    if orders == 0:
        return 0.0
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return brevity * math.exp(log_sum / orders)


# -- classification ---------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    per_class: dict[str, ClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    macro_f1: float
    accuracy: float


def classification_metrics(
    predictions: list[str], golds: list[str], classes: list[str]
) -> ClassificationReport:
    """Per-class precision/recall/F1 with support-weighted averages and macro F1.

    Zero-denominator cells are defined as 0; macro F1 averages over every
    declared class, absent ones contributing 0.
    """
    if len(predictions) != len(golds):
        raise EvalError(f"{len(predictions)} predictions vs {len(golds)} golds")
    if not golds:
        raise EvalError("empty prediction set")
    class_set = set(classes)
    for label in golds:
        if label not in class_set:
            raise EvalError(f"gold label {label!r} not among declared classes")
    per_class: dict[str, ClassMetrics] = {}
    total = len(golds)
    correct = sum(p == g for p, g in zip(predictions, golds))
    weighted = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    macro_sum = 0.0
    for cls in classes:
        tp = sum(1 for p, g in zip(predictions, golds) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(predictions, golds) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(predictions, golds) if p != cls and g == cls)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls] = ClassMetrics(precision, recall, f1, support)
        weight = support / total
        weighted["precision"] += weight * precision
        weighted["recall"] += weight * recall
        weighted["f1"] += weight * f1
        macro_sum += f1
    return ClassificationReport(
        per_class=per_class,
        weighted_precision=weighted["precision"],
        weighted_recall=weighted["recall"],
        weighted_f1=weighted["f1"],
        macro_f1=macro_sum / len(classes),
        accuracy=correct / total,
    )


# -- report rendering ----------------------------------------------------------------


def render_scores_table(scores: dict[str, dict[str, float]], marker: str = "*") -> str:
    """Models as rows, tasks as columns, best score per column marked (ties all)."""
    tasks: list[str] = []
    for row in scores.values():
        for task in row:
            if task not in tasks:
                tasks.append(task)
    best = {
        task: max(row[task] for row in scores.values() if task in row) for task in tasks
    }
    name_width = max([len("model")] + [len(m) for m in scores])
    col_width = max([len(t) for t in tasks] + [8]) + 1
    lines = [
        f"{'model':<{name_width}}  " + "  ".join(f"{t:>{col_width}}" for t in tasks),
        "-" * name_width + "  " + "  ".join("-" * col_width for _ in tasks),
    ]
    for model_name, row in scores.items():
        cells = []
        for task in tasks:
            if task not in row:
                cells.append(f"{'-':>{col_width}}")
                continue
            value = row[task]
            mark = marker if value == best[task] else " "
            cells.append(f"{value:.4f}{mark}".rjust(col_width))
        lines.append(f"{model_name:<{name_width}}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


def scores_to_tsv(scores: dict[str, dict[str, float]]) -> str:
    tasks: list[str] = []
    for row in scores.values():
        for task in row:
            if task not in tasks:
                tasks.append(task)
    lines = ["model\t" + "\t".join(tasks)]
    for model_name, row in scores.items():
        cells = [f"{row[task]:.6f}" if task in row else "" for task in tasks]
        lines.append(model_name + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def render_classification_table(reports: dict[str, ClassificationReport]) -> str:
    """Per-model moderation metrics: per-class P/R/F1, weighted averages, macro F1."""
    classes: list[str] = []
    for report in reports.values():
        for cls in report.per_class:
            if cls not in classes:
                classes.append(cls)
    header = ["model"]
    for cls in classes:
        header += [f"{cls}/P", f"{cls}/R", f"{cls}/F1"]
    header += ["wavg/P", "wavg/R", "wavg/F1", "macro-F1"]
    widths = [max(len(h), 7) for h in header]
    widths[0] = max([len(h) for h in reports] + [len("model")])
    lines = [
        "  ".join(f"{h:>{w}}" if i else f"{h:<{w}}" for i, (h, w) in enumerate(zip(header, widths))),
        "  ".join("-" * w for w in widths),
    ]
    for name, report in reports.items():
        cells = [f"{name:<{widths[0]}}"]
        values: list[float] = []
        for cls in classes:
            metrics = report.per_class.get(cls, ClassMetrics(0.0, 0.0, 0.0, 0))
            values += [metrics.precision, metrics.recall, metrics.f1]
        values += [
            report.weighted_precision,
            report.weighted_recall,
            report.weighted_f1,
            report.macro_f1,
        ]
        for value, width in zip(values, widths[1:]):
            cells.append(f"{value:.2f}".rjust(width))
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


# -- predictions files ------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionRecord:
    task: str
    example_id: str
    prediction: str
    input_text: str = ""
    target_text: str = ""


def save_predictions(records: list[PredictionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {"task": r.task, "id": r.example_id, "prediction": r.prediction},
                    ensure_ascii=False,
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )


def load_predictions(path: str | Path) -> list[PredictionRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        try:
            obj = json.loads(line)
            records.append(
                PredictionRecord(task=obj["task"], example_id=obj["id"], prediction=obj["prediction"])
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise EvalError(f"{path}:{lineno}: malformed prediction line: {exc}") from exc
    return records


# -- manual-evaluation sampling ------------------------------------------------------------


MANUAL_SHEET_COLUMNS = (
    "task",
    "example_id",
    "input",
    "target",
    "prediction",
    "task_rating",
    "content_rating",
    "correctness_rating",
)


def sample_manual(records: list[PredictionRecord], n: int, seed: int) -> list[PredictionRecord]:
    """Seeded sample of n records per task, for manual rubric annotation."""
    by_task: dict[str, list[PredictionRecord]] = {}
    for record in records:
        by_task.setdefault(record.task, []).append(record)
    sampled: list[PredictionRecord] = []
    for task in sorted(by_task):
        pool = by_task[task]
        if n > len(pool):
            raise EvalError(f"asked for {n} samples but task {task} has only {len(pool)}")
        rng = make_rng(derive_seed(seed, f"manual-sample/{task}"))
        order = rng.permutation(len(pool))
        sampled.extend(pool[int(i)] for i in order[:n])
    return sampled


def manual_sheet(records: list[PredictionRecord]) -> str:
    """Annotation sheet (TSV) with empty rating columns for the three rubric axes."""

    def clean(text: str) -> str:
        return text.replace("\t", " ").replace("\n", " ")

    lines = ["\t".join(MANUAL_SHEET_COLUMNS)]
    for r in records:
        lines.append(
            "\t".join(
                (clean(r.task), clean(r.example_id), clean(r.input_text), clean(r.target_text), clean(r.prediction), "", "", "")
            )
        )
    return "\n".join(lines) + "\n"
