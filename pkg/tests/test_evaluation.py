import math
from collections import Counter

import pytest

from luxgen.corpus import tokenize
from luxgen.evaluation import (
    EvalError,
    PredictionRecord,
    bleu,
    classification_metrics,
    load_predictions,
    manual_sheet,
    render_scores_table,
    sample_manual,
    save_predictions,
    scores_to_tsv,
)
from luxgen.seeding import make_rng


def oracle_bleu(hypotheses, references, max_n=4):
    """Hand n-gram/BP arithmetic, written independently of the implementation."""
    counts = {}
    for n in range(1, max_n + 1):
        match, total = 0, 0
        for h, r in zip(hypotheses, references):
            ht, rt = tokenize(h), tokenize(r)
            hgrams = Counter(tuple(ht[i : i + n]) for i in range(len(ht) - n + 1))
            rgrams = Counter(tuple(rt[i : i + n]) for i in range(len(rt) - n + 1))
            for gram, c in hgrams.items():
                match += min(c, rgrams.get(gram, 0))
                total += c
        counts[n] = (match, total)
    c = sum(len(tokenize(h)) for h in hypotheses)
    r = sum(len(tokenize(x)) for x in references)
    if c == 0:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        match, total = counts[n]
        if total == 0:
            continue
        p = match / total if match else 1.0 / (2 * c)
        logs.append(math.log(p))
    if not logs:
        return 0.0
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


WORDS = ["the", "cat", "sat", "down", "on", "a", "mat", "dog", "ran", "far"]


def random_sentence(rng, lo=1, hi=12):
    return " ".join(WORDS[int(i)] for i in rng.integers(0, len(WORDS), size=int(rng.integers(lo, hi))))


class TestBleu:
    def test_identity_is_one(self, rng):
        hyps = [random_sentence(rng, 3, 10) for _ in range(20)]
        assert bleu(hyps, list(hyps)) == pytest.approx(1.0, abs=1e-12)

    def test_worked_example(self):
        # single pair: three unigram/bigram/trigram precisions of 1, no
        # 4-grams, brevity penalty exp(1 - 4/3)
        score = bleu(["the cat sat"], ["the cat sat down"])
        assert score == pytest.approx(math.exp(1 - 4 / 3), abs=1e-9)

    def test_zero_overlap_is_floor_composite(self):
        score = bleu(["dog ran far"], ["the cat sat"])
        floor = 1.0 / (2 * 3)
        expected = math.exp(1 - 3 / 3) * math.exp(
            (math.log(floor) + math.log(floor) + math.log(floor)) / 3
        )
        assert score == pytest.approx(expected, abs=1e-12)
        assert score < 0.2

    def test_fifty_random_single_pairs_match_oracle(self, rng):
        for _ in range(50):
            hyp = [random_sentence(rng)]
            ref = [random_sentence(rng)]
            assert bleu(hyp, ref) == pytest.approx(oracle_bleu(hyp, ref), abs=1e-9)

    def test_random_corpora_match_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 12))
            hyps = [random_sentence(rng) for _ in range(n)]
            refs = [random_sentence(rng) for _ in range(n)]
            assert bleu(hyps, refs) == pytest.approx(oracle_bleu(hyps, refs), abs=1e-9)

    def test_permutation_invariance(self, rng):
        hyps = [random_sentence(rng) for _ in range(10)]
        refs = [random_sentence(rng) for _ in range(10)]
        base = bleu(hyps, refs)
        order = rng.permutation(10)
        assert bleu([hyps[i] for i in order], [refs[i] for i in order]) == pytest.approx(base, abs=1e-12)

    def test_monotone_under_token_corruption(self, rng):
        for _ in range(25):
            ref = random_sentence(rng, 4, 10)
            hyp_tokens = tokenize(ref)
            pos = int(rng.integers(len(hyp_tokens)))
            before = bleu([" ".join(hyp_tokens)], [ref])
            hyp_tokens[pos] = "zzzz"
            after = bleu([" ".join(hyp_tokens)], [ref])
            assert after <= before + 1e-12

    def test_empty_corpus_is_error(self):
        with pytest.raises(EvalError, match="empty"):
            bleu([], [])

    def test_empty_single_hypothesis_ok(self):
        score = bleu(["", "the cat"], ["the cat", "the cat"])
        assert 0.0 <= score <= 1.0

    def test_all_empty_hypotheses_zero(self):
        assert bleu(["", ""], ["a b", "c d"]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(EvalError, match="hypotheses"):
            bleu(["a"], ["a", "b"])

    def test_sentence_level_flag(self, rng):
        hyps = [random_sentence(rng) for _ in range(5)]
        refs = [random_sentence(rng) for _ in range(5)]
        expected = sum(bleu([h], [r]) for h, r in zip(hyps, refs)) / 5
        assert bleu(hyps, refs, sentence_level=True) == pytest.approx(expected, abs=1e-12)


def oracle_classification(predictions, golds, classes):
    """Confusion-matrix brute force."""
    matrix = {(p, g): 0 for p in set(predictions) | set(classes) for g in classes}
    for p, g in zip(predictions, golds):
        matrix[(p, g)] = matrix.get((p, g), 0) + 1
    out = {}
    for cls in classes:
        tp = matrix.get((cls, cls), 0)
        fp = sum(v for (p, g), v in matrix.items() if p == cls and g != cls)
        fn = sum(v for (p, g), v in matrix.items() if g == cls and p != cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[cls] = (precision, recall, f1, tp + fn)
    return out


class TestClassification:
    def test_perfect(self):
        report = classification_metrics(["a", "b"], ["a", "b"], ["a", "b"])
        assert report.macro_f1 == report.accuracy == 1.0
        assert all(m.precision == m.recall == m.f1 == 1.0 for m in report.per_class.values())

    def test_archived_style_confusion_counts(self):
        # TP=6, FP=4, FN=94 for the minority class in a 1,000-item corpus.
        golds = ["archived"] * 100 + ["published"] * 900
        predictions = (
            ["archived"] * 6 + ["published"] * 94 + ["archived"] * 4 + ["published"] * 896
        )
        report = classification_metrics(predictions, golds, ["archived", "published"])
        minority = report.per_class["archived"]
        assert minority.precision == pytest.approx(0.60, abs=1e-12)
        assert minority.recall == pytest.approx(0.06, abs=1e-12)
        assert minority.f1 == pytest.approx(0.109, abs=5e-4)

    def test_macro_averages_all_declared_classes(self):
        report = classification_metrics(["a", "a"], ["a", "a"], ["a", "b"])
        assert report.macro_f1 == pytest.approx(0.5)

    def test_random_sets_match_oracle(self, rng):
        classes = ["x", "y", "z"]
        for _ in range(100):
            n = int(rng.integers(1, 60))
            golds = [classes[int(i)] for i in rng.integers(0, 3, size=n)]
            predictions = [
                classes[int(i)] if rng.random() > 0.1 else "junk" for i in rng.integers(0, 3, size=n)
            ]
            report = classification_metrics(predictions, golds, classes)
            expected = oracle_classification(predictions, golds, classes)
            for cls in classes:
                m = report.per_class[cls]
                p, r, f1, support = expected[cls]
                assert abs(m.precision - p) < 1e-12
                assert abs(m.recall - r) < 1e-12
                assert abs(m.f1 - f1) < 1e-12
                assert m.support == support
            macro = sum(expected[c][2] for c in classes) / len(classes)
            assert abs(report.macro_f1 - macro) < 1e-12

    def test_weighted_recall_equals_accuracy(self, rng):
        classes = ["a", "b", "c"]
        for _ in range(20):
            n = int(rng.integers(1, 40))
            golds = [classes[int(i)] for i in rng.integers(0, 3, size=n)]
            predictions = [classes[int(i)] for i in rng.integers(0, 3, size=n)]
            report = classification_metrics(predictions, golds, classes)
            assert report.weighted_recall == pytest.approx(report.accuracy, abs=1e-12)

    def test_weighted_f1_between_min_and_max(self, rng):
        golds = ["a"] * 7 + ["b"] * 3
        predictions = ["a"] * 5 + ["b"] * 5
        report = classification_metrics(predictions, golds, ["a", "b"])
        f1s = [m.f1 for m in report.per_class.values()]
        assert min(f1s) <= report.weighted_f1 <= max(f1s)

    def test_unknown_gold_rejected(self):
        with pytest.raises(EvalError, match="gold"):
            classification_metrics(["a"], ["q"], ["a", "b"])


class TestReportRendering:
    def test_best_marked(self):
        table = render_scores_table({"m1": {"task": 0.5}, "m2": {"task": 0.7}})
        lines = table.splitlines()
        assert any("m2" in l and "0.7000*" in l for l in lines)
        assert any("m1" in l and "0.5000 " in l for l in lines)

    def test_ties_both_marked(self):
        table = render_scores_table({"m1": {"t": 0.5}, "m2": {"t": 0.5}})
        assert table.count("0.5000*") == 2

    def test_regeneration_byte_identical(self):
        scores = {"m1": {"a": 0.1, "b": 0.2}, "m2": {"a": 0.3}}
        assert render_scores_table(scores).encode() == render_scores_table(scores).encode()
        assert scores_to_tsv(scores).encode() == scores_to_tsv(scores).encode()


def records(task, n):
    return [
        PredictionRecord(task=task, example_id=f"{task}-{i}", prediction=f"p{i}",
                         input_text=f"in{i}", target_text=f"t{i}")
        for i in range(n)
    ]


class TestManualSampling:
    def test_twenty_per_task_gives_eighty_rows(self):
        pool = sum((records(t, 30) for t in ("headline", "positive_comment", "negative_comment", "description")), [])
        sampled = sample_manual(pool, n=20, seed=1)
        assert len(sampled) == 80
        sheet = manual_sheet(sampled)
        assert len(sheet.splitlines()) == 81  # header + rows
        assert sheet.splitlines()[0].endswith("task_rating\tcontent_rating\tcorrectness_rating")

    def test_whole_set_when_n_equals_size(self):
        pool = records("headline", 10)
        sampled = sample_manual(pool, n=10, seed=2)
        assert sorted(r.example_id for r in sampled) == sorted(r.example_id for r in pool)
        assert [r.example_id for r in sampled] != [r.example_id for r in pool]  # shuffled

    def test_same_seed_same_rows(self):
        pool = records("headline", 30)
        a = sample_manual(pool, 5, seed=3)
        b = sample_manual(pool, 5, seed=3)
        assert [r.example_id for r in a] == [r.example_id for r in b]

    def test_oversample_rejected(self):
        with pytest.raises(EvalError, match="only"):
            sample_manual(records("headline", 3), 5, seed=0)


class TestPredictionsFile:
    def test_round_trip(self, tmp_path):
        preds = [PredictionRecord(task="headline", example_id=f"e{i}", prediction=f"out {i}") for i in range(5)]
        path = tmp_path / "preds.jsonl"
        save_predictions(preds, path)
        assert load_predictions(path) == preds

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "preds.jsonl"
        path.write_text("{}\n", encoding="utf-8")
        with pytest.raises(EvalError, match=":1"):
            load_predictions(path)
