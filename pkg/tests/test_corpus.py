import json
import unicodedata
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from luxgen import corpus
from luxgen.corpus import (
    CorpusError,
    Document,
    ManifestEntry,
    count_stats,
    dedupe,
    ingest,
    load,
    normalize_text,
    save,
    tokenize,
)


def entry(path, format="plain-lines", language="lb", domain="web", source="fixture"):
    return ManifestEntry(path=str(path), language=language, domain=domain, source=source, format=format)


class TestIngest:
    def test_plain_lines_three_records(self, tmp_path):
        f = tmp_path / "f.txt"
        f.write_text("one\ntwo\nthree\n", encoding="utf-8")
        docs = ingest([entry(f)])
        assert [d.id for d in docs] == ["fixture-0", "fixture-1", "fixture-2"]
        assert [d.text for d in docs] == ["one", "two", "three"]

    def test_empty_file_warns(self, tmp_path, caplog):
        f = tmp_path / "empty.txt"
        f.write_text("", encoding="utf-8")
        with caplog.at_level("WARNING"):
            docs = ingest([entry(f)])
        assert docs == []
        assert any("no documents" in r.message for r in caplog.records)

    def test_combining_accent_precomposed(self, tmp_path):
        # Oracle: the canonical composition of a + combining acute.
        reference = unicodedata.normalize("NFC", "a\u0301")
        assert reference == "á"
        f = tmp_path / "f.txt"
        f.write_text("a\u0301", encoding="utf-8")
        docs = ingest([entry(f)])
        assert docs[0].text == reference

    def test_unknown_format_rejected_before_reads(self, tmp_path):
        good = tmp_path / "good.txt"
        good.write_text("hello\n", encoding="utf-8")
        missing = tmp_path / "missing.txt"
        with pytest.raises(CorpusError, match="unknown format"):
            ingest([entry(good), entry(missing, format="parquet")])

    def test_unreadable_file_names_path(self, tmp_path):
        with pytest.raises(CorpusError, match="nope.txt"):
            ingest([entry(tmp_path / "nope.txt")])

    def test_delimited_records_with_meta(self, tmp_path):
        f = tmp_path / "f.tsv"
        f.write_text("text\tupvotes\tdownvotes\nhi there\t3\t1\n", encoding="utf-8")
        docs = ingest([entry(f, format="delimited-records")])
        assert docs[0].meta == {"upvotes": 3, "downvotes": 1}

    def test_delimited_requires_text_column(self, tmp_path):
        f = tmp_path / "f.tsv"
        f.write_text("body\nhi\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="text"):
            ingest([entry(f, format="delimited-records")])

    def test_structured_records(self, tmp_path):
        f = tmp_path / "f.jsonl"
        f.write_text(
            json.dumps({"text": "hello", "title": "t", "upvotes": 2}) + "\n", encoding="utf-8"
        )
        docs = ingest([entry(f, format="structured-records")])
        assert docs[0].meta["title"] == "t"
        assert docs[0].meta["upvotes"] == 2

    def test_whitespace_collapse_and_controls(self, tmp_path):
        f = tmp_path / "f.jsonl"
        f.write_text(json.dumps({"text": "a\x00b  c\td\n e"}) + "\n", encoding="utf-8")
        docs = ingest([entry(f, format="structured-records")])
        assert docs[0].text == "ab c d e"

    def test_empty_records_skipped_but_ordinals_advance(self, tmp_path, caplog):
        f = tmp_path / "f.txt"
        f.write_text("one\n\ntwo\n", encoding="utf-8")
        with caplog.at_level("WARNING"):
            docs = ingest([entry(f)])
        assert [d.id for d in docs] == ["fixture-0", "fixture-2"]

    def test_negative_votes_rejected(self):
        with pytest.raises(CorpusError, match="non-negative"):
            Document(id="x", text="t", language="lb", domain="web", source="s", meta={"upvotes": -1})


class TestDedupe:
    def test_same_domain_collapses(self, doc_factory):
        docs = [doc_factory(0, "same"), doc_factory(1, "same")]
        assert len(dedupe(docs)) == 1

    def test_different_domains_kept(self, doc_factory):
        docs = [doc_factory(0, "same", domain="web"), doc_factory(1, "same", domain="news")]
        assert len(dedupe(docs)) == 2

    def test_planted_duplicates(self, doc_factory):
        docs = [doc_factory(i, f"text {i}") for i in range(900)]
        docs += [doc_factory(900 + i, f"text {i}") for i in range(100)]
        survivors = dedupe(docs)
        assert len(survivors) == 900
        assert all(int(d.id.split("-")[1]) < 900 for d in survivors)

    def test_keeps_smallest_id(self, doc_factory):
        docs = [doc_factory(5, "dup"), doc_factory(2, "dup"), doc_factory(9, "dup")]
        assert [d.id for d in dedupe(docs)] == ["fix-2"]

    def test_idempotent(self, doc_factory, rng):
        docs = [doc_factory(i, f"t {rng.integers(5)}") for i in range(50)]
        once = dedupe(docs)
        assert dedupe(once) == once


class TestStats:
    def test_single_document(self, doc_factory):
        stats = count_stats([doc_factory(0, "a a b")])
        row = stats.rows[0]
        assert (row.token_count, row.type_count, row.ttr) == (3, 2, 0.6667)

    def test_punctuation_detached(self):
        assert tokenize("don't stop!") == ["don", "'", "t", "stop", "!"]

    def test_totals_sum_domain_rows(self, doc_factory):
        docs = [
            doc_factory(0, "a b c", domain="web"),
            doc_factory(1, "d e", domain="news", source="other"),
            doc_factory(2, "x y z w", language="de"),
        ]
        stats = count_stats(docs)
        for lang in ("lb", "de"):
            assert stats.total(lang).token_count == sum(
                r.token_count for r in stats.rows if r.language == lang
            )

    def test_matches_streaming_counter_oracle(self, doc_factory, rng):
        words = [f"w{i}" for i in range(40)]
        docs = [
            doc_factory(i, " ".join(words[rng.integers(40)] for _ in range(rng.integers(3, 30))))
            for i in range(500)
        ]
        stats = count_stats(docs)
        # Independent one-pass oracle over the raw texts.
        tokens = 0
        types = Counter()
        for d in docs:
            for t in d.text.split():
                tokens += 1
                types[t] += 1
        row = stats.rows[0]
        assert row.token_count == tokens
        assert row.type_count == len(types)

    def test_ttr_bounds(self, doc_factory, rng):
        docs = [doc_factory(i, " ".join(str(rng.integers(9)) for _ in range(rng.integers(1, 60)))) for i in range(100)]
        for row in count_stats(docs).rows + count_stats(docs).totals:
            assert 0 < row.ttr <= 1

    def test_stats_additivity_over_partitions(self, doc_factory, rng):
        docs = [doc_factory(i, " ".join("ab"[rng.integers(2)] for _ in range(rng.integers(1, 20)))) for i in range(60)]
        whole = count_stats(docs).total("lb").token_count
        cut = int(rng.integers(1, 59))
        parts = count_stats(docs[:cut]).total("lb").token_count + count_stats(docs[cut:]).total("lb").token_count
        assert parts == whole


class TestArchive:
    def test_round_trip(self, doc_factory, tmp_path):
        docs = [doc_factory(i, f"text {i}", title=f"t{i}") for i in range(3)]
        path = tmp_path / "store.jsonl"
        save(docs, path)
        assert load(path) == docs

    def test_truncated_line_names_lineno(self, doc_factory, tmp_path):
        path = tmp_path / "store.jsonl"
        save([doc_factory(i, f"text {i}") for i in range(3)], path)
        raw = path.read_text(encoding="utf-8").splitlines()
        raw[-1] = raw[-1][: len(raw[-1]) // 2]
        path.write_text("\n".join(raw) + "\n", encoding="utf-8")
        with pytest.raises(CorpusError, match=":4"):
            load(path)

    def test_version_mismatch_refused(self, doc_factory, tmp_path):
        path = tmp_path / "store.jsonl"
        save([doc_factory(0, "x")], path)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines[0] = json.dumps({"format": corpus.ARCHIVE_FORMAT, "version": 99})
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(CorpusError, match="version 99"):
            load(path)

    def test_double_save_byte_identical(self, doc_factory, tmp_path, rng):
        docs = [
            doc_factory(i, " ".join(str(rng.integers(100)) for _ in range(10)), upvotes=int(rng.integers(5)))
            for i in range(10_000)
        ]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save(docs, p1)
        save(load(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


meta_values = st.one_of(
    st.integers(min_value=0, max_value=10**6),
    st.text(min_size=1, max_size=20),
)
documents = st.builds(
    Document,
    id=st.uuids().map(str),
    text=st.text(min_size=1, max_size=80).map(normalize_text).filter(bool),
    language=st.sampled_from(sorted(corpus.LANGUAGES)),
    domain=st.sampled_from(sorted(corpus.DOMAINS)),
    source=st.text(alphabet="abcdef", min_size=1, max_size=6),
    meta=st.dictionaries(st.sampled_from(["upvotes", "downvotes", "title"]), meta_values, max_size=2).filter(
        lambda m: all(isinstance(m.get(k, 0), int) for k in ("upvotes", "downvotes"))
    ),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(documents, max_size=20))
def test_archive_round_trip_property(tmp_path_factory, docs):
    # ids must be unique within a store
    seen = set()
    docs = [d for d in docs if not (d.id in seen or seen.add(d.id))]
    path = tmp_path_factory.mktemp("prop") / "store.jsonl"
    save(docs, path)
    assert load(path) == docs
