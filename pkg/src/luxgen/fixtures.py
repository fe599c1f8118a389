"""Deterministic synthetic fixture corpus.

Generates a small three-language document collection with the same shape as
a real ingest: news articles with titles, comments with votes and moderation
status linked to articles, wiki pages with short descriptions, and plain
text for the remaining domains. The auxiliary languages deliberately lack
chat data (and one lacks radio) so balancing produces deficit rows, and one
auxiliary radio source is far too small to meet its budget.

Everything is driven by one seed; the same seed writes byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .seeding import derive_seed, make_rng

_SYLLABLES = {
    "lb": ["lët", "ze", "buerg", "esch", "vun", "den", "mat", "fir", "ge", "schaf",
           "haus", "kan", "ner", "wan", "sch", "min", "ett", "dag", "no", "riicht"],
    "de": ["schaf", "ver", "ein", "gross", "stadt", "land", "burg", "heit", "keit",
           "zeit", "tag", "nach", "richt", "wirt", "bahn", "berg", "wald", "see", "markt", "haus"],
    "fr": ["mai", "son", "ville", "champ", "mont", "rive", "eau", "bleu", "grand",
           "pont", "terre", "chat", "eau", "lune", "soleil", "mer", "port", "gare", "rue", "bois"],
    "other": ["ka", "ri", "to", "mu", "sa", "ne", "lo", "vi", "da", "pe"],
}

_PUNCT = [".", ".", ".", "!", "?"]


def _word(rng: np.random.Generator, language: str) -> str:
    syllables = _SYLLABLES[language]
    n = int(rng.integers(1, 4))
    return "".join(syllables[int(rng.integers(len(syllables)))] for _ in range(n))


def _sentence(rng: np.random.Generator, language: str, min_words: int = 5, max_words: int = 14) -> str:
    n = int(rng.integers(min_words, max_words + 1))
    words = [_word(rng, language) for _ in range(n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + _PUNCT[int(rng.integers(len(_PUNCT)))]


def _paragraph(rng: np.random.Generator, language: str, sentences: int) -> str:
    return " ".join(_sentence(rng, language) for _ in range(sentences))


# documents per (language, domain) at scale 1.0; auxiliary gaps are deliberate
_CELL_DOCS = {
    ("lb", "radio"): 40,
    ("lb", "news"): 60,
    ("lb", "parliament"): 40,
    ("lb", "web"): 80,
    ("lb", "wiki"): 50,
    ("lb", "comments"): 180,
    ("lb", "chat"): 40,
    ("de", "radio"): 3,
    ("de", "news"): 80,
    ("de", "parliament"): 60,
    ("de", "web"): 110,
    ("de", "wiki"): 70,
    ("de", "comments"): 120,
    ("fr", "news"): 80,
    ("fr", "parliament"): 60,
    ("fr", "web"): 110,
    ("fr", "wiki"): 70,
    ("fr", "comments"): 120,
}


def write_fixture_corpus(root: str | Path, seed: int = 2024, scale: float = 1.0) -> Path:
    """Write fixture files plus an ingestion manifest; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest: list[dict] = []

    def cell_count(language: str, domain: str) -> int:
        return max(1, int(round(_CELL_DOCS.get((language, domain), 0) * scale)))

    for (language, domain), base in sorted(_CELL_DOCS.items()):
        count = cell_count(language, domain)
        source = f"{language}-{domain}"
        rng = make_rng(derive_seed(seed, f"fixture/{source}"))
        if domain == "news":
            path = root / f"{source}.jsonl"
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                for i in range(count):
                    title = _sentence(rng, language, 3, 7).rstrip(".!?")
                    body = _paragraph(rng, language, int(rng.integers(2, 5)))
                    fh.write(
                        json.dumps({"text": f"{title}. {body}", "title": title}, ensure_ascii=False)
                        + "\n"
                    )
            manifest.append({"path": path.name, "language": language, "domain": domain,
                             "source": source, "format": "structured-records"})
        elif domain == "wiki":
            path = root / f"{source}.jsonl"
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                for i in range(count):
                    body = _paragraph(rng, language, int(rng.integers(2, 4)))
                    description = _word(rng, language)
                    fh.write(
                        json.dumps({"text": body, "short_description": description}, ensure_ascii=False)
                        + "\n"
                    )
            manifest.append({"path": path.name, "language": language, "domain": domain,
                             "source": source, "format": "structured-records"})
        elif domain == "comments":
            articles = cell_count(language, "news")
            path = root / f"{source}.jsonl"
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                for i in range(count):
                    record = {
                        "text": _sentence(rng, language, 4, 12),
                        "article_id": f"{language}-news-{int(rng.integers(articles))}",
                        "upvotes": int(rng.integers(0, 40)),
                        "downvotes": int(rng.integers(0, 40)),
                        "moderation_status": "archived" if rng.random() < 0.2 else "published",
                    }
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            manifest.append({"path": path.name, "language": language, "domain": domain,
                             "source": source, "format": "structured-records"})
        elif domain == "chat":
            path = root / f"{source}.tsv"
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write("text\n")
                for i in range(count):
                    fh.write(_sentence(rng, language, 3, 9) + "\n")
            manifest.append({"path": path.name, "language": language, "domain": domain,
                             "source": source, "format": "delimited-records"})
        else:  # radio, parliament, web: one document per line
            path = root / f"{source}.txt"
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                for i in range(count):
                    fh.write(_paragraph(rng, language, int(rng.integers(1, 4))) + "\n")
            manifest.append({"path": path.name, "language": language, "domain": domain,
                             "source": source, "format": "plain-lines"})

    manifest_path = root / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path
