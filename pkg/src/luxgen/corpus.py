"""Document store: ingestion, normalization, deduplication, statistics, persistence.

Documents are pre-extracted text units tagged with (language, domain, source).
The token counter used for statistics (whitespace split with punctuation
detached, case-sensitive types) is shared with the BLEU scorer so that every
number the toolkit reports is produced by one tokenizer.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

LANGUAGES = frozenset({"lb", "de", "fr", "other"})
DOMAINS = frozenset(
    {"radio", "news", "parliament", "web", "wiki", "comments", "chat", "dictionary"}
)
MODERATION_STATUSES = frozenset({"archived", "published"})
FORMATS = frozenset({"plain-lines", "delimited-records", "structured-records"})

ARCHIVE_FORMAT = "luxgen-store"
ARCHIVE_VERSION = 1

# Known meta keys and the type they are validated/coerced to.
_INT_META = ("upvotes", "downvotes")
_STR_META = ("article_id", "title", "short_description")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_WS_RE = re.compile(r"\s+")


class CorpusError(ValueError):
    """Raised for invalid documents, manifests, or archives."""


def tokenize(text: str) -> list[str]:
    """Split on whitespace with punctuation detached into separate tokens.

    Case-sensitive; every non-alphanumeric, non-space character becomes its
    own token. Used for corpus statistics and for BLEU.
    """
    return _TOKEN_RE.findall(text)


def normalize_text(text: str) -> str:
    """Canonical composition, control characters stripped, whitespace collapsed.

    Deliberately no orthographic correction: text is kept as written.
    """
    text = unicodedata.normalize("NFC", text)
    text = "".join(
        ch for ch in text if not (unicodedata.category(ch) in ("Cc", "Cf") and not ch.isspace())
    )
    return _WS_RE.sub(" ", text).strip()


def _check_meta(meta: dict) -> dict:
    for key in _INT_META:
        if key in meta:
            value = meta[key]
            if isinstance(value, bool) or not isinstance(value, int):
                raise CorpusError(f"meta.{key} must be an integer, got {value!r}")
            if value < 0:
                raise CorpusError(f"meta.{key} must be non-negative, got {value}")
    if "moderation_status" in meta and meta["moderation_status"] not in MODERATION_STATUSES:
        raise CorpusError(f"unknown moderation_status {meta['moderation_status']!r}")
    return meta


@dataclass
class Document:
    """One text unit: normalized text plus provenance and optional metadata."""

    id: str
    text: str
    language: str
    domain: str
    source: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.text:
            raise CorpusError(f"document {self.id}: text empty after normalization")
        if self.language not in LANGUAGES:
            raise CorpusError(f"document {self.id}: unknown language {self.language!r}")
        if self.domain not in DOMAINS:
            raise CorpusError(f"document {self.id}: unknown domain {self.domain!r}")
        _check_meta(self.meta)


@dataclass(frozen=True)
class StatsRow:
    language: str
    domain: str
    source: str
    token_count: int
    type_count: int
    ttr: float


@dataclass
class CorpusStats:
    """Per (language, domain, source) token/type/TTR rows plus per-language totals."""

    rows: list[StatsRow]
    totals: list[StatsRow]

    def row(self, language: str, domain: str, source: str) -> StatsRow:
        for r in self.rows:
            if (r.language, r.domain, r.source) == (language, domain, source):
                return r
        raise KeyError((language, domain, source))

    def total(self, language: str) -> StatsRow:
        for r in self.totals:
            if r.language == language:
                return r
        raise KeyError(language)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    language: str
    domain: str
    source: str
    format: str


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read an ingestion manifest (JSON list of entries, paths relative to it)."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CorpusError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorpusError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise CorpusError(f"manifest {path} must be a JSON list")
    out = []
    for i, raw in enumerate(entries):
        missing = {"path", "language", "domain", "source", "format"} - set(raw)
        if missing:
            raise CorpusError(f"manifest entry {i} missing fields: {sorted(missing)}")
        out.append(
            ManifestEntry(
                path=str(path.parent / raw["path"]),
                language=raw["language"],
                domain=raw["domain"],
                source=raw["source"],
                format=raw["format"],
            )
        )
    return out


def _read_plain_lines(path: Path) -> list[tuple[str, dict]]:
    return [(line, {}) for line in path.read_text(encoding="utf-8").splitlines()]


def _read_delimited(path: Path) -> list[tuple[str, dict]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split("\t")
    if "text" not in header:
        raise CorpusError(f"{path}: delimited file lacks a 'text' column")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise CorpusError(f"{path}:{lineno}: expected {len(header)} columns, got {len(cells)}")
        row = dict(zip(header, cells))
        text = row.pop("text")
        meta = {}
        for key, value in row.items():
            if value == "":
                continue
            meta[key] = int(value) if key in _INT_META else value
        records.append((text, meta))
    return records


def _read_structured(path: Path) -> list[tuple[str, dict]]:
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid record: {exc}") from exc
        if not isinstance(obj, dict) or "text" not in obj:
            raise CorpusError(f"{path}:{lineno}: record must be an object with a 'text' field")
        meta = dict(obj.get("meta", {}))
        for key, value in obj.items():
            if key not in ("text", "meta"):
                meta[key] = value
        records.append((obj["text"], meta))
    return records


_READERS = {
    "plain-lines": _read_plain_lines,
    "delimited-records": _read_delimited,
    "structured-records": _read_structured,
}


def ingest(manifest: list[ManifestEntry]) -> list[Document]:
    """Turn manifest entries into normalized Documents.

    Ids are deterministic: ``{source}-{ordinal}`` with the ordinal counting
    records per source across the whole call. Records whose text normalizes
    to empty are skipped with a warning. Unknown formats are rejected before
    any file is read.
    """
    for entry in manifest:
        if entry.format not in FORMATS:
            raise CorpusError(f"unknown format {entry.format!r} for {entry.path}")
    docs: list[Document] = []
    ordinals: Counter[str] = Counter()
    for entry in manifest:
        path = Path(entry.path)
        try:
            records = _READERS[entry.format](path)
        except OSError as exc:
            raise CorpusError(f"cannot read {path}: {exc}") from exc
        kept = 0
        for text, meta in records:
            normalized = normalize_text(text)
            ordinal = ordinals[entry.source]
            ordinals[entry.source] += 1
            if not normalized:
                log.warning("%s: record %d empty after normalization, skipped", path, ordinal)
                continue
            docs.append(
                Document(
                    id=f"{entry.source}-{ordinal}",
                    text=normalized,
                    language=entry.language,
                    domain=entry.domain,
                    source=entry.source,
                    meta=meta,
                )
            )
            kept += 1
        if kept == 0:
            log.warning("%s: no documents ingested", path)
    return docs


def dedupe(docs: list[Document]) -> list[Document]:
    """Drop exact-duplicate texts within the same (language, domain).

    Among duplicates the document with the smallest id survives; the output
    preserves the input order of the survivors.
    """
    best_id: dict[tuple[str, str, str], str] = {}
    for doc in docs:
        key = (doc.language, doc.domain, doc.text)
        if key not in best_id or doc.id < best_id[key]:
            best_id[key] = doc.id
    emitted: set[tuple[str, str, str]] = set()
    out = []
    for doc in docs:
        key = (doc.language, doc.domain, doc.text)
        if doc.id == best_id[key] and key not in emitted:
            emitted.add(key)
            out.append(doc)
    return out


def count_stats(docs: list[Document]) -> CorpusStats:
    """Token/type/TTR accounting per (language, domain, source) plus language totals."""
    cell_tokens: Counter[tuple[str, str, str]] = Counter()
    cell_types: dict[tuple[str, str, str], set[str]] = {}
    lang_tokens: Counter[str] = Counter()
    lang_types: dict[str, set[str]] = {}
    for doc in docs:
        tokens = tokenize(doc.text)
        cell = (doc.language, doc.domain, doc.source)
        cell_tokens[cell] += len(tokens)
        cell_types.setdefault(cell, set()).update(tokens)
        lang_tokens[doc.language] += len(tokens)
        lang_types.setdefault(doc.language, set()).update(tokens)
    rows = [
        StatsRow(
            language=lang,
            domain=domain,
            source=source,
            token_count=cell_tokens[(lang, domain, source)],
            type_count=len(cell_types[(lang, domain, source)]),
            ttr=round(len(cell_types[(lang, domain, source)]) / cell_tokens[(lang, domain, source)], 4),
        )
        for (lang, domain, source) in sorted(cell_tokens)
    ]
    totals = [
        StatsRow(
            language=lang,
            domain="total",
            source="total",
            token_count=lang_tokens[lang],
            type_count=len(lang_types[lang]),
            ttr=round(len(lang_types[lang]) / lang_tokens[lang], 4),
        )
        for lang in sorted(lang_tokens)
    ]
    return CorpusStats(rows=rows, totals=totals)


def render_stats(stats: CorpusStats) -> str:
    """Fixed-width table of stats rows followed by per-language totals."""
    header = ("language", "domain", "source", "tokens", "types", "ttr")
    lines = []
    all_rows = [
        (r.language, r.domain, r.source, f"{r.token_count:,}", f"{r.type_count:,}", f"{r.ttr:.4f}")
        for r in stats.rows + stats.totals
    ]
    widths = [max(len(header[i]), *(len(row[i]) for row in all_rows)) if all_rows else len(header[i]) for i in range(6)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines.append(fmt.format(*header))
    lines.append("  ".join("-" * w for w in widths))
    for row in all_rows[: len(stats.rows)]:
        lines.append(fmt.format(*row))
    lines.append("  ".join("-" * w for w in widths))
    for row in all_rows[len(stats.rows) :]:
        lines.append(fmt.format(*row))
    return "\n".join(lines) + "\n"


def render_domain_grid(stats: CorpusStats) -> str:
    """Language x domain token-count grid with per-language totals."""
    languages = sorted({r.language for r in stats.rows})
    domains = sorted({r.domain for r in stats.rows})
    grid: dict[tuple[str, str], int] = {}
    for r in stats.rows:
        grid[(r.language, r.domain)] = grid.get((r.language, r.domain), 0) + r.token_count
    width = max([len(d) for d in domains] + [12])
    lines = ["domain".ljust(width) + "  " + "  ".join(f"{lang:>12}" for lang in languages)]
    lines.append("-" * width + "  " + "  ".join("-" * 12 for _ in languages))
    for domain in domains:
        cells = [
            f"{grid[(lang, domain)]:>12,}" if (lang, domain) in grid else f"{'-':>12}"
            for lang in languages
        ]
        lines.append(domain.ljust(width) + "  " + "  ".join(cells))
    lines.append("-" * width + "  " + "  ".join("-" * 12 for _ in languages))
    totals = [f"{stats.total(lang).token_count:>12,}" for lang in languages]
    lines.append("total".ljust(width) + "  " + "  ".join(totals))
    return "\n".join(lines) + "\n"


def stats_to_tsv(stats: CorpusStats) -> str:
    lines = ["language\tdomain\tsource\ttoken_count\ttype_count\tttr"]
    for r in stats.rows + stats.totals:
        lines.append(f"{r.language}\t{r.domain}\t{r.source}\t{r.token_count}\t{r.type_count}\t{r.ttr:.4f}")
    return "\n".join(lines) + "\n"


def _doc_to_record(doc: Document) -> str:
    payload = {
        "id": doc.id,
        "text": doc.text,
        "language": doc.language,
        "domain": doc.domain,
        "source": doc.source,
        "meta": doc.meta,
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def save(docs: list[Document], path: str | Path) -> None:
    """Write a line-delimited UTF-8 archive: header record, then one Document per line."""
    path = Path(path)
    header = json.dumps(
        {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION}, sort_keys=True, separators=(",", ":")
    )
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for doc in docs:
            fh.write(_doc_to_record(doc) + "\n")


def load(path: str | Path) -> list[Document]:
    """Inverse of :func:`save`; refuses version mismatches, names bad lines."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        raw = fh.read()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CorpusError(f"{path}: empty archive")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}:1: malformed header: {exc}") from exc
    if header.get("format") != ARCHIVE_FORMAT:
        raise CorpusError(f"{path}: not a {ARCHIVE_FORMAT} archive")
    if header.get("version") != ARCHIVE_VERSION:
        raise CorpusError(
            f"{path}: archive version {header.get('version')} unsupported (expected {ARCHIVE_VERSION})"
        )
    docs = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            docs.append(
                Document(
                    id=obj["id"],
                    text=obj["text"],
                    language=obj["language"],
                    domain=obj["domain"],
                    source=obj["source"],
                    meta=obj.get("meta", {}),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: malformed document line: {exc}") from exc
    return docs
