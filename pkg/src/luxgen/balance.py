"""Balanced multilingual corpus construction.

Every auxiliary language is allocated, per domain, a token budget equal to
the reference language's token count in that domain. Where an auxiliary
language cannot fill a budget the shortfall is recorded as a deficit rather
than treated as an error; the reference language itself is always taken in
full.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .corpus import CorpusStats, Document, tokenize
from .seeding import derive_seed, make_rng


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    language: str
    domain: str
    source: str
    take_tokens: int
    available_tokens: int


@dataclass(frozen=True)
class Deficit:
    language: str
    domain: str
    shortfall: int


@dataclass
class BalancePlan:
    reference_language: str
    targets: dict[str, int]
    allocations: list[Allocation]
    deficits: list[Deficit]
    tolerance: float = 0.05
    domain_map: dict[str, str] = field(default_factory=dict)


def _mapped(domain: str, domain_map: dict[str, str] | None) -> str:
    if domain_map and domain in domain_map:
        return domain_map[domain]
    return domain


def reference_targets(
    stats: CorpusStats, ref: str, domain_map: dict[str, str] | None = None
) -> dict[str, int]:
    """Per-domain token budgets: the reference language's own token counts.

    ``domain_map`` optionally folds fine-grained domains into budget domains
    (e.g. comments counted as web) before grouping.
    """
    targets: dict[str, int] = defaultdict(int)
    seen = False
    for row in stats.rows:
        if row.language == ref:
            targets[_mapped(row.domain, domain_map)] += row.token_count
            seen = True
    if not seen:
        raise BalanceError(f"no stats rows for reference language {ref!r}")
    return dict(targets)


def plan(
    stats: CorpusStats,
    targets: dict[str, int],
    tolerance: float = 0.05,
    reference_language: str | None = None,
    domain_map: dict[str, str] | None = None,
) -> BalancePlan:
    """Allocate min(target, available) tokens per (language, domain).

    Within a domain, a language's sources are drawn proportionally to their
    availability (largest-remainder rounding, deterministic ties by source
    name). A deficit is recorded when available < target * (1 - tolerance).
    The reference language, when named, is allocated in full.
    """
    if not 0 <= tolerance < 1:
        raise BalanceError(f"tolerance must be in [0, 1), got {tolerance}")
    # (language, mapped domain) -> [(source, available_tokens)]
    cells: dict[tuple[str, str], list[tuple[str, int]]] = defaultdict(list)
    languages = []
    for row in stats.rows:
        cells[(row.language, _mapped(row.domain, domain_map))].append((row.source, row.token_count))
        if row.language not in languages:
            languages.append(row.language)

    allocations: list[Allocation] = []
    deficits: list[Deficit] = []
    for language in sorted(languages):
        if language == reference_language:
            for (lang, domain), sources in sorted(cells.items()):
                if lang != language:
                    continue
                for source, avail in sorted(sources):
                    allocations.append(Allocation(language, domain, source, avail, avail))
            continue
        for domain, target in sorted(targets.items()):
            sources = sorted(cells.get((language, domain), []))
            available = sum(avail for _, avail in sources)
            take = min(target, available)
            if available < target * (1 - tolerance):
                deficits.append(Deficit(language, domain, target - available))
            allocations.extend(_split_take(language, domain, sources, take))
        # domains the reference never saw get no budget, so nothing is taken
    return BalancePlan(
        reference_language=reference_language or "",
        targets=dict(targets),
        allocations=allocations,
        deficits=deficits,
        tolerance=tolerance,
        domain_map=dict(domain_map or {}),
    )


def _split_take(
    language: str, domain: str, sources: list[tuple[str, int]], take: int
) -> list[Allocation]:
    """Largest-remainder split of `take` across sources, proportional to availability."""
    if not sources or take == 0:
        return [Allocation(language, domain, s, 0, a) for s, a in sources]
    total = sum(a for _, a in sources)
    shares = [take * a / total for _, a in sources]
    floors = [int(s) for s in shares]
    remainder = take - sum(floors)
    order = sorted(
        range(len(sources)),
        key=lambda i: (-(shares[i] - floors[i]), sources[i][0]),
    )
    for i in order:
        if remainder == 0:
            break
        if floors[i] < sources[i][1]:
            floors[i] += 1
            remainder -= 1
    return [
        Allocation(language, domain, source, floors[i], avail)
        for i, (source, avail) in enumerate(sources)
    ]


def execute(plan_: BalancePlan, docs: list[Document], seed: int) -> list[Document]:
    """Draw documents per allocation cell in a seeded random order.

    Candidates are keyed by id order before shuffling, so the selected id set
    does not depend on store insertion order. Documents are drawn until the
    cell's token budget is met; the document that crosses the budget is kept
    whole rather than truncated.
    """
    by_cell: dict[tuple[str, str, str], list[Document]] = defaultdict(list)
    for doc in docs:
        by_cell[(doc.language, doc.domain, doc.source)].append(doc)
    # Allocations may address mapped domains; fall back to raw-domain grouping.
    by_mapped: dict[tuple[str, str, str], list[Document]] = defaultdict(list)
    for doc in docs:
        mapped = _mapped(doc.domain, plan_.domain_map)
        by_mapped[(doc.language, mapped, doc.source)].append(doc)

    selected: list[Document] = []
    for alloc in plan_.allocations:
        key = (alloc.language, alloc.domain, alloc.source)
        candidates = by_cell.get(key) or by_mapped.get(key)
        if candidates is None:
            if alloc.take_tokens == 0:
                continue
            raise BalanceError(
                f"store has no documents for ({alloc.language}, {alloc.domain}, {alloc.source})"
            )
        if alloc.take_tokens == 0:
            continue
        ordered = sorted(candidates, key=lambda d: d.id)
        rng = make_rng(derive_seed(seed, f"balance/{alloc.language}/{alloc.domain}/{alloc.source}"))
        perm = rng.permutation(len(ordered))
        taken = 0
        for idx in perm:
            if taken >= alloc.take_tokens:
                break
            doc = ordered[idx]
            selected.append(doc)
            taken += len(tokenize(doc.text))
    return selected


def render_plan(plan_: BalancePlan) -> str:
    """Human-readable language x domain table: target / taken / available / deficit."""
    per_cell: dict[tuple[str, str], tuple[int, int]] = defaultdict(lambda: (0, 0))
    for a in plan_.allocations:
        take, avail = per_cell[(a.language, a.domain)]
        per_cell[(a.language, a.domain)] = (take + a.take_tokens, avail + a.available_tokens)
    deficits = {(d.language, d.domain): d.shortfall for d in plan_.deficits}
    languages = sorted({lang for lang, _ in per_cell})
    domains = sorted(set(plan_.targets) | {dom for _, dom in per_cell})
    lines = [
        f"reference language: {plan_.reference_language or '(none)'}   tolerance: {plan_.tolerance}",
        "",
        "language  domain      target        taken         available     deficit",
        "--------  ----------  ------------  ------------  ------------  ------------",
    ]
    for language in languages:
        for domain in domains:
            if (language, domain) not in per_cell and domain not in plan_.targets:
                continue
            take, avail = per_cell.get((language, domain), (0, 0))
            target = plan_.targets.get(domain, 0)
            if language == plan_.reference_language:
                target = take
            shortfall = deficits.get((language, domain), 0)
            lines.append(
                f"{language:<8}  {domain:<10}  {target:>12,}  {take:>12,}  {avail:>12,}  "
                + (f"{shortfall:>12,}" if shortfall else f"{'-':>12}")
            )
    return "\n".join(lines) + "\n"


def plan_to_tsv(plan_: BalancePlan) -> str:
    lines = ["language\tdomain\tsource\ttake_tokens\tavailable_tokens"]
    for a in plan_.allocations:
        lines.append(f"{a.language}\t{a.domain}\t{a.source}\t{a.take_tokens}\t{a.available_tokens}")
    for d in plan_.deficits:
        lines.append(f"{d.language}\t{d.domain}\t-\tDEFICIT\t{d.shortfall}")
    return "\n".join(lines) + "\n"
