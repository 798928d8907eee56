"""Candidate generation by hashing records to their non-stop title words."""
from __future__ import annotations

import csv
import logging
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .features import RawRecord, title_tokens

log = logging.getLogger(__name__)

STOPWORDS = frozenset("""
a an the and or but nor so yet for of in on at to from by with about as into like
through after over between out against during without before under around among
is are was were be been it its this that these those his her their our your my
de la le les el los das der die und i ii
""".split())


def block_keys(r: RawRecord, stopwords=STOPWORDS) -> frozenset[str]:
    return title_tokens(r) - frozenset(stopwords)


def frequent_title_tokens(records: Iterable[RawRecord], threshold: float = 0.05,
                          min_records: int = 100) -> set[str]:
    """Tokens found in more than ``threshold`` of one source's titles.

    Sources with fewer than ``min_records`` records are skipped; on tiny
    sources every token is "frequent".
    """
    by_source = defaultdict(list)
    for r in records:
        by_source[r.source].append(r)
    out = set()
    for recs in by_source.values():
        if len(recs) < min_records:
            continue
        counts = defaultdict(int)
        for r in recs:
            for t in title_tokens(r):
                counts[t] += 1
        out.update(t for t, c in counts.items() if c > threshold * len(recs))
    return out


@dataclass
class BlockIndex:
    blocks: dict[str, list[tuple[str, str]]]
    stopwords: frozenset[str]
    unblockable: int = 0
    skipped_blocks: list[str] = field(default_factory=list)

    @classmethod
    def build(cls, records: Iterable[RawRecord], stopwords=STOPWORDS) -> "BlockIndex":
        stop = frozenset(stopwords)
        blocks = defaultdict(list)
        unblockable = 0
        for r in records:
            keys = block_keys(r, stop)
            if not keys:
                unblockable += 1
            for k in keys:
                blocks[k].append((r.source, r.id))
        return cls(dict(blocks), stop, unblockable)


@dataclass(frozen=True, order=True)
class CandidatePair:
    source_a: str
    id_a: str
    source_b: str
    id_b: str


@dataclass
class BlockingStats:
    records: int = 0
    blocks: int = 0
    candidates: int = 0
    cross_product: int = 0
    unblockable: int = 0
    skipped_blocks: int = 0

    @property
    def reduction_ratio(self) -> float:
        if self.cross_product == 0:
            return 0.0
        return 1.0 - self.candidates / self.cross_product

    def report(self) -> str:
        return (f"blocks={self.blocks} candidates={self.candidates} "
                f"reduction_ratio={self.reduction_ratio:.6f} unblockable={self.unblockable} "
                f"skipped_blocks={self.skipped_blocks}")


def generate_candidates(records_by_source: Mapping[str, Iterable[RawRecord]], stopwords=None,
                        max_block_size: int = 1000, frequent_threshold: float | None = 0.05):
    """Cross-source pairs sharing at least one block key, sorted and deduplicated.

    ``stopwords`` defaults to the bundled list plus tokens frequent within a
    source (see ``frequent_title_tokens``). Blocks larger than
    ``max_block_size`` are skipped. Returns ``(pairs, stats)``.
    """
    if len(records_by_source) < 2:
        raise ValueError("blocking needs at least two sources")
    records_by_source = {s: list(v) for s, v in records_by_source.items()}
    records = [r for src in sorted(records_by_source) for r in records_by_source[src]]
    stop = set(STOPWORDS if stopwords is None else stopwords)
    if stopwords is None and frequent_threshold is not None:
        stop |= frequent_title_tokens(records, frequent_threshold)
    index = BlockIndex.build(records, stop)
    stats = BlockingStats(records=len(records), blocks=len(index.blocks),
                          unblockable=index.unblockable)
    sizes = [len(v) for v in records_by_source.values()]
    stats.cross_product = (sum(sizes) ** 2 - sum(s * s for s in sizes)) // 2

    found = set()
    for token in sorted(index.blocks):
        members = index.blocks[token]
        if len(members) > max_block_size:
            index.skipped_blocks.append(token)
            continue
        members = sorted(set(members))
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                (s1, i1), (s2, i2) = members[x], members[y]
                if s1 != s2:
                    found.add(CandidatePair(s1, i1, s2, i2))
    stats.skipped_blocks = len(index.skipped_blocks)
    pairs = sorted(found)
    stats.candidates = len(pairs)
    return pairs, stats


def write_candidates(pairs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_a", "id_a", "source_b", "id_b"])
        for p in pairs:
            w.writerow([p.source_a, p.id_a, p.source_b, p.id_b])


def print_stats(stats: BlockingStats, stream=None) -> None:
    print(stats.report(), file=stream or sys.stderr)
