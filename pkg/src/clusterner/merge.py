"""Merge secondary-language clusterings into a target-language clustering.

Target words never move.  A secondary word missing from the target is
imported into the target cluster sharing the most word types with the
word's own secondary cluster.  Overlaps are always measured against the
target's native members, so imports never influence later imports.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

from .clustering import Clustering
from .errors import DataError


@dataclass
class MergeReport:
    # word -> (source language, source cluster, target cluster, overlap)
    imported: Dict[str, Tuple[str, int, int, int]] = field(default_factory=dict)
    skipped: Dict[str, str] = field(default_factory=dict)
    per_source_counts: Dict[str, int] = field(default_factory=dict)

    def write(self, stream: TextIO):
        for w in sorted(self.imported):
            lang, src, tgt, overlap = self.imported[w]
            stream.write(f"{w}\t{lang}\t{src}\t{tgt}\t{overlap}\n")


def _overlap(source_members: set, target_assign: Dict[str, int], native=None):
    hits = Counter()
    for w in source_members:
        c = target_assign.get(w)
        if c is not None and (native is None or w not in native):
            hits[c] += 1
    if not hits:
        return None
    best = max(hits.values())
    return min(c for c, n in hits.items() if n == best), best


def best_target_cluster(word: str, source: Clustering,
                        target: Clustering) -> Optional[Tuple[int, int]]:
    """Target cluster with the largest type overlap with ``word``'s source cluster.

    Returns ``(cluster_id, overlap)``, or None when nothing overlaps.  Ties
    go to the lowest cluster id.
    """
    if word not in source.assign:
        raise DataError(f"{word!r} is not in the {source.language or 'source'} clustering")
    cid = source.assign[word]
    members = {w for w, c in source.assign.items() if c == cid}
    return _overlap(members, target.assign, target.origin)


def merge_clusterings(target: Clustering,
                      sources: Sequence[Clustering]) -> Tuple[Clustering, MergeReport]:
    """Import source words into ``target``; sources are processed in order, first wins."""
    merged = target.copy()
    report = MergeReport()
    for k, source in enumerate(sources):
        lang = source.language or f"source{k + 1}"
        report.per_source_counts.setdefault(lang, 0)
        by_cluster: Dict[int, List[str]] = {}
        for w, c in source.assign.items():
            by_cluster.setdefault(c, []).append(w)
        choice = {c: _overlap(set(ws), target.assign, target.origin)
                  for c, ws in by_cluster.items()}
        for w in sorted(source.assign):
            if w in merged.assign:
                continue
            c = source.assign[w]
            best = choice[c]
            if best is None:
                report.skipped.setdefault(w, f"no overlap ({lang} cluster {c})")
                continue
            merged.assign[w] = best[0]
            merged.word_count[w] = source.word_count.get(w, 0)
            merged.origin[w] = lang
            report.imported[w] = (lang, c, best[0], best[1])
            report.per_source_counts[lang] += 1
            report.skipped.pop(w, None)
    return merged, report
