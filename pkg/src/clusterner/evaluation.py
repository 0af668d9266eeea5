"""Phrase-level scoring, paired significance tests and OOV coverage.

Scoring follows conlleval: an entity counts only if its type and both
boundaries match exactly, and an ``I-X`` that does not continue an ``X``
span opens a new one.
"""

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Set, TextIO, Tuple

from .corpus import ENTITY_TYPES, LabeledCorpus, parse_label
from .errors import DataError


class EntitySpan(NamedTuple):
    type: str
    start: int
    end: int              # inclusive
    sentence: int = 0


def extract_entities(labels: Sequence[str], sentence: int = 0) -> Set[EntitySpan]:
    spans = set()
    cur = None
    for i, label in enumerate(list(labels) + ["O"]):
        prefix, typ = parse_label(label)
        if cur is not None and (prefix != "I" or typ != cur[0]):
            spans.add(EntitySpan(cur[0], cur[1], i - 1, sentence))
            cur = None
        if prefix == "B" or (prefix == "I" and cur is None):
            cur = (typ, i)
    return spans


def spans_to_labels(spans, length: int) -> List[str]:
    labels = ["O"] * length
    for sp in spans:
        labels[sp.start] = "B-" + sp.type
        for k in range(sp.start + 1, sp.end + 1):
            labels[k] = "I-" + sp.type
    return labels


@dataclass
class CategoryScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalReport:
    per_category: Dict[str, CategoryScore] = field(default_factory=dict)

    @property
    def overall(self) -> CategoryScore:
        total = CategoryScore()
        for c in self.per_category.values():
            total.tp += c.tp
            total.fp += c.fp
            total.fn += c.fn
        return total

    @property
    def f1(self) -> float:
        return self.overall.f1


def _gold_labels(gold) -> List[List[str]]:
    if isinstance(gold, LabeledCorpus):
        return [[t.ne_label or "O" for t in s.tokens] for s in gold.sentences]
    return [list(s) for s in gold]


def _check_shape(gold, pred):
    if len(gold) != len(pred):
        raise DataError(f"{len(pred)} predicted sentences for {len(gold)} gold sentences")
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise DataError(f"sentence {i}: {len(p)} predicted labels for {len(g)} tokens")


def score(gold, predicted: Sequence[Sequence[str]]) -> EvalReport:
    """Exact-match precision/recall/F1 per entity type and micro-averaged overall."""
    gold = _gold_labels(gold)
    _check_shape(gold, predicted)
    report = EvalReport()
    for i, (g, p) in enumerate(zip(gold, predicted)):
        gs, ps = extract_entities(g, i), extract_entities(p, i)
        for sp in gs | ps:
            cat = report.per_category.setdefault(sp.type, CategoryScore())
            if sp in gs and sp in ps:
                cat.tp += 1
            elif sp in ps:
                cat.fp += 1
            else:
                cat.fn += 1
    report.per_category = dict(sorted(report.per_category.items()))
    return report


@dataclass
class McNemarResult:
    b: int
    c: int
    p_value: float
    unit: str = "token"

    @property
    def significant_01(self) -> bool:
        return self.p_value < 0.01

    @property
    def significant_05(self) -> bool:
        return self.p_value < 0.05

    @property
    def stars(self) -> str:
        return "**" if self.significant_01 else "*" if self.significant_05 else ""


def mcnemar_exact_p(b: int, c: int) -> float:
    """Two-sided exact binomial p-value for discordant counts ``b`` and ``c``."""
    n = b + c
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, k) for k in range(min(b, c) + 1))
    return float(min(Fraction(1), Fraction(2 * tail, 2 ** n)))


def discordant_counts(gold, predictions_a, predictions_b, unit: str = "token") -> Tuple[int, int]:
    gold = _gold_labels(gold)
    _check_shape(gold, predictions_a)
    _check_shape(gold, predictions_b)
    b = c = 0
    if unit == "token":
        for g, pa, pb in zip(gold, predictions_a, predictions_b):
            for x, y, z in zip(g, pa, pb):
                ok_a, ok_b = x == y, x == z
                b += ok_a and not ok_b
                c += ok_b and not ok_a
    elif unit == "entity":
        for i, (g, pa, pb) in enumerate(zip(gold, predictions_a, predictions_b)):
            ea, eb = extract_entities(pa, i), extract_entities(pb, i)
            for sp in extract_entities(g, i):
                b += sp in ea and sp not in eb
                c += sp in eb and sp not in ea
    else:
        raise ValueError(f"unknown McNemar unit {unit!r}")
    return b, c


def mcnemar(gold, predictions_a, predictions_b, unit: str = "token") -> McNemarResult:
    """Paired test of system A against system B on the same gold data.

    ``b`` counts items A gets right and B wrong, ``c`` the reverse.  Items
    are tokens (label correctness) or gold entities (exact recovery).
    """
    b, c = discordant_counts(gold, predictions_a, predictions_b, unit)
    return McNemarResult(b, c, mcnemar_exact_p(b, c), unit)


def delta_report(baseline: EvalReport, system: EvalReport) -> Dict[str, float]:
    """Per-type F1 improvement in points (x100)."""
    types = sorted(set(baseline.per_category) | set(system.per_category))
    empty = CategoryScore()
    return {t: 100.0 * (system.per_category.get(t, empty).f1
                        - baseline.per_category.get(t, empty).f1) for t in types}


class OOVEntry(NamedTuple):
    word: str
    test_frequency: int
    covered_by: Tuple[str, ...]


def oov_report(train: LabeledCorpus, test: LabeledCorpus,
               clusterings: Mapping[str, Mapping[str, int]]) -> List[OOVEntry]:
    """Test words unseen in training but present in at least one clustering.

    Ranked by test frequency (descending), then by word.
    """
    seen = {t.surface for s in train.sentences for t in s.tokens}
    freq = Counter(t.surface for s in test.sentences for t in s.tokens if t.surface not in seen)
    out = []
    for word, n in freq.items():
        cover = tuple(sorted(cid for cid, cl in clusterings.items() if word in cl))
        if cover:
            out.append(OOVEntry(word, n, cover))
    out.sort(key=lambda e: (-e.test_frequency, e.word))
    return out


def _pct(x):
    return f"{100 * x:.2f}"


def write_report(report: EvalReport, stream: TextIO, baseline: Optional[EvalReport] = None,
                 mcnemar_result: Optional[McNemarResult] = None):
    """Rows are entity types plus ``overall``; columns P, R, F1 and optionally dF1."""
    deltas = delta_report(baseline, report) if baseline is not None else None
    head = ["category", "P", "R", "F1", "tp", "fp", "fn"]
    if deltas is not None:
        head.append("dF1")
    stream.write("\t".join(head) + "\n")
    rows = list(report.per_category.items())
    if baseline is not None:
        for t in baseline.per_category:
            if t not in report.per_category:
                rows.append((t, CategoryScore()))
        rows.sort()
    rows.append(("overall", report.overall))
    for name, cat in rows:
        cells = [name, _pct(cat.precision), _pct(cat.recall), _pct(cat.f1),
                 str(cat.tp), str(cat.fp), str(cat.fn)]
        if deltas is not None:
            if name == "overall":
                d = 100 * (report.f1 - baseline.f1)
            else:
                d = deltas[name]
            cells.append(f"{d:.1f}")
        stream.write("\t".join(cells) + "\n")
    if mcnemar_result is not None:
        r = mcnemar_result
        stream.write(f"#mcnemar\tunit={r.unit}\tb={r.b}\tc={r.c}\tp={r.p_value:.6g}\n")


def write_oov(entries: Sequence[OOVEntry], stream: TextIO):
    stream.write("word\ttest_frequency\tclusterings\n")
    for e in entries:
        stream.write(f"{e.word}\t{e.test_frequency}\t{','.join(e.covered_by)}\n")
