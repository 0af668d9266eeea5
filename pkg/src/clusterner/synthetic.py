"""Synthetic multilingual NER benchmark.

Languages share one gazetteer of person and location names spelled
identically everywhere, but have disjoint function words, trigger words and
MISC forms.  The labeled target data only covers half of the names, so a
tagger has to rely on unlabeled text (its own or a secondary language's) to
type the rest.

Layout written by :func:`write_benchmark`::

    train.conll  test.conll            word / NE label, BIO2
    tgt.txt  sec.txt  sec2.txt         one sentence per line
"""

import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

CONSONANTS = "bcdfghjklmnprstvwz"
TRIGGER_EXPONENT = 0.7
VOWELS = "aeiou"


@dataclass
class Lexicon:
    fillers: List[str]
    per_triggers: List[str]
    loc_triggers: List[str]
    neutral: List[str]
    misc: List[str]
    misc_nouns: List[str]


@dataclass
class Benchmark:
    train: List[List[Tuple[str, str]]]
    test: List[List[Tuple[str, str]]]
    unlabeled: Dict[str, List[List[str]]]
    per_names: List[str]
    loc_names: List[str]
    ambiguous: List[str]
    seen_names: List[str] = field(default_factory=list)


class _Words:
    def __init__(self, rng):
        self.rng = rng
        self.used = set()

    def make(self, n, syllables=(2, 3), capital=False):
        out = []
        while len(out) < n:
            k = self.rng.randint(*syllables)
            w = "".join(self.rng.choice(CONSONANTS) + self.rng.choice(VOWELS) for _ in range(k))
            if self.rng.random() < 0.3:
                w += self.rng.choice(CONSONANTS)
            if capital:
                w = w.capitalize()
            if w.lower() in self.used:
                continue
            self.used.add(w.lower())
            out.append(w)
        return out


def _lexicon(words: _Words) -> Lexicon:
    return Lexicon(fillers=words.make(12), per_triggers=words.make(16, (1, 2)),
                   loc_triggers=words.make(16, (1, 2)), neutral=words.make(4),
                   misc=words.make(20, (2, 3), capital=True), misc_nouns=words.make(3))


def _zipf(rng, names, exponent=1.0):
    """Name -> sampling weight, with popularity ranks shuffled per call."""
    order = list(names)
    rng.shuffle(order)
    return _ranked(order, exponent)


def _ranked(words, exponent=1.0):
    return {w: 1.0 / (r + 1) ** exponent for r, w in enumerate(words)}


def _pick(rng, weights):
    return rng.choices(list(weights), weights=list(weights.values()))[0]


def _phrase(rng, lex: Lexicon, kind, name, per_trig, loc_trig):
    """Tokens and labels for one entity mention plus its context."""
    if kind == "MISC":
        return [(rng.choice(lex.misc), "B-MISC"), (rng.choice(lex.misc_nouns), "O")]
    typ, how = kind
    if how == "strong":
        trig = _pick(rng, per_trig if typ == "PER" else loc_trig)
        return [(trig, "O"), (name, "B-" + typ)]
    return [(name, "B-" + typ), (rng.choice(lex.neutral), "O")]


def _sentence(rng, lex, names_by_type, ambiguous, per_trig, loc_trig, p_misc=0.15):
    toks = [(w, "O") for w in rng.sample(lex.fillers, rng.randint(0, 3))]
    for _ in range(1 if rng.random() < 0.7 else 2):
        if rng.random() < p_misc:
            toks += _phrase(rng, lex, "MISC", None, per_trig, loc_trig)
        else:
            typ = rng.choice(("PER", "LOC"))
            strong = rng.random() < 0.55
            pool = dict(names_by_type[typ])
            if strong:
                pool.update(ambiguous)
            name = _pick(rng, pool)
            toks += _phrase(rng, lex, (typ, "strong" if strong else "weak"), name,
                            per_trig, loc_trig)
        toks += [(w, "O") for w in rng.sample(lex.fillers, rng.randint(0, 2))]
    return toks


def make_benchmark(seed: int = 1, n_train: int = 500, n_test: int = 500,
                   n_secondary: int = 50000, n_target_unlabeled: int = 20000,
                   n_second_secondary: int = 20000, n_names: int = 200,
                   n_ambiguous: int = 20) -> Benchmark:
    rng = random.Random(seed)
    words = _Words(rng)
    n_each = (n_names - n_ambiguous) // 2
    per = words.make(n_each, capital=True)
    loc = words.make(n_each, capital=True)
    amb = words.make(n_ambiguous, capital=True)
    tgt, sec, sec2 = _lexicon(words), _lexicon(words), _lexicon(words)

    half = n_each // 2
    seen = {"PER": per[:half], "LOC": loc[:half]}
    unseen = {"PER": per[half:], "LOC": loc[half:]}
    allnames = {"PER": per, "LOC": loc}

    def weighted(names):
        return {t: _zipf(rng, ws) for t, ws in names.items()}

    def labeled(n, names, per_trig, loc_trig):
        names, amb_w = weighted(names), _zipf(rng, amb)
        return [_sentence(rng, tgt, names, amb_w, per_trig, loc_trig) for _ in range(n)]

    # trigger words have a long tail; the labeled data only ever shows its head
    n_head = len(tgt.per_triggers) // 2
    train = labeled(n_train, seen, _ranked(tgt.per_triggers[:n_head], TRIGGER_EXPONENT),
                    _ranked(tgt.loc_triggers[:n_head], TRIGGER_EXPONENT))
    test = []
    test_seen, test_unseen = weighted(seen), weighted(unseen)
    amb_w = _zipf(rng, amb)
    per_all = _ranked(tgt.per_triggers, TRIGGER_EXPONENT)
    loc_all = _ranked(tgt.loc_triggers, TRIGGER_EXPONENT)
    for _ in range(n_test):
        names = test_unseen if rng.random() < 0.5 else test_seen
        test.append(_sentence(rng, tgt, names, amb_w, per_all, loc_all))

    def unlabeled(n, lex, names):
        names, amb_w = weighted(names), _zipf(rng, amb)
        per_w = _ranked(lex.per_triggers, TRIGGER_EXPONENT)
        loc_w = _ranked(lex.loc_triggers, TRIGGER_EXPONENT)
        return [[w for w, _ in _sentence(rng, lex, names, amb_w, per_w, loc_w)]
                for _ in range(n)]

    sub = {t: [w for w in allnames[t] if rng.random() < 0.6] for t in allnames}
    corpora = {
        "tgt": unlabeled(n_target_unlabeled, tgt, seen),
        "sec": unlabeled(n_secondary, sec, allnames),
        "sec2": unlabeled(n_second_secondary, sec2, sub),
    }
    return Benchmark(train, test, corpora, per, loc, amb, seen["PER"] + seen["LOC"])


def _write_conll(path, sentences):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sent in sentences:
            for w, lab in sent:
                f.write(f"{w} {lab}\n")
            f.write("\n")


def write_benchmark(directory, seed: int = 1, **kwargs) -> Dict[str, str]:
    """Generate a benchmark and write it under ``directory``; returns the file paths."""
    bench = make_benchmark(seed, **kwargs)
    os.makedirs(directory, exist_ok=True)
    paths = {"train": os.path.join(directory, "train.conll"),
             "test": os.path.join(directory, "test.conll")}
    _write_conll(paths["train"], bench.train)
    _write_conll(paths["test"], bench.test)
    for lang, sents in bench.unlabeled.items():
        paths[lang] = os.path.join(directory, f"{lang}.txt")
        with open(paths[lang], "w", encoding="utf-8", newline="\n") as f:
            for s in sents:
                f.write(" ".join(s) + "\n")
    return paths
