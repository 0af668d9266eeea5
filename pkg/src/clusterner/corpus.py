"""CoNLL-style labeled data, plain-text corpora and vocabulary statistics.

Labels are kept in BIO2 internally. CoNLL-2003 ships IOB1, so readers keep
labels verbatim and :func:`normalize_tag_scheme` does the conversion on
request.
"""

import io
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple

from .errors import DataError, ParseError, TagSchemeError

ENTITY_TYPES = ("PER", "LOC", "ORG", "MISC")
DOCSTART = "-DOCSTART-"
BOUNDARY = "<s>"
UNKNOWN = "<unk>"

_LABEL_RE = re.compile(r"^(?:O|([BI])-(PER|LOC|ORG|MISC))$")


def parse_label(label: str) -> Tuple[str, Optional[str]]:
    """Split ``B-PER`` into ``("B", "PER")``; ``O`` gives ``("O", None)``."""
    m = _LABEL_RE.match(label)
    if m is None:
        raise DataError(f"unknown label {label!r}")
    if m.group(1) is None:
        return "O", None
    return m.group(1), m.group(2)


@dataclass(frozen=True)
class Token:
    surface: str
    pos: Optional[str] = None
    lemma: Optional[str] = None
    chunk: Optional[str] = None
    ne_label: Optional[str] = None

    def __post_init__(self):
        if not self.surface or any(c.isspace() for c in self.surface):
            raise DataError(f"bad token surface {self.surface!r}")


@dataclass
class Sentence:
    tokens: List[Token]

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> List[str]:
        return [t.surface for t in self.tokens]

    @property
    def labels(self) -> List[Optional[str]]:
        return [t.ne_label for t in self.tokens]


@dataclass(frozen=True)
class ColumnSpec:
    word_col: int = 0
    ne_col: int = 3
    pos_col: Optional[int] = None
    lemma_col: Optional[int] = None
    chunk_col: Optional[int] = None
    separator: str = " "

    def __post_init__(self):
        cols = [c for c in self.indices() if c is not None]
        if len(set(cols)) != len(cols):
            raise ValueError(f"column indices must be distinct: {cols}")
        if any(c < 0 for c in cols):
            raise ValueError("column indices must be non-negative")
        if self.separator not in (" ", "\t"):
            raise ValueError("separator must be a single space or a tab")

    def indices(self):
        return (self.word_col, self.ne_col, self.pos_col, self.lemma_col, self.chunk_col)

    @property
    def width(self) -> int:
        return max(c for c in self.indices() if c is not None) + 1

    @classmethod
    def parse(cls, text: str) -> "ColumnSpec":
        """Build from a preset name or ``word=0,pos=1,ne=3,sep=tab``."""
        if text in PRESETS:
            return PRESETS[text]
        kwargs = {}
        names = {"word": "word_col", "ne": "ne_col", "pos": "pos_col",
                 "lemma": "lemma_col", "chunk": "chunk_col"}
        for part in text.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key in ("sep", "separator"):
                kwargs["separator"] = "\t" if value.strip() in ("tab", "\\t") else " "
            elif key in names:
                kwargs[names[key]] = int(value)
            else:
                raise ValueError(f"unknown column key {key!r}")
        return cls(**kwargs)


PRESETS = {
    "conll2003": ColumnSpec(word_col=0, pos_col=1, chunk_col=2, ne_col=3),
    "conll2002-es": ColumnSpec(word_col=0, ne_col=1),
    "conll2002-nl": ColumnSpec(word_col=0, pos_col=1, ne_col=2),
    "word-ne": ColumnSpec(word_col=0, ne_col=1),
}


@dataclass
class LabeledCorpus:
    sentences: List[Sentence]
    label_set: frozenset = frozenset()
    column_spec: ColumnSpec = field(default_factory=ColumnSpec)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def _label_types(sentences) -> frozenset:
    types = set()
    for sent in sentences:
        for tok in sent.tokens:
            if tok.ne_label is not None:
                _, typ = parse_label(tok.ne_label)
                if typ is not None:
                    types.add(typ)
    return frozenset(types)


def _open_text(stream):
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(stream.decode("utf-8"))
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def read_conll(stream, column_spec: ColumnSpec = PRESETS["conll2003"]) -> LabeledCorpus:
    """Read a CoNLL file; labels are kept exactly as written.

    ``stream`` may be an open text file, any iterable of lines, or a string
    holding the whole file.  ``-DOCSTART-`` sentences are dropped.
    """
    stream = _open_text(stream)
    width = column_spec.width
    sep = column_spec.separator
    sentences = []
    current: List[Token] = []
    has_docstart = False

    def flush():
        nonlocal current, has_docstart
        if current and not has_docstart:
            sentences.append(Sentence(current))
        current = []
        has_docstart = False

    for line_no, line in enumerate(stream, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        cols = line.split("\t") if sep == "\t" else line.split()
        if cols[0] == DOCSTART:
            has_docstart = True
            continue
        if len(cols) < width:
            raise ParseError(f"expected at least {width} columns, got {len(cols)}", line_no)

        def col(i):
            return None if i is None else cols[i]

        try:
            tok = Token(surface=cols[column_spec.word_col],
                        pos=col(column_spec.pos_col),
                        lemma=col(column_spec.lemma_col),
                        chunk=col(column_spec.chunk_col),
                        ne_label=cols[column_spec.ne_col])
            parse_label(tok.ne_label)
        except DataError as e:
            raise ParseError(str(e), line_no) from None
        current.append(tok)
    flush()
    return LabeledCorpus(sentences, _label_types(sentences), column_spec)


def write_conll(corpus: LabeledCorpus, stream: TextIO, predictions=None,
                column_spec: Optional[ColumnSpec] = None):
    """Write ``corpus`` in CoNLL layout; unreferenced columns become ``_``.

    When ``predictions`` (one label list per sentence) is given, it is
    appended as a final column.
    """
    spec = column_spec or corpus.column_spec
    sep = spec.separator
    if predictions is not None and len(predictions) != len(corpus.sentences):
        raise DataError("predictions do not match corpus sentence count")
    for i, sent in enumerate(corpus.sentences):
        for j, tok in enumerate(sent.tokens):
            cols = ["_"] * spec.width
            cols[spec.word_col] = tok.surface
            cols[spec.ne_col] = tok.ne_label or "O"
            for idx, value in ((spec.pos_col, tok.pos), (spec.lemma_col, tok.lemma),
                               (spec.chunk_col, tok.chunk)):
                if idx is not None:
                    cols[idx] = value if value is not None else "_"
            if predictions is not None:
                cols.append(predictions[i][j])
            stream.write(sep.join(cols) + "\n")
        stream.write("\n")


def _spans_iob1(labels, sent_idx):
    spans = []
    prev_type = None
    for pos, label in enumerate(labels):
        prefix, typ = parse_label(label)
        if prefix == "O":
            prev_type = None
            continue
        if prefix == "B":
            if prev_type != typ:
                raise TagSchemeError(f"IOB1 {label} must follow a {typ} token", sent_idx, pos)
            spans.append([typ, pos, pos])
        elif prev_type == typ:
            spans[-1][2] = pos
        else:
            spans.append([typ, pos, pos])
        prev_type = typ
    return spans


def _spans_bio2(labels, sent_idx):
    spans = []
    prev_type = None
    for pos, label in enumerate(labels):
        prefix, typ = parse_label(label)
        if prefix == "O":
            prev_type = None
            continue
        if prefix == "B":
            spans.append([typ, pos, pos])
        elif prev_type == typ:
            spans[-1][2] = pos
        else:
            raise TagSchemeError(f"BIO2 {label} cannot follow "
                                 f"{labels[pos - 1] if pos else 'sentence start'}",
                                 sent_idx, pos)
        prev_type = typ
    return spans


def normalize_tag_scheme(corpus: LabeledCorpus, source_scheme: str = "BIO2") -> LabeledCorpus:
    """Return a copy of ``corpus`` with labels rewritten to BIO2."""
    scheme = source_scheme.upper()
    if scheme not in ("IOB1", "BIO2"):
        raise ValueError(f"unknown tag scheme {source_scheme!r}")
    to_spans = _spans_iob1 if scheme == "IOB1" else _spans_bio2
    out = []
    for s_idx, sent in enumerate(corpus.sentences):
        labels = [t.ne_label or "O" for t in sent.tokens]
        new = ["O"] * len(labels)
        for typ, start, end in to_spans(labels, s_idx):
            new[start] = "B-" + typ
            for k in range(start + 1, end + 1):
                new[k] = "I-" + typ
        out.append(Sentence([replace(t, ne_label=lab) for t, lab in zip(sent.tokens, new)]))
    return LabeledCorpus(out, corpus.label_set, corpus.column_spec)


def tokenize_plain(stream) -> Iterator[List[str]]:
    """Yield whitespace-split sentences, one per non-blank line.

    Binary streams are decoded as UTF-8 line by line so that a decoding
    failure can report its absolute byte offset.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    offset = 0
    for line in stream:
        if isinstance(line, bytes):
            try:
                text = line.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DataError(f"invalid UTF-8 at byte offset {offset + e.start}") from None
            offset += len(line)
        else:
            text = line
        words = text.split()
        if words:
            yield words


class NgramCounts:
    """Raw unigram and bigram counts over boundary-framed sentences.

    Counts from separate shards can be combined with ``+``; thresholding
    happens only when a :class:`Vocabulary` is built from the totals.
    """

    def __init__(self, boundary: Optional[str] = BOUNDARY):
        self.boundary = boundary
        self.unigrams: Counter = Counter()
        self.bigrams: Counter = Counter()
        self.n_sentences = 0

    def add_sentence(self, words: Sequence[str]):
        if not words:
            return
        self.unigrams.update(words)
        self.n_sentences += 1
        if self.boundary is not None:
            seq = [self.boundary, *words, self.boundary]
        else:
            seq = words
        self.bigrams.update(zip(seq, seq[1:]))

    def update(self, sentences: Iterable[Sequence[str]]) -> "NgramCounts":
        for words in sentences:
            self.add_sentence(words)
        return self

    def __add__(self, other: "NgramCounts") -> "NgramCounts":
        if self.boundary != other.boundary:
            raise ValueError("cannot add counts with different boundary symbols")
        out = NgramCounts(self.boundary)
        out.unigrams = self.unigrams + other.unigrams
        out.bigrams = self.bigrams + other.bigrams
        out.n_sentences = self.n_sentences + other.n_sentences
        return out

    def __eq__(self, other):
        return (isinstance(other, NgramCounts) and self.boundary == other.boundary
                and self.unigrams == other.unigrams and self.bigrams == other.bigrams
                and self.n_sentences == other.n_sentences)


@dataclass
class Vocabulary:
    """Thresholded word ids plus bigram counts over those ids.

    Ids are dense and ordered by descending count, ties by word.  The
    boundary symbol, if used, is an ordinary entry whose count is the
    number of sentences, so that every row and column sum of the bigram
    table equals the unigram count of its word.
    """

    words: Dict[str, Tuple[int, int]]
    bigrams: Dict[Tuple[int, int], int]
    unigram_total: int
    min_count: int = 1
    unk_id: Optional[int] = None
    boundary: Optional[str] = None

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.words

    @property
    def id_to_word(self) -> List[str]:
        out = [""] * len(self.words)
        for w, (i, _) in self.words.items():
            out[i] = w
        return out

    def count(self, word: str) -> int:
        return self.words[word][1]

    def lookup(self, word: str) -> int:
        if word in self.words:
            return self.words[word][0]
        if self.unk_id is None:
            raise KeyError(word)
        return self.unk_id

    @classmethod
    def from_counts(cls, counts: NgramCounts, min_count: int = 5) -> "Vocabulary":
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        if not counts.unigrams:
            raise DataError("no tokens")
        kept: Counter = Counter()
        unk = 0
        for w, c in counts.unigrams.items():
            if c >= min_count:
                kept[w] = c
            else:
                unk += c
        if unk:
            kept[UNKNOWN] += unk
        if counts.boundary is not None:
            kept[counts.boundary] += counts.n_sentences

        def mapped(w):
            if w == counts.boundary or counts.unigrams[w] >= min_count:
                return w
            return UNKNOWN

        bigram_words: Counter = Counter()
        for (a, b), c in counts.bigrams.items():
            bigram_words[mapped(a), mapped(b)] += c
        return cls.from_word_counts(kept, bigram_words, unigram_total=sum(counts.unigrams.values()),
                                    min_count=min_count, boundary=counts.boundary)

    @classmethod
    def from_word_counts(cls, word_counts, bigram_counts=None, unigram_total=None,
                         min_count=1, boundary=None) -> "Vocabulary":
        """Build directly from ``word -> count`` and ``(word, word) -> count`` maps."""
        order = sorted(word_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        words = {w: (i, c) for i, (w, c) in enumerate(order)}
        bigrams = {}
        for (a, b), c in (bigram_counts or {}).items():
            if c:
                key = (words[a][0], words[b][0])
                bigrams[key] = bigrams.get(key, 0) + c
        if unigram_total is None:
            unigram_total = sum(word_counts.values())
        unk_id = words[UNKNOWN][0] if UNKNOWN in words else None
        return cls(words, dict(sorted(bigrams.items())), unigram_total, min_count, unk_id, boundary)

    def dump(self, stream: TextIO):
        for w, (_, c) in sorted(self.words.items(), key=lambda kv: (-kv[1][1], kv[0])):
            stream.write(f"{w}\t{c}\n")


def build_vocabulary(sentences: Iterable[Sequence[str]], min_count: int = 5,
                     sentence_boundary_symbol: Optional[str] = BOUNDARY) -> Vocabulary:
    """Count a tokenized corpus and threshold it into a :class:`Vocabulary`.

    Rare words are replaced by ``<unk>`` before bigrams are counted.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = NgramCounts(sentence_boundary_symbol).update(sentences)
    return Vocabulary.from_counts(counts, min_count)


def read_corpus_file(path) -> List[List[str]]:
    with open(path, "rb") as f:
        return list(tokenize_plain(f))
