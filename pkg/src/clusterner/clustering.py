"""Hard word clustering by the exchange algorithm.

The objective is the average mutual information (in bits) between the
cluster labels of adjacent tokens.  Words are moved one at a time to the
cluster that raises it most; a pass visits every word once in descending
frequency order.

For a class bigram table ``M`` with row sums ``l``, column sums ``r`` and
total ``N``::

    AMI = (sum h(M) - sum h(l) - sum h(r)) / (N ln 2) + log2 N,   h(x) = x ln x

so a move only touches the rows and columns of the two clusters involved,
which is what the incremental update exploits.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import xlogy

from .corpus import BOUNDARY, Vocabulary, build_vocabulary
from .errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_K = 400
DEFAULT_MIN_COUNT = 5
DEFAULT_MAX_PASSES = 20
SUFFIX_PREFIX = "\x00suffix:"


@dataclass
class Clustering:
    """Total map from words to cluster ids in ``[0, K)``.

    ``origin`` records the source language of words imported by a merge;
    native words are absent from it.
    """

    language: str
    K: int
    assign: Dict[str, int]
    word_count: Dict[str, int] = field(default_factory=dict)
    origin: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.K < 2:
            raise DataError(f"K must be >= 2, got {self.K}")
        for w, c in self.assign.items():
            if not 0 <= c < self.K:
                raise DataError(f"cluster id {c} of {w!r} outside [0, {self.K})")
        for w in self.assign:
            self.word_count.setdefault(w, 0)
        extra = set(self.word_count) - set(self.assign)
        if extra:
            raise DataError(f"counts given for unassigned words: {sorted(extra)[:5]}")

    def __len__(self):
        return len(self.assign)

    def __contains__(self, word):
        return word in self.assign

    def get(self, word, default=None):
        return self.assign.get(word, default)

    @property
    def members(self) -> Dict[int, set]:
        out = {c: set() for c in range(self.K)}
        for w, c in self.assign.items():
            out[c].add(w)
        return out

    def native_members(self) -> Dict[int, set]:
        out = {c: set() for c in range(self.K)}
        for w, c in self.assign.items():
            if w not in self.origin:
                out[c].add(w)
        return out

    def copy(self) -> "Clustering":
        return Clustering(self.language, self.K, dict(self.assign), dict(self.word_count),
                          dict(self.origin))

    def same_partition(self, other: "Clustering") -> bool:
        """True if both induce the same partition, ignoring cluster ids."""
        if set(self.assign) != set(other.assign):
            return False
        a = {frozenset(m) for m in self.members.values() if m}
        b = {frozenset(m) for m in other.members.values() if m}
        return a == b


@dataclass
class ClusterStats:
    cluster_bigram: np.ndarray
    left_marginal: np.ndarray
    right_marginal: np.ndarray
    total_bigrams: int

    @classmethod
    def from_table(cls, table: np.ndarray) -> "ClusterStats":
        table = np.asarray(table, dtype=np.int64)
        return cls(table, table.sum(1), table.sum(0), int(table.sum()))

    def copy(self) -> "ClusterStats":
        return ClusterStats(self.cluster_bigram.copy(), self.left_marginal.copy(),
                            self.right_marginal.copy(), self.total_bigrams)

    def __eq__(self, other):
        return (np.array_equal(self.cluster_bigram, other.cluster_bigram)
                and np.array_equal(self.left_marginal, other.left_marginal)
                and np.array_equal(self.right_marginal, other.right_marginal)
                and self.total_bigrams == other.total_bigrams)


def ami(stats: ClusterStats) -> float:
    """Average mutual information of adjacent cluster labels, in bits."""
    M = stats.cluster_bigram
    n = stats.total_bigrams
    if n <= 0:
        raise DataError("AMI needs at least one bigram")
    if (not np.array_equal(M.sum(1), stats.left_marginal)
            or not np.array_equal(M.sum(0), stats.right_marginal)
            or int(M.sum()) != n):
        raise DataError("cluster bigram table disagrees with its marginals")
    rows, cols = np.nonzero(M)
    joint = M[rows, cols].astype(np.float64)
    left = stats.left_marginal[rows].astype(np.float64)
    right = stats.right_marginal[cols].astype(np.float64)
    return float(np.sum(joint / n * np.log2(joint * n / (left * right))))


class BigramTable:
    """Word bigram counts as CSR (by first word) and CSC (by second word)."""

    def __init__(self, n_words: int, bigrams: Dict[Tuple[int, int], int]):
        self.n_words = n_words
        if bigrams:
            keys = np.array(list(bigrams.keys()), dtype=np.int64)
            vals = np.array(list(bigrams.values()), dtype=np.int64)
        else:
            keys = np.zeros((0, 2), dtype=np.int64)
            vals = np.zeros(0, dtype=np.int64)
        coo = sp.coo_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(n_words, n_words))
        self.csr = coo.tocsr()
        self.csc = coo.tocsc()
        self.csr.sort_indices()
        self.csc.sort_indices()
        self.row_sum = np.asarray(self.csr.sum(1)).ravel().astype(np.int64)
        self.col_sum = np.asarray(self.csr.sum(0)).ravel().astype(np.int64)
        self.diag = self.csr.diagonal().astype(np.int64)
        self.total = int(vals.sum())
        self.rows = keys[:, 0]
        self.cols = keys[:, 1]
        self.vals = vals

    @classmethod
    def from_vocabulary(cls, vocab: Vocabulary) -> "BigramTable":
        return cls(len(vocab), vocab.bigrams)

    def cluster_stats(self, assign: np.ndarray, K: int) -> ClusterStats:
        """Recount class bigram statistics from scratch."""
        flat = assign[self.rows] * K + assign[self.cols]
        table = np.bincount(flat, weights=self.vals, minlength=K * K)
        return ClusterStats.from_table(np.rint(table).astype(np.int64).reshape(K, K))


def _h(x):
    return xlogy(x, x)


class Exchanger:
    """Mutable state for exchange passes over one vocabulary.

    ``assign`` is indexed by vocabulary id; ``stats`` is kept in sync by
    integer updates after every move.
    """

    def __init__(self, table: BigramTable, assign: np.ndarray, K: int):
        if len(assign) != table.n_words:
            raise DataError("assignment does not cover the vocabulary")
        self.table = table
        self.assign = np.asarray(assign, dtype=np.int64).copy()
        self.K = K
        self.stats = table.cluster_stats(self.assign, K)
        # absolute slack in natural-log count units; deltas below it count as ties
        self.tol = 1e-10 * max(table.total, 1)

    def ami(self) -> float:
        return ami(self.stats)

    def _contexts(self, i):
        t = self.table
        lo, hi = t.csr.indptr[i], t.csr.indptr[i + 1]
        right = np.bincount(self.assign[t.csr.indices[lo:hi]], weights=t.csr.data[lo:hi],
                            minlength=self.K)
        lo, hi = t.csc.indptr[i], t.csc.indptr[i + 1]
        left = np.bincount(self.assign[t.csc.indices[lo:hi]], weights=t.csc.data[lo:hi],
                           minlength=self.K)
        return np.rint(right).astype(np.int64), np.rint(left).astype(np.int64)

    def _remove(self, i, a, r, l, s):
        st = self.stats
        st.cluster_bigram[a, :] -= r
        st.cluster_bigram[:, a] -= l
        st.cluster_bigram[a, a] += s
        st.left_marginal[a] -= self.table.row_sum[i]
        st.right_marginal[a] -= self.table.col_sum[i]

    def _add(self, i, b, r, l, s):
        # r and l exclude the self bigram here
        st = self.stats
        st.cluster_bigram[b, :] += r
        st.cluster_bigram[:, b] += l
        st.cluster_bigram[b, b] += s
        st.left_marginal[b] += self.table.row_sum[i]
        st.right_marginal[b] += self.table.col_sum[i]

    def _gains(self, i, r, l, s):
        """Objective gain (natural-log count units) of adding word ``i`` to each cluster.

        Must be called while the word is detached from every cluster.
        """
        st = self.stats
        M = st.cluster_bigram.astype(np.float64)
        diag = np.diag(M)
        rf = r.astype(np.float64)
        lf = l.astype(np.float64)
        nz_r = np.flatnonzero(r)
        nz_l = np.flatnonzero(l)
        sub = M[:, nz_r]
        row = (_h(sub + rf[nz_r]) - _h(sub)).sum(1)
        sub = M[nz_l, :]
        col = (_h(sub + lf[nz_l, None]) - _h(sub)).sum(0)
        hd = _h(diag)
        # the c == b cells were counted above with only one of r/l; replace them
        row -= _h(diag + rf) - hd
        col -= _h(diag + lf) - hd
        cell = _h(diag + rf + lf + s) - hd
        left = st.left_marginal.astype(np.float64)
        right = st.right_marginal.astype(np.float64)
        marg = (_h(left + self.table.row_sum[i]) - _h(left)
                + _h(right + self.table.col_sum[i]) - _h(right))
        return row + col + cell - marg

    def move_deltas(self, i) -> np.ndarray:
        """AMI change (bits) of moving word ``i`` to each cluster; 0 for its own."""
        a = int(self.assign[i])
        r, l = self._contexts(i)
        s = int(self.table.diag[i])
        self._remove(i, a, r, l, s)
        r[a] -= s
        l[a] -= s
        gains = self._gains(i, r, l, s)
        self._add(i, a, r, l, s)
        n = self.stats.total_bigrams
        return (gains - gains[a]) / (n * math.log(2))

    def move(self, i, b):
        """Move word ``i`` to cluster ``b`` unconditionally."""
        a = int(self.assign[i])
        if a == b:
            return
        r, l = self._contexts(i)
        s = int(self.table.diag[i])
        self._remove(i, a, r, l, s)
        r[a] -= s
        l[a] -= s
        self.assign[i] = b
        self._add(i, b, r, l, s)

    def run_pass(self, order: Optional[Iterable[int]] = None, check: bool = False) -> int:
        """Visit every word once; return the number of moves applied.

        With ``check`` set, asserts after each accepted move that the AMI
        of the incrementally updated statistics did not decrease.
        """
        if order is None:
            order = range(self.table.n_words)
        moves = 0
        before = self.ami() if check else None
        for i in order:
            a = int(self.assign[i])
            r, l = self._contexts(i)
            s = int(self.table.diag[i])
            if r.sum() + l.sum() == 0:
                continue
            self._remove(i, a, r, l, s)
            r[a] -= s
            l[a] -= s
            gains = self._gains(i, r, l, s)
            b = int(np.argmax(gains))
            if b != a and gains[b] - gains[a] > self.tol:
                self.assign[i] = b
                moves += 1
            else:
                b = a
            self._add(i, b, r, l, s)
            if check and b != a:
                after = self.ami()
                assert after >= before - 1e-12, (before, after)
                before = after
        return moves


def init_clustering(vocab: Vocabulary, K: int, seed: int = 1, language: str = "") -> Clustering:
    """Top K-1 words by frequency as singletons, everything else in cluster K-1.

    ``seed`` is accepted for interface stability; the scheme has no random
    component.
    """
    if K < 2:
        raise DataError(f"K must be >= 2, got {K}")
    if len(vocab) < K:
        raise DataError(f"vocabulary of {len(vocab)} words cannot fill {K} clusters")
    assign = {}
    counts = {}
    for w, (i, c) in vocab.words.items():
        assign[w] = min(i, K - 1)
        counts[w] = c
    return Clustering(language, K, assign, counts)


def _assign_array(clustering: Clustering, vocab: Vocabulary) -> np.ndarray:
    if set(clustering.assign) != set(vocab.words):
        raise DataError("clustering and vocabulary cover different words")
    out = np.empty(len(vocab), dtype=np.int64)
    for w, (i, _) in vocab.words.items():
        out[i] = clustering.assign[w]
    return out


def _to_clustering(assign: np.ndarray, vocab: Vocabulary, K: int, language: str,
                   skip=lambda w: False) -> Clustering:
    words = vocab.id_to_word
    return Clustering(language, K,
                      {w: int(assign[i]) for i, w in enumerate(words) if not skip(w)},
                      {w: vocab.words[w][1] for w in words if not skip(w)})


def exchange_pass(clustering: Clustering, vocab: Vocabulary) -> Tuple[Clustering, int]:
    """One exchange pass; returns the new clustering and the number of moves."""
    ex = Exchanger(BigramTable.from_vocabulary(vocab), _assign_array(clustering, vocab),
                   clustering.K)
    moves = ex.run_pass()
    return _to_clustering(ex.assign, vocab, clustering.K, clustering.language), moves


def add_suffix_contexts(vocab: Vocabulary, length: int = 3) -> Vocabulary:
    """Append one pseudo-word per word ending, seen once after every token of each word.

    Lets words with a shared ending pull towards the same cluster.  The
    pseudo-words are clustered too but never written out.
    """
    counts = {w: c for w, (_, c) in vocab.words.items()}
    words = vocab.id_to_word
    bigrams = {(words[a], words[b]): c for (a, b), c in vocab.bigrams.items()}
    for w, c in list(counts.items()):
        if w in (vocab.boundary,) or not c:
            continue
        key = SUFFIX_PREFIX + w[-length:]
        counts[key] = counts.get(key, 0) + c
        bigrams[w, key] = bigrams.get((w, key), 0) + c
    return Vocabulary.from_word_counts(counts, bigrams, vocab.unigram_total, vocab.min_count,
                                       vocab.boundary)


def train_clusters(sentences: Iterable[Sequence[str]], K: int = DEFAULT_K,
                   max_passes: int = DEFAULT_MAX_PASSES, seed: int = 1,
                   min_count: int = DEFAULT_MIN_COUNT, language: str = "",
                   suffix_length: int = 0, boundary: Optional[str] = BOUNDARY,
                   vocab: Optional[Vocabulary] = None) -> Clustering:
    """Vocabulary -> initialization -> exchange passes until no word moves."""
    if K < 2:
        raise DataError(f"K must be >= 2, got {K}")
    if vocab is None:
        vocab = build_vocabulary(sentences, min_count, boundary)
    if suffix_length:
        vocab = add_suffix_contexts(vocab, suffix_length)
    init = init_clustering(vocab, K, seed, language)
    ex = Exchanger(BigramTable.from_vocabulary(vocab), _assign_array(init, vocab), K)
    for p in range(max_passes):
        moves = ex.run_pass()
        logger.info("pass %d: %d moves, AMI %.6f bits", p + 1, moves, ex.ami())
        if moves == 0:
            break
    return _to_clustering(ex.assign, vocab, K, language,
                          skip=lambda w: w.startswith(SUFFIX_PREFIX))


def write_clusters(clustering: Clustering, stream: TextIO):
    stream.write(f"#K={clustering.K}\n")
    if clustering.language:
        stream.write(f"#lang={clustering.language}\n")
    rows = sorted(clustering.assign.items(),
                  key=lambda kv: (kv[1], -clustering.word_count.get(kv[0], 0), kv[0]))
    for w, c in rows:
        line = f"{c}\t{w}\t{clustering.word_count.get(w, 0)}"
        if w in clustering.origin:
            line += f"\t{clustering.origin[w]}"
        stream.write(line + "\n")


def read_clusters(stream, language: str = "") -> Clustering:
    """Parse a cluster file.  An optional fourth column marks imported words."""
    if isinstance(stream, str):
        stream = stream.splitlines(keepends=True)
    K = None
    assign, counts, origin = {}, {}, {}
    for line_no, line in enumerate(stream, 1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key == "K":
                K = int(value)
            elif key == "lang" and not language:
                language = value
            continue
        if K is None:
            raise DataError(f"line {line_no}: cluster file must start with a #K=<int> header")
        cols = line.split("\t")
        if len(cols) not in (3, 4):
            raise DataError(f"line {line_no}: expected cluster_id, word, count")
        cid, word, count = int(cols[0]), cols[1], int(cols[2])
        if word in assign:
            raise DataError(f"line {line_no}: duplicate word {word!r}")
        if not 0 <= cid < K:
            raise DataError(f"line {line_no}: cluster id {cid} not below K={K}")
        assign[word] = cid
        counts[word] = count
        if len(cols) == 4:
            origin[word] = cols[3]
    if K is None:
        raise DataError("cluster file has no #K header")
    return Clustering(language, K, assign, counts, origin)


def load_clusters(path, language: str = "") -> Clustering:
    with open(path, encoding="utf-8") as f:
        return read_clusters(f, language)


def save_clusters(clustering: Clustering, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        write_clusters(clustering, f)
