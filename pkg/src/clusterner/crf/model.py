"""Linear-chain CRF model, L2-regularized maximum-likelihood training and decoding."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from ..corpus import ENTITY_TYPES, LabeledCorpus, Sentence, parse_label
from ..errors import DataError, NumericalError
from . import inference
from .features import FeatureConfig, sentence_features

logger = logging.getLogger(__name__)

MODEL_MAGIC = "#clusterner-crf"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    l2_sigma: float = 1.0
    max_iterations: int = 200
    tolerance: float = 1e-5
    history: int = 10
    seed: int = 1
    transition_mask: bool = True

    def __post_init__(self):
        if self.l2_sigma <= 0:
            raise ValueError("l2_sigma must be > 0")

    @classmethod
    def from_items(cls, items: Mapping[str, str]) -> "TrainConfig":
        conv = {"l2_sigma": float, "tolerance": float, "max_iterations": int,
                "history": int, "seed": int,
                "transition_mask": lambda v: str(v).lower() in ("1", "true", "yes", "on")}
        kwargs = {}
        for k, v in items.items():
            if k not in conv:
                raise ValueError(f"unknown training option {k!r}")
            kwargs[k] = conv[k](v)
        return cls(**kwargs)


def make_labels(types) -> List[str]:
    labels = ["O"]
    for t in ENTITY_TYPES:
        if t in types:
            labels += [f"B-{t}", f"I-{t}"]
    return labels


def transition_mask(labels: Sequence[str]):
    """Additive masks (0 or -inf) ruling out I-X after O, after another type, or first."""
    L = len(labels)
    trans = np.zeros((L, L))
    start = np.zeros(L)
    parsed = [parse_label(lab) for lab in labels]
    for j, (pj, tj) in enumerate(parsed):
        if pj != "I":
            continue
        start[j] = -np.inf
        for i, (_, ti) in enumerate(parsed):
            if ti != tj:
                trans[i, j] = -np.inf
    return trans, start


@dataclass
class CRFModel:
    labels: List[str]
    attributes: List[str]
    emission: np.ndarray          # (n_attributes, n_labels)
    transition: np.ndarray        # (n_labels, n_labels), row = previous label
    start: np.ndarray             # (n_labels,)
    config: FeatureConfig = field(default_factory=FeatureConfig)
    l2_sigma: float = 1.0
    use_mask: bool = True
    clusterings: Dict[str, Dict[str, int]] = field(default_factory=dict)
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.labels or self.labels[0] != "O":
            raise DataError("label list must start with O")
        self.attr_index = {a: i for i, a in enumerate(self.attributes)}
        self.label_index = {lab: i for i, lab in enumerate(self.labels)}
        self._mask = transition_mask(self.labels) if self.use_mask else (
            np.zeros((len(self.labels),) * 2), np.zeros(len(self.labels)))
        if self.emission.shape != (len(self.attributes), len(self.labels)):
            raise DataError("emission weights do not match attributes x labels")

    @property
    def feature_index(self) -> Dict[str, int]:
        return self.attr_index

    @property
    def n_weights(self) -> int:
        L = len(self.labels)
        return self.emission.size + L * L + L

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([self.emission.ravel(), self.transition.ravel(), self.start])

    def set_weights(self, w: np.ndarray):
        A, L = self.emission.shape
        self.emission = w[:A * L].reshape(A, L).copy()
        self.transition = w[A * L:A * L + L * L].reshape(L, L).copy()
        self.start = w[A * L + L * L:].copy()

    def effective_transitions(self):
        mt, ms = self._mask
        return self.transition + mt, self.start + ms

    def attribute_ids(self, sentence) -> List[np.ndarray]:
        out = []
        for feats in sentence_features(sentence, self.config, self.clusterings):
            out.append(np.array([self.attr_index[f] for f in feats if f in self.attr_index],
                                dtype=np.int64))
        return out

    def emissions(self, sentence) -> np.ndarray:
        ids = self.attribute_ids(sentence)
        return np.stack([self.emission[i].sum(0) for i in ids])

    def labels_of(self, indices) -> List[str]:
        return [self.labels[i] for i in indices]


def log_partition(model: CRFModel, sentence) -> float:
    trans, start = model.effective_transitions()
    return inference.log_partition(model.emissions(sentence), trans, start)


def viterbi_decode(model: CRFModel, sentence) -> List[str]:
    if len(getattr(sentence, "tokens", sentence)) == 0:
        raise DataError("cannot decode an empty sentence")
    trans, start = model.effective_transitions()
    return model.labels_of(inference.viterbi(model.emissions(sentence), trans, start))


def tag_corpus(model: CRFModel, corpus: LabeledCorpus) -> List[List[str]]:
    return [viterbi_decode(model, s) for s in corpus.sentences]


class _Compiled:
    """A corpus turned into a sparse attribute matrix plus padded label arrays."""

    def __init__(self, model: CRFModel, sentences: Sequence[Sentence]):
        if not sentences:
            raise DataError("empty training corpus")
        L = len(model.labels)
        rows, cols, gold = [], [], []
        self.lengths = np.array([len(s) for s in sentences], dtype=np.int64)
        n = 0
        for s_idx, sent in enumerate(sentences):
            for pos, ids in enumerate(model.attribute_ids(sent)):
                rows.extend([n] * len(ids))
                cols.extend(ids.tolist())
                label = sent.tokens[pos].ne_label or "O"
                if label not in model.label_index:
                    raise DataError(f"sentence {s_idx}: label {label} not in model label set")
                gold.append(model.label_index[label])
                n += 1
        self.X = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                               shape=(n, len(model.attributes)))
        self.gold = np.array(gold, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)])
        S, T = len(sentences), int(self.lengths.max())
        self.pad_index = np.full((S, T), -1, dtype=np.int64)
        for s in range(S):
            self.pad_index[s, :self.lengths[s]] = np.arange(self.offsets[s], self.offsets[s + 1])
        self.valid = self.pad_index >= 0
        self.gold_onehot = np.zeros((n, L))
        self.gold_onehot[np.arange(n), self.gold] = 1.0
        self.gold_trans = np.zeros((L, L))
        self.gold_start = np.zeros(L)
        for s in range(S):
            seq = self.gold[self.offsets[s]:self.offsets[s + 1]]
            self.gold_start[seq[0]] += 1
            np.add.at(self.gold_trans, (seq[:-1], seq[1:]), 1.0)
        if model.use_mask:
            mt, ms = model._mask
            if np.isinf(mt[self.gold_trans > 0]).any() or np.isinf(ms[self.gold_start > 0]).any():
                raise DataError("gold labels contain transitions that are not valid BIO2")


def _objective(model: CRFModel, data: _Compiled, l2_sigma: Optional[float]):
    trans, start = model.effective_transitions()
    E = np.asarray(data.X @ model.emission)
    S, T = data.pad_index.shape
    padded = np.where(data.valid[:, :, None], E[np.maximum(data.pad_index, 0)], 0.0)
    log_z, node, edges = inference.batch_forward_backward(padded, data.lengths, trans, start)
    # gold paths are mask-valid (checked at compile time), so unmasked weights suffice
    gold_score = (np.sum(E * data.gold_onehot) + np.dot(data.gold_start, model.start)
                  + np.sum(data.gold_trans * model.transition))
    value = gold_score - log_z.sum()
    node_flat = node[data.valid]  # row-major over (sentence, position) = token order
    g_emit = np.asarray(data.X.T @ (data.gold_onehot - node_flat))
    g_trans = data.gold_trans - edges
    g_start = data.gold_start - node[:, 0].sum(0)
    grad = np.concatenate([g_emit.ravel(), g_trans.ravel(), g_start])
    if l2_sigma is not None:
        w = model.weights
        value -= np.dot(w, w) / (2 * l2_sigma ** 2)
        grad -= w / l2_sigma ** 2
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite objective or gradient")
    return float(value), grad


def objective_and_gradient(model: CRFModel, corpus, l2_sigma: Optional[float] = None):
    """Regularized conditional log-likelihood and its gradient at the model's weights.

    Pass ``l2_sigma=None`` for the unregularized likelihood.  The gradient
    is laid out like :attr:`CRFModel.weights`.
    """
    sentences = corpus.sentences if hasattr(corpus, "sentences") else list(corpus)
    return _objective(model, _Compiled(model, sentences), l2_sigma)


def build_model(corpus: LabeledCorpus, feature_config: FeatureConfig,
                clusterings: Optional[Mapping] = None, use_mask: bool = True,
                l2_sigma: float = 1.0) -> CRFModel:
    """Zero-weight model whose attribute index covers every attribute in ``corpus``."""
    clusterings = clusterings or {}
    lookups = {}
    for src in feature_config.cluster_sources:
        if src not in clusterings:
            raise DataError(f"unknown clustering {src!r}")
        lookups[src] = dict(getattr(clusterings[src], "assign", clusterings[src]))
    attrs = set()
    types = set(corpus.label_set)
    for sent in corpus.sentences:
        for feats in sentence_features(sent, feature_config, lookups):
            attrs.update(feats)
        for tok in sent.tokens:
            _, typ = parse_label(tok.ne_label or "O")
            if typ:
                types.add(typ)
    labels = make_labels(types)
    attributes = sorted(attrs)
    L = len(labels)
    return CRFModel(labels, attributes, np.zeros((len(attributes), L)), np.zeros((L, L)),
                    np.zeros(L), feature_config, l2_sigma, use_mask, lookups)


def train_crf(corpus: LabeledCorpus, feature_config: FeatureConfig = FeatureConfig(),
              train_config: TrainConfig = TrainConfig(),
              clusterings: Optional[Mapping] = None) -> CRFModel:
    """Fit weights by L-BFGS on the L2-penalized log-likelihood.

    ``corpus`` must already be in BIO2.  The attribute index is built from
    the training data only.
    """
    if not corpus.sentences:
        raise DataError("empty training corpus")
    model = build_model(corpus, feature_config, clusterings, train_config.transition_mask,
                        train_config.l2_sigma)
    data = _Compiled(model, corpus.sentences)
    trace = []

    def fun(w):
        model.set_weights(w)
        value, grad = _objective(model, data, train_config.l2_sigma)
        return -value, -grad

    def callback(intermediate_result):
        trace.append(-float(intermediate_result.fun))

    res = minimize(fun, np.zeros(model.n_weights), jac=True, method="L-BFGS-B",
                   callback=callback,
                   options={"maxcor": train_config.history,
                            "maxiter": train_config.max_iterations,
                            "ftol": train_config.tolerance, "gtol": 1e-10})
    if not np.all(np.isfinite(res.x)):
        raise NumericalError("optimizer returned non-finite weights")
    model.set_weights(res.x)
    model.meta = {"iterations": str(res.nit), "objective": repr(-float(res.fun)),
                  "converged": str(bool(res.success)).lower()}
    model.objective_trace = trace
    logger.info("CRF training: %d iterations, objective %.4f (%s)", res.nit, -res.fun,
                res.message)
    return model


def write_model(model: CRFModel, stream: TextIO):
    """Tab-separated model container; floats are written with ``repr`` so they round-trip."""
    w = stream.write
    w(f"{MODEL_MAGIC}\t{MODEL_VERSION}\n")
    for k, v in model.config.items():
        w(f"config\t{k}\t{v}\n")
    w(f"l2_sigma\t{model.l2_sigma!r}\n")
    w(f"mask\t{'true' if model.use_mask else 'false'}\n")
    for k in sorted(model.meta):
        w(f"meta\t{k}\t{model.meta[k]}\n")
    for lab in model.labels:
        w(f"label\t{lab}\n")
    for j, lab in enumerate(model.labels):
        w(f"start\t{lab}\t{float(model.start[j])!r}\n")
    for i, a in enumerate(model.labels):
        for j, b in enumerate(model.labels):
            w(f"trans\t{a}\t{b}\t{float(model.transition[i, j])!r}\n")
    for k, attr in enumerate(model.attributes):
        w("attr\t" + attr + "\t" + "\t".join(repr(float(x)) for x in model.emission[k]) + "\n")
    for src in sorted(model.clusterings):
        lookup = model.clusterings[src]
        for word in sorted(lookup):
            w(f"cluster\t{src}\t{word}\t{lookup[word]}\n")


def read_model(stream) -> CRFModel:
    stream = iter(stream)
    header = next(stream, "").rstrip("\n").split("\t")
    if header[0] != MODEL_MAGIC or len(header) < 2:
        raise DataError("not a model file")
    if int(header[1]) != MODEL_VERSION:
        raise DataError(f"unsupported model version {header[1]}")
    config, meta, labels = {}, {}, []
    start, trans = {}, {}
    attributes, rows = [], []
    clusterings: Dict[str, Dict[str, int]] = {}
    sigma, mask = 1.0, True
    for line in stream:
        parts = line.rstrip("\n").split("\t")
        kind = parts[0]
        if kind == "config":
            config[parts[1]] = parts[2]
        elif kind == "l2_sigma":
            sigma = float(parts[1])
        elif kind == "mask":
            mask = parts[1] == "true"
        elif kind == "meta":
            meta[parts[1]] = parts[2]
        elif kind == "label":
            labels.append(parts[1])
        elif kind == "start":
            start[parts[1]] = float(parts[2])
        elif kind == "trans":
            trans[parts[1], parts[2]] = float(parts[3])
        elif kind == "attr":
            attributes.append(parts[1])
            rows.append([float(x) for x in parts[2:]])
        elif kind == "cluster":
            clusterings.setdefault(parts[1], {})[parts[2]] = int(parts[3])
        elif kind:
            raise DataError(f"unknown model record {kind!r}")
    L = len(labels)
    emission = np.array(rows, dtype=np.float64).reshape(len(attributes), L)
    transition = np.array([[trans[a, b] for b in labels] for a in labels]).reshape(L, L)
    start_arr = np.array([start[lab] for lab in labels])
    return CRFModel(labels, attributes, emission, transition, start_arr,
                    FeatureConfig.from_items(config), sigma, mask, clusterings, meta)


def save_model(model: CRFModel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        write_model(model, f)


def load_model(path) -> CRFModel:
    with open(path, encoding="utf-8") as f:
        return read_model(f)
