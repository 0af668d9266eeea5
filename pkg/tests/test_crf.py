import io
import math

import numpy as np
import pytest

from clusterner.clustering import Clustering
from clusterner.corpus import PRESETS, read_conll
from clusterner.crf import (FeatureConfig, TrainConfig, build_model, extract_features,
                            log_partition, objective_and_gradient, read_model, train_crf,
                            viterbi_decode, word_shape, write_model)
from clusterner.crf import inference
from clusterner.crf.model import make_labels, transition_mask
from clusterner.errors import DataError

from oracles import brute_log_z, brute_viterbi


def corpus(text):
    return read_conll(text, PRESETS["word-ne"])


TOY1 = "Obama B-PER\nspoke O\nin O\nBerlin B-LOC\n\nMerkel B-PER\nvisited O\nParis B-LOC\n\n"
TOY2 = "New B-LOC\nYork I-LOC\nis O\nbig O\n\nJohn B-PER\nSmith I-PER\nsaid O\n\nthe O\nEuro B-MISC\n\n"
TOY3 = "Anna B-PER\n\nRome B-LOC\nand O\nAnna B-PER\n\n"


def test_word_shape():
    assert word_shape("Obama") == "Xxxxx"
    assert word_shape("Schwarzenegger") == "Xxxxx*"
    assert word_shape("AB-12") == "XX-dd"
    assert word_shape("1999") == "dddd"
    assert word_shape("123456") == "dddd*"


def test_feature_templates():
    f = extract_features(["Obama", "spoke"], 0, FeatureConfig())
    assert f[0] == "BIAS"
    assert "SH:Xxxxx@0" in f and "W:<BOS>@-1" in f and "W:spoke@1" in f
    assert "P1:O" in f and "S3:ama" in f and "BG:<BOS>|Obama@-1" in f
    assert len(f) == len(set(f))


def test_cluster_features():
    cfg = FeatureConfig(cluster_sources=("de",), cluster_window=0)
    cl = Clustering("de", 400, {"Obama": 217})
    assert "CL:de:217@0" in extract_features(["Obama"], 0, cfg, {"de": cl})
    assert "CL:de:NOCLUSTER@0" in extract_features(["Zyx"], 0, cfg, {"de": cl})
    with pytest.raises(DataError):
        extract_features(["Obama"], 0, cfg, {})


def _random_problem(rng, T, L, masked=False):
    emit = rng.normal(size=(T, L)) * 2
    trans = rng.normal(size=(L, L))
    start = rng.normal(size=L)
    if masked:
        labels = make_labels(["PER", "LOC"])[:L]
        mt, ms = transition_mask(labels)
        trans, start = trans + mt, start + ms
    return emit, trans, start


def test_log_partition_uniform():
    for T, L in [(1, 2), (4, 3), (7, 5)]:
        z = inference.log_partition(np.zeros((T, L)), np.zeros((L, L)), np.zeros(L))
        assert z == pytest.approx(T * math.log(L), abs=1e-12)


def test_log_partition_and_viterbi_bruteforce():
    rng = np.random.default_rng(0)
    for trial in range(40):
        T, L = rng.integers(1, 6), rng.integers(2, 5)
        emit, trans, start = _random_problem(rng, T, L, masked=trial % 2 == 1)
        assert inference.log_partition(emit, trans, start) == \
            pytest.approx(brute_log_z(emit, trans, start), abs=1e-8)
        path, _ = brute_viterbi(emit, trans, start)
        assert inference.viterbi(emit, trans, start) == path


def test_emission_shift_moves_log_z_by_t_c():
    rng = np.random.default_rng(1)
    emit, trans, start = _random_problem(rng, 4, 3)
    c = 0.37
    shifted = inference.log_partition(emit + c, trans, start)
    assert shifted == pytest.approx(inference.log_partition(emit, trans, start) + 4 * c, abs=1e-10)
    assert shifted == pytest.approx(brute_log_z(emit + c, trans, start), abs=1e-10)


def test_viterbi_transition_shift_invariant():
    rng = np.random.default_rng(2)
    for _ in range(20):
        emit, trans, start = _random_problem(rng, 5, 3)
        assert inference.viterbi(emit, trans + 1.7, start) == inference.viterbi(emit, trans, start)


def test_zero_model_decodes_all_o():
    m = build_model(corpus(TOY1), FeatureConfig())
    assert viterbi_decode(m, ["Obama", "visited", "Rome"]) == ["O", "O", "O"]


def test_batch_forward_backward_matches_single():
    rng = np.random.default_rng(3)
    L = 3
    trans, start = rng.normal(size=(L, L)), rng.normal(size=L)
    lengths = [3, 1, 5]
    emit = np.zeros((3, 5, L))
    for s, n in enumerate(lengths):
        emit[s, :n] = rng.normal(size=(n, L))
    log_z, node, _ = inference.batch_forward_backward(emit, lengths, trans, start)
    for s, n in enumerate(lengths):
        assert log_z[s] == pytest.approx(inference.log_partition(emit[s, :n], trans, start))
        assert np.abs(node[s, :n].sum(1) - 1).max() <= 1e-10
        assert node[s, n:].sum() == 0


def test_zero_weight_gradient_by_hand():
    c = corpus("Obama B-PER\nspoke O\n\n")
    cfg = FeatureConfig(context_window=0, use_shape=False, use_prefix_suffix=False,
                        use_bigrams=False)
    m = build_model(c, cfg, use_mask=False)
    assert m.labels == ["O", "B-PER", "I-PER"]
    _, grad = objective_and_gradient(m, c)
    A, L = m.emission.shape
    g = grad[:A * L].reshape(A, L)
    # every position has uniform marginals 1/3
    gold = {0: "B-PER", 1: "O"}
    words = ["Obama", "spoke"]
    for a, attr in enumerate(m.attributes):
        active = [p for p in range(2) if attr in ("BIAS", f"W:{words[p]}@0")]
        for j, lab in enumerate(m.labels):
            empirical = sum(gold[p] == lab for p in active)
            assert g[a, j] == pytest.approx(empirical - len(active) / 3, abs=1e-12)


def _fd_check(c, l2_sigma, seed):
    cfg = FeatureConfig(cluster_sources=("x",))
    cl = {"x": Clustering("x", 3, {"Obama": 1, "Merkel": 1, "Berlin": 2, "Paris": 2, "Rome": 2})}
    m = build_model(c, cfg, cl)
    rng = np.random.default_rng(seed)
    w0 = rng.normal(scale=0.3, size=m.n_weights)
    m.set_weights(w0)
    _, grad = objective_and_gradient(m, c, l2_sigma)
    h = 1e-5
    worst = 0.0
    for k in range(m.n_weights):
        w = w0.copy()
        w[k] += h
        m.set_weights(w)
        up, _ = objective_and_gradient(m, c, l2_sigma)
        w[k] -= 2 * h
        m.set_weights(w)
        down, _ = objective_and_gradient(m, c, l2_sigma)
        fd = (up - down) / (2 * h)
        worst = max(worst, abs(fd - grad[k]) / max(1.0, abs(fd), abs(grad[k])))
    m.set_weights(w0)
    return worst


@pytest.mark.parametrize("text,sigma", [(TOY1, None), (TOY2, 1.0), (TOY3, 0.5)])
def test_gradient_finite_differences(text, sigma):
    assert _fd_check(corpus(text), sigma, 7) < 1e-4


def test_duplicated_corpus_doubles_objective():
    c1 = corpus(TOY2)
    c2 = corpus(TOY2 + TOY2)
    m = build_model(c1, FeatureConfig())
    m.set_weights(np.random.default_rng(4).normal(size=m.n_weights))
    v1, g1 = objective_and_gradient(m, c1)
    v2, g2 = objective_and_gradient(m, c2)
    assert v2 == pytest.approx(2 * v1)
    assert g2 == pytest.approx(2 * g1)


def test_memorizes_single_sentence():
    c = corpus("Obama B-PER\n\n")
    m = train_crf(c, FeatureConfig(), TrainConfig(l2_sigma=10.0))
    assert viterbi_decode(m, ["Obama"]) == ["B-PER"]


def test_objective_trace_non_decreasing():
    m = train_crf(corpus(TOY2 + TOY1), FeatureConfig(), TrainConfig())
    trace = m.objective_trace
    assert len(trace) > 2
    assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))


def test_training_masks_invalid_transitions():
    m = train_crf(corpus(TOY2), FeatureConfig(), TrainConfig())
    for sent in (["York", "New"], ["Smith"], ["the", "York"]):
        labels = viterbi_decode(m, sent)
        prev = "O"
        for lab in labels:
            if lab.startswith("I-"):
                assert prev[2:] == lab[2:]
            prev = lab


def test_cluster_features_extend_index_by_distinct_count():
    c = corpus(TOY1 + TOY3)
    cl = Clustering("de", 5, {"Obama": 3, "Berlin": 4, "Anna": 3, "in": 0})
    cfg = FeatureConfig(cluster_sources=("de",))
    base = build_model(c, FeatureConfig())
    with_cl = build_model(c, cfg, {"de": cl})
    emitted = set()
    for s in c.sentences:
        w = s.words
        for i in range(len(w)):
            for off in (-1, 0, 1):
                if 0 <= i + off < len(w):
                    cid = cl.assign.get(w[i + off], "NOCLUSTER")
                    emitted.add(f"CL:de:{cid}@{off}")
    assert len(with_cl.attributes) - len(base.attributes) == len(emitted)


def test_model_roundtrip():
    cl = Clustering("de", 5, {"Obama": 3, "Berlin": 4})
    m = train_crf(corpus(TOY1), FeatureConfig(cluster_sources=("de",)), TrainConfig(),
                  {"de": cl})
    buf = io.StringIO()
    write_model(m, buf)
    back = read_model(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.weights, m.weights)
    assert back.config == m.config and back.clusterings == m.clusterings
    sent = ["Merkel", "in", "Berlin"]
    assert viterbi_decode(back, sent) == viterbi_decode(m, sent)
    assert log_partition(back, sent) == log_partition(m, sent)
    buf2 = io.StringIO()
    write_model(back, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_read_model_rejects_garbage():
    with pytest.raises(DataError):
        read_model(io.StringIO("hello\n"))
