"""Exact inference for a first-order linear chain.

All functions take per-position label scores ``emit`` (T x L), a
transition matrix ``trans`` (L x L, row = previous label) and initial
scores ``start`` (L).  Disallowed transitions carry ``-inf``.
"""

import numpy as np
from scipy.special import logsumexp


def log_partition(emit, trans, start):
    alpha = start + emit[0]
    for t in range(1, len(emit)):
        alpha = logsumexp(alpha[:, None] + trans, axis=0) + emit[t]
    return float(logsumexp(alpha))


def sequence_score(labels, emit, trans, start):
    score = start[labels[0]] + emit[0, labels[0]]
    for t in range(1, len(labels)):
        score += trans[labels[t - 1], labels[t]] + emit[t, labels[t]]
    return float(score)


def viterbi(emit, trans, start):
    """Best label sequence; ties go to the lowest label at the earliest position.

    Best suffix scores are computed right to left, then labels are chosen
    left to right, so ``argmax`` picks the smallest index first where it
    matters most.
    """
    T, L = emit.shape
    best = np.empty((T, L))
    best[T - 1] = emit[T - 1]
    for t in range(T - 2, -1, -1):
        best[t] = emit[t] + np.max(trans + best[t + 1][None, :], axis=1)
    path = [int(np.argmax(start + best[0]))]
    for t in range(1, T):
        path.append(int(np.argmax(trans[path[-1]] + best[t])))
    return path


def batch_forward_backward(emit, lengths, trans, start):
    """Forward-backward over a padded batch.

    ``emit`` is (S, T, L); positions at or beyond ``lengths[s]`` are
    ignored.  Returns ``log_z`` (S), node marginals (S, T, L) and summed
    edge marginals (L, L).
    """
    S, T, L = emit.shape
    lengths = np.asarray(lengths)
    alpha = np.empty((S, T, L))
    alpha[:, 0] = start + emit[:, 0]
    for t in range(1, T):
        new = logsumexp(alpha[:, t - 1, :, None] + trans[None], axis=1) + emit[:, t]
        alpha[:, t] = np.where((t < lengths)[:, None], new, alpha[:, t - 1])
    log_z = logsumexp(alpha[:, T - 1], axis=1)
    beta = np.zeros((S, T, L))
    for t in range(T - 2, -1, -1):
        new = logsumexp(trans[None] + (emit[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where((t + 1 < lengths)[:, None], new, 0.0)
    node = np.exp(alpha + beta - log_z[:, None, None])
    valid = np.arange(T)[None, :] < lengths[:, None]
    node *= valid[:, :, None]
    edges = np.zeros((L, L))
    if T > 1:
        xi = (alpha[:, :-1, :, None] + trans[None, None]
              + (emit[:, 1:] + beta[:, 1:])[:, :, None, :] - log_z[:, None, None, None])
        pair_valid = np.arange(1, T)[None, :] < lengths[:, None]
        xi = np.where(pair_valid[:, :, None, None], xi, -np.inf)
        edges = np.exp(xi).sum(axis=(0, 1))
    return log_z, node, edges
