"""CTC loss, a brute-force oracle, greedy decoding and frame-level cross entropy.

The blank symbol is always the last class, ``C - 1``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasibleLabelError
from .nn import log_softmax

NEG_INF = -np.inf


@dataclass
class CtcResult:
    loss: float
    dlogits: np.ndarray


def min_frames(labels) -> int:
    """Fewest frames that can emit ``labels``: one per label plus a blank between repeats."""
    labels = list(labels)
    return len(labels) + sum(a == b for a, b in zip(labels, labels[1:]))


def _check_labels(labels, C):
    if C < 2:
        raise ConfigError(f"CTC needs at least 2 classes (one blank), got {C}")
    for y in labels:
        if not 0 <= y < C - 1:
            raise ConfigError(f"label {y} outside [0, {C - 1}); index {C - 1} is the blank")


def _logsumexp3(a, b, c):
    return np.logaddexp(np.logaddexp(a, b), c)


def _shift(a, k):
    """``a`` moved ``k`` places right (negative: left), filled with log(0)."""
    out = np.full_like(a, NEG_INF)
    if k > 0:
        out[k:] = a[: len(a) - k]
    else:
        out[: len(a) + k] = a[-k:]
    return out


def ctc_loss(logits, labels) -> CtcResult:
    """Negative log-likelihood of ``labels`` under per-frame softmax ``logits`` (T x C).

    Forward-backward runs in log space over the blank-augmented sequence; the
    gradient is ``softmax - occupancy`` per frame.
    """
    logits = np.asarray(logits, dtype=np.float64)
    T, C = logits.shape
    labels = [int(y) for y in labels]
    _check_labels(labels, C)
    if T < min_frames(labels):
        raise InfeasibleLabelError(f"{len(labels)} labels need at least {min_frames(labels)} frames, got {T}")
    blank = C - 1
    ext = np.full(2 * len(labels) + 1, blank)
    ext[1::2] = labels
    S = len(ext)
    # s may be reached from s-2: non-blank and different from the label two back
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    logp = log_softmax(logits)
    emit = logp[:, ext]  # (T, S)

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        from2 = np.where(skip, _shift(prev, 2), NEG_INF)
        alpha[t] = _logsumexp3(prev, _shift(prev, 1), from2) + emit[t]

    # beta[t, s]: log-prob of finishing the sequence from state s at t, excluding the emission at t
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        to2 = _shift(np.where(skip, nxt, NEG_INF), -2)
        beta[t] = _logsumexp3(nxt, _shift(nxt, -1), to2)

    log_p = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2]) if S > 1 else alpha[T - 1, 0]
    occupancy = np.exp(alpha + beta - log_p)  # (T, S)
    per_class = np.zeros((T, C))
    np.add.at(per_class, (slice(None), ext), occupancy)
    return CtcResult(float(-log_p), np.exp(logp) - per_class)


def collapse(path, blank: int) -> tuple[int, ...]:
    """Merge repeated symbols, then drop blanks."""
    return tuple(k for k, _ in itertools.groupby(path) if k != blank)


def ctc_brute_force(probs, labels) -> float:
    """Exact ``-log p(labels)`` by summing over every one of the ``C**T`` frame paths."""
    probs = np.asarray(probs, dtype=np.float64)
    T, C = probs.shape
    if T > 8 or C > 4:
        raise ConfigError(f"brute force limited to T <= 8, C <= 4 (got T={T}, C={C})")
    target = tuple(int(y) for y in labels)
    total = 0.0
    for path in itertools.product(range(C), repeat=T):
        if collapse(path, C - 1) == target:
            total += np.prod(probs[np.arange(T), path])
    return float(-np.log(total)) if total > 0 else float("inf")


def label_sequences(T: int, n_labels: int):
    """Every label sequence (blank excluded) that fits into ``T`` frames."""
    for U in range(T + 1):
        for seq in itertools.product(range(n_labels), repeat=U):
            if min_frames(seq) <= T:
                yield seq


def greedy_decode(logits, blank: int | None = None) -> list[int]:
    """Best-path decoding; ``argmax`` breaks ties toward the lowest class index."""
    logits = np.asarray(logits)
    if blank is None:
        blank = logits.shape[-1] - 1
    return list(collapse(np.argmax(logits, axis=-1).tolist(), blank))


def frame_ce_loss(logits, targets):
    """Mean per-frame cross entropy against integer ``targets``. Returns ``(loss, dlogits)``."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    T, C = logits.shape
    if targets.shape != (T,):
        raise ConfigError(f"need {T} frame targets, got shape {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= C):
        raise ConfigError(f"frame targets must lie in [0, {C})")
    logp = log_softmax(logits)
    rows = np.arange(T)
    d = np.exp(logp)
    d[rows, targets] -= 1.0
    return float(-logp[rows, targets].mean()), d / T


def edit_distance(ref, hyp) -> int:
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def label_error_rate(refs, hyps) -> float:
    """Total edit distance over total reference length."""
    errors = sum(edit_distance(r, h) for r, h in zip(refs, hyps, strict=True))
    total = sum(len(r) for r in refs)
    return errors / total if total else float(errors > 0)
