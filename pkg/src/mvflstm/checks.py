"""Numerical self-audits: encoder+CTC gradient check and CTC oracle sweep."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import ctc_brute_force, ctc_loss, label_sequences, min_frames
from .encoder import EncoderConfig, EncoderParams, encoder_backward, encoder_forward
from .nn import GradCheckReport, grad_check, softmax
from .train import TOY_CONFIG


def encoder_ctc_gradcheck(cfg: EncoderConfig = TOY_CONFIG, seed: int = 0, frames: int = 5, n_labels: int = 2,
                          max_per_array: int | None = 20, eps: float = 1e-5,
                          tolerance: float = 1e-4) -> GradCheckReport:
    """Central-difference audit of every parameter array of the composed encoder + CTC loss (float64)."""
    rng = np.random.default_rng(seed)
    params = EncoderParams.init(cfg, rng, np.float64)
    # perturb the biases so no gradient path sits at a symmetric point
    for a in params.arrays():
        if a.ndim == 1:
            a += rng.uniform(-0.5, 0.5, size=a.shape)
    x = rng.standard_normal((frames, cfg.input_dim))
    labels = [int(y) for y in rng.integers(0, cfg.output_classes - 1, size=n_labels)]
    while min_frames(labels) > frames:
        labels = labels[:-1]

    def loss():
        logits, _ = encoder_forward(x, cfg, params)
        return ctc_loss(logits, labels).loss

    logits, cache = encoder_forward(x, cfg, params)
    grads = encoder_backward(cache, ctc_loss(logits, labels).dlogits)
    return grad_check(loss, params.arrays(), grads.arrays(), eps=eps, tolerance=tolerance,
                      max_per_array=max_per_array, rng=rng)


@dataclass
class CtcSelftestReport:
    instances: int
    max_abs_diff: float
    completeness_instances: int
    max_completeness_dev: float

    def ok(self, tol: float = 1e-9) -> bool:
        return self.max_abs_diff <= tol and self.max_completeness_dev <= tol

    def __str__(self):
        return (
            f"ctc vs brute force: {self.instances} instances, max |diff| {self.max_abs_diff:.3e}; "
            f"sum_y p(y|x): {self.completeness_instances} instances, max |1 - sum| {self.max_completeness_dev:.3e}"
        )


def random_ctc_instance(rng, max_T=6, max_C=3, max_U=2):
    """Random feasible ``(logits, labels)`` with ``T <= max_T``, ``C <= max_C``, ``U <= max_U``."""
    while True:
        T = int(rng.integers(1, max_T + 1))
        C = int(rng.integers(2, max_C + 1))
        U = int(rng.integers(0, max_U + 1))
        labels = [int(y) for y in rng.integers(0, C - 1, size=U)]
        if min_frames(labels) <= T:
            return rng.normal(scale=2.0, size=(T, C)), labels


def ctc_selftest(instances: int = 1000, completeness: int = 100, seed: int = 0) -> CtcSelftestReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        logits, labels = random_ctc_instance(rng)
        worst = max(worst, abs(ctc_loss(logits, labels).loss - ctc_brute_force(softmax(logits), labels)))
    worst_sum = 0.0
    for _ in range(completeness):
        T = int(rng.integers(1, 7))
        C = int(rng.integers(2, 4))
        logits = rng.normal(scale=2.0, size=(T, C))
        total = sum(np.exp(-ctc_loss(logits, y).loss) for y in label_sequences(T, C - 1))
        worst_sum = max(worst_sum, abs(1.0 - total))
    return CtcSelftestReport(instances, worst, completeness, worst_sum)
