"""Synthetic sequence task and the CE warm-start + CTC training loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ctc import ctc_loss, frame_ce_loss, greedy_decode, label_error_rate
from .encoder import EncoderConfig, EncoderParams, ViewConfig, encoder_backward, encoder_forward
from .errors import ConfigError, TrainingDiverged
from .features import permute_frequency

log = logging.getLogger(__name__)

TOY_CONFIG = EncoderConfig(
    input_dim=48,
    views=(ViewConfig(6, 3, 2, 4), ViewConfig(12, 6, 2, 4)),
    projection_dim=16,
    tlstm_layers=2,
    tlstm_hidden=32,
    output_classes=5,
)


@dataclass
class Utterance:
    features: np.ndarray  # (T, N)
    labels: list[int]
    frame_targets: np.ndarray  # (T,), blank on silence frames


@dataclass(frozen=True)
class SynthTask:
    """Utterances made of class-specific spectral templates separated by silence.

    Each class owns a Gaussian bump over ``bins`` frequency bins. A frame of
    class ``c`` repeats that bump in each of the ``stack`` stacked sub-frames,
    adds Gaussian noise, and is regrouped bin-major like the real frontend.
    Silence frames carry noise only and are the blank target for frame CE.
    """

    num_classes: int = 5  # including blank
    bins: int = 16
    stack: int = 3
    max_labels: int = 4
    segment_frames: tuple[int, int] = (2, 4)
    gap_frames: tuple[int, int] = (1, 2)
    amplitude: float = 2.0
    width: float = 1.0
    noise: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.max_labels < 1:
            raise ConfigError("need at least one label class plus blank and max_labels >= 1")
        if self.segment_frames[0] < 1 or self.gap_frames[0] < 1:
            raise ConfigError("segments and gaps must be at least one frame long")

    @property
    def feature_dim(self) -> int:
        return self.bins * self.stack

    @property
    def blank(self) -> int:
        return self.num_classes - 1

    def templates(self) -> np.ndarray:
        """``(num_classes - 1, bins)`` spectral prototypes, evenly spaced bumps."""
        n = self.num_classes - 1
        centres = (np.arange(n) + 0.5) * self.bins / n
        b = np.arange(self.bins)
        return self.amplitude * np.exp(-0.5 * ((b[None, :] - centres[:, None]) / self.width) ** 2)

    def utterance(self, rng: np.random.Generator) -> Utterance:
        n_labels = self.num_classes - 1
        U = int(rng.integers(1, self.max_labels + 1))
        labels = [int(y) for y in rng.integers(0, n_labels, size=U)]
        targets = []

        def gap():
            targets.extend([self.blank] * int(rng.integers(self.gap_frames[0], self.gap_frames[1] + 1)))

        gap()
        for y in labels:
            targets.extend([y] * int(rng.integers(self.segment_frames[0], self.segment_frames[1] + 1)))
            gap()
        targets = np.array(targets)
        T = len(targets)
        spectra = np.zeros((T, self.bins))
        voiced = targets != self.blank
        spectra[voiced] = self.templates()[targets[voiced]]
        frames = np.repeat(spectra[:, None, :], self.stack, axis=1)  # (T, stack, bins)
        frames = frames + self.noise * rng.standard_normal(frames.shape)
        x = permute_frequency(frames.reshape(T, -1), self.stack, self.bins)
        return Utterance(x, labels, targets)

    def batch(self, rng: np.random.Generator, size: int) -> list[Utterance]:
        return [self.utterance(rng) for _ in range(size)]

    def heldout(self, size: int) -> list[Utterance]:
        # disjoint stream from training batches, which draw from seed itself
        return self.batch(np.random.default_rng([self.seed, 1]), size)


def generate_batch(task: SynthTask, batch_size: int, rng=None) -> list[Utterance]:
    rng = np.random.default_rng(task.seed) if rng is None else rng
    return task.batch(rng, batch_size)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 8
    steps: int = 2000  # total, warm start included
    warm_start_steps: int = 100
    clip_norm: float = 5.0
    precision: str = "float64"
    eval_every: int = 100
    eval_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("learning_rate must be >= 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.steps < 0 or self.warm_start_steps < 0:
            raise ConfigError("batch_size must be >= 1 and step counts >= 0")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")

    @property
    def dtype(self):
        return np.dtype(self.precision)


def pad_batch(utts: list[Utterance], dtype=np.float64) -> np.ndarray:
    T = max(u.features.shape[0] for u in utts)
    x = np.zeros((len(utts), T, utts[0].features.shape[1]), dtype=dtype)
    for b, u in enumerate(utts):
        x[b, : u.features.shape[0]] = u.features
    return x


def batch_loss(logits, utts: list[Utterance], phase: str):
    """Mean per-utterance loss and its gradient on padded ``(B, T, C)`` logits."""
    dlogits = np.zeros(logits.shape, dtype=np.float64)
    total = 0.0
    for b, u in enumerate(utts):
        T = u.features.shape[0]
        if phase == "ce":
            loss, d = frame_ce_loss(logits[b, :T], u.frame_targets)
        else:
            r = ctc_loss(logits[b, :T], u.labels)
            loss, d = r.loss, r.dlogits
        total += loss
        dlogits[b, :T] = d
    B = len(utts)
    return total / B, dlogits / B


def global_norm(arrays) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(a, dtype=np.float64))) for a in arrays)))


def evaluate(params: EncoderParams, cfg: EncoderConfig, utts: list[Utterance]) -> tuple[float, float]:
    """Greedy-decode label error rate and mean CTC loss over ``utts``."""
    hyps, losses = [], []
    for u in utts:
        logits, _ = encoder_forward(u.features, cfg, params)
        hyps.append(greedy_decode(logits))
        losses.append(ctc_loss(logits, u.labels).loss)
    return label_error_rate([u.labels for u in utts], hyps), float(np.mean(losses))


@dataclass
class MetricRow:
    step: int
    phase: str
    loss: float
    label_error_rate: float | None = None


@dataclass
class TrainResult:
    params: EncoderParams
    log: list[MetricRow] = field(default_factory=list)

    def losses(self, phase: str) -> list[float]:
        return [r.loss for r in self.log if r.phase == phase]

    @property
    def final_label_error_rate(self) -> float | None:
        rates = [r.label_error_rate for r in self.log if r.label_error_rate is not None]
        return rates[-1] if rates else None


def write_metrics(path, rows: list[MetricRow]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "phase", "loss", "label_error_rate"])
        for r in rows:
            w.writerow([r.step, r.phase, repr(r.loss), "" if r.label_error_rate is None else repr(r.label_error_rate)])


def train(cfg: EncoderConfig, tc: TrainConfig, task: SynthTask, params: EncoderParams | None = None,
          stop_below: float | None = None) -> TrainResult:
    """SGD with momentum: ``warm_start_steps`` of frame CE, then CTC until ``tc.steps``.

    Every ``eval_every`` steps (and at the end) the held-out label error rate is
    logged; with ``stop_below`` training ends at the first evaluation under it.
    """
    if cfg.input_dim != task.feature_dim or cfg.output_classes != task.num_classes:
        raise ConfigError(
            f"topology expects {cfg.input_dim} features / {cfg.output_classes} classes, "
            f"task produces {task.feature_dim} / {task.num_classes}"
        )
    rng = np.random.default_rng(tc.seed)
    if params is None:
        params = EncoderParams.init(cfg, rng, tc.dtype)
    else:
        params = params.astype(tc.dtype)
    data_rng = np.random.default_rng([task.seed, 0])
    heldout = task.heldout(tc.eval_size)
    velocity = [np.zeros_like(a) for a in params.arrays()]
    result = TrainResult(params)

    for step in range(1, tc.steps + 1):
        phase = "ce" if step <= tc.warm_start_steps else "ctc"
        utts = task.batch(data_rng, tc.batch_size)
        logits, cache = encoder_forward(pad_batch(utts, tc.dtype), cfg, params)
        loss, dlogits = batch_loss(logits, utts, phase)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite {phase} loss {loss} at step {step}")
        grads = encoder_backward(cache, dlogits).arrays()
        norm = global_norm(grads)
        scale = min(1.0, tc.clip_norm / norm) if norm > 0 else 1.0
        for p, g, v in zip(params.arrays(), grads, velocity):
            v *= tc.momentum
            v -= (tc.learning_rate * scale) * g
            p += v
        if not all(np.isfinite(p).all() for p in params.arrays()):
            raise TrainingDiverged(f"non-finite parameters after step {step} (grad norm {norm:.3g})")

        row = MetricRow(step, phase, loss)
        if step % tc.eval_every == 0 or step == tc.steps:
            row.label_error_rate, _ = evaluate(params, cfg, heldout)
            log.info("step %d %s loss %.4f LER %.4f", step, phase, loss, row.label_error_rate)
        result.log.append(row)
        if stop_below is not None and row.label_error_rate is not None and row.label_error_rate < stop_below:
            break
    return result
