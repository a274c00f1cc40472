"""Acoustic frontend: log-STFT, low-frame-rate stacking, global MVN, bin grouping."""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    frame_length: int = 512
    frame_shift: int = 160  # 10 ms at 16 kHz
    fft_bins: int = 256
    lfr_stack: int = 3
    lfr_subsample: int = 3
    epsilon_floor: float = 1e-10

    def __post_init__(self):
        if self.lfr_stack < 1 or self.lfr_subsample < 1:
            raise ConfigError("lfr_stack and lfr_subsample must be >= 1")
        if self.epsilon_floor <= 0:
            raise ConfigError("epsilon_floor must be positive")
        if self.frame_shift < 1 or self.frame_length < 1:
            raise ConfigError("frame_length and frame_shift must be >= 1")
        if not 1 <= self.fft_bins <= self.frame_length // 2 + 1:
            raise ConfigError(
                f"fft_bins={self.fft_bins} exceeds the {self.frame_length // 2 + 1} bins of a "
                f"{self.frame_length}-point FFT"
            )

    @property
    def feature_dim(self) -> int:
        return self.lfr_stack * self.fft_bins


def hann(n: int) -> np.ndarray:
    # periodic form, the usual choice for STFT analysis
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def num_frames(n_samples: int, frame_length: int, frame_shift: int) -> int:
    return 1 + (n_samples - frame_length) // frame_shift


def log_stft(samples, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Log-magnitude STFT, one row per frame, keeping the lowest ``fft_bins`` bins."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ConfigError("expected a mono signal")
    if len(samples) < cfg.frame_length:
        raise ConfigError(f"signal of {len(samples)} samples is shorter than one frame ({cfg.frame_length})")
    T = num_frames(len(samples), cfg.frame_length, cfg.frame_shift)
    starts = np.arange(T) * cfg.frame_shift
    frames = samples[starts[:, None] + np.arange(cfg.frame_length)]
    mag = np.abs(np.fft.rfft(frames * hann(cfg.frame_length), axis=1))[:, : cfg.fft_bins]
    return np.log(np.maximum(mag, cfg.epsilon_floor))


def lfr_output_frames(n_frames: int, stack: int, subsample: int) -> int:
    return (n_frames - stack) // subsample + 1


def lfr_stack(frames, stack: int = 3, subsample: int = 3) -> np.ndarray:
    """Concatenate ``stack`` consecutive frames, taking every ``subsample``-th start.

    Alignment starts at frame 0; trailing frames that cannot fill a full stack
    are dropped.
    """
    if stack < 1 or subsample < 1:
        raise ConfigError("stack and subsample must be >= 1")
    frames = np.asarray(frames)
    n = frames.shape[0]
    if n < stack:
        raise ConfigError(f"{n} frames cannot fill a single stack of {stack}")
    T = lfr_output_frames(n, stack, subsample)
    idx = np.arange(T)[:, None] * subsample + np.arange(stack)
    return frames[idx].reshape(T, stack * frames.shape[1])


def permute_frequency(row, stack: int, bins: int) -> np.ndarray:
    """Regroup frame-major ``[frame][bin]`` features into bin-major ``[bin][frame]``.

    Works on the last axis, so whole feature matrices can be passed.
    """
    row = np.asarray(row)
    if row.shape[-1] != stack * bins:
        raise ConfigError(f"expected {stack * bins} features, got {row.shape[-1]}")
    lead = row.shape[:-1]
    return row.reshape(lead + (stack, bins)).swapaxes(-1, -2).reshape(lead + (stack * bins,))


def unpermute_frequency(row, stack: int, bins: int) -> np.ndarray:
    row = np.asarray(row)
    if row.shape[-1] != stack * bins:
        raise ConfigError(f"expected {stack * bins} features, got {row.shape[-1]}")
    lead = row.shape[:-1]
    return row.reshape(lead + (bins, stack)).swapaxes(-1, -2).reshape(lead + (stack * bins,))


# ---------------------------------------------------------------------------
# global mean/variance normalisation


@dataclass
class MvnStats:
    mean: np.ndarray
    variance: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "variance": self.variance.tolist(), "count": self.count})

    @classmethod
    def from_json(cls, text: str) -> "MvnStats":
        d = json.loads(text)
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["variance"], dtype=np.float64), int(d["count"]))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "MvnStats":
        return cls.from_json(Path(path).read_text())


class MvnAccumulator:
    """Streaming (count, mean, M2) accumulator.

    Partial accumulators from different workers combine with :meth:`merge`;
    merging in a fixed order gives identical statistics on every run.
    """

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.mean.shape[0]:
            raise ConfigError(f"expected (T, {self.mean.shape[0]}) features, got {x.shape}")
        if x.shape[0] == 0:
            return self
        other = MvnAccumulator(x.shape[1])
        other.count = x.shape[0]
        other.mean = x.mean(axis=0)
        other.m2 = ((x - other.mean) ** 2).sum(axis=0)
        return self.merge(other)

    def merge(self, other: "MvnAccumulator"):
        n = self.count + other.count
        if other.count == 0:
            return self
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / n)
        self.count = n
        return self

    def stats(self, epsilon_floor: float = 1e-10) -> MvnStats:
        if self.count == 0:
            raise ConfigError("no frames accumulated")
        return MvnStats(self.mean.copy(), np.maximum(self.m2 / self.count, epsilon_floor), self.count)


def mvn_fit(corpus, epsilon_floor: float = 1e-10) -> MvnStats:
    """Global per-dimension mean and (population) variance over every frame of ``corpus``."""
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("cannot fit MVN statistics on an empty corpus")
    acc = MvnAccumulator(np.asarray(corpus[0]).shape[1])
    for x in corpus:
        acc.add(x)
    return acc.stats(epsilon_floor)


def mvn_apply(x, stats: MvnStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.dim:
        raise ConfigError(f"features have {x.shape[-1]} dims, statistics have {stats.dim}")
    return (x - stats.mean) / np.sqrt(stats.variance)


# ---------------------------------------------------------------------------


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read 16-bit mono PCM into floats in [-1, 1). Returns ``(samples, sample_rate)``."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getsampwidth() != 2:
                raise FormatError(
                    f"{path}: need mono 16-bit PCM, got {w.getnchannels()} channels of {8 * w.getsampwidth()} bits"
                )
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate


def write_wav(path, samples, sample_rate: int):
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def extract_features(samples, cfg: FrontendConfig = FrontendConfig(), stats: MvnStats | None = None):
    """Full frontend: log-STFT, LFR stacking, bin-major grouping, then MVN when ``stats`` is given."""
    x = lfr_stack(log_stft(samples, cfg), cfg.lfr_stack, cfg.lfr_subsample)
    x = permute_frequency(x, cfg.lfr_stack, cfg.fft_bins)
    return mvn_apply(x, stats) if stats is not None else x
