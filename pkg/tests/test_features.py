import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvflstm.errors import ConfigError
from mvflstm.features import (
    FrontendConfig,
    MvnAccumulator,
    MvnStats,
    extract_features,
    lfr_output_frames,
    lfr_stack,
    log_stft,
    mvn_apply,
    mvn_fit,
    permute_frequency,
    read_wav,
    unpermute_frequency,
    write_wav,
)

SMALL = FrontendConfig(sample_rate=8000, frame_length=64, frame_shift=16, fft_bins=32)


# ---------------------------------------------------------------------------
# log-STFT


@pytest.mark.parametrize("k", [3, 10, 20])
def test_sine_peak_at_its_bin(k):
    n = np.arange(SMALL.frame_length * 6)
    x = np.sin(2 * np.pi * k * n / SMALL.frame_length)
    logspec = log_stft(x, SMALL)
    assert (logspec.argmax(axis=1) == k).all()


def test_silence_hits_floor():
    logspec = log_stft(np.zeros(200), SMALL)
    np.testing.assert_array_equal(logspec, math.log(SMALL.epsilon_floor))


@pytest.mark.parametrize("length", [64, 65, 79, 80, 1000])
def test_frame_count(rng, length):
    logspec = log_stft(rng.standard_normal(length), SMALL)
    assert logspec.shape == (1 + (length - 64) // 16, 32)


def test_too_short_signal():
    with pytest.raises(ConfigError):
        log_stft(np.zeros(63), SMALL)


def test_config_validation():
    with pytest.raises(ConfigError):
        FrontendConfig(lfr_stack=0)
    with pytest.raises(ConfigError):
        FrontendConfig(epsilon_floor=0.0)
    with pytest.raises(ConfigError):
        FrontendConfig(frame_length=64, fft_bins=40)
    assert FrontendConfig().feature_dim == 768


# ---------------------------------------------------------------------------
# LFR stacking


def test_lfr_nine_frames():
    frames = np.arange(9)[:, None] * np.ones((1, 2))
    out = lfr_stack(frames, 3, 3)
    np.testing.assert_array_equal(out, [[0, 0, 1, 1, 2, 2], [3, 3, 4, 4, 5, 5], [6, 6, 7, 7, 8, 8]])


def test_lfr_identity(rng):
    frames = rng.normal(size=(7, 4))
    np.testing.assert_array_equal(lfr_stack(frames, 1, 1), frames)


def test_lfr_drops_remainder():
    frames = np.arange(10.0)[:, None]
    out = lfr_stack(frames, 3, 3)
    assert out.shape == (3, 3)
    assert 9 not in out


def test_lfr_too_few_frames():
    with pytest.raises(ConfigError):
        lfr_stack(np.zeros((2, 4)), 3, 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 40))
def test_lfr_row_count_formula(stack, subsample, extra):
    n = stack + extra
    out = lfr_stack(np.arange(n, dtype=float)[:, None], stack, subsample)
    # enumerate the start frames that still fit a full stack
    starts = [s for s in range(0, n, subsample) if s + stack <= n]
    assert out.shape[0] == len(starts) == lfr_output_frames(n, stack, subsample)
    np.testing.assert_array_equal(out[:, 0], starts)


# ---------------------------------------------------------------------------
# bin grouping


def test_permute_example():
    row = np.array(["a1", "a2", "b1", "b2", "c1", "c2"])
    np.testing.assert_array_equal(permute_frequency(row, 3, 2), ["a1", "b1", "c1", "a2", "b2", "c2"])


def test_permute_stack_one_identity(rng):
    row = rng.normal(size=10)
    np.testing.assert_array_equal(permute_frequency(row, 1, 10), row)


def test_permute_index_map():
    stack, B = 3, 5
    out = permute_frequency(np.arange(stack * B), stack, B)
    for s in range(stack):
        for b in range(B):
            assert out[b * stack + s] == s * B + b


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_permute_bijection(stack, B, seed):
    x = np.random.default_rng(seed).normal(size=(2, stack * B))
    np.testing.assert_array_equal(unpermute_frequency(permute_frequency(x, stack, B), stack, B), x)
    assert sorted(permute_frequency(np.arange(stack * B), stack, B)) == list(range(stack * B))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(2, 16), st.integers(1, 4))
def test_aligned_windows_cover_whole_bins(stack, B, bins_per_window):
    """Windows of F = stack*w features on stride stack*w/2 hold w whole bins with every stacked frame."""
    w = 2 * bins_per_window
    F, S = stack * w, stack * w // 2
    if F > stack * B or (stack * B - F) % S:
        return
    src = permute_frequency(np.arange(stack * B), stack, B)
    for start in range(0, stack * B - F + 1, S):
        window = src[start : start + F]
        bins = {int(i) % B for i in window}
        frames = {int(i) // B for i in window}
        assert len(bins) == F // stack
        assert frames == set(range(stack))


def test_permute_length_mismatch():
    with pytest.raises(ConfigError):
        permute_frequency(np.zeros(7), 3, 2)


# ---------------------------------------------------------------------------
# MVN


def test_mvn_fit_apply_normalises(rng):
    corpus = [rng.normal(3.0, 2.5, size=(int(n), 6)) for n in rng.integers(5, 40, size=8)]
    stats = mvn_fit(corpus)
    y = np.concatenate([mvn_apply(x, stats) for x in corpus])
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(y.var(axis=0), 1.0, atol=1e-6)


def test_mvn_constant_dimension():
    corpus = [np.column_stack([np.full(5, 7.0), np.arange(5.0)])]
    stats = mvn_fit(corpus, epsilon_floor=1e-10)
    assert stats.variance[0] == 1e-10
    np.testing.assert_array_equal(mvn_apply(corpus[0], stats)[:, 0], 0.0)


def test_mvn_hand_example():
    stats = mvn_fit([np.array([[0.0]]), np.array([[2.0]])])
    assert stats.mean[0] == 1.0 and stats.variance[0] == 1.0 and stats.count == 2
    np.testing.assert_array_equal(mvn_apply(np.array([[0.0]]), stats), [[-1.0]])


def test_mvn_errors():
    with pytest.raises(ConfigError):
        mvn_fit([])
    stats = mvn_fit([np.zeros((3, 2))])
    with pytest.raises(ConfigError):
        mvn_apply(np.zeros((3, 4)), stats)


def test_mvn_merge_matches_single_pass(rng):
    parts = [rng.normal(size=(int(n), 3)) for n in (4, 9, 1, 15)]
    left = MvnAccumulator(3).add(parts[0]).add(parts[1])
    right = MvnAccumulator(3).add(parts[2]).add(parts[3])
    merged = left.merge(right).stats()
    whole = np.concatenate(parts)
    np.testing.assert_allclose(merged.mean, whole.mean(axis=0), atol=1e-14)
    np.testing.assert_allclose(merged.variance, whole.var(axis=0), atol=1e-13)


def test_mvn_json_round_trip(tmp_path, rng):
    stats = mvn_fit([rng.normal(size=(10, 4))])
    stats.save(tmp_path / "s.json")
    back = MvnStats.load(tmp_path / "s.json")
    np.testing.assert_array_equal(back.mean, stats.mean)
    np.testing.assert_array_equal(back.variance, stats.variance)


# ---------------------------------------------------------------------------


def test_wav_round_trip_and_pipeline(tmp_path, rng):
    cfg = FrontendConfig(sample_rate=8000, frame_length=64, frame_shift=16, fft_bins=32)
    samples = np.round(np.clip(0.3 * rng.standard_normal(1000), -0.99, 0.99) * 32768) / 32768
    write_wav(tmp_path / "a.wav", samples, 8000)
    back, rate = read_wav(tmp_path / "a.wav")
    assert rate == 8000
    np.testing.assert_array_equal(back, samples)
    x = extract_features(back, cfg)
    n_frames = 1 + (1000 - 64) // 16
    assert x.shape == (lfr_output_frames(n_frames, 3, 3), 96)
    # first window of 6 features = bins 0 and 1 of all three stacked frames
    raw = log_stft(back, cfg)
    np.testing.assert_allclose(x[0, :6], [raw[0, 0], raw[1, 0], raw[2, 0], raw[0, 1], raw[1, 1], raw[2, 1]])
