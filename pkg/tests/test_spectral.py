"""Spectral pipeline: DFT definition, mel filters, STFT framing, SNR."""

import numpy as np
import pytest

from streamcodec import tensor as T
from streamcodec.errors import ContractError
from streamcodec.spectral import (MEL_LOG_FLOOR, SNR_CAP_DB, SpecScale,
                                  default_scales, dft, hz_to_mel, mel_bank,
                                  mel_spectrogram, mel_to_hz,
                                  multiscale_mel_loss, snr_db,
                                  stft_frame_count, stft_mag)


def naive_dft(x: np.ndarray) -> np.ndarray:
    n = len(x)
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * k * m / n)) for m in range(n)])


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 13, 16, 64])
def test_dft_matches_naive_definition(n, rng):
    x = rng.standard_normal(n)
    got = dft(x)
    want = naive_dft(x)
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)


def test_dft_parseval(rng):
    x = rng.standard_normal(128)
    spec = dft(x)
    time_energy = np.sum(x * x)
    freq_energy = np.sum(np.abs(spec) ** 2) / 128
    assert abs(time_energy - freq_energy) / time_energy < 1e-12


def test_mel_scale_roundtrip():
    f = np.array([0.0, 100.0, 440.0, 1000.0, 7999.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, rtol=1e-10)


def test_hz_to_mel_anchor():
    # 1000 Hz sits at 2595*log10(1 + 1000/700) mels by definition.
    assert hz_to_mel(1000.0) == pytest.approx(2595.0 * np.log10(1 + 1000.0 / 700.0))


def test_mel_bank_shape_and_coverage():
    bank = mel_bank(n_mels=10, win=256, sample_rate=4000)
    assert bank.shape == (10, 129)
    assert np.all(bank >= 0)
    assert np.all(bank.sum(axis=1) > 0)


def test_stft_frame_count_examples():
    # Centered: reflect pad by win//2 each side before framing.
    assert stft_frame_count(256, win=256, hop=64) == 1 + (512 - 256) // 64
    assert stft_frame_count(512, win=256, hop=64) == 1 + (768 - 256) // 64
    # Shorter than one window: zero-pad up to win first.
    assert stft_frame_count(255, win=256, hop=64) == stft_frame_count(256, 256, 64)


def test_stft_mag_matches_manual_hann_rfft(rng):
    x = rng.standard_normal(300).astype(np.float64)
    win, hop = 128, 32
    got = stft_mag(T.constant(x, dtype=np.float64), win, hop).data
    padded = np.pad(x, win // 2, mode="reflect")
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)
    frames = np.stack([padded[i: i + win] * w
                       for i in range(0, len(padded) - win + 1, hop)])
    want = np.abs(np.fft.rfft(frames, axis=-1))
    np.testing.assert_allclose(got, want, rtol=1e-7, atol=1e-6)


def test_mel_spectrogram_shape(rng):
    x = rng.standard_normal(600).astype(np.float32)
    scale = SpecScale(win=256, hop=64, n_mels=20)
    out = mel_spectrogram(T.constant(x), scale, 4000)
    assert out.shape == (stft_frame_count(600, 256, 64), 20)


def test_multiscale_mel_loss_zero_on_identical(rng):
    x = rng.standard_normal(2048).astype(np.float32)
    loss = multiscale_mel_loss(T.constant(x), T.constant(x.copy()),
                               default_scales(), 16000)
    assert loss.item() == pytest.approx(0.0, abs=1e-7)


def test_multiscale_mel_loss_positive_and_differentiable(rng):
    x = rng.standard_normal(2048).astype(np.float32)
    y = T.parameter(rng.standard_normal(2048))
    loss = multiscale_mel_loss(T.constant(x), y, default_scales(), 16000)
    assert loss.item() > 0
    loss.backward()
    assert y.grad is not None and np.any(y.grad != 0)


def test_default_scales_resolutions():
    wins = [s.win for s in default_scales()]
    assert wins == [64, 128, 256, 512]
    for s in default_scales():
        assert s.hop * 4 == s.win


def test_snr_identical_hits_cap(rng):
    x = rng.standard_normal(100)
    assert snr_db(x, x.copy()) == SNR_CAP_DB


def test_snr_known_value():
    ref = np.ones(4)
    est = np.ones(4) * 0.9
    want = 10 * np.log10(4.0 / (4 * 0.01))
    assert snr_db(ref, est) == pytest.approx(want, rel=1e-9)


def test_snr_silent_reference_rejected():
    with pytest.raises(ContractError):
        snr_db(np.zeros(5), np.ones(5))


def test_snr_shape_mismatch_rejected():
    with pytest.raises(ContractError):
        snr_db(np.ones(5), np.ones(4))
