import numpy as np
import pytest
import torch
import torch.nn.functional as F

from honkpipe.audio_io import AudioClip, segment
from honkpipe.errors import DataError, WindowTooShort
from honkpipe.spectrogram import (Spectrogram, bilinear_resize, hann, load_spectrogram,
                                  save_spectrogram, stft_magnitude, stft_spectrogram, to_image)

SR = 8000


def _tone(*freqs, n=SR):
    t = np.arange(n) / SR
    return sum(np.sin(2 * np.pi * f * t) for f in freqs)


def _dft_peaks(x, fft_size=256, hop=128):
    """Independent oracle: explicit DFT sums per frame."""
    k = np.arange(fft_size // 2 + 1)[:, None]
    n = np.arange(fft_size)[None, :]
    basis = np.exp(-2j * np.pi * k * n / fft_size)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(fft_size) / fft_size)
    mags = []
    for s in range(0, len(x) - fft_size + 1, hop):
        mags.append(np.abs(basis @ (x[s:s + fft_size] * w)))
    return np.array(mags).T


def test_shape_one_second():
    spec = stft_spectrogram(_tone(1000), sample_rate=SR)
    assert spec.shape == (129, 61)
    assert spec.freq_resolution == 31.25
    assert spec.time_resolution == 128 / SR


def test_pure_tone_peak_bin():
    x = _tone(1000)
    spec = stft_spectrogram(x, sample_rate=SR)
    expected = round(1000 / (SR / 256))
    assert expected == 32
    assert np.all(spec.values.argmax(axis=0) == expected)
    assert np.all(_dft_peaks(x).argmax(axis=0) == 32)


def test_two_tones_two_peaks():
    x = _tone(500, 2000)
    spec = stft_spectrogram(x, sample_rate=SR)
    oracle = _dft_peaks(x)
    assert np.allclose(stft_magnitude(x), oracle, atol=1e-9)
    for frame in spec.values.T:
        local = [i for i in range(1, len(frame) - 1)
                 if frame[i] > frame[i - 1] and frame[i] >= frame[i + 1] and frame[i] > -20]
        assert local == [16, 64]


def test_parseval_per_frame(rng):
    x = rng.standard_normal(SR)
    mag = stft_magnitude(x, taper="rect")
    for j in range(mag.shape[1]):
        frame = x[j * 128: j * 128 + 256]
        full = np.concatenate([mag[:, j], mag[1:-1, j][::-1]])
        assert np.sum(full ** 2) / 256 == pytest.approx(np.sum(frame ** 2), rel=1e-10)


def test_zero_window_is_floor():
    spec = stft_spectrogram(np.zeros(SR), sample_rate=SR)
    assert np.all(spec.values == -80.0)


def test_range_and_max():
    spec = stft_spectrogram(_tone(700) + 0.01, sample_rate=SR)
    assert spec.values.max() == 0.0
    assert spec.values.min() >= -80.0


def test_periodic_hann():
    w = hann(8)
    assert w[0] == 0.0 and w[4] == pytest.approx(1.0)
    assert np.allclose(w[1:], w[1:][::-1])


def test_window_too_short():
    with pytest.raises(WindowTooShort):
        stft_spectrogram(np.zeros(100), sample_rate=SR)


def test_segment_window_input_carries_meta():
    w = segment(AudioClip(0.3 * _tone(1000), SR, "c"))[0]
    spec = stft_spectrogram(w)
    assert spec.window_meta is w
    assert spec.peak_amplitude == pytest.approx(w.peak_amplitude)


# --------------------------------------------------------------------------- images


def test_image_shape():
    spec = stft_spectrogram(_tone(1000), sample_rate=SR)
    img = to_image(spec)
    assert img.shape == (224, 224, 3)
    assert img.min() >= 0 and img.max() <= 1
    assert np.array_equal(img[..., 0], img[..., 2])


def test_constant_spec_half():
    assert np.all(to_image(np.full((5, 7), -3.0)) == 0.5)


def test_bilinear_closed_form():
    img = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = bilinear_resize(img, 4, 4)
    # half-pixel centres: output samples sit at source coordinates -0.25, 0.25, 0.75, 1.25
    # centre 2x2 block: (0.25, 0.25) -> 0.375, (0.25, 0.75) -> 0.625
    assert np.allclose(out[1:3, 1:3], [[0.375, 0.625], [0.625, 0.375]], atol=1e-12)
    assert np.allclose(out[0, 0], 0.0) and np.allclose(out[0, 3], 1.0)
    ref = F.interpolate(torch.tensor(img)[None, None], size=(4, 4), mode="bilinear",
                        align_corners=False)[0, 0].numpy()
    assert np.allclose(out, ref, atol=1e-12)


def test_image_low_frequency_at_bottom():
    spec = np.full((10, 10), -80.0)
    spec[0, :] = 0.0  # lowest bin loud
    img = to_image(spec, 10, 10)[..., 0]
    assert np.all(img[-1] == 1.0) and np.all(img[0] == 0.0)


def test_resize_matches_torch(rng):
    img = rng.random((129, 61))
    ref = F.interpolate(torch.tensor(img)[None, None], size=(224, 224), mode="bilinear",
                        align_corners=False)[0, 0].numpy()
    assert np.allclose(bilinear_resize(img, 224, 224), ref, atol=1e-10)


# --------------------------------------------------------------------------- container


def test_container_round_trip(tmp_path, rng):
    spec = Spectrogram(rng.uniform(-80, 0, (129, 61)), 31.25, 0.016)
    p = tmp_path / "s.hnkspec"
    save_spectrogram(p, spec)
    data = p.read_bytes()
    assert data[:8] == b"HNKSPEC1"
    assert len(data) == 32 + 129 * 61 * 4
    back = load_spectrogram(p)
    assert back.shape == (129, 61)
    assert np.allclose(back.values, spec.values.astype(np.float32))
    assert back.freq_resolution == 31.25 and back.time_resolution == 0.016


def test_container_bad_magic(tmp_path):
    p = tmp_path / "x.hnkspec"
    p.write_bytes(b"NOTSPEC!" + bytes(24))
    with pytest.raises(DataError):
        load_spectrogram(p)
