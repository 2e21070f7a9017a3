import math
import wave

import numpy as np
import pytest

from honkpipe.audio_io import (AudioClip, EPS, load_wav, parse_sensor_log, segment, spl_dbfs,
                               write_wav)
from honkpipe.errors import (ClipShorterThanWindow, CorruptHeader, EmptyFile, RangeError,
                             UnsupportedFormat)


def _write_pcm(path, frames: np.ndarray, rate=8000, width=2, channels=1):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(frames.tobytes())


def test_duration_of_one_second_clip(tmp_path):
    p = tmp_path / "a.wav"
    _write_pcm(p, np.zeros(8000, dtype="<i2"))
    clip = load_wav(p)
    assert clip.sample_rate == 8000
    assert clip.duration == 1.0


def test_stereo_antiphase_averages_to_zero(tmp_path, rng):
    x = rng.integers(-20000, 20000, 4000).astype("<i2")
    inter = np.stack([x, -x], axis=1).reshape(-1).astype("<i2")
    p = tmp_path / "s.wav"
    _write_pcm(p, inter, channels=2)
    clip = load_wav(p)
    assert len(clip.samples) == 4000
    assert np.all(clip.samples == 0.0)


def test_full_scale_scaling(tmp_path):
    p = tmp_path / "fs.wav"
    _write_pcm(p, np.full(100, 32767, dtype="<i2"))
    clip = load_wav(p)
    assert np.allclose(clip.samples, 32767 / 32768, atol=0, rtol=0)
    assert clip.samples[0] == pytest.approx(0.99997, abs=1e-5)


def test_eight_bit_unsigned(tmp_path):
    p = tmp_path / "u8.wav"
    _write_pcm(p, np.array([128, 255, 0], dtype=np.uint8), width=1)
    assert np.allclose(load_wav(p).samples, [0.0, 127 / 128, -1.0])


def test_round_trip(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 8000)
    p = tmp_path / "rt.wav"
    write_wav(p, AudioClip(x, 8000))
    y = load_wav(p).samples
    assert np.max(np.abs(x - y)) <= 0.5 / 32768 + 1e-12


def test_unsupported_and_corrupt(tmp_path):
    p = tmp_path / "w24.wav"
    _write_pcm(p, np.zeros(30, dtype=np.uint8), width=3)
    with pytest.raises(UnsupportedFormat):
        load_wav(p)
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF\x00\x00")
    with pytest.raises(CorruptHeader):
        load_wav(bad)


def test_samples_clipped_to_unit_range():
    clip = AudioClip(np.array([2.0, -3.0, 0.5]), 8000)
    assert clip.samples.tolist() == [1.0, -1.0, 0.5]


# --------------------------------------------------------------------------- sensor log


def _log(tmp_path, text):
    p = tmp_path / "log.csv"
    p.write_text(text)
    return p


def test_three_good_lines_sorted(tmp_path):
    p = _log(tmp_path, "timestamp,spl_db,intensity,latitude,longitude\n"
                       "3,70,1,22.5,88.3\n1,60,1,22.5,88.3\n2,65,1,22.5,88.3\n")
    with pytest.warns(UserWarning):
        log = parse_sensor_log(p)
    assert [r.timestamp for r in log] == [1, 2, 3]
    assert log.malformed_count == 0


def test_latitude_out_of_range_names_field(tmp_path):
    p = _log(tmp_path, "1,60,1,95,88\n")
    with pytest.raises(RangeError, match="latitude"):
        parse_sensor_log(p)


def test_negative_intensity(tmp_path):
    with pytest.raises(RangeError, match="intensity"):
        parse_sensor_log(_log(tmp_path, "1,60,-1,20,88\n"))


def test_malformed_counted(tmp_path):
    log = parse_sensor_log(_log(tmp_path, "1,60,1,20,88\nnot,a,row\n2,61,1,20,88\n"))
    assert len(log) == 2
    assert log.malformed_count == 1


def test_duplicates_dropped(tmp_path):
    with pytest.warns(UserWarning):
        log = parse_sensor_log(_log(tmp_path, "1,60,1,20,88\n1,61,1,20,88\n2,61,1,20,88\n"))
    assert len(log) == 2
    assert log.duplicate_count == 1


def test_empty_log(tmp_path):
    with pytest.raises(EmptyFile):
        parse_sensor_log(_log(tmp_path, "\n\n"))


# --------------------------------------------------------------------------- segmentation


@pytest.mark.parametrize("seconds,expected", [(10.0, 10), (2.4, 2), (2.5, 3), (2.6, 3), (1.0, 1)])
def test_window_count(seconds, expected):
    clip = AudioClip(np.zeros(int(round(seconds * 8000))), 8000)
    assert len(segment(clip)) == expected


def test_padded_tail_is_full_length():
    clip = AudioClip(np.ones(int(2.6 * 8000)) * 0.1, 8000)
    wins = segment(clip)
    assert wins[-1].padded and len(wins[-1].samples) == 8000
    assert not wins[0].padded


def test_silent_windows():
    for w in segment(AudioClip(np.zeros(3 * 8000), 8000)):
        assert w.rms == 0.0
        assert w.spl_dbfs == pytest.approx(20 * math.log10(EPS))


def test_window_stats():
    x = 0.5 * np.sin(2 * np.pi * 440 * np.arange(8000) / 8000)
    w = segment(AudioClip(x, 8000))[0]
    assert w.peak_amplitude == pytest.approx(0.5, abs=1e-3)
    assert w.rms == pytest.approx(0.5 / math.sqrt(2), rel=1e-6)
    assert w.spl_dbfs == pytest.approx(spl_dbfs(0.5 / math.sqrt(2)), rel=1e-9)


def test_clip_shorter_than_window():
    with pytest.raises(ClipShorterThanWindow):
        segment(AudioClip(np.zeros(100), 8000))
