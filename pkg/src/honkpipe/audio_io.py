"""WAV and sensor-sidecar ingest, fixed-window segmentation, amplitude/SPL stats."""

from __future__ import annotations

import logging
import math
import warnings
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ClipShorterThanWindow,
    CorruptHeader,
    EmptyFile,
    RangeError,
    UnsupportedFormat,
)

logger = logging.getLogger(__name__)

EPS = 1e-10
CANONICAL_RATE = 8000


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 mono in [-1, 1]
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("AudioClip needs a nonempty 1-D sample array")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)
        np.clip(self.samples, -1.0, 1.0, out=self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class SensorRecord:
    timestamp: int  # epoch ms
    spl_db: float
    intensity: float
    latitude: float
    longitude: float


@dataclass
class SensorLog:
    """Parsed sidecar: records in timestamp order plus bookkeeping of what was skipped."""

    records: list
    malformed_count: int = 0
    malformed_lines: list = field(default_factory=list)
    duplicate_count: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


@dataclass
class SegmentWindow:
    clip_ref: str
    index: int
    start_s: float
    end_s: float
    samples: np.ndarray
    sample_rate: int
    peak_amplitude: float
    rms: float
    spl_dbfs: float
    padded: bool = False


def spl_dbfs(rms: float) -> float:
    return 20.0 * math.log10(max(rms, EPS))


def load_wav(path) -> AudioClip:
    """Read a PCM WAV file into a mono clip.

    8-bit (unsigned) and 16-bit (signed) PCM are supported. Multichannel
    audio is averaged to mono; 16-bit values are scaled by 1/32768.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedFormat(f"{path}: non-PCM WAV ({msg})") from exc
        raise CorruptHeader(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise CorruptHeader(f"{path}: truncated header") from exc

    if width == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit PCM not supported (8/16 only)")
    if n_channels < 1 or data.size % n_channels:
        raise CorruptHeader(f"{path}: sample data does not match channel count {n_channels}")
    if data.size == 0:
        raise CorruptHeader(f"{path}: no sample frames")
    data = data.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(data, rate, source_id=path.stem)


def write_wav(path, clip: AudioClip) -> None:
    """16-bit PCM mono writer; values are rounded and saturated to int16."""
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(ints.tobytes())


_FIELDS = ("timestamp", "spl_db", "intensity", "latitude", "longitude")


def parse_sensor_log(path) -> SensorLog:
    """Parse a ``timestamp,spl_db,intensity,lat,lon`` sidecar.

    Unparseable lines are counted in ``malformed_count``. Out-of-range
    coordinates or negative intensity raise :class:`RangeError`.
    Out-of-order timestamps are sorted with a warning.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not lines:
        raise EmptyFile(f"{path}: no records")

    records, bad = [], []
    for line_no, ln in lines:
        parts = [p.strip() for p in ln.split(",")]
        if line_no == lines[0][0] and parts and parts[0].lower() == "timestamp":
            continue
        if len(parts) != 5:
            bad.append((line_no, ln))
            continue
        try:
            ts = int(parts[0])
            spl, inten, lat, lon = (float(p) for p in parts[1:])
        except ValueError:
            bad.append((line_no, ln))
            continue
        if not all(math.isfinite(v) for v in (spl, inten, lat, lon)):
            bad.append((line_no, ln))
            continue
        if not -90.0 <= lat <= 90.0:
            raise RangeError("latitude", lat, -90, 90, line_no)
        if not -180.0 <= lon <= 180.0:
            raise RangeError("longitude", lon, -180, 180, line_no)
        if inten < 0:
            raise RangeError("intensity", inten, 0, "inf", line_no)
        records.append(SensorRecord(ts, spl, inten, lat, lon))

    if not records and not bad:
        raise EmptyFile(f"{path}: header only")
    if bad:
        logger.warning("%s: %d malformed line(s) skipped", path, len(bad))

    stamps = [r.timestamp for r in records]
    if any(b <= a for a, b in zip(stamps, stamps[1:])):
        warnings.warn(f"{path}: timestamps not strictly increasing; sorting", stacklevel=2)
    records.sort(key=lambda r: r.timestamp)
    deduped, dupes = [], 0
    for r in records:
        if deduped and deduped[-1].timestamp == r.timestamp:
            dupes += 1
            continue
        deduped.append(r)
    return SensorLog(deduped, len(bad), [ln for _, ln in bad], dupes)


def _window_stats(x: np.ndarray):
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    rms = float(np.sqrt(np.mean(x * x))) if x.size else 0.0
    return min(peak, 1.0), min(rms, 1.0)


def segment(clip: AudioClip, window_s: float = 1.0, hop_s: float = 1.0):
    """Cut ``clip`` into fixed windows.

    A trailing remainder shorter than half a window is dropped; a longer one
    is zero-padded to full length.
    """
    if window_s <= 0 or hop_s <= 0:
        raise ValueError("window_s and hop_s must be positive")
    sr = clip.sample_rate
    win = int(round(window_s * sr))
    hop = int(round(hop_s * sr))
    n = len(clip.samples)
    if n < win:
        raise ClipShorterThanWindow(
            f"{clip.source_id or 'clip'}: {clip.duration:.3f}s < window {window_s}s"
        )

    starts = list(range(0, n - win + 1, hop))
    next_start = starts[-1] + hop
    pad_last = n - next_start >= win / 2 if next_start < n else False
    if pad_last:
        starts.append(next_start)

    out = []
    for i, s in enumerate(starts):
        x = clip.samples[s : s + win]
        padded = len(x) < win
        if padded:
            x = np.concatenate([x, np.zeros(win - len(x))])
        peak, rms = _window_stats(x)
        out.append(
            SegmentWindow(
                clip_ref=clip.source_id,
                index=i,
                start_s=s / sr,
                end_s=(s + win) / sr,
                samples=x,
                sample_rate=sr,
                peak_amplitude=peak,
                rms=rms,
                spl_dbfs=spl_dbfs(rms),
                padded=padded,
            )
        )
    return out
