"""Log-magnitude STFT spectrograms and their image/container forms."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, WindowTooShort

FLOOR_DB = -80.0
MAGIC = b"HNKSPEC1"


@dataclass
class Spectrogram:
    values: np.ndarray  # [n_freq_bins, n_time_frames], dB in [floor_db, 0]
    freq_resolution: float  # Hz / bin
    time_resolution: float  # s / frame
    window_meta: object = None
    floor_db: float = FLOOR_DB
    masks: tuple = field(default_factory=tuple)

    @property
    def shape(self):
        return self.values.shape

    @property
    def peak_amplitude(self):
        return getattr(self.window_meta, "peak_amplitude", None)

    def transposed(self) -> "Spectrogram":
        return replace(self, values=self.values.T.copy(),
                       freq_resolution=self.time_resolution,
                       time_resolution=self.freq_resolution, masks=())


def hann(n: int) -> np.ndarray:
    """Periodic Hann taper (the DFT-even form used for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _taper(name: str, n: int) -> np.ndarray:
    if name.lower() in ("hann", "hanning"):
        return hann(n)
    if name.lower() in ("rect", "boxcar", "none"):
        return np.ones(n)
    raise ValueError(f"unknown taper {name!r}")


def stft_magnitude(x: np.ndarray, fft_size: int = 256, hop: int = 128,
                   taper: str = "Hann") -> np.ndarray:
    """|STFT| as [fft_size // 2 + 1, n_frames]; frames start at 0, no centring."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < fft_size:
        raise WindowTooShort(f"window of {len(x)} samples < fft_size {fft_size}")
    n_frames = 1 + (len(x) - fft_size) // hop
    idx = np.arange(fft_size)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * _taper(taper, fft_size)[None, :]
    return np.abs(np.fft.rfft(frames, axis=1)).T


def magnitude_to_db(mag: np.ndarray, floor_db: float = FLOOR_DB) -> np.ndarray:
    ref = float(mag.max())
    if ref <= 0.0:
        return np.full(mag.shape, floor_db)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / ref)
    return np.clip(db, floor_db, 0.0)


def stft_spectrogram(window, fft_size: int = 256, hop: int = 128, taper: str = "Hann",
                     floor_db: float = FLOOR_DB, sample_rate: int | None = None) -> Spectrogram:
    """Spectrogram of a :class:`SegmentWindow` (or raw samples with ``sample_rate``).

    dB values are referenced to the matrix maximum and clipped at ``floor_db``.
    """
    if hasattr(window, "samples"):
        x, sr, meta = window.samples, window.sample_rate, window
    else:
        if sample_rate is None:
            raise ValueError("sample_rate required for raw sample input")
        x, sr, meta = window, sample_rate, None
    mag = stft_magnitude(x, fft_size, hop, taper)
    return Spectrogram(
        values=magnitude_to_db(mag, floor_db),
        freq_resolution=sr / fft_size,
        time_resolution=hop / sr,
        window_meta=meta,
        floor_db=floor_db,
    )


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centres and edge clamping."""
    in_h, in_w = img.shape

    def coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = coords(in_h, out_h)
    x0, x1, wx = coords(in_w, out_w)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy)[:, None] + bot * wy[:, None]


def normalized_gray(spec, out_h: int = 224, out_w: int = 224) -> np.ndarray:
    """Min-max normalised, resized, single-channel image; low frequencies at the bottom row."""
    v = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 0.0:
        return np.full((out_h, out_w), 0.5)
    norm = (v - lo) / (hi - lo)
    return np.clip(bilinear_resize(norm[::-1], out_h, out_w), 0.0, 1.0)


def to_image(spec, out_h: int = 224, out_w: int = 224) -> np.ndarray:
    """[out_h, out_w, 3] image in [0, 1] with the gray channel triplicated."""
    g = normalized_gray(spec, out_h, out_w)
    return np.repeat(g[:, :, None], 3, axis=2)


def save_spectrogram(path, spec: Spectrogram) -> None:
    """Binary container: magic, dims (2 x uint32), resolutions (2 x float64), float32 data."""
    v = np.ascontiguousarray(spec.values, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", *v.shape))
        fh.write(struct.pack("<dd", spec.freq_resolution, spec.time_resolution))
        fh.write(v.tobytes())


def load_spectrogram(path) -> Spectrogram:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: bad magic {data[:8]!r}")
    n_f, n_t = struct.unpack_from("<II", data, 8)
    fres, tres = struct.unpack_from("<dd", data, 16)
    body = np.frombuffer(data, dtype="<f4", offset=32)
    if body.size != n_f * n_t:
        raise DataError(f"{path}: expected {n_f * n_t} values, found {body.size}")
    return Spectrogram(body.reshape(n_f, n_t).astype(np.float64), fres, tres)


def save_png(path, spec: Spectrogram) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.imsave(path, spec.values, origin="lower", cmap="magma",
               vmin=spec.floor_db, vmax=0.0)
