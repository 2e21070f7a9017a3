"""Read a labelled corpus directory into spectrogram-carrying samples."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio_io import load_wav, segment
from .errors import DataError
from .labeling import LabeledSample
from .spectrogram import load_spectrogram, normalized_gray, stft_spectrogram


def load_corpus(root, split: str | None = None, stft: dict | None = None, window_s: float = 1.0):
    """Return :class:`LabeledSample` objects with spectrograms attached.

    ``labels.jsonl`` rows name a file relative to ``root`` (a WAV, or a
    ``.hnkspec`` container for augmented samples) and a window index.
    """
    root = Path(root)
    labels_path = root / "labels.jsonl"
    if not labels_path.exists():
        raise DataError(f"{root}: missing labels.jsonl")
    stft = stft or {}
    rows = [json.loads(ln) for ln in labels_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if split is not None:
        rows = [r for r in rows if row_split(r) == split]
    cache = {}
    out = []
    for r in rows:
        rel = r["file"]
        if rel.endswith(".hnkspec"):
            spec = load_spectrogram(root / rel)
            out.append(_sample(r, spec))
            continue
        if rel not in cache:
            clip = load_wav(root / rel)
            clip.source_id = rel
            cache[rel] = segment(clip, window_s, window_s)
        windows = cache[rel]
        w = int(r.get("window", 0))
        if w >= len(windows):
            raise DataError(f"{rel}: window {w} out of range ({len(windows)} windows)")
        out.append(_sample(r, stft_spectrogram(windows[w], **stft)))
    return out


def row_split(row: dict) -> str:
    """Explicit ``split`` field, else the first path component."""
    return row.get("split") or row["file"].split("/")[0]


def _sample(r, spec):
    return LabeledSample(r["file"], int(r.get("window", 0)), int(r["label"]), r.get("provenance", "manual"),
                         float(r.get("confidence", 1.0)), spectrogram=spec, parent=r.get("parent"))


def gray_stack(samples, size: int) -> np.ndarray:
    return np.stack([normalized_gray(s.spectrogram, size, size) for s in samples]).astype(np.float32)


def label_array(samples) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)
