"""Spectrogram masking augmentation, class balancing by downsampling, stratified splits."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import replace

import numpy as np

from .errors import EmptyClass, MaskWiderThanAxis
from .labeling import N_CLASSES, LabeledSample
from .spectrogram import Spectrogram

logger = logging.getLogger(__name__)

_AXES = {"freq": 0, "time": 1}


def _as_spec(spec) -> Spectrogram:
    if isinstance(spec, Spectrogram):
        return spec
    return Spectrogram(np.asarray(spec, dtype=np.float64), 1.0, 1.0)


def apply_mask(spec, axis: str, ranges) -> Spectrogram:
    """Fill the half-open index ``ranges`` along ``axis`` ('time' or 'freq') with the matrix mean."""
    spec = _as_spec(spec)
    ax = _AXES[axis]
    length = spec.values.shape[ax]
    # exact sum, so the fill does not depend on memory layout (transpose duality)
    fill = math.fsum(spec.values.ravel()) / spec.values.size
    out = spec.values.copy()
    meta = list(spec.masks)
    for start, stop in ranges:
        if not 0 <= start <= stop <= length:
            raise MaskWiderThanAxis(f"{axis} mask [{start}, {stop}) outside axis of length {length}")
        if ax == 0:
            out[start:stop, :] = fill
        else:
            out[:, start:stop] = fill
        meta.append({"axis": axis, "start": int(start), "stop": int(stop), "fill": fill})
    return replace(spec, values=out, masks=tuple(meta))


def draw_masks(length: int, n_masks, max_width_frac: float, rng: np.random.Generator):
    """Random contiguous ranges; widths in [1, floor(frac * length)], none when that is 0."""
    if not 0.0 <= max_width_frac <= 1.0:
        raise MaskWiderThanAxis(f"max_width_frac {max_width_frac} outside [0, 1]")
    lo, hi = (n_masks, n_masks) if np.isscalar(n_masks) else n_masks
    count = int(rng.integers(lo, hi + 1))
    max_w = int(math.floor(max_width_frac * length))
    ranges = []
    for _ in range(count):
        if max_w < 1:
            continue
        w = int(rng.integers(1, max_w + 1))
        start = int(rng.integers(0, length - w + 1))
        ranges.append((start, start + w))
    return ranges


def _mask(spec, axis, n_masks, max_width_frac, seed):
    spec = _as_spec(spec)
    rng = np.random.default_rng(seed)
    ranges = draw_masks(spec.values.shape[_AXES[axis]], n_masks, max_width_frac, rng)
    return apply_mask(spec, axis, ranges)


def time_mask(spec, n_masks=(1, 2), max_width_frac: float = 0.1, seed: int = 0) -> Spectrogram:
    """Hide 1-2 random bands of frames (columns)."""
    return _mask(spec, "time", n_masks, max_width_frac, seed)


def freq_mask(spec, n_masks=(1, 2), max_width_frac: float = 0.1, seed: int = 0) -> Spectrogram:
    """Hide 1-2 random bands of frequency bins (rows)."""
    return _mask(spec, "freq", n_masks, max_width_frac, seed)


def augment_samples(samples, variants: int = 2, seed: int = 0, n_masks=(1, 2),
                    max_width_frac: float = 0.1):
    """Originals followed by ``variants`` masked copies of each.

    Variants alternate time and frequency masking; each copy keeps the
    parent's label and records the parent id.
    """
    out = list(samples)
    for i, s in enumerate(samples):
        for v in range(variants):
            fn = time_mask if v % 2 == 0 else freq_mask
            ss = np.random.SeedSequence([seed, i, v])
            spec = fn(s.spectrogram, n_masks, max_width_frac, seed=ss)
            out.append(LabeledSample(f"{s.file}#aug{v}", s.window, s.label, "augmented",
                                     s.confidence, spectrogram=spec, parent=f"{s.file}:{s.window}"))
    return out


def augmented_size(n_original: int, variants: int) -> int:
    return n_original * (1 + variants)


def _by_class(samples):
    groups = {k: [] for k in range(N_CLASSES)}
    for i, s in enumerate(samples):
        groups[s.label].append(i)
    return groups


def class_counts(samples) -> dict:
    return {k: len(v) for k, v in _by_class(samples).items()}


def balance_classes(samples, seed: int = 0):
    """Downsample every class (uniformly, seeded) to the smallest class count; shuffle."""
    groups = _by_class(samples)
    empty = [k for k, v in groups.items() if not v]
    if empty:
        raise EmptyClass(f"class(es) {empty} have no samples")
    rng = np.random.default_rng(seed)
    n_min = min(len(v) for v in groups.values())
    keep = np.concatenate([rng.choice(np.asarray(v), n_min, replace=False) for v in groups.values()])
    keep = rng.permutation(keep)
    return [samples[i] for i in keep]


def split(samples, train_frac: float = 0.8, stratified: bool = True, seed: int = 0):
    """Return (train, test); per-class train counts are floor(train_frac * n_class)."""
    if not 0.0 < train_frac <= 1.0:
        raise ValueError("train_frac must lie in (0, 1]")
    if train_frac == 1.0:
        warnings.warn("train_frac=1.0 leaves the test set empty", stacklevel=2)
    rng = np.random.default_rng(seed)
    if stratified:
        pools = [np.asarray(v, dtype=int) for v in _by_class(samples).values()]
    else:
        pools = [np.arange(len(samples))]
    tr, te = [], []
    for idx in pools:
        idx = rng.permutation(idx)
        cut = int(math.floor(train_frac * len(idx) + 1e-9))
        tr.append(idx[:cut])
        te.append(idx[cut:])
    tr = rng.permutation(np.concatenate(tr)) if tr else []
    te = rng.permutation(np.concatenate(te)) if te else []
    return [samples[i] for i in tr], [samples[i] for i in te]
