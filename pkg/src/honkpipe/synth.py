"""Synthetic traffic audio: horn models per vehicle class, ambient noise, scenes, corpora.

The generator stands in for field recordings so that the rest of the
pipeline can be checked against known ground truth.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, segment, write_wav

SAMPLE_RATE = 8000
CLASS_NAMES = {0: "non_honk", 1: "LWV", 2: "MWV", 3: "HWV"}
CLASS_IDS = {"LWV": 1, "MWV": 2, "HWV": 3}
LOCATIONS = ("residential", "marketplace", "highway")
SLOTS = ("morning", "afternoon", "evening")
NOISE_PROFILES = ("none", "white", "babble", "engine")


@dataclass(frozen=True)
class HonkModel:
    vclass: str
    f0_range: tuple
    n_harmonics: int
    duration_range: tuple = (0.2, 3.0)
    amplitude_range: tuple = (0.3, 0.9)
    am_rate: float = 0.0
    am_depth: float = 0.3

    def __post_init__(self):
        if self.vclass not in CLASS_IDS:
            raise ValueError(f"unknown vehicle class {self.vclass!r}")
        lo, hi = self.duration_range
        if not 0.2 <= lo <= hi <= 3.0:
            raise ValueError("duration_range must lie within [0.2, 3.0] s")
        if not 0.0 <= self.amplitude_range[0] <= self.amplitude_range[1] <= 1.0:
            raise ValueError("amplitude_range must lie within [0, 1]")

    @property
    def label(self) -> int:
        return CLASS_IDS[self.vclass]


# Two-wheeler horns are shrill, car horns mid-band, bus/truck air horns low and harmonic-rich.
DEFAULT_MODELS = {
    "LWV": HonkModel("LWV", (1200.0, 3000.0), 2, am_rate=0.0),
    "MWV": HonkModel("MWV", (600.0, 1100.0), 3, am_rate=6.0),
    "HWV": HonkModel("HWV", (150.0, 500.0), 8, am_rate=2.5),
}


def _ramp(x: np.ndarray, sr: int, ramp_s: float = 0.01) -> np.ndarray:
    n = min(int(round(ramp_s * sr)), len(x) // 2)
    if n > 0:
        r = np.linspace(0.0, 1.0, n, endpoint=False)
        x[:n] *= r
        x[-n:] *= r[::-1]
    return x


def honk_waveform(model: HonkModel, rng: np.random.Generator, duration: float | None = None,
                  sample_rate: int = SAMPLE_RATE, amplitude: float | None = None) -> np.ndarray:
    if duration is None:
        duration = rng.uniform(*model.duration_range)
    if amplitude is None:
        amplitude = rng.uniform(*model.amplitude_range)
    f0 = rng.uniform(*model.f0_range)
    n = max(int(round(duration * sample_rate)), 1)
    t = np.arange(n) / sample_rate
    nyq = sample_rate / 2
    x = np.zeros(n)
    for h in range(1, model.n_harmonics + 1):
        if h * f0 >= 0.95 * nyq:
            break
        x += np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
    if model.am_rate > 0:
        x *= 1.0 - model.am_depth * 0.5 * (1 + np.sin(2 * np.pi * model.am_rate * t))
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= amplitude / peak
    return _ramp(x, sample_rate)


def synth_honk(model: HonkModel, seed: int, sample_rate: int = SAMPLE_RATE,
               duration: float | None = None) -> AudioClip:
    """Harmonic stack with random f0 in the class band, tremolo and 10 ms ramps."""
    rng = np.random.default_rng(seed)
    x = honk_waveform(model, rng, duration, sample_rate)
    return AudioClip(x, sample_rate, source_id=f"{model.vclass}-{seed}")


def _lowpass_noise(rng, n, sr, cutoff):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    spec *= 1.0 / np.sqrt(1.0 + (f / cutoff) ** 4)
    return np.fft.irfft(spec, n)


def noise(profile: str, n: int, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Unit-RMS ambient noise of the given profile."""
    if profile == "none":
        return np.zeros(n)
    t = np.arange(n) / sample_rate
    if profile == "white":
        x = rng.standard_normal(n)
    elif profile == "engine":
        firing = rng.uniform(25.0, 60.0)
        x = _lowpass_noise(rng, n, sample_rate, 250.0)
        x *= 1.0 + 0.5 * np.sin(2 * np.pi * firing * t)
        x += 0.1 * rng.standard_normal(n)
    elif profile == "babble":
        x = np.zeros(n)
        for _ in range(6):
            f0 = rng.uniform(100.0, 220.0)
            vib = 1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 6.3))
            phase = 2 * np.pi * np.cumsum(f0 * vib) / sample_rate
            voice = sum(np.sin(h * phase) / h for h in range(1, 12) if h * f0 < 3500)
            syll = np.clip(np.sin(2 * np.pi * rng.uniform(3, 5) * t + rng.uniform(0, 6.3)), 0, None)
            x += voice * syll
        x += 0.05 * rng.standard_normal(n)
    else:
        raise ValueError(f"unknown noise profile {profile!r}")
    rms = np.sqrt(np.mean(x * x))
    return x / rms if rms > 0 else x


def mix_at_snr(signal: np.ndarray, background: np.ndarray, snr_db: float,
               active: np.ndarray | None = None) -> tuple:
    """Scale ``background`` so that signal/background RMS over ``active`` equals ``snr_db``.

    Returns (mixture, scaled_background).
    """
    mask = (signal != 0) if active is None else active
    if not np.any(mask):
        return signal.copy(), np.zeros_like(background)
    s_rms = np.sqrt(np.mean(signal[mask] ** 2))
    b_rms = np.sqrt(np.mean(background[mask] ** 2))
    if b_rms == 0:
        return signal.copy(), np.zeros_like(background)
    scaled = background * (s_rms / b_rms) / 10 ** (snr_db / 20)
    return signal + scaled, scaled


def non_honk_waveform(rng: np.random.Generator, n: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Ambient traffic without horns: engine rumble or a tyre/wind noise burst."""
    t = np.arange(n) / sample_rate
    amp = rng.uniform(0.05, 0.5)
    if rng.random() < 0.5:
        x = noise("engine", n, rng, sample_rate)
    else:
        x = _lowpass_noise(rng, n, sample_rate, rng.uniform(800.0, 3000.0))
        centre, width = rng.uniform(0.2, 0.8), rng.uniform(0.15, 0.5)
        x *= np.exp(-0.5 * ((t / t[-1] - centre) / width) ** 2)
    peak = np.max(np.abs(x))
    return x * (amp / peak) if peak > 0 else x


def _fit(x: np.ndarray, limit: float = 0.99) -> np.ndarray:
    peak = np.max(np.abs(x))
    return x * (limit / peak) if peak > limit else x


# --------------------------------------------------------------------------- scenes


@dataclass(frozen=True)
class HonkEvent:
    onset_s: float
    vclass: str
    duration_s: float | None = None
    amplitude: float | None = None


@dataclass
class SceneScript:
    location: str = "residential"
    slot: str = "morning"
    duration_s: float = 60.0
    honk_events: list = field(default_factory=list)
    noise_profile: str = "none"
    snr_db: float = 10.0

    def __post_init__(self):
        self.honk_events = [e if isinstance(e, HonkEvent) else HonkEvent(*e) for e in self.honk_events]
        if self.location not in LOCATIONS:
            raise ValueError(f"unknown location {self.location!r}")
        if self.slot not in SLOTS:
            raise ValueError(f"unknown slot {self.slot!r}")
        if self.noise_profile not in NOISE_PROFILES:
            raise ValueError(f"unknown noise profile {self.noise_profile!r}")
        for e in self.honk_events:
            if not 0.0 <= e.onset_s < self.duration_s:
                raise ValueError(f"event onset {e.onset_s} outside [0, {self.duration_s})")


def window_labels(events, durations, amplitudes, n_windows, window_s=1.0):
    """Label each window with the class of the event covering >= 50% of it.

    Several qualifying events resolve to the louder one; equal loudness falls
    back to larger coverage, then the lower class id.
    """
    labels = []
    for w in range(n_windows):
        w0, w1 = w * window_s, (w + 1) * window_s
        best = None
        for e, d, a in zip(events, durations, amplitudes):
            cover = max(0.0, min(w1, e.onset_s + d) - max(w0, e.onset_s))
            if cover + 1e-9 < 0.5 * window_s:
                continue
            key = (a, cover, -CLASS_IDS[e.vclass])
            if best is None or key > best[0]:
                best = (key, CLASS_IDS[e.vclass])
        labels.append(0 if best is None else best[1])
    return labels


def synth_scene(script: SceneScript, seed: int, models=None, sample_rate: int = SAMPLE_RATE,
                window_s: float = 1.0):
    """Render a scene; returns (clip, per-window labels)."""
    models = models or DEFAULT_MODELS
    rng = np.random.default_rng(seed)
    n = int(round(script.duration_s * sample_rate))
    honks = np.zeros(n)
    durations, amps = [], []
    for e in script.honk_events:
        m = models[e.vclass]
        d = e.duration_s if e.duration_s is not None else rng.uniform(*m.duration_range)
        a = e.amplitude if e.amplitude is not None else rng.uniform(*m.amplitude_range)
        x = honk_waveform(m, rng, d, sample_rate, a)
        s = int(round(e.onset_s * sample_rate))
        x = x[: max(0, n - s)]
        honks[s : s + len(x)] += x
        durations.append(d)
        amps.append(a)
    mix = honks
    if script.noise_profile != "none":
        bg = noise(script.noise_profile, n, rng, sample_rate)
        if np.any(honks != 0):
            mix, _ = mix_at_snr(honks, bg, script.snr_db)
        else:
            mix = 0.1 * bg
    clip = AudioClip(_fit(mix), sample_rate, source_id=f"{script.location}-{script.slot}-{seed}")
    n_win = len(segment(clip, window_s, window_s)) if clip.duration >= window_s else 0
    return clip, window_labels(script.honk_events, durations, amps, n_win, window_s)


# Events per minute for each class, before the slot multiplier.
LOCATION_RATES = {
    "residential": {"LWV": 0.4, "MWV": 0.1, "HWV": 0.0},
    "marketplace": {"LWV": 6.0, "MWV": 5.0, "HWV": 0.3},
    "highway": {"LWV": 1.0, "MWV": 2.0, "HWV": 4.0},
}
SLOT_FACTOR = {
    "residential": {"morning": 1.0, "afternoon": 1.0, "evening": 1.0},
    "marketplace": {"morning": 1.0, "afternoon": 0.6, "evening": 1.0},
    "highway": {"morning": 0.8, "afternoon": 1.0, "evening": 1.2},
}


def script_for_location(location: str, slot: str = "morning", duration_s: float = 300.0,
                        seed: int = 0, noise_profile: str = "none", snr_db: float = 10.0) -> SceneScript:
    """Scene script whose honk mix follows the location's traffic profile.

    Event counts are fixed by rate x duration; each event sits inside its own
    one-second slot so it labels exactly one window.
    """
    rng = np.random.default_rng(seed)
    minutes = duration_s / 60.0
    counts = {c: int(round(r * SLOT_FACTOR[location][slot] * minutes))
              for c, r in LOCATION_RATES[location].items()}
    n_slots = int(duration_s)
    total = sum(counts.values())
    if total > n_slots:
        raise ValueError("too many events for scene duration")
    slots = rng.choice(n_slots, size=total, replace=False)
    classes = [c for c, k in counts.items() for _ in range(k)]
    events = []
    for s, c in zip(slots, classes):
        off = rng.uniform(0.0, 0.2)
        events.append(HonkEvent(float(s) + off, c, float(rng.uniform(0.6, 0.8))))
    events.sort(key=lambda e: e.onset_s)
    return SceneScript(location, slot, duration_s, events, noise_profile, snr_db)


# --------------------------------------------------------------------------- corpora


PRESETS = {
    "smoke": {"train": 200, "test": 50, "noise": "none", "snr_db": [20.0]},
    "smoke-babble": {"train": 200, "test": 50, "noise": "babble", "snr_db": [0.0]},
    "tiny": {"train": 60, "test": 15, "noise": "none", "snr_db": [20.0]},
}


def synth_window(label: int, rng: np.random.Generator, noise_profile: str = "none",
                 snr_db: float = 20.0, models=None, sample_rate: int = SAMPLE_RATE,
                 window_s: float = 1.0) -> np.ndarray:
    """One labelled window: a honk covering 60-100% of it, or horn-free ambience."""
    models = models or DEFAULT_MODELS
    n = int(round(window_s * sample_rate))
    if label == 0:
        x = non_honk_waveform(rng, n, sample_rate)
        if noise_profile != "none":
            x = x + np.sqrt(np.mean(x * x)) * noise(noise_profile, n, rng, sample_rate)
        return _fit(x)
    model = models[CLASS_NAMES[label]]
    d = rng.uniform(0.6, 1.0) * window_s
    h = honk_waveform(model, rng, d, sample_rate)
    start = int(rng.integers(0, n - len(h) + 1))
    sig = np.zeros(n)
    sig[start : start + len(h)] = h
    if noise_profile != "none":
        active = np.zeros(n, dtype=bool)
        active[start : start + len(h)] = True
        sig, _ = mix_at_snr(sig, noise(noise_profile, n, rng, sample_rate), snr_db, active)
    return _fit(sig)


def synth_corpus(spec, seed: int, out_dir) -> Path:
    """Write ``{train,test}/<class>/<uuid>.wav`` plus ``labels.jsonl`` under ``out_dir``.

    ``spec`` is a preset name or a dict with per-class ``train``/``test``
    counts (int or {label: count}), a ``noise`` profile and an ``snr_db`` sweep.
    """
    if isinstance(spec, str):
        spec = PRESETS[spec]
    out = Path(out_dir)
    names = random_names(seed)
    sweep = list(spec.get("snr_db", [20.0]))
    rows = []
    for split_id, split in enumerate(("train", "test")):
        per_class = spec[split]
        if isinstance(per_class, int):
            per_class = {c: per_class for c in range(4)}
        for label in range(4):
            cdir = out / split / CLASS_NAMES[label]
            cdir.mkdir(parents=True, exist_ok=True)
            for k in range(int(per_class.get(label, per_class.get(str(label), 0)))):
                rng = np.random.default_rng(np.random.SeedSequence([seed, split_id, label, k]))
                snr = sweep[k % len(sweep)]
                x = synth_window(label, rng, spec.get("noise", "none"), snr)
                rel = f"{split}/{CLASS_NAMES[label]}/{next(names)}.wav"
                write_wav(out / rel, AudioClip(x, SAMPLE_RATE, source_id=rel))
                rows.append({"file": rel, "window": 0, "label": label})
    with open(out / "labels.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return out


def random_names(seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
    while True:
        yield str(uuid.UUID(bytes=rng.bytes(16), version=4))
