"""Honk statistics per place/time slot and rule-based location context inference."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TooFewSamples, ZeroVariance

CLASS_KEYS = {1: "LWV", 2: "MWV", 3: "HWV"}
VERDICTS = ("residential", "marketplace", "highway", "unknown")


def honk_histogram(labels) -> dict:
    """Count honk windows per class; class 0 is not a honk and is left out."""
    c = Counter(int(x) for x in labels if int(x) != 0)
    return dict(sorted(c.items()))


# --------------------------------------------------------------------------- KDE


def silverman_bandwidth(x) -> float:
    """0.9 * min(sd, IQR / 1.34) * n^(-1/5), falling back to sd when the IQR is zero."""
    x = np.asarray(x, dtype=np.float64)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return float(0.9 * spread * len(x) ** (-0.2))


@dataclass
class GaussianKDE:
    samples: np.ndarray
    bandwidth: float

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        u = (x[:, None] - self.samples[None, :]) / self.bandwidth
        dens = np.exp(-0.5 * u * u).sum(axis=1) / (len(self.samples) * self.bandwidth * math.sqrt(2 * math.pi))
        return dens

    def grid(self, n: int = 512, pad: float = 5.0):
        lo = self.samples.min() - pad * self.bandwidth
        hi = self.samples.max() + pad * self.bandwidth
        xs = np.linspace(lo, hi, n)
        return xs, self(xs)


def spl_kde(spl_samples, bandwidth="silverman") -> GaussianKDE:
    """Gaussian-kernel density of SPL readings (dB).

    ``bandwidth`` is ``"silverman"`` or a positive number.
    """
    x = np.asarray(spl_samples, dtype=np.float64)
    if x.size < 2:
        raise TooFewSamples(f"KDE needs at least 2 samples, got {x.size}")
    if bandwidth == "silverman":
        h = silverman_bandwidth(x)
        if h <= 0:
            raise ZeroVariance("all SPL samples identical; pass a fixed bandwidth")
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ValueError("bandwidth must be positive")
    return GaussianKDE(x, h)


# --------------------------------------------------------------------------- correlation


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0 or syy == 0:
        raise ZeroVariance("Pearson correlation undefined for a constant series")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def honk_spl_correlation(pairs) -> float:
    """Pearson r between per-interval honk counts and mean SPL."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise TooFewSamples(f"need at least 3 intervals, got {len(pairs)}")
    counts, spl = zip(*pairs)
    return pearson_r(counts, spl)


# --------------------------------------------------------------------------- rules


@dataclass
class ContextThresholds:
    """Rule thresholds; defaults were tuned only against the synthetic scene generator."""

    market_frac: float = 0.8  # min LWV+MWV share in a marketplace
    hwv_low: float = 0.1  # max HWV share outside highways
    busy_rate: float = 2.0  # honks/min, marketplace floor
    quiet_rate: float = 1.0  # honks/min, residential ceiling


@dataclass
class ContextSignature:
    location_id: str
    slot: str
    honk_counts: dict
    spl_samples: list = field(default_factory=list)
    duration_s: float = 300.0

    def __post_init__(self):
        self.honk_counts = {int(k): int(v) for k, v in self.honk_counts.items() if int(k) != 0}
        if any(v < 0 for v in self.honk_counts.values()):
            raise ValueError("honk counts must be nonnegative")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")

    @property
    def total(self) -> int:
        return sum(self.honk_counts.values())

    @property
    def rate_per_min(self) -> float:
        return self.total / (self.duration_s / 60.0)

    def share(self, k: int) -> float:
        return self.honk_counts.get(k, 0) / self.total if self.total else 0.0


@dataclass
class ContextVerdict:
    label: str
    rule_trace: list


def _check(location, feature, quantity, value, op, threshold):
    passed = {">": value > threshold, ">=": value >= threshold,
              "<": value < threshold, "<=": value <= threshold}[op]
    return {"location": location, "feature": feature, "quantity": quantity,
            "value": round(float(value), 10), "op": op, "threshold": round(float(threshold), 10),
            "passed": bool(passed)}


def infer_context(sig: ContextSignature, thresholds: ContextThresholds | None = None) -> ContextVerdict:
    """Evaluate the highway, marketplace and residential rule sets in that order.

    The first set whose comparisons all pass names the verdict; every
    comparison made is recorded in ``rule_trace``.
    """
    th = thresholds or ContextThresholds()
    lwv, mwv, hwv = sig.share(1), sig.share(2), sig.share(3)
    rate = sig.rate_per_min
    rule_sets = {
        "highway": [_check("highway", "f1", "hwv_share", hwv, ">", max(lwv, mwv))],
        "marketplace": [
            _check("marketplace", "f1", "lwv_mwv_share", lwv + mwv, ">=", th.market_frac),
            _check("marketplace", "f3", "hwv_share", hwv, "<=", th.hwv_low),
            _check("marketplace", "f2", "rate_per_min", rate, ">=", th.busy_rate),
        ],
        "residential": [
            _check("residential", "f3", "rate_per_min", rate, "<", th.quiet_rate),
            _check("residential", "f2", "hwv_share", hwv, "<=", th.hwv_low),
        ],
    }
    trace = []
    label = "unknown"
    for name, checks in rule_sets.items():
        trace.extend(checks)
        if all(c["passed"] for c in checks):
            label = name
            break
    return ContextVerdict(label, trace)


# --------------------------------------------------------------------------- timeline


@dataclass
class TimelineEntry:
    t_start: float
    t_end: float
    signature: ContextSignature
    verdict: ContextVerdict

    def to_record(self) -> dict:
        spl = self.signature.spl_samples
        return {
            "t_start": self.t_start,
            "t_end": self.t_end,
            "verdict": self.verdict.label,
            "rule_trace": self.verdict.rule_trace,
            "counts": {CLASS_KEYS[k]: self.signature.honk_counts.get(k, 0) for k in CLASS_KEYS},
            "mean_spl": round(float(np.mean(spl)), 6) if spl else None,
        }


def _span(window):
    if hasattr(window, "start_s"):
        return float(window.start_s), float(window.end_s)
    if isinstance(window, (tuple, list)):
        return float(window[0]), float(window[1])
    return float(window), float(window) + 1.0


def context_timeline(stream, slot_s: float = 300.0, thresholds: ContextThresholds | None = None,
                     location_id: str = "trace", slot: str = "morning"):
    """Aggregate ``(window, label, spl)`` items into consecutive ``slot_s`` blocks with a verdict each.

    ``window`` is a SegmentWindow, a ``(start_s, end_s)`` pair or a start time
    for a one-second window. A final block covering less than half of
    ``slot_s`` is dropped unless it is the only one.
    """
    items = [(*_span(w), int(lab), spl) for w, lab, spl in stream]
    if not items:
        return []
    t0 = items[0][0]
    blocks: dict[int, list] = {}
    for start, end, lab, spl in items:
        blocks.setdefault(int((start - t0) // slot_s), []).append((start, end, lab, spl))
    out = []
    keys = sorted(blocks)
    for b in keys:
        rows = blocks[b]
        t_start = t0 + b * slot_s
        t_end = max(r[1] for r in rows)
        covered = sum(r[1] - r[0] for r in rows)
        if b == keys[-1] and len(keys) > 1 and covered < slot_s / 2:
            continue
        sig = ContextSignature(location_id, slot, honk_histogram(r[2] for r in rows),
                               [float(r[3]) for r in rows if r[3] is not None], covered)
        out.append(TimelineEntry(t_start, t_end, sig, infer_context(sig, thresholds)))
    return out


def timeline_jsonl(entries) -> str:
    return "".join(json.dumps(e.to_record(), sort_keys=True) + "\n" for e in entries)


def signature_dict(sig: ContextSignature) -> dict:
    return asdict(sig)
