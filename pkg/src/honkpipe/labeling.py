"""Semi-automatic labelling with per-class autoencoders (MAE) and the adversarial MAEGAN variant.

One convolutional autoencoder is fit per class (0 non-honk, 1 LWV, 2 MWV,
3 HWV). The four latent codes are concatenated and a small dense head maps
the joint code to class probabilities. Predicted honks on near-silent windows
are sent back to class 0 by a peak-amplitude gate.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import (
    InsufficientSamples,
    MissingAmplitudeMetadata,
    ModeCollapseDetected,
    ShapeMismatch,
)
from .spectrogram import normalized_gray

logger = logging.getLogger(__name__)

N_CLASSES = 4
PROVENANCES = ("manual", "mae", "maegan", "augmented")


@dataclass
class LabeledSample:
    file: str
    window: int
    label: int
    provenance: str = "manual"
    confidence: float = 1.0
    spectrogram: object = field(default=None, repr=False, compare=False)
    parent: str | None = None

    def __post_init__(self):
        if self.label not in range(N_CLASSES):
            raise ValueError(f"label {self.label} not in 0..3")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def sample_id(self):
        return (self.file, self.window)

    def to_record(self) -> dict:
        rec = {"file": self.file, "window": self.window, "label": self.label,
               "confidence": round(float(self.confidence), 6), "provenance": self.provenance}
        if self.parent is not None:
            rec["parent"] = self.parent
        return rec


def write_labels(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), sort_keys=True) + "\n")


def read_labels(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            if ln.strip():
                r = json.loads(ln)
                out.append(LabeledSample(r["file"], int(r.get("window", 0)), int(r["label"]),
                                         r.get("provenance", "manual"),
                                         float(r.get("confidence", 1.0)), parent=r.get("parent")))
    return out


# --------------------------------------------------------------------------- networks


def _act(name):
    return {"relu": nn.ReLU(), "sigmoid": nn.Sigmoid()}[name]


class BranchAutoencoder(nn.Module):
    """Conv encoder (3 conv+pool stages) -> dense latent; mirrored decoder.

    ``latent = act(W x + b)`` and ``recon = out_act(W_hat z + b_hat)`` with
    the conv stacks playing the role of the feature map around ``W``.
    """

    def __init__(self, latent_dim=32, input_size=64, activation="sigmoid", out_activation="sigmoid",
                 channels=(8, 16, 32)):
        super().__init__()
        if input_size % 8:
            raise ValueError("input_size must be divisible by 8")
        self.latent_dim = latent_dim
        self.input_size = input_size
        c1, c2, c3 = channels
        self.enc = nn.Sequential(
            nn.Conv2d(1, c1, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(c1, c2, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(c2, c3, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        )
        self._grid = (c3, input_size // 8, input_size // 8)
        flat = c3 * (input_size // 8) ** 2
        self.to_latent = nn.Linear(flat, latent_dim)
        self.act = _act(activation)
        self.from_latent = nn.Linear(latent_dim, flat)
        self.dec = nn.Sequential(
            nn.Upsample(scale_factor=2), nn.Conv2d(c3, c2, 3, padding=1), nn.ReLU(),
            nn.Upsample(scale_factor=2), nn.Conv2d(c2, c1, 3, padding=1), nn.ReLU(),
            nn.Upsample(scale_factor=2), nn.Conv2d(c1, 1, 3, padding=1),
        )
        self.out_act = _act(out_activation)

    def encode(self, x):
        if x.shape[-2:] != (self.input_size, self.input_size):
            raise ShapeMismatch(f"expected {self.input_size}x{self.input_size} input, got {tuple(x.shape[-2:])}")
        return self.act(self.to_latent(self.enc(x).flatten(1)))

    def decode(self, z):
        h = F.relu(self.from_latent(z)).view(-1, *self._grid)
        return self.out_act(self.dec(h))

    def forward(self, x):
        return self.decode(self.encode(x))


class LatentHead(nn.Module):
    def __init__(self, in_dim=128, hidden=64, n_classes=N_CLASSES):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_dim, hidden), nn.ReLU(), nn.Linear(hidden, n_classes))
        # latent standardisation fitted alongside the head
        self.register_buffer("z_mean", torch.zeros(in_dim))
        self.register_buffer("z_std", torch.ones(in_dim))

    def forward(self, z):
        return self.net((z - self.z_mean) / self.z_std)


@dataclass
class AEConfig:
    latent_dim: int = 32
    input_size: int = 64
    epochs: int = 50
    lr: float = 3e-3
    batch: int = 16
    min_samples: int = 50
    head_epochs: int = 150
    head_lr: float = 3e-3
    seed: int = 0


def _as_tensor(images) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(images), dtype=torch.float32)
    if t.ndim == 3:
        t = t.unsqueeze(1)
    return t


def ae_images(spectrograms, size: int = 64) -> np.ndarray:
    return np.stack([normalized_gray(s, size, size) for s in spectrograms]).astype(np.float32)


def train_branch_autoencoder(images, config: AEConfig | None = None, seed: int | None = None):
    """Fit one branch on single-class images by minimising per-pixel MSE with Adam.

    Returns ``(model, history)`` where ``history`` holds mean epoch losses.
    """
    cfg = config or AEConfig()
    seed = cfg.seed if seed is None else seed
    x = _as_tensor(images)
    if len(x) < cfg.min_samples:
        raise InsufficientSamples(f"{len(x)} samples < min_samples {cfg.min_samples}")
    torch.manual_seed(seed)
    model = BranchAutoencoder(cfg.latent_dim, cfg.input_size)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(seed)
    history = []
    for _ in range(cfg.epochs):
        perm = torch.randperm(len(x), generator=gen)
        total = 0.0
        for i in range(0, len(x), cfg.batch):
            xb = x[perm[i : i + cfg.batch]]
            loss = F.mse_loss(model(xb), xb)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(xb)
        history.append(total / len(x))
    model.eval()
    return model, history


@torch.no_grad()
def reconstruction_mse(model: BranchAutoencoder, images) -> np.ndarray:
    """Per-sample mean squared reconstruction error."""
    x = _as_tensor(images)
    return ((model(x) - x) ** 2).flatten(1).mean(1).numpy()


def encode_all(x, branches) -> torch.Tensor:
    """Concatenate branch codes as ``[Z0 | Z1 | Z2 | Z3]``."""
    if len(branches) != N_CLASSES:
        raise ShapeMismatch(f"need {N_CLASSES} branches, got {len(branches)}")
    x = _as_tensor(x) if not isinstance(x, torch.Tensor) else x
    if x.ndim == 3:
        x = x.unsqueeze(1)
    with torch.no_grad():
        return torch.cat([b.encode(x) for b in branches], dim=1)


def train_head(z: torch.Tensor, labels, epochs=150, lr=3e-3, seed=0, head=None) -> LatentHead:
    torch.manual_seed(seed)
    head = head or LatentHead(z.shape[1])
    y = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    head.z_mean.copy_(z.mean(0))
    head.z_std.copy_(z.std(0) + 1e-6)
    opt = torch.optim.Adam(head.parameters(), lr=lr)
    for _ in range(epochs):
        loss = F.cross_entropy(head(z), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
    head.eval()
    return head


@torch.no_grad()
def head_proba(head: nn.Module, z: torch.Tensor) -> np.ndarray:
    return torch.softmax(head(z), dim=1).numpy().astype(np.float64)


class MultiLabelAutoencoder:
    """Four branch autoencoders plus the latent classifier head."""

    def __init__(self, branches, head, config: AEConfig):
        self.branches = list(branches)
        self.head = head
        self.config = config
        self.histories = []

    @classmethod
    def fit(cls, images, labels, config: AEConfig | None = None):
        cfg = config or AEConfig()
        images = np.asarray(images, dtype=np.float32)
        labels = np.asarray(labels)
        branches, hists = [], []
        for k in range(N_CLASSES):
            sel = images[labels == k]
            model, hist = train_branch_autoencoder(sel, cfg, seed=cfg.seed * 10 + k)
            branches.append(model)
            hists.append(hist)
        z = encode_all(images, branches)
        head = train_head(z, labels, cfg.head_epochs, cfg.head_lr, seed=cfg.seed)
        mae = cls(branches, head, cfg)
        mae.histories = hists
        return mae

    def predict_proba(self, images) -> np.ndarray:
        return head_proba(self.head, encode_all(images, self.branches))

    def label(self, unlabeled, amp_gate=0.05):
        return mae_label(unlabeled, self.branches, self.head, amp_gate)

    def state_dict(self):
        return {"config": asdict(self.config),
                "branches": [b.state_dict() for b in self.branches],
                "head": self.head.state_dict()}

    @classmethod
    def from_state_dict(cls, state):
        cfg = AEConfig(**state["config"])
        branches = []
        for sd in state["branches"]:
            b = BranchAutoencoder(cfg.latent_dim, cfg.input_size)
            b.load_state_dict(sd)
            b.eval()
            branches.append(b)
        head = LatentHead(N_CLASSES * cfg.latent_dim)
        head.load_state_dict(state["head"])
        head.eval()
        return cls(branches, head, cfg)


def gate_decision(probs, peak_amplitude: float, amp_gate: float = 0.05):
    """Argmax label with the amplitude cross-check; returns (label, confidence)."""
    probs = np.asarray(probs, dtype=np.float64)
    label = int(np.argmax(probs))
    conf = float(probs[label])
    if label != 0 and peak_amplitude < amp_gate:
        return 0, conf * 0.5
    return label, conf


def _sample_meta(spec):
    meta = getattr(spec, "window_meta", None)
    if meta is None or getattr(meta, "peak_amplitude", None) is None:
        raise MissingAmplitudeMetadata("spectrogram has no source window peak amplitude")
    return meta


def mae_label(unlabeled, branches, head, amp_gate: float = 0.05, provenance: str = "mae",
              input_size: int | None = None):
    """Label spectrograms through the branch encoders and head.

    Each spectrogram must carry its source window (``window_meta``) for the
    peak-amplitude gate.
    """
    metas = [_sample_meta(s) for s in unlabeled]
    if not metas:
        return []
    size = input_size or branches[0].input_size
    z = encode_all(ae_images(unlabeled, size), branches)
    probs = head_proba(head, z)
    out = []
    for spec, meta, p in zip(unlabeled, metas, probs):
        label, conf = gate_decision(p, meta.peak_amplitude, amp_gate)
        out.append(LabeledSample(meta.clip_ref, int(meta.index), label, provenance,
                                 min(max(conf, 0.0), 1.0), spectrogram=spec))
    return out


def incremental_label(seed_images, seed_labels, unlabeled, config: AEConfig | None = None,
                      n_groups: int = 5, refit_per_group: bool = True, amp_gate: float = 0.05,
                      min_confidence: float = 0.9):
    """Label ``unlabeled`` in ``n_groups`` batches, optionally refitting after each.

    Confident labels from earlier groups join the training pool before the
    next refit. Returns (labeled samples, final model).
    """
    cfg = config or AEConfig()
    pool_x = list(np.asarray(seed_images, dtype=np.float32))
    pool_y = list(np.asarray(seed_labels))
    mae = MultiLabelAutoencoder.fit(np.stack(pool_x), np.array(pool_y), cfg)
    groups = np.array_split(np.arange(len(unlabeled)), n_groups)
    out = []
    for g, idx in enumerate(groups):
        batch = [unlabeled[i] for i in idx]
        labeled = mae.label(batch, amp_gate)
        out.extend(labeled)
        if refit_per_group and g < len(groups) - 1:
            for s in labeled:
                if s.confidence >= min_confidence:
                    pool_x.append(normalized_gray(s.spectrogram, cfg.input_size, cfg.input_size).astype(np.float32))
                    pool_y.append(s.label)
            mae = MultiLabelAutoencoder.fit(np.stack(pool_x), np.array(pool_y), cfg)
    return out, mae


# --------------------------------------------------------------------------- disagreement


@dataclass
class DisagreementReport:
    table: np.ndarray  # rows: labels in a, cols: labels in b
    dissimilarity: float
    n_matched: int
    n_unmatched: int


def dissimilarity(table) -> float:
    t = np.asarray(table, dtype=np.float64)
    total = t.sum()
    return float((total - np.trace(t)) / total) if total else 0.0


def disagreement_report(a, b) -> DisagreementReport:
    """Cross-tabulate two label lists over their shared sample ids."""
    bmap = {s.sample_id: s.label for s in b}
    table = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    matched = 0
    for s in a:
        if s.sample_id in bmap:
            table[s.label, bmap[s.sample_id]] += 1
            matched += 1
    unmatched = (len(a) - matched) + (len(bmap) - matched)
    return DisagreementReport(table, dissimilarity(table), matched, unmatched)


# --------------------------------------------------------------------------- MAEGAN


class Discriminator(nn.Module):
    def __init__(self, input_size=64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(1, 8, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Conv2d(8, 16, 4, stride=2, padding=1), nn.LeakyReLU(0.2),
            nn.Flatten(), nn.Linear(16 * (input_size // 4) ** 2, 1),
        )

    def forward(self, x):
        return self.net(x).squeeze(1)


class Generator(nn.Module):
    """Decoder half of a trained branch, driven by a diagonal Gaussian fit to that branch's codes."""

    def __init__(self, branch: BranchAutoencoder, z_mean, z_std):
        super().__init__()
        self.branch = copy.deepcopy(branch)
        self.register_buffer("z_mean", z_mean)
        self.register_buffer("z_std", z_std)

    def sample_latent(self, n, gen=None):
        eps = torch.randn(n, self.z_mean.numel(), generator=gen)
        # codes come out of a sigmoid, so the prior is clamped to its range
        return torch.clamp(self.z_mean + self.z_std * eps, 0.0, 1.0)

    def forward(self, z):
        return self.branch.decode(z)


@dataclass
class GANConfig:
    epochs: int = 15
    lr: float = 2e-4
    batch: int = 32
    recon_weight: float = 10.0
    n_fake: int = 100
    collapse_tol: float = 0.02
    collapse_patience: int = 5
    seed: int = 0


class MaeganLabeler:
    """Experimental adversarial variant; labels through the same gate and record schema as MAE."""

    def __init__(self, mae: MultiLabelAutoencoder, generators, discriminators, head, history):
        self.mae = mae
        self.generators = generators
        self.discriminators = discriminators
        self.head = head
        self.history = history

    def generate(self, k: int, n: int, seed: int = 0) -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        g = self.generators[k]
        with torch.no_grad():
            return g(g.sample_latent(n, gen))

    def predict_proba(self, images) -> np.ndarray:
        return head_proba(self.head, encode_all(images, self.mae.branches))

    def label(self, unlabeled, amp_gate=0.05):
        return mae_label(unlabeled, self.mae.branches, self.head, amp_gate, provenance="maegan")


def train_maegan(mae: MultiLabelAutoencoder, images, labels, config: GANConfig | None = None):
    """Adversarially fine-tune one decoder-generator per class against its own discriminator.

    Generators start from the MAE decoders; their latent prior is a Gaussian
    fit to the branch codes of real class samples. A reconstruction term keeps
    each generator anchored to its branch. Afterwards the head is refit on real
    plus generated codes.
    """
    cfg = config or GANConfig()
    images = _as_tensor(np.asarray(images, dtype=np.float32))
    labels = np.asarray(labels)
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    generators, discriminators, history = [], [], []
    for k in range(N_CLASSES):
        real = images[torch.as_tensor(labels == k)]
        branch = mae.branches[k]
        with torch.no_grad():
            zk = branch.encode(real)
        g = Generator(branch, zk.mean(0), zk.std(0) + 1e-3)
        d = Discriminator(branch.input_size)
        opt_g = torch.optim.Adam(g.parameters(), lr=cfg.lr, betas=(0.5, 0.999))
        opt_d = torch.optim.Adam(d.parameters(), lr=cfg.lr, betas=(0.5, 0.999))
        pinned = 0
        for epoch in range(cfg.epochs):
            perm = torch.randperm(len(real), generator=gen)
            correct = seen = 0
            for i in range(0, len(real), cfg.batch):
                xb = real[perm[i : i + cfg.batch]]
                fake = g(g.sample_latent(len(xb), gen))
                lr_, lf_ = d(xb), d(fake.detach())
                loss_d = (F.binary_cross_entropy_with_logits(lr_, torch.ones_like(lr_))
                          + F.binary_cross_entropy_with_logits(lf_, torch.zeros_like(lf_)))
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                correct += int((lr_ > 0).sum()) + int((lf_ <= 0).sum())
                seen += 2 * len(xb)

                lg = d(fake)
                recon = g(g.branch.encode(xb).detach())
                loss_g = (F.binary_cross_entropy_with_logits(lg, torch.ones_like(lg))
                          + cfg.recon_weight * F.mse_loss(recon, xb))
                opt_g.zero_grad()
                loss_g.backward()
                opt_g.step()
            acc = correct / max(seen, 1)
            history.append({"class": k, "epoch": epoch, "d_acc": acc})
            pinned = pinned + 1 if abs(acc - 0.5) <= cfg.collapse_tol else 0
            if pinned >= cfg.collapse_patience:
                raise ModeCollapseDetected(
                    f"class {k}: discriminator accuracy pinned at 0.5 for {pinned} epochs", history)
        g.eval()
        generators.append(g)
        discriminators.append(d)

    fakes, fake_y = [], []
    for k, g in enumerate(generators):
        with torch.no_grad():
            fakes.append(g(g.sample_latent(cfg.n_fake, gen)))
        fake_y += [k] * cfg.n_fake
    x_all = torch.cat([images] + fakes)
    y_all = np.concatenate([labels, np.array(fake_y)])
    z = encode_all(x_all, mae.branches)
    head = train_head(z, y_all, mae.config.head_epochs, mae.config.head_lr, seed=cfg.seed + 1)
    return MaeganLabeler(mae, generators, discriminators, head, history)
