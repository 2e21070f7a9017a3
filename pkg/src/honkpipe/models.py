"""Classifier zoo: image backbones with a dense softmax head, baseline CNNs, and the
bagged ensemble that sums member class probabilities.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import DivergedLoss, MemberOutputInvalid, NoTrainedModel, WeightManifestMismatch

logger = logging.getLogger(__name__)

N_CLASSES = 4
BACKBONES = ("tiny", "mobilenet-like", "shufflenet-like", "resnet50-like", "inceptionv3-like")
BASELINES = ("SB-CNN", "DilatedCNN", "CNN", "TFCNN")
CKPT_FORMAT = "honkpipe-checkpoint"
CKPT_VERSION = 1


@dataclass
class ClassProbabilities:
    p: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        check_probabilities(self.p[None, :], self.model_id)

    @property
    def label(self) -> int:
        return int(np.argmax(self.p))


def check_probabilities(p: np.ndarray, who: str = "", tol: float = 1e-6) -> None:
    p = np.asarray(p)
    if p.ndim != 2 or p.shape[1] != N_CLASSES:
        raise MemberOutputInvalid(f"{who}: expected [n, {N_CLASSES}] probabilities, got {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise MemberOutputInvalid(f"{who}: negative or non-finite probability")
    worst = float(np.max(np.abs(p.sum(axis=1) - 1.0))) if len(p) else 0.0
    if worst > tol:
        raise MemberOutputInvalid(f"{who}: probabilities off unit sum by {worst:.3g}")


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    epochs: int = 20
    lr: float = 1e-3
    batch: int = 312
    input_size: int = 224
    seed: int = 0
    freeze: bool = False

    def __post_init__(self):
        if self.optimizer.lower() != "adam":
            raise ValueError("only the Adam optimizer is supported")
        for name in ("epochs", "lr", "batch", "input_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"TrainConfig.{name} must be positive")


@dataclass
class BackboneSpec:
    name: str = "tiny"
    weights: str = "scratch"  # or a checkpoint path
    seed: int = 0

    def __post_init__(self):
        if self.name not in BACKBONES:
            raise ValueError(f"unknown backbone {self.name!r}; choose from {BACKBONES}")


class Classifier(nn.Module):
    """``features`` then a dense ``head``; ``forward`` returns logits."""

    def __init__(self, features: nn.Module, head: nn.Module, name: str):
        super().__init__()
        self.features = features
        self.head = head
        self.name = name

    def forward(self, x):
        return self.head(self.features(x))

    @torch.no_grad()
    def predict_proba(self, x, batch: int = 128) -> np.ndarray:
        self.eval()
        x = as_image_batch(x)
        out = [torch.softmax(self(x[i : i + batch]), dim=1) for i in range(0, len(x), batch)]
        return torch.cat(out).double().numpy() if out else np.zeros((0, N_CLASSES))

    def predict(self, x) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


def as_image_batch(x) -> torch.Tensor:
    """Accept [n,h,w], [n,h,w,3] or [n,3,h,w]; return float32 [n,3,h,w]."""
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x, dtype=torch.float32)
    if t.ndim == 2:
        t = t[None]
    if t.ndim == 3:
        t = t.unsqueeze(1)
    if t.ndim == 4 and t.shape[-1] == 3 and t.shape[1] != 3:
        t = t.permute(0, 3, 1, 2)
    if t.shape[1] == 1:
        t = t.expand(-1, 3, -1, -1)
    return t


def layer_counts(model: nn.Module) -> dict:
    kinds = {"conv": nn.Conv2d, "pool": nn.MaxPool2d, "upsample": nn.Upsample,
             "dense": nn.Linear, "batchnorm": nn.BatchNorm2d}
    return {k: sum(isinstance(m, t) for m in model.modules()) for k, t in kinds.items()}


def n_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# --------------------------------------------------------------------------- backbones


def _tiny_features():
    return nn.Sequential(
        nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        nn.Conv2d(8, 16, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        nn.Conv2d(16, 32, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
        # keep frequency (rows) resolution, squash time
        nn.AdaptiveAvgPool2d((16, 2)), nn.Flatten(),
        nn.Linear(32 * 16 * 2, 64), nn.ReLU(),
    ), 64


def _torchvision_features(name):
    import torchvision.models as tvm

    if name == "mobilenet-like":
        m = tvm.mobilenet_v2(weights=None)
        dim = m.classifier[-1].in_features
        m.classifier = nn.Identity()
    elif name == "shufflenet-like":
        m = tvm.shufflenet_v2_x1_0(weights=None)
        dim = m.fc.in_features
        m.fc = nn.Identity()
    elif name == "resnet50-like":
        m = tvm.resnet50(weights=None)
        dim = m.fc.in_features
        m.fc = nn.Identity()
    else:
        m = tvm.inception_v3(weights=None, aux_logits=False, init_weights=True)
        dim = m.fc.in_features
        m.fc = nn.Identity()
    return m, dim


def build_backbone(spec: BackboneSpec | str) -> Classifier:
    """Backbone features plus a 4-way dense head.

    External weights are loaded into the feature extractor only, after
    checking every tensor shape against the file's manifest.
    """
    if isinstance(spec, str):
        spec = BackboneSpec(spec)
    torch.manual_seed(spec.seed)
    if spec.name == "tiny":
        features, dim = _tiny_features()
    else:
        features, dim = _torchvision_features(spec.name)
    model = Classifier(features, nn.Linear(dim, N_CLASSES), spec.name)
    if spec.weights not in ("scratch", "", None):
        _load_feature_weights(model, spec.weights)
    return model


def _load_feature_weights(model: Classifier, path) -> None:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    state = blob.get("state_dict", blob) if isinstance(blob, dict) else blob
    manifest = blob.get("manifest") if isinstance(blob, dict) else None
    feats = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")} or state
    if manifest is not None:
        for k, shape in manifest.items():
            if k in state and list(state[k].shape) != list(shape):
                raise WeightManifestMismatch(f"{path}: {k} stored as {list(state[k].shape)}, manifest says {shape}")
    expected = model.features.state_dict()
    missing = sorted(set(expected) - set(feats))
    bad = [k for k in expected if k in feats and tuple(feats[k].shape) != tuple(expected[k].shape)]
    if missing or bad:
        raise WeightManifestMismatch(
            f"{path}: weights do not fit {model.name} features "
            f"(missing {missing[:3]}, shape mismatch {bad[:3]})")
    model.features.load_state_dict({k: feats[k] for k in expected})


# --------------------------------------------------------------------------- baselines


def _conv(cin, cout, k=3, stride=1, dilation=1, bn=False):
    layers = [nn.Conv2d(cin, cout, k, stride=stride, padding=dilation * (k // 2), dilation=dilation)]
    if bn:
        layers.append(nn.BatchNorm2d(cout))
    layers.append(nn.ReLU())
    return layers


def build_baseline(name: str, seed: int = 0) -> Classifier:
    """Baseline CNNs with the layer budget of each reference architecture.

    =========== ==== ======== ======== ===== ==========
    model       conv max pool upsample dense batch norm
    =========== ==== ======== ======== ===== ==========
    SB-CNN      3    2        0        3     3
    DilatedCNN  5    1        2        3     0
    CNN         6    3        0        2     0
    TFCNN       3    2        0        2     0
    =========== ==== ======== ======== ===== ==========

    Strided convolutions bring a 224x224 input down to a small grid so the
    dense stack stays modest.
    """
    torch.manual_seed(seed)
    if name == "SB-CNN":
        feats = nn.Sequential(
            *_conv(3, 24, 5, stride=2, bn=True), nn.MaxPool2d(2),
            *_conv(24, 48, 5, stride=2, bn=True), nn.MaxPool2d(2),
            *_conv(48, 48, 3, stride=2, bn=True), nn.Flatten(),
            nn.Linear(48 * 7 * 7, 64), nn.ReLU(), nn.Dropout(0.5),
            nn.Linear(64, 32), nn.ReLU(),
        )
        dim = 32
    elif name == "DilatedCNN":
        feats = nn.Sequential(
            *_conv(3, 16, stride=2), *_conv(16, 16, stride=2, dilation=2), nn.MaxPool2d(2),
            *_conv(16, 32, stride=2, dilation=2), nn.Upsample(scale_factor=2),
            *_conv(32, 32, stride=2, dilation=4), nn.Upsample(scale_factor=2),
            *_conv(32, 32, stride=4), nn.Flatten(),
            nn.Linear(32 * 7 * 7, 64), nn.ReLU(), nn.Linear(64, 32), nn.ReLU(),
        )
        dim = 32
    elif name == "CNN":
        feats = nn.Sequential(
            *_conv(3, 16, stride=2), *_conv(16, 16), nn.MaxPool2d(2),
            *_conv(16, 32, stride=2), *_conv(32, 32), nn.MaxPool2d(2),
            *_conv(32, 32, stride=2), *_conv(32, 32), nn.MaxPool2d(2),
            nn.Flatten(), nn.Linear(32 * 3 * 3, 64), nn.ReLU(),
        )
        dim = 64
    elif name == "TFCNN":
        feats = nn.Sequential(
            *_conv(3, 16, stride=2), nn.MaxPool2d(2),
            *_conv(16, 32, stride=2), nn.MaxPool2d(2),
            *_conv(32, 32, stride=2), nn.Flatten(),
            nn.Linear(32 * 7 * 7, 64), nn.ReLU(),
        )
        dim = 64
    else:
        raise ValueError(f"unknown baseline {name!r}; choose from {BASELINES}")
    return Classifier(feats, nn.Linear(dim, N_CLASSES), name)


# --------------------------------------------------------------------------- training


def train(classifier: Classifier, x, y, cfg: TrainConfig | None = None, x_val=None, y_val=None):
    """Fit with Adam and cross-entropy; returns (classifier, history).

    ``history`` has one dict per epoch (loss, accuracy and, with validation
    data, val_accuracy). A non-finite loss raises :class:`DivergedLoss`.
    With ``cfg.freeze`` only the head is updated.
    """
    cfg = cfg or TrainConfig()
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    xt = as_image_batch(x)
    yt = torch.as_tensor(np.asarray(y), dtype=torch.long)
    for p in classifier.features.parameters():
        p.requires_grad_(not cfg.freeze)
    params = [p for p in classifier.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        classifier.train()
        if cfg.freeze:
            classifier.features.eval()
        perm = torch.randperm(len(xt), generator=gen)
        total = correct = 0.0
        for step, i in enumerate(range(0, len(xt), cfg.batch)):
            idx = perm[i : i + cfg.batch]
            logits = classifier(xt[idx])
            loss = F.cross_entropy(logits, yt[idx])
            if not torch.isfinite(loss):
                diag = {"epoch": epoch, "step": step, "lr": cfg.lr, "loss": float(loss.detach())}
                raise DivergedLoss(f"{classifier.name}: non-finite loss at epoch {epoch} step {step}", diag)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            correct += (logits.argmax(1) == yt[idx]).sum().item()
        rec = {"epoch": epoch + 1, "loss": total / len(xt), "accuracy": correct / len(xt)}
        if x_val is not None:
            rec["val_accuracy"] = float(np.mean(classifier.predict(x_val) == np.asarray(y_val)))
        history.append(rec)
        logger.info("%s epoch %d loss %.4f acc %.3f", classifier.name, epoch + 1, rec["loss"], rec["accuracy"])
    for p in classifier.parameters():
        p.requires_grad_(True)
    classifier.eval()
    return classifier, history


# --------------------------------------------------------------------------- ensemble


def ensemble_vote(member_probs) -> tuple:
    """argmax over classes of the member-summed scores; ties go to the lower class index.

    ``member_probs`` is [M, n, 4] (or [M, 4] for one input). Returns
    (classes, summed scores).
    """
    p = np.asarray(member_probs, dtype=np.float64)
    scores = p.sum(axis=0)
    return np.argmax(scores, axis=-1), scores


def _member_output(member, x) -> np.ndarray:
    if hasattr(member, "predict_proba"):
        return np.asarray(member.predict_proba(x), dtype=np.float64)
    return np.asarray(member(x), dtype=np.float64)


def entl_predict(x, members) -> tuple:
    """Ensemble decision for a batch ``x``.

    Each member is a classifier with ``predict_proba`` or a callable returning
    [n, 4] probabilities. Every member output is validated before summing.
    """
    if len(members) < 2:
        raise ValueError("ensemble needs at least two members")
    outs = []
    for k, m in enumerate(members):
        p = _member_output(m, x)
        if p.ndim == 1:
            p = p[None, :]
        check_probabilities(p, getattr(m, "name", f"member{k}"))
        outs.append(p)
    classes, scores = ensemble_vote(outs)
    top = np.sort(scores, axis=1)
    ties = int(np.sum(top[:, -1] == top[:, -2]))
    if ties:
        logger.info("ensemble: %d tie(s) resolved toward the lower class index", ties)
    return classes, scores


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, n, size=n)


def index_hash(idx) -> str:
    return hashlib.sha256(np.sort(np.asarray(idx, dtype=np.int64)).tobytes()).hexdigest()[:16]


@dataclass
class Ensemble:
    members: list
    manifest: dict = field(default_factory=dict)

    def predict_proba(self, x) -> np.ndarray:
        """Mean member probabilities (same argmax as the sum, but normalised)."""
        _, scores = entl_predict(x, self.members)
        return scores / len(self.members)

    def predict(self, x) -> np.ndarray:
        return entl_predict(x, self.members)[0]


def entl_train(x, y, cfg: TrainConfig | None = None, member_specs=None, partition: bool = False,
               x_val=None, y_val=None):
    """Train each member independently on its own resample of the training set.

    Bagging draws a full-size bootstrap per member; ``partition=True`` instead
    deals out disjoint shards. Member seeds are ``cfg.seed + k``.
    """
    cfg = cfg or TrainConfig()
    member_specs = member_specs or [BackboneSpec("tiny") for _ in range(4)]
    n = len(y)
    shards = np.array_split(np.random.default_rng(cfg.seed).permutation(n), len(member_specs))
    members, records, histories = [], [], []
    for k, spec in enumerate(member_specs):
        mseed = cfg.seed + k
        idx = np.sort(shards[k]) if partition else bootstrap_indices(n, mseed)
        model = build_backbone(BackboneSpec(spec.name, spec.weights, mseed))
        model.name = f"{spec.name}-{k}"
        mcfg = TrainConfig(**{**asdict(cfg), "seed": mseed})
        _, hist = train(model, np.asarray(x)[idx], np.asarray(y)[idx], mcfg, x_val, y_val)
        members.append(model)
        histories.append(hist)
        records.append({"id": model.name, "arch": spec.name, "seed": mseed,
                        "resample": "partition" if partition else "bootstrap",
                        "n": int(len(idx)), "resample_hash": index_hash(idx)})
    ens = Ensemble(members, {"members": records, "config": asdict(cfg)})
    ens.histories = histories
    return ens


# --------------------------------------------------------------------------- checkpoints


def save_checkpoint(path, model: Classifier, meta: dict | None = None) -> None:
    state = model.state_dict()
    torch.save({"format": CKPT_FORMAT, "version": CKPT_VERSION, "name": model.name,
                "manifest": {k: list(v.shape) for k, v in state.items()},
                "meta": meta or {}, "state_dict": state}, path)


def load_checkpoint(path) -> Classifier:
    path = Path(path)
    if not path.exists():
        raise NoTrainedModel(f"no trained model at {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format") != CKPT_FORMAT:
        raise WeightManifestMismatch(f"{path}: not a {CKPT_FORMAT} file")
    meta = blob.get("meta", {})
    arch = meta.get("arch", blob["name"])
    model = build_baseline(arch) if arch in BASELINES else build_backbone(BackboneSpec(arch))
    state = blob["state_dict"]
    for k, shape in blob["manifest"].items():
        if list(state[k].shape) != shape:
            raise WeightManifestMismatch(f"{path}: {k} does not match its manifest")
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise WeightManifestMismatch(f"{path}: {exc}") from exc
    model.name = blob["name"]
    model.eval()
    return model


def save_ensemble(out_dir, ens: Ensemble) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec, m in zip(ens.manifest["members"], ens.members):
        rec["checkpoint"] = f"{rec['id']}.pt"
        save_checkpoint(out / rec["checkpoint"], m, {"arch": rec["arch"], "seed": rec["seed"]})
    (out / "ensemble.json").write_text(json.dumps(ens.manifest, indent=2, sort_keys=True))
    return out / "ensemble.json"


def load_ensemble(out_dir) -> Ensemble:
    out = Path(out_dir)
    mpath = out / "ensemble.json"
    if not mpath.exists():
        raise NoTrainedModel(f"no trained model in {out}")
    manifest = json.loads(mpath.read_text())
    members = [load_checkpoint(out / r["checkpoint"]) for r in manifest["members"]]
    return Ensemble(members, manifest)
