import itertools

import numpy as np
import pytest
import torch

from honkpipe.errors import DivergedLoss, MemberOutputInvalid, NoTrainedModel, WeightManifestMismatch
from honkpipe.models import (BASELINES, BackboneSpec, ClassProbabilities, Ensemble, TrainConfig,
                             bootstrap_indices, build_backbone, build_baseline, check_probabilities,
                             ensemble_vote, entl_predict, entl_train, index_hash, layer_counts,
                             load_checkpoint, load_ensemble, n_parameters, save_checkpoint,
                             save_ensemble, train)

TABLE = {  # conv, max-pool, upsample, dense, batchnorm
    "SB-CNN": (3, 2, 0, 3, 3),
    "DilatedCNN": (5, 1, 2, 3, 0),
    "CNN": (6, 3, 0, 2, 0),
    "TFCNN": (3, 2, 0, 2, 0),
}


def _imgs(n, size=224, seed=0):
    return np.random.default_rng(seed).random((n, size, size)).astype(np.float32)


def test_tiny_probabilities():
    m = build_backbone("tiny")
    p = m.predict_proba(_imgs(3))
    assert p.shape == (3, 4)
    assert np.allclose(p.sum(1), 1.0)
    assert n_parameters(m) <= 100_000
    assert layer_counts(m)["conv"] == 3


def test_accepts_hwc_and_chw():
    m = build_backbone("tiny")
    x = _imgs(2)
    hwc = np.repeat(x[..., None], 3, axis=3)
    chw = np.repeat(x[:, None], 3, axis=1)
    assert np.allclose(m.predict_proba(x), m.predict_proba(hwc))
    assert np.allclose(m.predict_proba(x), m.predict_proba(chw))


@pytest.mark.parametrize("name", ["mobilenet-like", "shufflenet-like", "resnet50-like", "inceptionv3-like"])
def test_large_backbones_emit_probabilities(name):
    m = build_backbone(name)
    p = m.predict_proba(_imgs(1))
    check_probabilities(p)


def test_untrained_near_uniform():
    x = _imgs(4, seed=3)
    for seed in range(100):
        p = build_backbone(BackboneSpec("tiny", seed=seed)).predict_proba(x)
        assert (p.max(1) - p.min(1)).max() < 0.5


@pytest.mark.parametrize("name", BASELINES)
def test_baseline_layer_counts(name):
    m = build_baseline(name)
    c = layer_counts(m)
    assert (c["conv"], c["pool"], c["upsample"], c["dense"], c["batchnorm"]) == TABLE[name]
    check_probabilities(m.predict_proba(_imgs(2)))


def test_unknown_names():
    with pytest.raises(ValueError):
        build_baseline("VGG")
    with pytest.raises(ValueError):
        BackboneSpec("alexnet")


def test_two_sample_memorisation():
    x = np.zeros((2, 224, 224), np.float32)
    x[0, :60] = 1.0  # energy high in frequency
    x[1, 160:] = 1.0  # energy low in frequency
    y = np.array([1, 3])
    m, hist = train(build_backbone("tiny"), x, y, TrainConfig(epochs=50, batch=2, lr=1e-3))
    assert hist[-1]["accuracy"] == 1.0
    assert (m.predict(x) == y).all()


def test_freeze_changes_only_head():
    m = build_backbone("tiny")
    before = {k: v.clone() for k, v in m.state_dict().items()}
    train(m, _imgs(8), np.arange(8) % 4, TrainConfig(epochs=2, batch=4, freeze=True))
    after = m.state_dict()
    for k in before:
        same = torch.equal(before[k], after[k])
        assert same != k.startswith("head.")


def test_training_deterministic():
    x, y = _imgs(12, seed=2), np.arange(12) % 4
    cfg = TrainConfig(epochs=2, batch=4, seed=5)
    a, ha = train(build_backbone(BackboneSpec("tiny", seed=5)), x, y, cfg)
    b, hb = train(build_backbone(BackboneSpec("tiny", seed=5)), x, y, cfg)
    assert ha == hb
    assert np.array_equal(a.predict_proba(x), b.predict_proba(x))


def test_non_finite_loss_raises():
    x = _imgs(4)
    x[0, 0, 0] = np.nan
    with pytest.raises(DivergedLoss) as exc:
        train(build_backbone("tiny"), x, np.zeros(4, int), TrainConfig(epochs=1, batch=4))
    assert exc.value.exit_code == 4
    assert exc.value.diagnostics["epoch"] == 0


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")
    with pytest.raises(ValueError):
        TrainConfig(batch=0)


# --------------------------------------------------------------------------- ensemble


def test_vote_worked_example():
    cls, scores = ensemble_vote([[0.1, 0.6, 0.2, 0.1], [0.2, 0.5, 0.2, 0.1]])
    assert np.allclose(scores, [0.3, 1.1, 0.4, 0.2])
    assert cls == 1


def test_vote_tie_to_lower_class():
    cls, _ = ensemble_vote([[0.5, 0.0, 0.5, 0.0], [0.0, 0.5, 0.0, 0.5]])
    assert cls == 0


def test_identical_members_idempotent(rng):
    p = rng.dirichlet(np.ones(4), size=20)
    cls, _ = entl_predict(None, [lambda x: p] * 3)
    assert np.array_equal(cls, p.argmax(1))


def test_fuzz_against_brute_force(rng):
    for _ in range(200):
        m = int(rng.integers(2, 6))
        probs = rng.dirichlet(np.ones(4), size=(m, 5))
        cls, _ = entl_predict(None, [lambda x, q=q: q for q in probs])
        for i in range(5):
            sums = [sum(probs[k, i, c] for k in range(m)) for c in range(4)]
            best = max(range(4), key=lambda c: (sums[c], -c))
            assert cls[i] == best


def test_invalid_member_rejected():
    good = lambda x: np.full((1, 4), 0.25)  # noqa: E731
    with pytest.raises(MemberOutputInvalid):
        entl_predict(None, [good, lambda x: np.array([[0.5, 0.5, 0.5, 0.5]])])
    with pytest.raises(MemberOutputInvalid):
        entl_predict(None, [good, lambda x: np.array([[1.2, -0.2, 0.0, 0.0]])])
    with pytest.raises(MemberOutputInvalid):
        ClassProbabilities([0.5, 0.5, 0.0])


def test_bootstrap_sizes_and_distinct():
    hashes = {index_hash(bootstrap_indices(500, s)) for s in range(10)}
    assert len(hashes) == 10
    idx = bootstrap_indices(500, 0)
    assert len(idx) == 500 and idx.min() >= 0 and idx.max() < 500


def test_entl_train_manifest_and_io(tmp_path):
    x, y = _imgs(16, seed=4), np.arange(16) % 4
    cfg = TrainConfig(epochs=1, batch=8, seed=3)
    ens = entl_train(x, y, cfg, [BackboneSpec("tiny")] * 3)
    recs = ens.manifest["members"]
    assert [r["seed"] for r in recs] == [3, 4, 5]
    assert all(r["n"] == 16 for r in recs)
    save_ensemble(tmp_path, ens)
    back = load_ensemble(tmp_path)
    assert np.allclose(back.predict_proba(x), ens.predict_proba(x))
    assert np.array_equal(back.predict(x), ens.predict(x))


def test_partition_shards_disjoint():
    x, y = _imgs(12, size=32), np.arange(12) % 4
    ens = entl_train(x, y, TrainConfig(epochs=1, batch=4, input_size=32), [BackboneSpec("tiny")] * 3,
                     partition=True)
    assert sum(r["n"] for r in ens.manifest["members"]) == 12


def test_checkpoint_round_trip_and_errors(tmp_path):
    m = build_baseline("TFCNN")
    save_checkpoint(tmp_path / "m.pt", m, {"arch": "TFCNN"})
    back = load_checkpoint(tmp_path / "m.pt")
    x = _imgs(2)
    assert np.allclose(back.predict_proba(x), m.predict_proba(x))
    with pytest.raises(NoTrainedModel):
        load_checkpoint(tmp_path / "missing.pt")
    with pytest.raises(NoTrainedModel):
        load_ensemble(tmp_path / "nothing")


def test_external_feature_weights(tmp_path):
    src = build_backbone(BackboneSpec("tiny", seed=1))
    save_checkpoint(tmp_path / "w.pt", src, {"arch": "tiny"})
    dst = build_backbone(BackboneSpec("tiny", weights=str(tmp_path / "w.pt"), seed=2))
    for k, v in src.features.state_dict().items():
        assert torch.equal(v, dst.features.state_dict()[k])
    with pytest.raises(WeightManifestMismatch):
        build_backbone(BackboneSpec("mobilenet-like", weights=str(tmp_path / "w.pt")))
