import numpy as np
import pytest
import torch
from torch import nn

from honkpipe.audio_io import AudioClip, segment
from honkpipe.errors import InsufficientSamples, MissingAmplitudeMetadata, ShapeMismatch
from honkpipe.labeling import (AEConfig, BranchAutoencoder, GANConfig, LabeledSample,
                               MultiLabelAutoencoder, disagreement_report, dissimilarity, encode_all,
                               gate_decision, mae_label, read_labels, reconstruction_mse,
                               train_branch_autoencoder, train_maegan, write_labels)
from honkpipe.spectrogram import normalized_gray, stft_spectrogram
from honkpipe.synth import synth_window

# Manual-label tables for two annotators (rows: true class, cols: assigned class)
PERSONNEL_1 = np.array([[740, 11, 6, 3], [1, 437, 10, 2], [1, 11, 318, 10], [0, 1, 5, 206]])
PERSONNEL_2 = np.array([[738, 12, 7, 2], [2, 439, 8, 1], [0, 10, 321, 9], [0, 1, 6, 204]])
N_MANUAL = 1694


def _samples(labels, start=0):
    return [LabeledSample(f"f{i + start}.wav", 0, int(y)) for i, y in enumerate(labels)]


# --------------------------------------------------------------------------- records


def test_labeled_sample_validation():
    with pytest.raises(ValueError):
        LabeledSample("a", 0, 4)
    with pytest.raises(ValueError):
        LabeledSample("a", 0, 1, provenance="guess")
    with pytest.raises(ValueError):
        LabeledSample("a", 0, 1, confidence=1.5)


def test_labels_jsonl_round_trip(tmp_path):
    s = [LabeledSample("a.wav", 2, 3, "mae", 0.75), LabeledSample("b.wav#aug0", 0, 1, "augmented",
                                                                parent="b.wav:0")]
    write_labels(tmp_path / "l.jsonl", s)
    assert read_labels(tmp_path / "l.jsonl") == s


# --------------------------------------------------------------------------- gate


def test_gate_passes_loud_window():
    assert gate_decision([0.1, 0.7, 0.1, 0.1], 0.4, 0.05) == (1, 0.7)


def test_gate_blocks_quiet_window():
    label, conf = gate_decision([0.1, 0.7, 0.1, 0.1], 0.01, 0.05)
    assert label == 0
    assert conf == pytest.approx(0.35)


def test_gate_ignores_non_honk():
    assert gate_decision([0.6, 0.2, 0.1, 0.1], 0.01) == (0, 0.6)


class _FixedHead(nn.Module):
    def __init__(self, probs):
        super().__init__()
        self.logits = torch.log(torch.tensor(probs))

    def forward(self, z):
        return self.logits.expand(len(z), -1)


def _windows(peaks):
    out = []
    for i, p in enumerate(peaks):
        x = p * np.sin(2 * np.pi * 1000 * np.arange(8000) / 8000)
        out.append(stft_spectrogram(segment(AudioClip(x, 8000, f"c{i}"))[0]))
    return out


def test_mae_label_gate_and_schema():
    torch.manual_seed(0)
    branches = [BranchAutoencoder() for _ in range(4)]
    out = mae_label(_windows([0.4, 0.01]), branches, _FixedHead([0.1, 0.7, 0.1, 0.1]))
    assert [s.label for s in out] == [1, 0]
    assert out[0].confidence == pytest.approx(0.7, abs=1e-6)
    assert out[1].confidence == pytest.approx(0.35, abs=1e-6)
    assert out[0].sample_id == ("c0", 0)
    assert out[0].provenance == "mae"


def test_mae_label_requires_amplitude():
    spec = stft_spectrogram(np.ones(8000), sample_rate=8000)
    with pytest.raises(MissingAmplitudeMetadata):
        mae_label([spec], [BranchAutoencoder() for _ in range(4)], _FixedHead([0.25] * 4))


# --------------------------------------------------------------------------- autoencoders


def test_zero_images_loss_vanishes():
    cfg = AEConfig(epochs=50, batch=16, min_samples=1)
    x = np.zeros((64, 64, 64), dtype=np.float32)  # 4 batches x 50 epochs = 200 steps
    model, hist = train_branch_autoencoder(x, cfg, seed=0)
    assert hist[-1] < 1e-3
    assert reconstruction_mse(model, x[:4]).max() < 1e-3


def test_loss_nonincreasing_with_jitter():
    rng = np.random.default_rng(0)
    x = np.stack([normalized_gray(stft_spectrogram(synth_window(2, rng), sample_rate=8000), 64, 64)
                  for _ in range(32)]).astype(np.float32)
    _, hist = train_branch_autoencoder(x, AEConfig(epochs=12, min_samples=8), seed=0)
    for a, b in zip(hist, hist[1:]):
        assert b <= a * 1.05
    assert hist[-1] < hist[0]


def test_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        train_branch_autoencoder(np.zeros((10, 64, 64), np.float32), AEConfig(min_samples=50))


def test_encode_all_width():
    branches = [BranchAutoencoder(latent_dim=32) for _ in range(4)]
    z = encode_all(np.random.default_rng(0).random((3, 64, 64)), branches)
    assert z.shape == (3, 128)


def test_zero_input_zero_bias_relu_gives_zero():
    b = BranchAutoencoder(activation="relu")
    for m in b.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.zeros_(m.bias)
    z = encode_all(torch.zeros(2, 1, 64, 64), [b] * 4)
    assert torch.count_nonzero(z) == 0


def test_branch_order_permutes_blocks():
    torch.manual_seed(1)
    branches = [BranchAutoencoder() for _ in range(4)]
    x = np.random.default_rng(2).random((2, 64, 64))
    z = encode_all(x, branches)
    zp = encode_all(x, branches[::-1])
    for k in range(4):
        assert torch.equal(zp[:, 32 * k: 32 * (k + 1)], z[:, 32 * (3 - k): 32 * (4 - k)])


def test_wrong_shape_rejected():
    with pytest.raises(ShapeMismatch):
        BranchAutoencoder().encode(torch.zeros(1, 1, 32, 32))
    with pytest.raises(ShapeMismatch):
        encode_all(np.zeros((1, 64, 64)), [BranchAutoencoder()] * 3)


# --------------------------------------------------------------------------- disagreement


def test_identical_lists_diagonal():
    a = _samples([0, 1, 2, 3, 1])
    rep = disagreement_report(a, a)
    assert rep.dissimilarity == 0.0
    assert np.count_nonzero(rep.table - np.diag(np.diag(rep.table))) == 0


def test_single_difference_in_ten():
    a = _samples([0, 1, 2, 3, 0, 1, 2, 3, 0, 1])
    b = _samples([0, 1, 2, 3, 0, 1, 2, 3, 0, 2])
    assert disagreement_report(a, b).dissimilarity == pytest.approx(0.1)


def test_unmatched_counted():
    rep = disagreement_report(_samples([1, 2]), _samples([1, 2, 3], start=1))
    assert rep.n_matched == 1 and rep.n_unmatched == 3


def test_manual_table_ratio_fixture():
    off_1 = PERSONNEL_1.sum() - np.trace(PERSONNEL_1)
    off_2 = PERSONNEL_2.sum() - np.trace(PERSONNEL_2)
    assert (off_1, off_2) == (61, 58)
    # single-table reading
    assert dissimilarity(PERSONNEL_1) == pytest.approx(61 / 1762)
    # both annotators' disagreements over the manual-label total reproduce the ~7% figure
    assert (off_1 + off_2) / N_MANUAL == pytest.approx(0.0702, abs=5e-4)


# --------------------------------------------------------------------------- MAE / MAEGAN on a small synthetic set


@pytest.fixture(scope="module")
def small_mae():
    rng = np.random.default_rng(5)
    x, y = [], []
    for label in range(4):
        for _ in range(60):
            spec = stft_spectrogram(synth_window(label, rng), sample_rate=8000)
            x.append(normalized_gray(spec, 64, 64))
            y.append(label)
    x, y = np.array(x, np.float32), np.array(y)
    cfg = AEConfig(epochs=15, min_samples=20, head_epochs=150)
    return MultiLabelAutoencoder.fit(x, y, cfg), x, y


def test_mae_fits_training_set(small_mae):
    mae, x, y = small_mae
    p = mae.predict_proba(x)
    assert np.allclose(p.sum(1), 1.0)
    assert (p.argmax(1) == y).mean() >= 0.9


def test_mae_state_dict_round_trip(small_mae):
    mae, x, _ = small_mae
    back = MultiLabelAutoencoder.from_state_dict(mae.state_dict())
    assert np.allclose(back.predict_proba(x[:8]), mae.predict_proba(x[:8]), atol=1e-6)


def test_maegan_generation_and_parity(small_mae):
    mae, x, y = small_mae
    gan = train_maegan(mae, x, y, GANConfig(epochs=4, n_fake=40, seed=0))
    hits = []
    for k in range(4):
        fake = gan.generate(k, 50, seed=100 + k)
        assert tuple(fake.shape[1:]) == (1, 64, 64)
        hits.append((gan.predict_proba(fake).argmax(1) == k).mean())
    assert np.mean(hits) >= 0.7
    specs = _windows([0.5, 0.3])
    a = mae.label(specs)
    b = gan.label(specs)
    assert [set(s.to_record()) for s in a] == [set(s.to_record()) for s in b]
    assert {s.provenance for s in b} == {"maegan"}
