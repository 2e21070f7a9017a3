"""``honkpipe`` command line.

Every subcommand writes into ``--out`` only, and drops a ``manifest.json``
there (inputs with hashes, resolved config, seed, library versions).
Exit codes: 2 config error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, load_config
from .errors import DataError, HonkPipeError, NoTrainedModel

logger = logging.getLogger("honkpipe")


# --------------------------------------------------------------------------- helpers


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _read_jsonl(path):
    return [json.loads(ln) for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions():
    import torch

    return {"honkpipe": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "torch": torch.__version__}


def write_manifest(out: Path, command: str, cfg: dict, inputs: dict, outputs=(), extra=None):
    ins = {}
    for name, p in inputs.items():
        p = Path(p)
        # relative to --out, so identical runs in different directories match
        ins[name] = {"path": _rel(p, out), "sha256": _sha(p) if p.is_file() else None}
    body = {"command": command, "config": cfg, "config_hash": config_hash(cfg), "seed": cfg["seed"],
            "versions": _versions(), "inputs": ins, "outputs": sorted(str(o) for o in outputs)}
    if extra:
        body.update(extra)
    _dump(out / "manifest.json", body)


def _stft_kwargs(cfg):
    s = cfg["spectrogram"]
    return {"fft_size": s["fft_size"], "hop": s["hop"], "taper": s["taper"], "floor_db": s["floor_db"]}


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rel(target: Path, base: Path) -> str:
    return os.path.relpath(Path(target).resolve(), Path(base).resolve()).replace(os.sep, "/")


def _row(sample, split, file=None):
    r = sample.to_record()
    r["file"] = file or sample.file
    r["split"] = split
    return r


def _load_split(corpus, split, cfg):
    from .corpus import load_corpus

    samples = load_corpus(corpus, split, _stft_kwargs(cfg), cfg["audio"]["window_s"])
    if not samples:
        raise DataError(f"{corpus}: no '{split}' samples")
    return samples


# --------------------------------------------------------------------------- subcommands


def cmd_ingest(args, cfg):
    from .audio_io import load_wav, parse_sensor_log, segment

    out = _out(args)
    clip = load_wav(args.wav)
    windows = segment(clip, cfg["audio"]["window_s"], cfg["audio"]["hop_s"])
    off = cfg["audio"]["spl_offset_db"]
    rows = [{"index": w.index, "start_s": w.start_s, "end_s": w.end_s, "peak_amplitude": w.peak_amplitude,
             "rms": w.rms, "spl_dbfs": w.spl_dbfs, "spl_db": w.spl_dbfs + off, "padded": w.padded}
            for w in windows]
    _jsonl(out / "windows.jsonl", rows)
    summary = {"source": clip.source_id, "sample_rate": clip.sample_rate, "duration_s": clip.duration,
               "n_windows": len(windows)}
    inputs = {"wav": args.wav}
    if args.sidecar:
        log = parse_sensor_log(args.sidecar)
        _jsonl(out / "sensor.jsonl", [r.__dict__ for r in log.records])
        summary.update({"sensor_records": len(log), "sensor_malformed": log.malformed_count,
                        "sensor_duplicates": log.duplicate_count})
        inputs["sidecar"] = args.sidecar
    _dump(out / "ingest.json", summary)
    write_manifest(out, "ingest", cfg, inputs, ["windows.jsonl", "ingest.json"])
    print(json.dumps(summary, sort_keys=True))


def cmd_spectro(args, cfg):
    from .audio_io import load_wav, segment
    from .spectrogram import save_png, save_spectrogram, stft_spectrogram

    out = _out(args)
    clip = load_wav(args.wav)
    outputs = []
    for w in segment(clip, cfg["audio"]["window_s"], cfg["audio"]["hop_s"]):
        spec = stft_spectrogram(w, **_stft_kwargs(cfg))
        name = f"{clip.source_id}_w{w.index:05d}"
        save_spectrogram(out / f"{name}.hnkspec", spec)
        outputs.append(f"{name}.hnkspec")
        if args.png:
            save_png(out / f"{name}.png", spec)
            outputs.append(f"{name}.png")
    write_manifest(out, "spectro", cfg, {"wav": args.wav}, outputs)
    print(f"{len([o for o in outputs if o.endswith('.hnkspec')])} spectrograms -> {out}")


def cmd_synth(args, cfg):
    from .audio_io import write_wav
    from .synth import PRESETS, script_for_location, synth_corpus, synth_scene

    out = _out(args)
    seed = cfg["seed"]
    if args.trace:
        locations = [s.strip() for s in args.trace.split(",") if s.strip()]
        clips, labels, script_rows = [], [], []
        t = 0.0
        for i, loc in enumerate(locations):
            script = script_for_location(loc, args.slot, args.scene_duration, seed + i,
                                         args.noise, args.snr_db)
            clip, lab = synth_scene(script, seed + i)
            clips.append(clip.samples)
            labels.extend(lab)
            script_rows.append({"location": loc, "t_start": t, "t_end": t + script.duration_s,
                                "events": len(script.honk_events)})
            t += script.duration_s
        from .audio_io import AudioClip

        write_wav(out / "trace.wav", AudioClip(np.concatenate(clips), 8000, "trace"))
        _jsonl(out / "trace_labels.jsonl", [{"file": "trace.wav", "window": i, "label": int(lab)}
                                             for i, lab in enumerate(labels)])
        _dump(out / "trace_script.json", script_rows)
        write_manifest(out, "synth", cfg, {}, ["trace.wav", "trace_labels.jsonl", "trace_script.json"])
        print(f"trace of {len(locations)} scenes ({t:.0f} s) -> {out}")
        return
    preset = args.preset or cfg["synth"]["preset"]
    if preset not in PRESETS:
        from .errors import ConfigError

        raise ConfigError(f"synth.preset: unknown preset {preset!r} (choose from {sorted(PRESETS)})")
    synth_corpus(preset, seed, out)
    write_manifest(out, "synth", cfg, {}, ["labels.jsonl"], {"preset": preset, "spec": PRESETS[preset]})
    print(f"synthetic corpus '{preset}' -> {out}")


def cmd_label(args, cfg):
    import torch

    from .augment import split
    from .corpus import gray_stack, label_array
    from .labeling import AEConfig, disagreement_report, incremental_label, train_maegan
    from .metrics import evaluate_arrays

    out = _out(args)
    lc = cfg["labeling"]
    samples = _load_split(args.corpus, "train", cfg)
    seed_set, rest = split(samples, lc["seed_frac"], stratified=True, seed=cfg["seed"])
    ae_cfg = AEConfig(lc["latent_dim"], lc["input_size"], lc["epochs"], lc["lr"], lc["batch"],
                      lc["min_samples"], lc["head_epochs"], lc["head_lr"], cfg["seed"])
    x_seed, y_seed = gray_stack(seed_set, lc["input_size"]), label_array(seed_set)
    labeled, mae = incremental_label(x_seed, y_seed, [s.spectrogram for s in rest], ae_cfg,
                                     lc["n_groups"], lc["refit_per_group"], lc["amp_gate"])
    method = args.method or lc["method"]
    if method == "maegan":
        from .labeling import GANConfig

        gan = train_maegan(mae, x_seed, y_seed, GANConfig(epochs=lc["gan_epochs"], seed=cfg["seed"]))
        labeled = gan.label([s.spectrogram for s in rest], lc["amp_gate"])

    corpus = Path(args.corpus)
    rows = [_row(s, "train", _rel(corpus / s.file, out)) for s in seed_set]
    rows += [_row(s, "train", _rel(corpus / s.file, out)) for s in labeled]
    test_rows = [r for r in _read_jsonl(corpus / "labels.jsonl") if (r.get("split") or r["file"].split("/")[0]) == "test"]
    rows += [{**r, "file": _rel(corpus / r["file"], out), "split": "test"} for r in test_rows]
    _jsonl(out / "labels.jsonl", rows)

    # the corpus is synthetic, so the held-back labels serve as ground truth
    rep = disagreement_report(rest, labeled)
    probs = np.eye(4)[[s.label for s in labeled]]
    metrics, cm = evaluate_arrays([s.label for s in rest], probs)
    summary = {"method": method, "n_seed": len(seed_set), "n_labeled": len(labeled),
               "agreement": 1.0 - rep.dissimilarity, "disagreement_table": rep.table.tolist(),
               "metrics": metrics.to_dict()}
    _dump(out / "label_report.json", summary)
    torch.save(mae.state_dict(), out / "mae.pt")
    write_manifest(out, "label", cfg, {"labels": corpus / "labels.jsonl"},
                   ["labels.jsonl", "label_report.json", "mae.pt"])
    print(json.dumps({"method": method, "agreement": round(summary["agreement"], 4)}))


def cmd_augment(args, cfg):
    from .augment import augment_samples
    from .spectrogram import save_spectrogram

    out = _out(args)
    ac = cfg["augment"]
    corpus = Path(args.corpus)
    train = _load_split(corpus, "train", cfg)
    aug = augment_samples(train, ac["variants"], cfg["seed"], tuple(ac["n_masks"]), ac["max_width_frac"])
    (out / "spec").mkdir(exist_ok=True)
    rows = []
    for i, s in enumerate(aug):
        if s.provenance == "augmented":
            name = f"spec/{i:06d}.hnkspec"
            save_spectrogram(out / name, s.spectrogram)
            rows.append(_row(s, "train", name))
        else:
            rows.append(_row(s, "train", _rel(corpus / s.file, out)))
    for r in _read_jsonl(corpus / "labels.jsonl"):
        if (r.get("split") or r["file"].split("/")[0]) == "test":
            rows.append({**r, "file": _rel(corpus / r["file"], out), "split": "test"})
    _jsonl(out / "labels.jsonl", rows)
    write_manifest(out, "augment", cfg, {"labels": corpus / "labels.jsonl"}, ["labels.jsonl", "spec/"],
                   {"n_original": len(train), "n_after": len(aug)})
    print(f"{len(train)} -> {len(aug)} training samples")


def cmd_balance(args, cfg):
    from .augment import balance_classes, class_counts, split
    from .labeling import LabeledSample

    out = _out(args)
    corpus = Path(args.corpus)
    raw = _read_jsonl(corpus / "labels.jsonl")
    samples = [LabeledSample(r["file"], int(r.get("window", 0)), int(r["label"]), r.get("provenance", "manual"),
                             float(r.get("confidence", 1.0)), parent=r.get("parent")) for r in raw]
    before = class_counts(samples)
    balanced = balance_classes(samples, cfg["seed"])
    tr, te = split(balanced, args.train_frac, stratified=True, seed=cfg["seed"])
    rows = [_row(s, "train", _rel(corpus / s.file, out)) for s in tr]
    rows += [_row(s, "test", _rel(corpus / s.file, out)) for s in te]
    _jsonl(out / "labels.jsonl", rows)
    summary = {"before": before, "after": class_counts(balanced), "train": len(tr), "test": len(te)}
    _dump(out / "balance.json", summary)
    write_manifest(out, "balance", cfg, {"labels": corpus / "labels.jsonl"}, ["labels.jsonl", "balance.json"])
    print(json.dumps(summary, sort_keys=True))


def _train_config(cfg):
    from .models import TrainConfig

    t = cfg["train"]
    return TrainConfig(t["optimizer"], t["epochs"], t["lr"], t["batch"], t["input_size"], cfg["seed"], t["freeze"])


def cmd_train(args, cfg):
    from .corpus import gray_stack, label_array
    from .models import BASELINES, BackboneSpec, build_baseline, entl_train, save_ensemble, train

    out = _out(args)
    t = cfg["train"]
    samples = _load_split(args.corpus, "train", cfg)
    x, y = gray_stack(samples, t["input_size"]), label_array(samples)
    tcfg = _train_config(cfg)
    arch, n = t["arch"], t["ensemble"]
    if arch in BASELINES or n == 1:
        from .models import build_backbone, save_checkpoint

        model = build_baseline(arch, cfg["seed"]) if arch in BASELINES else build_backbone(BackboneSpec(arch, seed=cfg["seed"]))
        _, hist = train(model, x, y, tcfg)
        save_checkpoint(out / "model.pt", model, {"arch": arch, "seed": cfg["seed"]})
        histories = {arch: hist}
        outputs = ["model.pt"]
    else:
        ens = entl_train(x, y, tcfg, [BackboneSpec(arch) for _ in range(n)], partition=t["partition"])
        save_ensemble(out, ens)
        histories = {m.name: h for m, h in zip(ens.members, ens.histories)}
        outputs = ["ensemble.json"] + [r["checkpoint"] for r in ens.manifest["members"]]
    _dump(out / "history.json", histories)
    write_manifest(out, "train", cfg, {"labels": Path(args.corpus) / "labels.jsonl"},
                   outputs + ["history.json"], {"arch": arch, "members": n})
    final = {k: v[-1] for k, v in histories.items()}
    print(json.dumps(final, sort_keys=True))


def _load_model(model_dir: Path):
    from .models import load_checkpoint, load_ensemble

    if (model_dir / "ensemble.json").exists():
        return load_ensemble(model_dir)
    if (model_dir / "model.pt").exists():
        return load_checkpoint(model_dir / "model.pt")
    raise NoTrainedModel(f"no trained model in {model_dir}")


def cmd_eval(args, cfg):
    from .corpus import gray_stack, label_array
    from .metrics import evaluate_arrays
    from .models import Ensemble

    model_dir = Path(args.model)
    model = _load_model(model_dir)
    out = _out(args)
    samples = _load_split(args.corpus, "test", cfg)
    x, y = gray_stack(samples, cfg["train"]["input_size"]), label_array(samples)
    report, cm = evaluate_arrays(y, model.predict_proba(x))
    default_name = "EnTL" if isinstance(model, Ensemble) else model.name
    body = {"model": args.name or default_name, "metrics": report.to_dict(), "confusion_matrix": cm.to_list()}
    if isinstance(model, Ensemble):
        body["members"] = {}
        for m in model.members:
            r, c = evaluate_arrays(y, m.predict_proba(x))
            body["members"][m.name] = {"metrics": r.to_dict(), "confusion_matrix": c.to_list()}
    _dump(out / "metrics.json", body)
    outputs = ["metrics.json"]
    if args.png:
        from .plotting import plot_confusion

        plot_confusion(cm.counts, out / "confusion.png", title=body["model"])
        outputs.append("confusion.png")
    train_manifest = model_dir / "manifest.json"
    inputs = {"labels": Path(args.corpus) / "labels.jsonl"}
    if train_manifest.exists():
        inputs["train_manifest"] = train_manifest
    write_manifest(out, "eval", cfg, inputs, outputs)
    print(json.dumps({"accuracy": report.accuracy, "mcc": report.mcc}, sort_keys=True))


def cmd_context(args, cfg):
    from .audio_io import load_wav, segment
    from .context import ContextThresholds, context_timeline, honk_spl_correlation, spl_kde, timeline_jsonl

    out = _out(args)
    clip = load_wav(args.wav)
    windows = segment(clip, cfg["audio"]["window_s"], cfg["audio"]["window_s"])
    inputs = {"wav": args.wav}
    if args.labels:
        rows = _read_jsonl(args.labels)
        by_window = {int(r.get("window", 0)): int(r["label"]) for r in rows}
        labels = [by_window.get(w.index, 0) for w in windows]
        inputs["labels"] = args.labels
    elif args.model:
        from .spectrogram import normalized_gray, stft_spectrogram

        model = _load_model(Path(args.model))
        size = cfg["train"]["input_size"]
        x = np.stack([normalized_gray(stft_spectrogram(w, **_stft_kwargs(cfg)), size, size) for w in windows])
        labels = [int(v) for v in model.predict(x.astype(np.float32))]
        inputs["model_manifest"] = Path(args.model) / "manifest.json"
    else:
        raise DataError("context needs --labels or --model")
    off = cfg["audio"]["spl_offset_db"]
    c = cfg["context"]
    th = ContextThresholds(c["market_frac"], c["hwv_low"], c["busy_rate"], c["quiet_rate"])
    stream = [(w, lab, w.spl_dbfs + off) for w, lab in zip(windows, labels)]
    entries = context_timeline(stream, c["slot_s"], th, location_id=clip.source_id)
    (out / "context.jsonl").write_text(timeline_jsonl(entries), encoding="utf-8")
    outputs = ["context.jsonl"]

    # honk-SPL correlation over one-minute intervals
    minute = {}
    for w, lab, spl in stream:
        k = int(w.start_s // 60)
        minute.setdefault(k, []).append((lab != 0, spl))
    pairs = [(sum(h for h, _ in v), float(np.mean([s for _, s in v]))) for _, v in sorted(minute.items())]
    summary = {"verdicts": [e.verdict.label for e in entries]}
    try:
        summary["honk_spl_pearson_r"] = honk_spl_correlation(pairs)
    except HonkPipeError as exc:
        summary["honk_spl_pearson_r"] = None
        logger.warning("correlation skipped: %s", exc)
    _dump(out / "context_summary.json", summary)
    outputs.append("context_summary.json")
    if args.png:
        from .plotting import plot_correlation, plot_grouped_counts, plot_kde

        groups = {f"{e.t_start:.0f}-{e.t_end:.0f}s\n{e.verdict.label}": e.to_record()["counts"] for e in entries}
        plot_grouped_counts(groups, out / "context_counts.png")
        curves = {}
        for k, name in ((1, "LWV"), (2, "MWV"), (3, "HWV")):
            vals = [spl for _, lab, spl in stream if lab == k]
            if len(vals) >= 2 and np.ptp(vals) > 0:
                curves[name] = spl_kde(vals).grid()
        if curves:
            plot_kde(curves, out / "spl_kde.png")
            outputs.append("spl_kde.png")
        if summary["honk_spl_pearson_r"] is not None:
            plot_correlation([p[0] for p in pairs], [p[1] for p in pairs], summary["honk_spl_pearson_r"],
                             out / "honk_spl_correlation.png")
            outputs.append("honk_spl_correlation.png")
        outputs.append("context_counts.png")
    write_manifest(out, "context", cfg, inputs, outputs)
    print(json.dumps(summary, sort_keys=True))


def cmd_report(args, cfg):
    from .metrics import METRICS, compare_models

    out = _out(args)
    lines = []
    inputs = {}
    if args.labeling:
        lines.append("## Labelling performance\n")
        lines.append("| Metric | " + " | ".join(Path(p).name for p in args.labeling) + " |")
        lines.append("|---|" + "---|" * len(args.labeling))
        reps = []
        for i, p in enumerate(args.labeling):
            f = Path(p) / "label_report.json"
            if not f.exists():
                raise DataError(f"{p}: no label_report.json")
            inputs[f"labeling{i}"] = f
            reps.append(json.loads(f.read_text())["metrics"])
        for m in METRICS:
            lines.append(f"| {m} | " + " | ".join(_cell(r.get(m)) for r in reps) + " |")
        lines.append("")
    reports = {}
    for i, p in enumerate(args.eval or []):
        f = Path(p) / "metrics.json"
        if not f.exists():
            raise DataError(f"{p}: no metrics.json")
        inputs[f"eval{i}"] = f
        body = json.loads(f.read_text())
        for name, mem in sorted(body.get("members", {}).items()):
            reports[name] = mem["metrics"]
        reports[body["model"]] = body["metrics"]
    if reports:
        lines.append("## Classification performance\n")
        names = list(reports)
        lines.append("| Metric | " + " | ".join(names) + " |")
        lines.append("|---|" + "---|" * len(names))
        for m in METRICS:
            lines.append(f"| {m} | " + " | ".join(_cell(reports[n].get(m)) for n in names) + " |")
        lines.append("")
        table = compare_models(reports, target=args.target)
        lines.append(f"## Comparison against {table.target}\n")
        lines.append(table.to_markdown())
        lines.append("")
        (out / "comparison.txt").write_text(table.to_text() + "\n", encoding="utf-8")
    (out / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(out, "report", cfg, inputs, ["report.md", "comparison.txt"])
    print(f"report -> {out / 'report.md'}")


def _cell(v):
    return "n/a" if v is None else f"{v:.4f}"


def cmd_plot(args, cfg):
    from .plotting import plot_confusion, plot_grouped_counts, plot_history

    out = _out(args)
    run = Path(args.run)
    made = []
    if (run / "history.json").exists():
        hist = json.loads((run / "history.json").read_text())
        plot_history(hist, out / "training_accuracy.png", "accuracy")
        plot_history(hist, out / "training_loss.png", "loss")
        made += ["training_accuracy.png", "training_loss.png"]
    if (run / "metrics.json").exists():
        body = json.loads((run / "metrics.json").read_text())
        plot_confusion(body["confusion_matrix"], out / "confusion.png", title=body.get("model", ""))
        made.append("confusion.png")
    if (run / "context.jsonl").exists():
        rows = _read_jsonl(run / "context.jsonl")
        groups = {f"{r['t_start']:.0f}s {r['verdict']}": r["counts"] for r in rows}
        plot_grouped_counts(groups, out / "context_counts.png")
        made.append("context_counts.png")
    if not made:
        raise DataError(f"{run}: nothing to plot (no history.json, metrics.json or context.jsonl)")
    write_manifest(out, "plot", cfg, {}, made)
    print("\n".join(made))


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--seed", type=int, help="global seed (overrides config)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="honkpipe", description="Vehicle honk labelling, classification and context inference.")
    p.add_argument("--version", action="version", version=f"honkpipe {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="WAV (+ sensor sidecar) -> window stats")
    s.add_argument("--wav", required=True)
    s.add_argument("--sidecar")

    s = sub.add_parser("spectro", parents=[common], help="WAV -> per-window spectrogram containers")
    s.add_argument("--wav", required=True)
    s.add_argument("--png", action="store_true")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus or context trace")
    s.add_argument("--preset")
    s.add_argument("--trace", help="comma-separated locations, e.g. residential,marketplace,highway")
    s.add_argument("--slot", default="morning")
    s.add_argument("--scene-duration", type=float, default=300.0)
    s.add_argument("--noise", default="none")
    s.add_argument("--snr-db", type=float, default=10.0)

    s = sub.add_parser("label", parents=[common], help="label a corpus with MAE / MAEGAN")
    s.add_argument("--corpus", required=True)
    s.add_argument("--method", choices=["mae", "maegan"])

    s = sub.add_parser("augment", parents=[common], help="time/frequency-mask the training split")
    s.add_argument("--corpus", required=True)

    s = sub.add_parser("balance", parents=[common], help="downsample classes and re-split")
    s.add_argument("--corpus", required=True)
    s.add_argument("--train-frac", type=float, default=0.8)

    s = sub.add_parser("train", parents=[common], help="train a backbone, baseline or ensemble")
    s.add_argument("--corpus", required=True)
    s.add_argument("--arch")
    s.add_argument("--ensemble", type=int)
    s.add_argument("--partition", action="store_true", help="disjoint shards instead of bootstrap")

    s = sub.add_parser("eval", parents=[common], help="evaluate a trained model on the test split")
    s.add_argument("--corpus", required=True)
    s.add_argument("--model", required=True, help="train output directory")
    s.add_argument("--name")
    s.add_argument("--png", action="store_true")

    s = sub.add_parser("context", parents=[common], help="location verdicts over a recording")
    s.add_argument("--wav", required=True)
    s.add_argument("--labels", help="per-window labels JSONL")
    s.add_argument("--model", help="train output directory used to label windows")
    s.add_argument("--png", action="store_true")

    s = sub.add_parser("report", parents=[common], help="markdown tables from label/eval runs")
    s.add_argument("--labeling", nargs="*", default=[])
    s.add_argument("--eval", nargs="*", default=[])
    s.add_argument("--target", help="model whose gains are reported (default: best accuracy)")

    s = sub.add_parser("plot", parents=[common], help="figures for a run directory")
    s.add_argument("--run", required=True)
    return p


COMMANDS = {"ingest": cmd_ingest, "spectro": cmd_spectro, "synth": cmd_synth, "label": cmd_label,
            "augment": cmd_augment, "balance": cmd_balance, "train": cmd_train, "eval": cmd_eval,
            "context": cmd_context, "report": cmd_report, "plot": cmd_plot}


def _flag_overrides(args) -> list:
    ov = list(args.set)
    if args.seed is not None:
        ov.append({"seed": args.seed})
    t = {}
    if getattr(args, "arch", None):
        t["arch"] = args.arch
    if getattr(args, "ensemble", None) is not None:
        t["ensemble"] = args.ensemble
    if getattr(args, "partition", False):
        t["partition"] = True
    if t:
        ov.append({"train": t})
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        import torch

        torch.use_deterministic_algorithms(True)
        cfg = load_config(args.config, _flag_overrides(args))
        COMMANDS[args.command](args, cfg)
    except HonkPipeError as exc:
        print(f"honkpipe {args.command}: [{exc.module}] {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"honkpipe {args.command}: [config] {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"honkpipe {args.command}: [data] {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
