"""Command-line entry point for reproducible runs.

Every subcommand resolves its configuration from defaults, an optional
key=value config file, and explicit flags (flags win), runs under one
root seed, and leaves a run.json behind recording the resolved config,
input and output digests, and wall-clock time.  Reports land under
<out>/reports/, checkpoints under <out>/ckpt/.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from . import reporting
from .baseline import (
    ModelRunArtifacts,
    classify_baseline,
    compare_models,
    measure_baseline_latency,
    train_baseline,
)
from .dataset import Manifest, SplitSpec, stratified_split
from .encoders import EncoderConfig, JointModelParams, build_vocabulary, init_joint_model
from .errors import ConfigError, ParseError, PoseClipError
from .evaluation import (
    confusion_by_superclass,
    contrastive_pipeline,
    diag_dominance,
    evaluate_predictions,
    export_similarity_matrix,
    frugality_sweep,
    measure_inference_latency,
    repeated_split_eval,
    top_k_accuracy,
    zero_shot_classify,
)
from .gradcheck import check_gradients
from .prompts import PRESETS, build_class_prompts, get_preset
from .synthetic import (
    DEFAULT_NOISE,
    DEFAULT_THICKNESS,
    RenderConfig,
    SyntheticPoseSpec,
    generate_synthetic_dataset,
    render_pose,
    write_rasters,
)
from .taxonomy import Taxonomy, load_default_taxonomy, load_taxonomy, six_pose_taxonomy
from .training import TrainConfig, class_captions, contrastive_loss, fine_tune, load_joint_checkpoint
from .util import derive_seed, digest_file

TRAIN_KEYS = {
    "learning_rate": float,
    "weight_decay": float,
    "epochs": int,
    "batch_size": int,
    "seed": int,
    "template": str,
    "freeze_logit_scale": bool,
}
ENCODER_KEYS = {
    "side": int,
    "patch": int,
    "dim": int,
    "hidden": int,
    "max_len": int,
}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot read {raw!r} as a boolean")


def load_kv_config(path: str | Path) -> dict[str, str]:
    """Flat key=value file; # starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, keys: dict[str, type], file_cfg: dict[str, str]) -> dict:
    """defaults (argparse) < config file < explicit flags."""
    out = {}
    for key, typ in keys.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            out[key] = flag_value
        elif key in file_cfg:
            raw = file_cfg[key]
            out[key] = _parse_bool(raw) if typ is bool else typ(raw)
    return out


def _train_config(args, file_cfg) -> TrainConfig:
    return TrainConfig(**_resolve(args, TRAIN_KEYS, file_cfg))


def _encoder_config(args, file_cfg) -> EncoderConfig:
    return EncoderConfig(**_resolve(args, ENCODER_KEYS, file_cfg))


def _file_cfg(args) -> dict[str, str]:
    return load_kv_config(args.config) if getattr(args, "config", None) else {}


def _out_dir(args) -> Path:
    base = os.environ.get("POSECLIP_OUT")
    out = Path(args.out) if args.out else (Path(base) if base else None)
    if out is None:
        raise ConfigError("no output directory: pass --out or set POSECLIP_OUT")
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    return out


def write_run_manifest(
    out_dir: Path,
    subcommand: str,
    config: dict,
    inputs: dict[str, Path],
    outputs: list[Path],
    started: float,
    extra: dict | None = None,
) -> Path:
    record = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {
            name: {"path": str(p), "sha256": digest_file(p)} for name, p in inputs.items()
        },
        "outputs": {
            str(p.relative_to(out_dir)): digest_file(p) for p in sorted(outputs)
        },
        "seconds": round(time.time() - started, 3),
    }
    if extra:
        record["extra"] = extra
    path = out_dir / "run.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _pick_taxonomy(args, manifest_path: Path | None = None) -> Taxonomy:
    if getattr(args, "taxonomy", None):
        return load_taxonomy(args.taxonomy)
    if manifest_path is not None:
        sibling = manifest_path.parent / "taxonomy.csv"
        if sibling.exists():
            return load_taxonomy(sibling)
    return load_default_taxonomy()


def _fresh_model(taxonomy: Taxonomy, encoder_cfg: EncoderConfig, template: str, seed: int) -> JointModelParams:
    captions = class_captions(taxonomy, template)
    vocab = build_vocabulary(captions[i] for i in sorted(captions))
    return init_joint_model(encoder_cfg, vocab, seed)


# -- subcommands ------------------------------------------------------


def cmd_gen_data(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    classes = args.classes if args.classes is not None else int(file_cfg.get("classes", 6))
    per_class = args.per_class if args.per_class is not None else int(file_cfg.get("per_class", 40))
    noise = args.noise if args.noise is not None else float(file_cfg.get("noise", DEFAULT_NOISE))
    side = args.side if args.side is not None else int(file_cfg.get("side", 32))

    full = load_default_taxonomy()
    if classes == 6:
        taxonomy = six_pose_taxonomy()
    elif classes == len(full):
        taxonomy = full
    elif 1 <= classes < len(full):
        taxonomy = full.subset(full.l3_names[:classes])
    else:
        raise ConfigError(f"--classes must be in 1..{len(full)}, got {classes}")

    render_cfg = RenderConfig(side=side, noise=noise, thickness=args.thickness or DEFAULT_THICKNESS)
    manifest, rasters = generate_synthetic_dataset(taxonomy, per_class, args.seed, render_cfg)

    outputs = []
    taxonomy.save(out / "taxonomy.csv")
    outputs.append(out / "taxonomy.csv")
    manifest.save(out / "manifest.tsv")
    outputs.append(out / "manifest.tsv")
    if not args.no_rasters:
        outputs.extend(write_rasters(rasters, out / "rasters"))
    config = {
        "classes": classes,
        "per_class": per_class,
        "seed": args.seed,
        "noise": noise,
        "side": side,
        "thickness": render_cfg.thickness,
    }
    write_run_manifest(out, "gen-data", config, {}, outputs, started)
    print(f"wrote {len(manifest)} samples over {classes} classes to {out}")
    return 0


def cmd_split(args) -> int:
    started = time.time()
    out = _out_dir(args)
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    spec = SplitSpec(train_fraction=args.fraction, seed=args.seed, per_class_cap=args.cap)
    train, test = stratified_split(manifest, spec)
    train.save(out / "train.tsv")
    test.save(out / "test.tsv")
    config = {"fraction": args.fraction, "seed": args.seed, "cap": args.cap}
    write_run_manifest(
        out, "split", config, {"manifest": manifest_path},
        [out / "train.tsv", out / "test.tsv"], started,
        extra={"train_count": len(train), "test_count": len(test)},
    )
    print(f"split {len(manifest)} samples into {len(train)} train / {len(test)} test")
    return 0


def cmd_train(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    train_cfg = _train_config(args, file_cfg)
    encoder_cfg = _encoder_config(args, file_cfg)
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    model = _fresh_model(taxonomy, encoder_cfg, train_cfg.template, train_cfg.seed)

    eval_fn = None
    inputs = {"manifest": manifest_path}
    if args.eval_manifest:
        eval_path = Path(args.eval_manifest)
        eval_manifest = Manifest.load(eval_path)
        prompts = build_class_prompts(taxonomy, get_preset(train_cfg.template))
        inputs["eval_manifest"] = eval_path

        def eval_fn(m):
            preds = zero_shot_classify(m, eval_manifest, prompts)
            return top_k_accuracy(preds, "L3", 1, taxonomy)

    ckpt_path = out / "ckpt" / "model.ckpt"
    log_path = out / "reports" / "train_log.jsonl"
    _, logs = fine_tune(
        model, manifest, train_cfg, taxonomy,
        ckpt_path=ckpt_path, eval_fn=eval_fn, log_file=log_path,
    )
    vocab_path = out / "ckpt" / "vocab.txt"
    model.vocab.save(vocab_path)
    curve = reporting.save_training_curve(logs, out / "reports" / "training-curve.png")
    outputs = [ckpt_path, vocab_path, log_path, curve]

    if args.eval_manifest:
        prompts = build_class_prompts(taxonomy, get_preset(train_cfg.template))
        report = evaluate_predictions(
            zero_shot_classify(model, eval_manifest, prompts), taxonomy
        )
        metrics_path = out / "reports" / "metrics.json"
        metrics_path.write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        outputs.append(metrics_path)

    config = {**train_cfg.to_dict(), "encoder": encoder_cfg.to_dict()}
    write_run_manifest(out, "train", config, inputs, outputs, started)
    print(f"final epoch mean loss {logs[-1].mean_loss:.6f}; checkpoint at {ckpt_path}")
    return 0


def _model_from_args(args, taxonomy, encoder_cfg, template, seed):
    if getattr(args, "ckpt", None):
        model, _ = load_joint_checkpoint(args.ckpt)
        return model
    return _fresh_model(taxonomy, encoder_cfg, template, seed)


def cmd_zero_shot(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    encoder_cfg = _encoder_config(args, file_cfg)
    template = args.template or file_cfg.get("template", "action")
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    model = _model_from_args(args, taxonomy, encoder_cfg, template, args.seed)
    prompts = build_class_prompts(taxonomy, get_preset(template))
    predictions = zero_shot_classify(model, manifest, prompts)
    report = evaluate_predictions(predictions, taxonomy)

    metrics_path = out / "reports" / "metrics.json"
    metrics_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    preds_path = out / "reports" / "predictions.tsv"
    lines = [
        f"{p.sample_id}\t{p.true_label}\t{p.top1}\t{p.scores[0]:.9f}" for p in predictions
    ]
    preds_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    inputs = {"manifest": manifest_path}
    if args.ckpt:
        inputs["ckpt"] = Path(args.ckpt)
    config = {"template": template, "seed": args.seed, "encoder": encoder_cfg.to_dict()}
    write_run_manifest(out, "zero-shot", config, inputs, [metrics_path, preds_path], started)
    print(f"top-1 L3 {report.top1['L3']:.3f} over {report.support} samples")
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    out = _out_dir(args)
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    model, _ = load_joint_checkpoint(args.ckpt)
    template = args.template or "action"
    prompts = build_class_prompts(taxonomy, get_preset(template))
    predictions = zero_shot_classify(model, manifest, prompts)
    report = evaluate_predictions(predictions, taxonomy)

    outputs = []
    metrics_path = out / "reports" / "metrics.json"
    metrics_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    outputs.append(metrics_path)
    matrices = confusion_by_superclass(predictions, taxonomy)
    for cm in matrices:
        slug = cm.l1_name.lower().replace(" ", "-")
        counts = out / "reports" / f"confusion-{slug}-counts.csv"
        norm = out / "reports" / f"confusion-{slug}-normalized.csv"
        cm.save_csv(counts, norm)
        outputs.extend([counts, norm])
    outputs.extend(reporting.save_confusion_heatmaps(matrices, out / "reports"))
    config = {"template": template}
    write_run_manifest(
        out, "eval", config,
        {"manifest": manifest_path, "ckpt": Path(args.ckpt)}, outputs, started,
    )
    print(f"top-1 L1/L2/L3 {report.top1['L1']:.3f}/{report.top1['L2']:.3f}/{report.top1['L3']:.3f}")
    return 0


def cmd_sweep(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    train_cfg = _train_config(args, file_cfg)
    encoder_cfg = _encoder_config(args, file_cfg)
    caps = [int(c) for c in args.caps.split(",")]
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    split = SplitSpec(train_fraction=args.fraction, seed=train_cfg.seed)
    sweep = frugality_sweep(manifest, caps, taxonomy, train_cfg, encoder_cfg, split)

    csv_path = out / "reports" / "frugality.csv"
    lines = ["cap,train_count,top1"] + [
        f"{r.cap},{r.train_count},{r.top1:.6f}" for r in sweep.rows
    ]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    json_path = out / "reports" / "frugality.json"
    json_path.write_text(json.dumps(sweep.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    curve = reporting.save_frugality_curve(sweep, out / "reports" / "frugality.png")
    config = {**train_cfg.to_dict(), "caps": caps, "fraction": args.fraction}
    write_run_manifest(
        out, "sweep-frugality", config, {"manifest": manifest_path},
        [csv_path, json_path, curve], started,
        extra={"test_digest": sweep.test_digest},
    )
    for row in sweep.rows:
        print(f"cap {row.cap:>4}: {row.train_count:>5} train images, top-1 {row.top1:.3f}")
    return 0


def cmd_repeat(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    train_cfg = _train_config(args, file_cfg)
    encoder_cfg = _encoder_config(args, file_cfg)
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    pipeline = contrastive_pipeline(taxonomy, encoder_cfg, train_cfg)
    stats = repeated_split_eval(
        manifest, pipeline, args.repeats, train_cfg.seed, train_fraction=args.fraction
    )
    stats_path = out / "reports" / "repeat_stats.json"
    stats_path.write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    chart = reporting.save_repeat_stats_chart(stats, out / "reports" / "repeat-stats.png")
    config = {**train_cfg.to_dict(), "repeats": args.repeats, "fraction": args.fraction}
    write_run_manifest(
        out, "repeat-splits", config, {"manifest": manifest_path},
        [stats_path, chart], started,
    )
    for lvl in ("L1", "L2", "L3"):
        print(f"{lvl}: mean {stats.mean[lvl]:.3f} std {stats.std[lvl]:.3f}")
    return 0


def cmd_compare(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    train_cfg = _train_config(args, file_cfg)
    encoder_cfg = _encoder_config(args, file_cfg)
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    train, test = stratified_split(
        manifest, SplitSpec(train_fraction=args.fraction, seed=train_cfg.seed)
    )
    prompts = build_class_prompts(taxonomy, get_preset(train_cfg.template))

    def contrastive_eval(m):
        preds = zero_shot_classify(m, test, prompts)
        return top_k_accuracy(preds, "L3", 1, taxonomy)

    model = _fresh_model(taxonomy, encoder_cfg, train_cfg.template, train_cfg.seed)
    t0 = time.perf_counter()
    _, clip_logs = fine_tune(model, train, train_cfg, taxonomy, eval_fn=contrastive_eval, quiet=True)
    clip_minutes = (time.perf_counter() - t0) / 60.0

    t0 = time.perf_counter()
    base_params, base_logs = train_baseline(
        train, train_cfg, taxonomy, encoder_cfg, eval_manifest=test
    )
    base_minutes = (time.perf_counter() - t0) / 60.0

    clip_art = ModelRunArtifacts(
        name="contrastive",
        side=encoder_cfg.side,
        train_digest=train.digest(),
        minutes=clip_minutes,
        epoch_logs=clip_logs,
        classify=lambda m: zero_shot_classify(model, m, prompts),
        latency=lambda m: measure_inference_latency(model, m, prompts),
    )
    base_art = ModelRunArtifacts(
        name="baseline",
        side=encoder_cfg.side,
        train_digest=train.digest(),
        minutes=base_minutes,
        epoch_logs=base_logs,
        classify=lambda m: classify_baseline(base_params, m),
        latency=lambda m: measure_baseline_latency(base_params, m),
    )
    report = compare_models(clip_art, base_art, test, taxonomy)

    json_path = out / "reports" / "comparison.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text_path = out / "reports" / "comparison.txt"
    text_path.write_text(report.to_text() + "\n", encoding="utf-8")
    chart = reporting.save_comparison_chart(report, out / "reports" / "comparison.png")
    config = {**train_cfg.to_dict(), "fraction": args.fraction, "encoder": encoder_cfg.to_dict()}
    write_run_manifest(
        out, "compare-baseline", config, {"manifest": manifest_path},
        [json_path, text_path, chart], started,
    )
    print(report.to_text())
    return 0


def cmd_gradcheck(args) -> int:
    started = time.time()
    out = _out_dir(args)
    encoder_cfg = EncoderConfig(side=16, patch=8, dim=8, hidden=12, max_len=8)
    taxonomy = six_pose_taxonomy().subset(
        ["Balasana", "Dhanurasana", "Marjaryasana", "Utkatasana"]
    )
    captions = class_captions(taxonomy, "action")
    vocab = build_vocabulary(captions[i] for i in sorted(captions))
    model = init_joint_model(encoder_cfg, vocab, args.seed)
    images = np.stack(
        [
            render_pose(
                SyntheticPoseSpec(i, derive_seed(args.seed, f"gradcheck:{i}"), noise=0.1),
                encoder_cfg.side,
            )
            for i in range(4)
        ]
    )
    texts = [captions[i] for i in range(4)]

    def loss_fn(store):
        view = JointModelParams(config=encoder_cfg, vocab=vocab, store=store)
        from .encoders import encode_images, encode_texts, similarity_logits

        logits = similarity_logits(
            encode_images(images, view), encode_texts(texts, view), view.logit_scale
        )
        return contrastive_loss(logits)

    report = check_gradients(loss_fn, model.store, tolerance=args.tolerance, seed=args.seed)
    report_path = out / "reports" / "gradcheck.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_run_manifest(
        out, "gradcheck", {"seed": args.seed, "tolerance": args.tolerance},
        {}, [report_path], started,
    )
    print(report.summary())
    return 0 if report.passed else 1


def cmd_export_sim(args) -> int:
    started = time.time()
    out = _out_dir(args)
    file_cfg = _file_cfg(args)
    encoder_cfg = _encoder_config(args, file_cfg)
    template = args.template or "action"
    manifest_path = Path(args.manifest)
    manifest = Manifest.load(manifest_path)
    taxonomy = _pick_taxonomy(args, manifest_path)
    model = _model_from_args(args, taxonomy, encoder_cfg, template, args.seed)

    by_class = manifest.by_class()
    labels = sorted(by_class)[: args.limit]
    samples = [by_class[lbl][0] for lbl in labels]
    tmpl = get_preset(template)
    from .prompts import render_prompt

    prompts = [render_prompt(tmpl, taxonomy.records[lbl].l3_name, lbl) for lbl in labels]
    export = export_similarity_matrix(
        model, samples, prompts, out / "reports" / "similarity", base_dir=manifest.base_dir
    )
    png = reporting.save_similarity_heatmap(
        export.matrix, out / "reports" / "similarity.png"
    )
    inputs = {"manifest": manifest_path}
    if args.ckpt:
        inputs["ckpt"] = Path(args.ckpt)
    write_run_manifest(
        out, "export-sim", {"template": template, "limit": args.limit, "seed": args.seed},
        inputs, [export.csv_path, export.pgm_path, png], started,
        extra={"diag_dominance": diag_dominance(export.matrix)},
    )
    print(f"diagonal dominance {diag_dominance(export.matrix):.3f} over {len(samples)} pairs")
    return 0


# -- parser -----------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory (or set POSECLIP_OUT)")
    p.add_argument("--seed", type=int, default=0, help="root seed for every stochastic choice")
    p.add_argument("--config", help="key=value config file; flags override it")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--template", choices=sorted(PRESETS))
    p.add_argument(
        "--freeze-logit-scale", dest="freeze_logit_scale",
        action="store_const", const=True,
    )


def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--side", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poseclip",
        description="Contrastive image-text pose classifier at desk scale",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic stick-figure dataset")
    _add_common(p)
    p.add_argument("--classes", type=int, help="6 = canonical six-pose subset; 82 = full taxonomy")
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--side", type=int)
    p.add_argument("--thickness", type=float)
    p.add_argument("--no-rasters", action="store_true", help="skip writing PGM files")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("split", help="deterministic stratified train/test split")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--cap", type=int, help="optional per-class cap applied to the train side")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="contrastive fine-tuning")
    _add_common(p)
    _add_train_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--manifest", required=True, help="training manifest")
    p.add_argument("--taxonomy", help="defaults to taxonomy.csv beside the manifest, then the shipped table")
    p.add_argument("--eval-manifest", dest="eval_manifest", help="held-out manifest for per-epoch accuracy")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("zero-shot", help="rank class prompts without training")
    _add_common(p)
    _add_encoder_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--template", choices=sorted(PRESETS))
    p.add_argument("--ckpt", help="evaluate a trained checkpoint instead of a random init")
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("eval", help="metrics and confusion matrices for a checkpoint")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--template", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-frugality", help="shrink per-class training budget against a frozen test set")
    _add_common(p)
    _add_train_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--manifest", required=True, help="full (unsplit) manifest")
    p.add_argument("--taxonomy")
    p.add_argument("--caps", default="43,20,6", help="comma-separated, strictly decreasing")
    p.add_argument("--fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("repeat-splits", help="re-split, retrain, aggregate mean and std")
    _add_common(p)
    _add_train_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--manifest", required=True, help="full (unsplit) manifest")
    p.add_argument("--taxonomy")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("compare-baseline", help="contrastive model vs vision-only classifier")
    _add_common(p)
    _add_train_flags(p)
    _add_encoder_flags(p)
    p.add_argument("--manifest", required=True, help="full (unsplit) manifest")
    p.add_argument("--taxonomy")
    p.add_argument("--fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full joint model")
    _add_common(p)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-sim", help="image-text cosine matrix as CSV, PGM, and PNG")
    _add_common(p)
    _add_encoder_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--taxonomy")
    p.add_argument("--ckpt")
    p.add_argument("--template", choices=sorted(PRESETS))
    p.add_argument("--limit", type=int, default=6, help="classes to include (max 64)")
    p.set_defaults(func=cmd_export_sim)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PoseClipError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
