"""Vision-only softmax classifier and the two-model comparison report.

The baseline reuses the joint model's image tower verbatim and swaps
the shared embedding space for a plain linear head over the classes;
no text tower, no normalization, no temperature.  Comparing it with
the contrastive model on one shared test manifest yields the
accuracy / training-cost / latency trade-off table.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .autograd import add, cross_entropy_mean, matmul
from .dataset import Manifest, load_batch, load_raster
from .encoders import EncoderConfig, image_features
from .errors import ConfigError, ContractError
from .evaluation import LatencyReport, Prediction, rank_scores, top_k_accuracy
from .optim import ParamStore, optimizer_step, save_checkpoint
from .taxonomy import Taxonomy
from .training import EpochLog, TrainConfig, make_batches
from .util import rng_for


@dataclass
class BaselineParams:
    """Image tower plus a C-way linear head."""

    config: EncoderConfig
    n_classes: int
    store: ParamStore


def init_baseline(config: EncoderConfig, n_classes: int, seed: int) -> BaselineParams:
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    store = ParamStore()
    shapes = {
        "img_patch_w": ((config.patch_dim, config.hidden), config.patch_dim),
        "img_patch_b": ((config.hidden,), config.patch_dim),
        "img_out_w": ((config.hidden, config.dim), config.hidden),
        "head_w": ((config.dim, n_classes), config.dim),
        "head_b": ((n_classes,), config.dim),
    }
    for name, (shape, fan_in) in shapes.items():
        bound = 1.0 / np.sqrt(fan_in)
        rng = rng_for(seed, f"baseline-init:{name}")
        store.add(name, rng.uniform(-bound, bound, size=shape))
    return BaselineParams(config=config, n_classes=n_classes, store=store)


def baseline_logits(batch, params: BaselineParams):
    feats = image_features(batch, params.store, params.config)
    return add(matmul(feats, params.store["head_w"]), params.store["head_b"])


def classify_baseline(params: BaselineParams, manifest: Manifest) -> list[Prediction]:
    predictions = []
    samples = list(manifest)
    for start in range(0, len(samples), 64):
        chunk = samples[start : start + 64]
        images = load_batch(chunk, params.config.side, manifest.base_dir)
        logits = baseline_logits(images, params).data
        for row, sample in enumerate(chunk):
            ranking, ordered = rank_scores(logits[row])
            predictions.append(Prediction(sample.id, sample.label, ranking, ordered))
    return predictions


def train_baseline(
    manifest: Manifest,
    config: TrainConfig,
    taxonomy: Taxonomy,
    encoder_config: EncoderConfig | None = None,
    eval_manifest: Manifest | None = None,
    ckpt_path: str | Path | None = None,
    quiet: bool = True,
) -> tuple[BaselineParams, list[EpochLog]]:
    """Cross-entropy training on fine labels with the shared optimizer.

    Per-epoch top-1 accuracy is logged on eval_manifest when given,
    otherwise on the training set, so an epochs-to-best figure always
    exists.
    """
    encoder_config = encoder_config or EncoderConfig()
    if len(manifest) == 0:
        raise ConfigError("training manifest is empty")
    if config.batch_size > len(manifest):
        raise ConfigError(
            f"batch size {config.batch_size} exceeds training-set size {len(manifest)}"
        )
    manifest.validate_against(len(taxonomy))
    params = init_baseline(encoder_config, len(taxonomy), config.seed)
    probe = eval_manifest if eval_manifest is not None else manifest
    logs: list[EpochLog] = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        batch_losses = []
        for bi, batch in enumerate(make_batches(manifest, config.batch_size, config.seed, epoch)):
            try:
                images = load_batch(batch, encoder_config.side, manifest.base_dir)
                loss = cross_entropy_mean(baseline_logits(images, params), [s.label for s in batch])
            except ValueError as exc:
                raise ContractError(
                    f"non-finite loss at epoch {epoch} batch {bi}: {exc}"
                ) from exc
            batch_losses.append(loss.item())
            loss.backward()
            optimizer_step(params.store, config.learning_rate, config.weight_decay)
        preds = classify_baseline(params, probe)
        top1 = top_k_accuracy(preds, "L3", 1, taxonomy)
        log = EpochLog(
            epoch=epoch,
            mean_loss=float(np.mean(batch_losses)),
            seconds=time.perf_counter() - started,
            top1=top1,
        )
        logs.append(log)
        if not quiet:
            print(json.dumps(log.to_dict(), sort_keys=True))
    if ckpt_path is not None:
        save_checkpoint(
            params.store,
            ckpt_path,
            metadata={
                "kind": "baseline",
                "encoder": encoder_config.to_dict(),
                "n_classes": params.n_classes,
                "train": config.to_dict(),
            },
        )
    return params, logs


def measure_baseline_latency(params: BaselineParams, manifest: Manifest) -> LatencyReport:
    """Per-sample wall clock over load, feature extraction, head, argmax."""
    if len(manifest) < 30:
        raise ContractError(f"need >= 30 samples for stable timing, got {len(manifest)}")
    times = []
    for sample in manifest:
        start = time.perf_counter()
        image = load_raster(sample.source, params.config.side, manifest.base_dir)
        logits = baseline_logits(image[None, :, :], params).data
        int(np.argmax(logits[0]))
        times.append((time.perf_counter() - start) * 1000.0)
    arr = np.array(times)
    return LatencyReport(
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
        count=len(arr),
    )


@dataclass
class ModelRunArtifacts:
    """Everything compare_models needs to know about one trained model."""

    name: str
    side: int
    train_digest: str
    minutes: float
    epoch_logs: list[EpochLog]
    classify: Callable[[Manifest], list[Prediction]]
    latency: Callable[[Manifest], LatencyReport]


def epochs_to_best(logs: list[EpochLog]) -> int:
    """1-based epoch of the best logged accuracy (falling back to lowest loss)."""
    if not logs:
        raise ContractError("no epoch logs")
    if all(log.top1 is not None for log in logs):
        best = max(range(len(logs)), key=lambda i: (logs[i].top1, -i))
        return best + 1
    best = min(range(len(logs)), key=lambda i: (logs[i].mean_loss, i))
    return best + 1


@dataclass
class ComparisonReport:
    test_digest: str
    train_digest: str
    rows: list[dict]

    def to_dict(self) -> dict:
        return {
            "test_digest": self.test_digest,
            "train_digest": self.train_digest,
            "models": self.rows,
        }

    def to_text(self) -> str:
        header = f"{'model':<14} {'top1':>7} {'minutes':>9} {'latency_ms':>11} {'best_epoch':>11}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(
                f"{row['name']:<14} {row['top1']:>7.3f} {row['minutes']:>9.3f} "
                f"{row['latency_ms']:>11.3f} {row['epochs_to_best']:>11d}"
            )
        return "\n".join(lines)


def compare_models(
    contrastive: ModelRunArtifacts,
    baseline: ModelRunArtifacts,
    test_manifest: Manifest,
    taxonomy: Taxonomy,
) -> ComparisonReport:
    """Accuracy, training cost, latency, and epochs-to-best on one shared test set."""
    from .evaluation import preprocessed_digest

    if contrastive.train_digest != baseline.train_digest:
        raise ContractError(
            "models were trained on different manifests: "
            f"{contrastive.train_digest[:12]} vs {baseline.train_digest[:12]}"
        )
    rows = []
    for run in (contrastive, baseline):
        preds = run.classify(test_manifest)
        rows.append(
            {
                "name": run.name,
                "top1": top_k_accuracy(preds, "L3", 1, taxonomy),
                "minutes": run.minutes,
                "latency_ms": run.latency(test_manifest).mean_ms,
                "epochs_to_best": epochs_to_best(run.epoch_logs),
                "test_tensor_digest": preprocessed_digest(test_manifest, run.side),
            }
        )
    return ComparisonReport(
        test_digest=test_manifest.digest(),
        train_digest=contrastive.train_digest,
        rows=rows,
    )
