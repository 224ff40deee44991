"""Classification, hierarchical metrics, confusion matrices, protocols.

Coarse-level accuracy maps each of the top-k fine predictions upward
through the taxonomy and asks whether the true label's superclass is
in the mapped set.  That reading makes coarse top-5 able to stay below
100% even with 6 superclasses, and it makes the hierarchy ordering
acc(L1) >= acc(L2) >= acc(L3) an exact theorem rather than a tendency:
a correct fine prediction rolls up to a correct coarse one.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, replace as dc_replace
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import Manifest, Sample, SplitSpec, load_batch, load_raster, stratified_split, subsample_per_class
from .encoders import EncoderConfig, JointModelParams, encode_images, encode_texts, init_joint_model, build_vocabulary, similarity_logits
from .errors import ContractError, ConfigError, PoseClipError
from .pgm import write_pgm
from .taxonomy import Taxonomy
from .training import TrainConfig, fine_tune
from .util import digest_bytes

LEVELS = ("L1", "L2", "L3")
EVAL_CHUNK = 64


@dataclass
class Prediction:
    """Full ranking of every class for one test sample."""

    sample_id: str
    true_label: int
    ranking: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.ranking = np.asarray(self.ranking, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        n = len(self.ranking)
        if not np.array_equal(np.sort(self.ranking), np.arange(n)):
            raise ContractError(f"ranking of {self.sample_id!r} must cover every class once")
        if self.scores.shape != (n,):
            raise ContractError("scores must align with the ranking")
        if np.any(np.diff(self.scores) > 0):
            raise ContractError(f"scores of {self.sample_id!r} must be non-increasing")

    @property
    def top1(self) -> int:
        return int(self.ranking[0])


def rank_scores(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending ranking with ties broken by ascending class index."""
    order = np.argsort(-scores, kind="stable")
    return order, scores[order]


def _level_map(taxonomy: Taxonomy, level: str) -> Callable[[int], int]:
    level = level.upper()
    if level == "L3":
        return lambda i: i
    if level == "L2":
        return taxonomy.l2_of
    if level == "L1":
        return taxonomy.l1_of
    raise ConfigError(f"unknown taxonomy level {level!r}; expected one of {LEVELS}")


def zero_shot_classify(
    model: JointModelParams,
    manifest: Manifest,
    class_prompts: list[tuple[int, str]],
) -> list[Prediction]:
    """Rank every class prompt against every test image."""
    indices = [i for i, _ in class_prompts]
    if sorted(indices) != list(range(len(class_prompts))):
        raise ContractError("class prompts must cover class indices 0..C-1 exactly once")
    n_classes = len(class_prompts)
    bad = [s.id for s in manifest if s.label >= n_classes]
    if bad:
        raise ContractError(f"samples labeled outside the prompt set: {bad[:5]}")
    by_index = dict(class_prompts)
    text_emb = encode_texts([by_index[i] for i in range(n_classes)], model)
    predictions = []
    samples = list(manifest)
    for start in range(0, len(samples), EVAL_CHUNK):
        chunk = samples[start : start + EVAL_CHUNK]
        images = load_batch(chunk, model.config.side, manifest.base_dir)
        image_emb = encode_images(images, model)
        logits = similarity_logits(image_emb, text_emb, model.logit_scale).data
        for row, sample in enumerate(chunk):
            ranking, ordered = rank_scores(logits[row])
            predictions.append(Prediction(sample.id, sample.label, ranking, ordered))
    return predictions


def top_k_accuracy(
    predictions: list[Prediction], level: str, k: int, taxonomy: Taxonomy
) -> float:
    """Fraction of samples whose true label's level-image is hit in the top k."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    if not predictions:
        raise ContractError("no predictions to score")
    n_classes = len(predictions[0].ranking)
    if k > n_classes:
        raise ContractError(f"k={k} exceeds the class count {n_classes}")
    up = _level_map(taxonomy, level)
    hits = 0
    for pred in predictions:
        want = up(pred.true_label)
        if any(up(int(c)) == want for c in pred.ranking[:k]):
            hits += 1
    return hits / len(predictions)


def weighted_prf(predictions: list[Prediction]) -> tuple[float, float, float, int]:
    """Support-weighted precision, recall, F1 over rank-1 predictions.

    A class that is never predicted contributes zero precision at its
    support weight.  Weighted recall collapses algebraically to top-1
    accuracy; the identity is kept as a cross-check in tests.
    """
    if not predictions:
        raise ContractError("no predictions to score")
    true = np.array([p.true_label for p in predictions])
    pred = np.array([p.top1 for p in predictions])
    total = len(predictions)
    precision = recall = f1 = 0.0
    for cls in np.unique(true):
        support = int(np.sum(true == cls))
        weight = support / total
        tp = int(np.sum((true == cls) & (pred == cls)))
        predicted = int(np.sum(pred == cls))
        p_cls = tp / predicted if predicted else 0.0
        r_cls = tp / support
        f_cls = 2 * p_cls * r_cls / (p_cls + r_cls) if p_cls + r_cls > 0 else 0.0
        precision += weight * p_cls
        recall += weight * r_cls
        f1 += weight * f_cls
    return precision, recall, f1, total


@dataclass
class MetricsReport:
    """Per-level accuracy plus weighted P/R/F1 at the fine level."""

    top1: dict[str, float]
    top5: dict[str, float]
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {
            "top1": dict(self.top1),
            "top5": dict(self.top5),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }


def evaluate_predictions(predictions: list[Prediction], taxonomy: Taxonomy) -> MetricsReport:
    """Full metric sweep with the hierarchy invariants asserted on the way out."""
    n_classes = len(predictions[0].ranking)
    k5 = min(5, n_classes)
    top1 = {lvl: top_k_accuracy(predictions, lvl, 1, taxonomy) for lvl in LEVELS}
    top5 = {lvl: top_k_accuracy(predictions, lvl, k5, taxonomy) for lvl in LEVELS}
    precision, recall, f1, support = weighted_prf(predictions)
    assert top1["L1"] >= top1["L2"] >= top1["L3"], "hierarchy ordering violated at top-1"
    assert top5["L1"] >= top5["L2"] >= top5["L3"], "hierarchy ordering violated at top-5"
    assert all(top5[lvl] >= top1[lvl] for lvl in LEVELS), "top-5 below top-1"
    return MetricsReport(top1, top5, precision, recall, f1, support)


@dataclass
class ConfusionMatrix:
    """Within-superclass confusion with one aggregated outside column."""

    l1_name: str
    class_indices: list[int]
    class_names: list[str]
    counts: np.ndarray
    normalized: np.ndarray

    def save_csv(self, counts_path: str | Path, normalized_path: str | Path) -> None:
        header = ["true\\pred"] + self.class_names + ["outside"]
        for path, matrix, fmt in (
            (counts_path, self.counts, "{:d}"),
            (normalized_path, self.normalized, "{:.9f}"),
        ):
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for name, row in zip(self.class_names, matrix):
                    writer.writerow([name] + [fmt.format(v) for v in row])


def confusion_by_superclass(
    predictions: list[Prediction], taxonomy: Taxonomy
) -> list[ConfusionMatrix]:
    """One matrix per body position, columns normalized over predictions."""
    matrices = []
    for l1_index, l1_name in enumerate(taxonomy.l1_names):
        members = taxonomy.classes_in_l1(l1_index)
        position = {cls: i for i, cls in enumerate(members)}
        counts = np.zeros((len(members), len(members) + 1), dtype=np.int64)
        for pred in predictions:
            row = position.get(pred.true_label)
            if row is None:
                continue
            col = position.get(pred.top1, len(members))
            counts[row, col] += 1
        col_sums = counts.sum(axis=0, keepdims=True)
        normalized = np.divide(
            counts, col_sums, out=np.zeros(counts.shape, dtype=np.float64),
            where=col_sums > 0,
        )
        matrices.append(
            ConfusionMatrix(
                l1_name=l1_name,
                class_indices=members,
                class_names=[taxonomy.records[i].l3_name for i in members],
                counts=counts,
                normalized=normalized,
            )
        )
    return matrices


@dataclass
class RepeatedSplitStats:
    """Mean and spread of per-level top-1 accuracy over re-splits."""

    repeats: int
    mean: dict[str, float]
    std: dict[str, float]
    ddof: int = 0

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "mean": dict(self.mean),
            "std": dict(self.std),
            "ddof": self.ddof,
        }


PipelineFn = Callable[[Manifest, Manifest, int], MetricsReport]


def repeated_split_eval(
    manifest: Manifest,
    pipeline: PipelineFn,
    repeats: int,
    base_seed: int,
    train_fraction: float = 0.8,
    ddof: int = 0,
) -> RepeatedSplitStats:
    """Re-split, retrain, re-evaluate `repeats` times; aggregate per level.

    The spread is the population standard deviation by default; pass
    ddof=1 for the sample convention.
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    per_level: dict[str, list[float]] = {lvl: [] for lvl in LEVELS}
    for r in range(repeats):
        seed = base_seed + r
        try:
            train, test = stratified_split(
                manifest, SplitSpec(train_fraction=train_fraction, seed=seed)
            )
            report = pipeline(train, test, seed)
        except PoseClipError as exc:
            raise type(exc)(f"repeat {r} (seed {seed}): {exc}") from exc
        for lvl in LEVELS:
            per_level[lvl].append(report.top1[lvl])
    return RepeatedSplitStats(
        repeats=repeats,
        mean={lvl: float(np.mean(vals)) for lvl, vals in per_level.items()},
        std={lvl: float(np.std(vals, ddof=ddof)) for lvl, vals in per_level.items()},
        ddof=ddof,
    )


def contrastive_pipeline(
    taxonomy: Taxonomy,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
) -> PipelineFn:
    """Standard train-then-evaluate closure used by protocols and the CLI."""
    from .prompts import build_class_prompts, get_preset
    from .training import class_captions

    def run(train: Manifest, test: Manifest, seed: int) -> MetricsReport:
        captions = class_captions(taxonomy, train_config.template)
        vocab = build_vocabulary(captions[i] for i in sorted(captions))
        model = init_joint_model(encoder_config, vocab, seed)
        config = dc_replace(train_config, seed=seed)
        fine_tune(model, train, config, taxonomy, quiet=True)
        prompts = build_class_prompts(taxonomy, get_preset(train_config.template))
        return evaluate_predictions(zero_shot_classify(model, test, prompts), taxonomy)

    return run


@dataclass
class FrugalityRow:
    cap: int
    train_count: int
    top1: float

    def to_dict(self) -> dict:
        return {"cap": self.cap, "train_count": self.train_count, "top1": self.top1}


@dataclass
class FrugalitySweep:
    rows: list[FrugalityRow]
    test_digest: str
    test_count: int

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "test_digest": self.test_digest,
            "test_count": self.test_count,
        }


def frugality_sweep(
    manifest: Manifest,
    caps: list[int],
    taxonomy: Taxonomy,
    train_config: TrainConfig,
    encoder_config: EncoderConfig | None = None,
    split: SplitSpec | None = None,
) -> FrugalitySweep:
    """Shrink the per-class training budget against one frozen test set."""
    if any(b >= a for a, b in zip(caps, caps[1:])) or not caps:
        raise ConfigError(f"caps must be strictly decreasing and non-empty, got {caps}")
    encoder_config = encoder_config or EncoderConfig()
    split = split or SplitSpec()
    train, test = stratified_split(manifest, split)
    test_digest = test.digest()
    smallest = min(len(g) for g in train.by_class().values())
    pipeline = contrastive_pipeline(taxonomy, encoder_config, train_config)
    rows = []
    for cap in caps:
        if cap > smallest:
            warnings.warn(
                f"cap {cap} exceeds the smallest class ({smallest} samples); "
                "that class is kept whole"
            )
        capped = subsample_per_class(train, cap, split.seed)
        report = pipeline(capped, test, train_config.seed)
        rows.append(FrugalityRow(cap=cap, train_count=len(capped), top1=report.top1["L3"]))
        if test.digest() != test_digest:
            raise ContractError("frozen test set changed during the sweep")
    return FrugalitySweep(rows=rows, test_digest=test_digest, test_count=len(test))


@dataclass
class SimilarityExport:
    matrix: np.ndarray
    csv_path: Path
    pgm_path: Path


def diag_dominance(matrix: np.ndarray) -> float:
    """Fraction of rows whose diagonal entry is the row maximum."""
    n = min(matrix.shape)
    wins = sum(1 for i in range(n) if matrix[i, i] >= matrix[i].max())
    return wins / n


def export_similarity_matrix(
    model: JointModelParams,
    samples: list[Sample],
    prompts: list[str],
    out_prefix: str | Path,
    base_dir: Path | None = None,
) -> SimilarityExport:
    """Write the image-text cosine matrix as CSV and a grayscale heatmap."""
    if len(samples) > 64:
        raise ContractError(f"similarity export capped at 64 samples, got {len(samples)}")
    if not samples or not prompts:
        raise ContractError("need at least one sample and one prompt")
    images = load_batch(samples, model.config.side, base_dir)
    image_emb = encode_images(images, model)
    text_emb = encode_texts(prompts, model)
    cosine = image_emb.data @ text_emb.data.T
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out_prefix.with_suffix(".csv")
    pgm_path = out_prefix.with_suffix(".pgm")
    np.savetxt(csv_path, cosine, fmt="%.17g", delimiter=",")
    heat = np.round((np.clip(cosine, -1.0, 1.0) + 1.0) / 2.0 * 255.0).astype(np.uint8)
    write_pgm(pgm_path, heat)
    return SimilarityExport(matrix=cosine, csv_path=csv_path, pgm_path=pgm_path)


@dataclass
class LatencyReport:
    mean_ms: float
    p50_ms: float
    p95_ms: float
    count: int

    def to_dict(self) -> dict:
        return {
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "count": self.count,
        }


def measure_inference_latency(
    model: JointModelParams,
    manifest: Manifest,
    class_prompts: list[tuple[int, str]],
) -> LatencyReport:
    """Wall-clock per sample over load, encode (both towers), logits, argmax."""
    if len(manifest) < 30:
        raise ContractError(f"need >= 30 samples for stable timing, got {len(manifest)}")
    prompt_texts = [text for _, text in class_prompts]
    times = []
    for sample in manifest:
        start = time.perf_counter()
        image = load_raster(sample.source, model.config.side, manifest.base_dir)
        image_emb = encode_images(image[None, :, :], model)
        text_emb = encode_texts(prompt_texts, model)
        logits = similarity_logits(image_emb, text_emb, model.logit_scale).data
        int(np.argmax(logits[0]))
        times.append((time.perf_counter() - start) * 1000.0)
    arr = np.array(times)
    return LatencyReport(
        mean_ms=float(arr.mean()),
        p50_ms=float(np.percentile(arr, 50)),
        p95_ms=float(np.percentile(arr, 95)),
        count=len(arr),
    )


def preprocessed_digest(manifest: Manifest, side: int) -> str:
    """Digest of the stacked float tensors a model would consume."""
    images = load_batch(list(manifest), side, manifest.base_dir)
    return digest_bytes(np.ascontiguousarray(images).tobytes())
