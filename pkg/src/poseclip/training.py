"""Contrastive fine-tuning: batch assembly, the symmetric loss, the loop.

Within a batch of N matched (image, caption) pairs the similarity
matrix is N x N and the truth is its diagonal; the loss averages a
cross entropy over rows (image anchors) and one over columns (text
anchors).  Batches prefer class-distinct membership because two
samples of the same class would make each other's caption a false
negative.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autograd import Tensor, add, cross_entropy_mean, mul, transpose
from .dataset import Manifest, Sample, load_batch
from .encoders import (
    EncoderConfig,
    JointModelParams,
    clamp_logit_scale,
    encode_images,
    encode_texts,
    similarity_logits,
    split_tokens,
)
from .errors import ConfigError, ContractError
from .optim import optimizer_step, save_checkpoint
from .prompts import DEFAULT_PRESET, get_preset, render_prompt
from .taxonomy import Taxonomy
from .util import rng_for


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    weight_decay: float = 1e-3
    epochs: int = 5
    batch_size: int = 6
    seed: int = 0
    template: str = DEFAULT_PRESET
    freeze_logit_scale: bool = False

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate and weight decay must be >= 0")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch size must be >= 2, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "template": self.template,
            "freeze_logit_scale": self.freeze_logit_scale,
        }


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    seconds: float
    top1: float | None = None

    def to_dict(self) -> dict:
        out = {"epoch": self.epoch, "mean_loss": self.mean_loss, "seconds": self.seconds}
        if self.top1 is not None:
            out["top1"] = self.top1
        return out


def contrastive_loss(logits: Tensor) -> Tensor:
    """Mean of the row-wise and column-wise cross entropies with diagonal truth."""
    if logits.ndim != 2 or logits.shape[0] != logits.shape[1]:
        raise ContractError(f"in-batch contrastive loss needs square logits, got {logits.shape}")
    diagonal = list(range(logits.shape[0]))
    loss_img = cross_entropy_mean(logits, diagonal)
    loss_txt = cross_entropy_mean(transpose(logits), diagonal)
    return mul(add(loss_img, loss_txt), 0.5)


def make_batches(
    manifest: Manifest, batch_size: int, seed: int, epoch: int
) -> list[list[Sample]]:
    """Epoch-seeded batches that spread classes as evenly as supply allows.

    Per-class queues are shuffled, then classes are dealt round-robin
    in a reshuffled order each cycle, and the resulting sequence is
    chunked.  A batch can only contain a repeated class once fewer
    distinct classes remain than the batch size; that case is warned
    about because repeated captions contradict the diagonal targets.
    A trailing single sample joins the previous batch rather than
    forming a batch of one.
    """
    if batch_size < 2:
        raise ContractError(f"contrastive batches need size >= 2, got {batch_size}")
    if len(manifest) < 2:
        raise ContractError("need at least 2 samples to form a batch")
    rng = rng_for(seed, f"batches:{epoch}")
    queues: list[list[Sample]] = []
    for _, group in sorted(manifest.by_class().items()):
        order = rng.permutation(len(group))
        queues.append([group[i] for i in order])
    sequence: list[Sample] = []
    while any(queues):
        live = [i for i, q in enumerate(queues) if q]
        for i in rng.permutation(len(live)):
            sequence.append(queues[live[i]].pop())
    batches = [sequence[i : i + batch_size] for i in range(0, len(sequence), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2].extend(batches.pop())
    dup_batches = sum(
        1 for b in batches if len({s.label for s in b}) < len(b)
    )
    if dup_batches:
        warnings.warn(
            f"{dup_batches} batch(es) contain repeated classes; "
            "their duplicate captions act as false negatives"
        )
    return batches


def class_captions(taxonomy: Taxonomy, template_name: str) -> dict[int, str]:
    template = get_preset(template_name)
    return {
        i: render_prompt(template, rec.l3_name, i) for i, rec in enumerate(taxonomy.records)
    }


def _check_vocabulary_covers(model: JointModelParams, captions: dict[int, str]) -> None:
    missing = sorted(
        {
            tok
            for text in captions.values()
            for tok in split_tokens(text)
            if model.vocab.lookup(tok) == 0
        }
    )
    if missing:
        raise ContractError(
            f"vocabulary does not cover the prompt corpus; unknown tokens: {missing}"
        )


def fine_tune(
    model: JointModelParams,
    manifest: Manifest,
    config: TrainConfig,
    taxonomy: Taxonomy,
    ckpt_path: str | Path | None = None,
    eval_fn=None,
    log_file: str | Path | None = None,
    quiet: bool = False,
) -> tuple[JointModelParams, list[EpochLog]]:
    """Train both towers (and the logit scale) with the symmetric loss.

    eval_fn, when given, maps the current model to a top-1 accuracy
    recorded on each epoch's log line.  Logs go to stdout as one JSON
    object per line (suppressed by quiet) and to log_file when set.
    The checkpoint, written after the last epoch, embeds the encoder
    config and vocabulary so it reloads standalone.
    """
    if len(manifest) == 0:
        raise ConfigError("training manifest is empty")
    if config.batch_size > len(manifest):
        raise ConfigError(
            f"batch size {config.batch_size} exceeds training-set size {len(manifest)}"
        )
    manifest.validate_against(len(taxonomy))
    captions = class_captions(taxonomy, config.template)
    _check_vocabulary_covers(model, captions)

    logs: list[EpochLog] = []
    log_fh = open(log_file, "w", encoding="utf-8") if log_file else None
    try:
        for epoch in range(config.epochs):
            started = time.perf_counter()
            batch_losses: list[float] = []
            batches = make_batches(manifest, config.batch_size, config.seed, epoch)
            for bi, batch in enumerate(batches):
                try:
                    images = load_batch(batch, model.config.side, manifest.base_dir)
                    image_emb = encode_images(images, model)
                    text_emb = encode_texts([captions[s.label] for s in batch], model)
                    logits = similarity_logits(image_emb, text_emb, model.logit_scale)
                    loss = contrastive_loss(logits)
                except ValueError as exc:
                    raise ContractError(
                        f"non-finite loss at epoch {epoch} batch {bi}: {exc}"
                    ) from exc
                loss_value = loss.item()
                if not np.isfinite(loss_value):
                    raise ContractError(f"non-finite loss at epoch {epoch} batch {bi}")
                batch_losses.append(loss_value)
                loss.backward()
                frozen_scale = model.logit_scale.data.copy() if config.freeze_logit_scale else None
                optimizer_step(model.store, config.learning_rate, config.weight_decay)
                if frozen_scale is not None:
                    model.store.replace("logit_scale", frozen_scale)
                clamp_logit_scale(model.store)
            log = EpochLog(
                epoch=epoch,
                mean_loss=float(np.mean(batch_losses)),
                seconds=time.perf_counter() - started,
                top1=None if eval_fn is None else float(eval_fn(model)),
            )
            logs.append(log)
            line = json.dumps(log.to_dict(), sort_keys=True)
            if not quiet:
                print(line)
            if log_fh:
                log_fh.write(line + "\n")
    finally:
        if log_fh:
            log_fh.close()

    if ckpt_path is not None:
        save_checkpoint(
            model.store,
            ckpt_path,
            metadata={
                "kind": "joint",
                "encoder": model.config.to_dict(),
                "vocab": model.vocab.tokens,
                "train": config.to_dict(),
            },
        )
    return model, logs


def load_joint_checkpoint(path: str | Path) -> tuple[JointModelParams, dict]:
    """Rebuild a JointModelParams from a checkpoint written by fine_tune."""
    from .encoders import Vocabulary, store_to_model
    from .optim import load_checkpoint

    store, metadata = load_checkpoint(path)
    if metadata.get("kind") != "joint":
        raise ConfigError(f"{path} is not a joint-model checkpoint")
    config = EncoderConfig(**metadata["encoder"])
    vocab = Vocabulary(list(metadata["vocab"]))
    return store_to_model(config, vocab, store), metadata
