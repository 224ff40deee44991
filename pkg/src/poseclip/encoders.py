"""Dual-encoder joint embedding model.

Both towers reduce to chains of matrix products so the autodiff engine
stays minimal.  Patch extraction and token lookup tables are built with
plain numpy outside the graph (inputs carry no gradient); mean-pooling
is a matmul against a constant pooling matrix; the token embedding
lookup is a one-hot matrix times the embedding table, which gives the
correct scatter-add gradient for free.

Image tower: patchify, linear-project to hidden width, tanh, mean-pool
over patches, project to the embedding dimension, L2-normalize.
Text tower: embed tokens, mean-pool over non-pad positions, project,
L2-normalize.  Similarities are exp(logit scale) times the cosine
matrix between the two stacks of unit rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .autograd import Tensor, add, exp, l2_normalize_rows, matmul, mul, tanh
from .errors import ConfigError, ContractError, ShapeError
from .optim import ParamStore
from .util import rng_for

LOGIT_SCALE_INIT = float(np.log(1.0 / 0.07))
LOGIT_SCALE_MAX = float(np.log(100.0))

PARAM_NAMES = (
    "img_patch_w",
    "img_patch_b",
    "img_out_w",
    "tok_embed",
    "txt_out_w",
    "logit_scale",
)


def _clean_token(raw: str) -> str:
    return "".join(c for c in raw.lower() if c.isalnum() or c == "-")


def split_tokens(text: str) -> list[str]:
    """Lowercase whitespace tokens with punctuation stripped (hyphens kept)."""
    out = []
    for raw in text.split():
        tok = _clean_token(raw)
        if tok:
            out.append(tok)
    return out


@dataclass
class Vocabulary:
    """Dense token index with slot 0 reserved for unknown tokens."""

    tokens: list[str]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.tokens or self.tokens[0] != "<unk>":
            raise ConfigError("vocabulary must start with the <unk> token")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ConfigError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self._index.get(token, 0)

    def save(self, path: str | Path) -> None:
        """One token per line; the line number is the index."""
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines if line])


def build_vocabulary(corpus: Iterable[str]) -> Vocabulary:
    """First-occurrence vocabulary over the tokenized corpus."""
    tokens = ["<unk>"]
    seen = {"<unk>"}
    empty = True
    for text in corpus:
        empty = False
        for tok in split_tokens(text):
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
    if empty:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(tokens)


class TokenizedText(NamedTuple):
    """Fixed-length index sequence plus its non-pad mask."""

    ids: np.ndarray
    mask: np.ndarray


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> TokenizedText:
    """Map text to max_len indices (unknown and pad both 0) and a 0/1 mask."""
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    ids = np.zeros(max_len, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.float64)
    for pos, tok in enumerate(split_tokens(text)[:max_len]):
        ids[pos] = vocab.lookup(tok)
        mask[pos] = 1.0
    return TokenizedText(ids, mask)


@dataclass(frozen=True)
class EncoderConfig:
    """Shared geometry of both towers."""

    side: int = 32
    channels: int = 1
    patch: int = 8
    dim: int = 64
    hidden: int = 128
    max_len: int = 16

    def __post_init__(self):
        if self.channels != 1:
            raise ConfigError("only single-channel (grayscale) images are supported")
        if self.side <= 0 or self.patch <= 0 or self.side % self.patch != 0:
            raise ConfigError(
                f"image side {self.side} must be a positive multiple of patch {self.patch}"
            )
        if self.dim <= 0 or self.hidden <= 0:
            raise ConfigError("embedding and hidden dimensions must be positive")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")

    @property
    def patches_per_image(self) -> int:
        return (self.side // self.patch) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch * self.patch * self.channels

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "channels": self.channels,
            "patch": self.patch,
            "dim": self.dim,
            "hidden": self.hidden,
            "max_len": self.max_len,
        }


@dataclass
class JointModelParams:
    """Both towers' parameters living in one ParamStore.

    Tensors are read from the store at every use because optimizer
    steps replace them; holding onto a Tensor across a step would see
    stale values.
    """

    config: EncoderConfig
    vocab: Vocabulary
    store: ParamStore

    @property
    def img_patch_w(self) -> Tensor:
        return self.store["img_patch_w"]

    @property
    def img_patch_b(self) -> Tensor:
        return self.store["img_patch_b"]

    @property
    def img_out_w(self) -> Tensor:
        return self.store["img_out_w"]

    @property
    def tok_embed(self) -> Tensor:
        return self.store["tok_embed"]

    @property
    def txt_out_w(self) -> Tensor:
        return self.store["txt_out_w"]

    @property
    def logit_scale(self) -> Tensor:
        return self.store["logit_scale"]


def init_joint_model(config: EncoderConfig, vocab: Vocabulary, seed: int) -> JointModelParams:
    """Fresh parameters, each uniform in +/- 1/sqrt(fan_in) from its own seed stream."""
    store = ParamStore()
    shapes = {
        "img_patch_w": ((config.patch_dim, config.hidden), config.patch_dim),
        "img_patch_b": ((config.hidden,), config.patch_dim),
        "img_out_w": ((config.hidden, config.dim), config.hidden),
        "tok_embed": ((len(vocab), config.hidden), len(vocab)),
        "txt_out_w": ((config.hidden, config.dim), config.hidden),
    }
    for name, (shape, fan_in) in shapes.items():
        bound = 1.0 / np.sqrt(fan_in)
        rng = rng_for(seed, f"init:{name}")
        store.add(name, rng.uniform(-bound, bound, size=shape))
    store.add("logit_scale", np.array([LOGIT_SCALE_INIT]))
    return store_to_model(config, vocab, store)


def store_to_model(config: EncoderConfig, vocab: Vocabulary, store: ParamStore) -> JointModelParams:
    missing = [n for n in PARAM_NAMES if n not in store]
    if missing:
        raise ConfigError(f"parameter store lacks {missing}")
    return JointModelParams(config=config, vocab=vocab, store=store)


def clamp_logit_scale(store: ParamStore) -> None:
    """Pin exp(logit scale) to at most 100 after an optimizer step."""
    s = store["logit_scale"].data
    if s[0] > LOGIT_SCALE_MAX:
        store.replace("logit_scale", np.array([LOGIT_SCALE_MAX]))


def extract_patches(batch: np.ndarray, config: EncoderConfig) -> np.ndarray:
    """Rearrange [N, side, side] into [N * patches_per_image, patch_dim], row-major."""
    n, h, w = batch.shape
    g = config.side // config.patch
    p = config.patch
    grid = batch.reshape(n, g, p, g, p).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(grid.reshape(n * g * g, p * p))


def _mean_pool_matrix(groups: int, per_group: int) -> np.ndarray:
    pool = np.zeros((groups, groups * per_group))
    for i in range(groups):
        pool[i, i * per_group : (i + 1) * per_group] = 1.0 / per_group
    return pool


def image_features(batch, store: ParamStore, config: EncoderConfig) -> Tensor:
    """Image tower up to (but not including) normalization: [N, dim] features.

    Shared by the joint model, which normalizes the rows, and the
    vision-only baseline, which feeds them to a classification head.
    """
    arr = batch.data if isinstance(batch, Tensor) else np.asarray(batch, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3 or arr.shape[1] != config.side or arr.shape[2] != config.side:
        raise ShapeError(
            f"expected images of shape [N, {config.side}, {config.side}], got {arr.shape}"
        )
    n = arr.shape[0]
    patches = Tensor(extract_patches(arr, config))
    hidden = tanh(add(matmul(patches, store["img_patch_w"]), store["img_patch_b"]))
    pooled = matmul(Tensor(_mean_pool_matrix(n, config.patches_per_image)), hidden)
    return matmul(pooled, store["img_out_w"])


def encode_images(batch, params: JointModelParams, config: EncoderConfig | None = None) -> Tensor:
    """Embed a stack of grayscale rasters into unit rows of shape [N, dim]."""
    config = config or params.config
    return l2_normalize_rows(image_features(batch, params.store, config))


def encode_texts(
    prompts: list[str],
    params: JointModelParams,
    vocab: Vocabulary | None = None,
    config: EncoderConfig | None = None,
) -> Tensor:
    """Embed prompt strings into unit rows of shape [M, dim].

    A prompt with no recognizable tokens pools to the zero vector and
    stays zero after normalization; a warning flags it because a zero
    row carries no ranking signal.
    """
    config = config or params.config
    vocab = vocab or params.vocab
    if not prompts:
        raise ContractError("encode_texts requires at least one prompt")
    m, length = len(prompts), config.max_len
    onehot = np.zeros((m * length, len(vocab)))
    pool = np.zeros((m, m * length))
    for i, prompt in enumerate(prompts):
        ids, mask = tokenize(prompt, vocab, length)
        count = float(mask.sum())
        if count == 0.0:
            warnings.warn(f"prompt {i} has no tokens; its embedding is the zero vector")
            continue
        rows = np.arange(i * length, (i + 1) * length)
        onehot[rows, ids] = mask
        pool[i, rows] = mask / count
    embedded = matmul(Tensor(onehot), params.tok_embed)
    pooled = matmul(Tensor(pool), embedded)
    return l2_normalize_rows(matmul(pooled, params.txt_out_w))


def similarity_logits(image_emb: Tensor, text_emb: Tensor, logit_scale: Tensor) -> Tensor:
    """exp(logit scale) times the [N x M] cosine matrix of two unit-row stacks."""
    if image_emb.shape[1] != text_emb.shape[1]:
        raise ShapeError(
            f"embedding dims differ: {image_emb.shape} vs {text_emb.shape}"
        )
    return mul(matmul(image_emb, text_emb.T), exp(logit_scale))
