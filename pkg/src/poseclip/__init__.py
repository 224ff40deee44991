"""Desk-scale contrastive image-text pose classifier.

A small numpy-backed autodiff engine drives a dual-encoder model that
embeds rasters and prompt strings into a shared space; classification
is nearest-prompt by scaled cosine similarity.  The package also ships
a synthetic stick-figure dataset generator, a three-level pose
taxonomy, hierarchical evaluation metrics, a vision-only baseline, and
a CLI that writes delimited reports with matplotlib figures alongside.
"""

from .autograd import (
    Tensor,
    cross_entropy_mean,
    l2_normalize_rows,
    matmul,
    softmax_rows,
)
from .encoders import (
    EncoderConfig,
    JointModelParams,
    Vocabulary,
    build_vocabulary,
    encode_images,
    encode_texts,
    init_joint_model,
    similarity_logits,
    tokenize,
)
from .errors import (
    ConfigError,
    ContractError,
    ParseError,
    PoseClipError,
    ShapeError,
    SplitError,
)
from .gradcheck import GradCheckReport, check_gradients
from .optim import ParamStore, load_checkpoint, optimizer_step, save_checkpoint
from .prompts import PromptTemplate, build_class_prompts, render_prompt
from .taxonomy import Taxonomy, load_taxonomy
from .training import TrainConfig, contrastive_loss, fine_tune, make_batches

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "EncoderConfig",
    "GradCheckReport",
    "JointModelParams",
    "ParamStore",
    "ParseError",
    "PoseClipError",
    "PromptTemplate",
    "ShapeError",
    "SplitError",
    "Taxonomy",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "build_class_prompts",
    "build_vocabulary",
    "check_gradients",
    "contrastive_loss",
    "cross_entropy_mean",
    "encode_images",
    "encode_texts",
    "fine_tune",
    "init_joint_model",
    "l2_normalize_rows",
    "load_checkpoint",
    "load_taxonomy",
    "make_batches",
    "matmul",
    "optimizer_step",
    "render_prompt",
    "save_checkpoint",
    "similarity_logits",
    "softmax_rows",
    "tokenize",
    "__version__",
]
