"""Shared fixtures: a small encoder geometry and one cached synthetic split.

The small geometry (16px side, 8px patches, 8-dim embeddings) keeps
each training-path test under a second while exercising every code
path the full-size model uses.  Tests that need the default geometry
construct it inline.
"""

import pytest

from poseclip.dataset import SplitSpec, stratified_split
from poseclip.encoders import EncoderConfig, build_vocabulary, init_joint_model
from poseclip.synthetic import generate_synthetic_dataset
from poseclip.taxonomy import six_pose_taxonomy
from poseclip.training import class_captions

SMALL = EncoderConfig(side=16, patch=8, dim=8, hidden=12, max_len=8)


def small_model(taxonomy, template="plain", seed=0, config=SMALL):
    """Fresh joint model whose vocabulary covers the given template."""
    captions = class_captions(taxonomy, template)
    vocab = build_vocabulary(captions[i] for i in sorted(captions))
    return init_joint_model(config, vocab, seed)


@pytest.fixture
def six_tax():
    return six_pose_taxonomy()


@pytest.fixture(scope="session")
def six_split():
    """(train, test) halves of a 6-class x 6-image synthetic manifest."""
    manifest, _ = generate_synthetic_dataset(six_pose_taxonomy(), 6, seed=0)
    return stratified_split(manifest, SplitSpec(train_fraction=2.0 / 3.0, seed=0))
