"""Contrastive loss, batch construction, and the fine-tuning loop."""

import json

import numpy as np
import pytest
from conftest import SMALL, small_model

from poseclip.autograd import Tensor
from poseclip.dataset import Manifest, Sample
from poseclip.errors import ConfigError, ContractError
from poseclip.optim import save_checkpoint
from poseclip.synthetic import generate_synthetic_dataset
from poseclip.training import (
    TrainConfig,
    class_captions,
    contrastive_loss,
    fine_tune,
    load_joint_checkpoint,
    make_batches,
)


def balanced_manifest(n_classes, per_class):
    return Manifest(
        [
            Sample(f"c{c}-{k}", f"synthetic:{c}:{c * 1000 + k}:0.1", c)
            for c in range(n_classes)
            for k in range(per_class)
        ]
    )


class TestContrastiveLoss:
    def test_uniform_logits_give_log_n(self):
        for n in (2, 3, 6):
            loss = contrastive_loss(Tensor(np.zeros((n, n)))).item()
            assert abs(loss - np.log(n)) <= 1e-9

    def test_frozen_two_by_two(self):
        loss = contrastive_loss(Tensor(np.array([[2.0, 0.0], [0.0, 2.0]]))).item()
        np.testing.assert_allclose(loss, 0.1269280110429726, rtol=1e-12)

    def test_saturated_diagonal_vanishes(self):
        loss = contrastive_loss(Tensor(1000.0 * np.eye(6))).item()
        assert loss < 1e-6

    def test_transpose_symmetry(self):
        """Swapping rows for columns swaps the two cross-entropy terms."""
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            logits = rng.normal(scale=3.0, size=(n, n))
            a = contrastive_loss(Tensor(logits)).item()
            b = contrastive_loss(Tensor(logits.T.copy())).item()
            assert abs(a - b) <= 1e-12

    def test_permutation_invariance(self):
        """Reordering pairs relabels rows and columns together."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = 5
            logits = rng.normal(size=(n, n))
            perm = rng.permutation(n)
            p = np.eye(n)[perm]
            a = contrastive_loss(Tensor(logits)).item()
            b = contrastive_loss(Tensor(p @ logits @ p.T)).item()
            assert abs(a - b) <= 1e-9

    def test_non_square_rejected(self):
        with pytest.raises(ContractError):
            contrastive_loss(Tensor(np.zeros((2, 3))))

    def test_gradient_against_finite_differences(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(3, 3))
        t = Tensor(logits, requires_grad=True)
        contrastive_loss(t).backward()
        numeric = np.zeros_like(logits)
        h = 1e-6
        for idx in np.ndindex(logits.shape):
            bumped = logits.copy()
            bumped[idx] += h
            up = contrastive_loss(Tensor(bumped)).item()
            bumped[idx] -= 2 * h
            down = contrastive_loss(Tensor(bumped)).item()
            numeric[idx] = (up - down) / (2 * h)
        np.testing.assert_allclose(t.grad, numeric, atol=1e-8)


class TestMakeBatches:
    def test_partitions_the_manifest(self):
        manifest = balanced_manifest(5, 4)
        batches = make_batches(manifest, 5, seed=0, epoch=0)
        ids = [s.id for b in batches for s in b]
        assert sorted(ids) == sorted(manifest.ids())

    def test_balanced_supply_keeps_classes_distinct(self):
        manifest = balanced_manifest(6, 4)
        rng = np.random.default_rng(3)
        for epoch in rng.integers(0, 100, size=10):
            for batch in make_batches(manifest, 6, seed=1, epoch=int(epoch)):
                labels = [s.label for s in batch]
                assert len(set(labels)) == len(labels)

    def test_epoch_changes_order(self):
        manifest = balanced_manifest(5, 4)
        a = [s.id for b in make_batches(manifest, 5, seed=0, epoch=0) for s in b]
        b = [s.id for b in make_batches(manifest, 5, seed=0, epoch=1) for s in b]
        assert a != b

    def test_same_seed_and_epoch_reproduce(self):
        manifest = balanced_manifest(5, 4)
        a = make_batches(manifest, 5, seed=9, epoch=2)
        b = make_batches(manifest, 5, seed=9, epoch=2)
        assert [[s.id for s in batch] for batch in a] == [[s.id for s in batch] for batch in b]

    def test_trailing_single_joins_previous_batch(self):
        manifest = balanced_manifest(7, 1)
        batches = make_batches(manifest, 3, seed=0, epoch=0)
        assert [len(b) for b in batches] == [3, 4]

    def test_scarce_classes_warn_about_repeats(self):
        manifest = balanced_manifest(2, 3)
        with pytest.warns(UserWarning, match="repeated classes"):
            batches = make_batches(manifest, 3, seed=0, epoch=0)
        assert [len(b) for b in batches] == [3, 3]

    def test_size_guards(self):
        manifest = balanced_manifest(2, 2)
        with pytest.raises(ContractError):
            make_batches(manifest, 1, seed=0, epoch=0)
        with pytest.raises(ContractError):
            make_batches(Manifest([Sample("a", "s", 0)]), 2, seed=0, epoch=0)


class TestClassCaptions:
    def test_plain_template(self, six_tax):
        captions = class_captions(six_tax, "plain")
        assert captions[0] == "Yoga pose Balasana"
        assert sorted(captions) == list(range(6))

    def test_numeric_template_distinct(self, six_tax):
        captions = class_captions(six_tax, "numeric")
        assert [captions[i] for i in range(6)] == [str(i) for i in range(6)]

    def test_unknown_template(self, six_tax):
        with pytest.raises(ConfigError, match="unknown prompt preset"):
            class_captions(six_tax, "florid")


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.template == "action"
        assert config.batch_size == 6

    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(ConfigError):
            TrainConfig(weight_decay=-0.1)
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=1)


class TestFineTune:
    def small_run(self, six_tax, per_class=2, **overrides):
        manifest, _ = generate_synthetic_dataset(six_tax, per_class, seed=0)
        model = small_model(six_tax, template="plain")
        kwargs = dict(
            learning_rate=1e-3, epochs=2, batch_size=6, seed=0, template="plain"
        )
        kwargs.update(overrides)
        return model, manifest, TrainConfig(**kwargs)

    def test_logs_one_record_per_epoch(self, six_tax):
        model, manifest, config = self.small_run(six_tax)
        _, logs = fine_tune(model, manifest, config, six_tax, quiet=True)
        assert [log.epoch for log in logs] == [0, 1]
        assert all(np.isfinite(log.mean_loss) for log in logs)
        assert all(log.top1 is None for log in logs)

    def test_eval_fn_recorded(self, six_tax):
        model, manifest, config = self.small_run(six_tax, epochs=1)
        _, logs = fine_tune(model, manifest, config, six_tax, eval_fn=lambda m: 0.5, quiet=True)
        assert logs[0].top1 == 0.5

    def test_zero_learning_rate_leaves_params_untouched(self, six_tax):
        model, manifest, config = self.small_run(
            six_tax, per_class=1, learning_rate=0.0, weight_decay=0.0, epochs=3
        )
        before = model.store.clone_data()
        _, logs = fine_tune(model, manifest, config, six_tax, quiet=True)
        after = model.store.clone_data()
        assert sorted(before) == sorted(after)
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])
        losses = [log.mean_loss for log in logs]
        assert max(losses) - min(losses) <= 1e-9

    def test_training_reduces_loss(self, six_tax):
        model, manifest, config = self.small_run(six_tax, epochs=4, learning_rate=5e-4)
        _, logs = fine_tune(model, manifest, config, six_tax, quiet=True)
        assert logs[-1].mean_loss < logs[0].mean_loss

    def test_freeze_logit_scale_pins_value(self, six_tax):
        model, manifest, config = self.small_run(six_tax, freeze_logit_scale=True)
        frozen = model.logit_scale.data.copy()
        fine_tune(model, manifest, config, six_tax, quiet=True)
        np.testing.assert_array_equal(model.logit_scale.data, frozen)

    def test_unfrozen_logit_scale_moves(self, six_tax):
        model, manifest, config = self.small_run(six_tax)
        initial = model.logit_scale.data.item()
        fine_tune(model, manifest, config, six_tax, quiet=True)
        assert model.logit_scale.data.item() != initial

    def test_vocabulary_must_cover_captions(self, six_tax):
        model, manifest, config = self.small_run(six_tax, template="numeric")
        with pytest.raises(ContractError, match="vocabulary does not cover"):
            fine_tune(model, manifest, config, six_tax, quiet=True)

    def test_empty_manifest_and_oversized_batch(self, six_tax):
        model, manifest, config = self.small_run(six_tax)
        with pytest.raises(ConfigError):
            fine_tune(model, Manifest([]), config, six_tax, quiet=True)
        with pytest.raises(ConfigError):
            fine_tune(model, manifest, TrainConfig(batch_size=13, template="plain"),
                      six_tax, quiet=True)

    def test_checkpoint_round_trip(self, six_tax, tmp_path):
        model, manifest, config = self.small_run(six_tax, epochs=1)
        path = tmp_path / "model.ckpt"
        trained, _ = fine_tune(model, manifest, config, six_tax, ckpt_path=path, quiet=True)
        loaded, metadata = load_joint_checkpoint(path)
        assert metadata["kind"] == "joint"
        assert metadata["encoder"] == trained.config.to_dict()
        assert metadata["vocab"] == trained.vocab.tokens
        assert metadata["train"] == config.to_dict()
        trained_data = trained.store.clone_data()
        loaded_data = loaded.store.clone_data()
        assert sorted(trained_data) == sorted(loaded_data)
        for name in trained_data:
            np.testing.assert_array_equal(trained_data[name], loaded_data[name])

    def test_load_rejects_other_checkpoint_kinds(self, six_tax, tmp_path):
        model = small_model(six_tax, template="plain")
        path = tmp_path / "other.ckpt"
        save_checkpoint(model.store, path, metadata={"kind": "baseline"})
        with pytest.raises(ConfigError, match="joint"):
            load_joint_checkpoint(path)

    def test_log_file_holds_one_json_line_per_epoch(self, six_tax, tmp_path):
        model, manifest, config = self.small_run(six_tax, epochs=3)
        path = tmp_path / "log.jsonl"
        fine_tune(model, manifest, config, six_tax, log_file=path, quiet=True)
        lines = path.read_text(encoding="utf-8").splitlines()
        records = [json.loads(line) for line in lines]
        assert [r["epoch"] for r in records] == [0, 1, 2]
        for record in records:
            assert set(record) >= {"epoch", "mean_loss", "seconds"}
