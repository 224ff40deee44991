"""Manifests, stratified splits, raster loading, and the PGM codec."""

import numpy as np
import pytest

from poseclip.dataset import (
    Manifest,
    Sample,
    SplitSpec,
    load_batch,
    load_raster,
    stratified_split,
    subsample_per_class,
)
from poseclip.errors import ConfigError, ParseError, SplitError
from poseclip.pgm import read_pgm, resize_nearest, write_pgm


def flat_manifest(per_class, n_classes=3):
    samples = [
        Sample(f"c{c}-{k}", f"synthetic:{c}:{c * 100 + k}:0.1", c)
        for c in range(n_classes)
        for k in range(per_class)
    ]
    return Manifest(samples)


class TestManifest:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ParseError, match="duplicate"):
            Manifest([Sample("a", "x.pgm", 0), Sample("a", "y.pgm", 1)])

    def test_negative_label_rejected(self):
        with pytest.raises(ParseError):
            Manifest([Sample("a", "x.pgm", -1)])

    def test_save_load_round_trip(self, tmp_path):
        manifest = flat_manifest(2)
        path = tmp_path / "manifest.tsv"
        manifest.save(path)
        loaded = Manifest.load(path)
        assert loaded.samples == manifest.samples
        assert loaded.base_dir == tmp_path
        assert loaded.digest() == manifest.digest()

    def test_load_reports_malformed_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tx.pgm\t0\nb\tno-label\n", encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            Manifest.load(path)
        assert excinfo.value.line == 2

    def test_load_reports_non_integer_label(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tx.pgm\tseven\n", encoding="utf-8")
        with pytest.raises(ParseError) as excinfo:
            Manifest.load(path)
        assert excinfo.value.line == 1

    def test_digest_is_order_and_content_sensitive(self):
        a = Manifest([Sample("a", "x", 0), Sample("b", "y", 1)])
        b = Manifest([Sample("b", "y", 1), Sample("a", "x", 0)])
        c = Manifest([Sample("a", "x", 0), Sample("b", "y", 2)])
        assert a.digest() != b.digest()
        assert a.digest() != c.digest()

    def test_validate_against_class_count(self):
        manifest = flat_manifest(1, n_classes=3)
        manifest.validate_against(3)
        with pytest.raises(ConfigError):
            manifest.validate_against(2)

    def test_by_class_groups(self):
        groups = flat_manifest(4).by_class()
        assert sorted(groups) == [0, 1, 2]
        assert all(len(g) == 4 for g in groups.values())


class TestSplitSpec:
    def test_fraction_bounds(self):
        with pytest.raises(ConfigError):
            SplitSpec(train_fraction=0.0)
        with pytest.raises(ConfigError):
            SplitSpec(train_fraction=1.0)

    def test_cap_bounds(self):
        with pytest.raises(ConfigError):
            SplitSpec(per_class_cap=0)


class TestStratifiedSplit:
    def test_exact_counts_per_class(self):
        train, test = stratified_split(flat_manifest(40), SplitSpec(0.8, seed=0))
        assert len(train) == 3 * 32 and len(test) == 3 * 8
        for group in train.by_class().values():
            assert len(group) == 32

    def test_round_half_up_boundaries(self):
        """round(fraction * n) with halves going up, per class."""
        cases = [(5, 0.5, 3), (2, 0.5, 1), (7, 0.5, 4), (75, 0.6, 45), (3, 2.0 / 3.0, 2)]
        for n, fraction, expect_train in cases:
            train, test = stratified_split(
                flat_manifest(n, n_classes=1), SplitSpec(fraction, seed=1)
            )
            assert len(train) == expect_train, (n, fraction)
            assert len(test) == n - expect_train

    def test_all_samples_to_train_leaves_empty_test(self):
        train, test = stratified_split(flat_manifest(2, n_classes=1), SplitSpec(0.8, seed=0))
        assert len(train) == 2 and len(test) == 0

    def test_partition_preserves_input_order(self):
        manifest = flat_manifest(10)
        train, test = stratified_split(manifest, SplitSpec(0.7, seed=3))
        merged_ids = set(train.ids()) | set(test.ids())
        assert merged_ids == set(manifest.ids())
        assert not set(train.ids()) & set(test.ids())
        order = {sid: i for i, sid in enumerate(manifest.ids())}
        assert train.ids() == sorted(train.ids(), key=order.__getitem__)
        assert test.ids() == sorted(test.ids(), key=order.__getitem__)

    def test_same_seed_same_membership(self):
        manifest = flat_manifest(10)
        a = stratified_split(manifest, SplitSpec(0.8, seed=5))
        b = stratified_split(manifest, SplitSpec(0.8, seed=5))
        assert a[0].ids() == b[0].ids() and a[1].ids() == b[1].ids()

    def test_different_seed_different_membership(self):
        manifest = flat_manifest(20)
        a, _ = stratified_split(manifest, SplitSpec(0.5, seed=0))
        b, _ = stratified_split(manifest, SplitSpec(0.5, seed=1))
        assert a.ids() != b.ids()

    def test_singleton_class_rejected(self):
        manifest = Manifest(
            [Sample("a", "s", 0), Sample("b", "s2", 0), Sample("c", "s3", 1)]
        )
        with pytest.raises(SplitError, match="class 1"):
            stratified_split(manifest, SplitSpec(0.5, seed=0))

    def test_cap_applies_to_train_side_only(self):
        train, test = stratified_split(
            flat_manifest(10), SplitSpec(0.8, seed=0, per_class_cap=3)
        )
        assert all(len(g) == 3 for g in train.by_class().values())
        assert all(len(g) == 2 for g in test.by_class().values())


class TestSubsample:
    def test_cap_larger_than_class_keeps_all(self):
        manifest = flat_manifest(4)
        capped = subsample_per_class(manifest, cap=10, seed=0)
        assert capped.ids() == manifest.ids()

    def test_deterministic_choice(self):
        manifest = flat_manifest(10)
        a = subsample_per_class(manifest, cap=4, seed=2)
        b = subsample_per_class(manifest, cap=4, seed=2)
        assert a.ids() == b.ids()
        assert all(len(g) == 4 for g in a.by_class().values())

    def test_cap_validation(self):
        with pytest.raises(ConfigError):
            subsample_per_class(flat_manifest(2), cap=0, seed=0)


class TestRasterLoading:
    def test_synthetic_source_renders_at_requested_side(self):
        img = load_raster("synthetic:3:12345:0.1", side=16)
        assert img.shape == (16, 16)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_pgm_source_scaled_and_resized(self, tmp_path):
        raw = (np.arange(64, dtype=np.uint8) * 4).reshape(8, 8)
        write_pgm(tmp_path / "img.pgm", raw)
        img = load_raster("img.pgm", side=8, base_dir=tmp_path)
        np.testing.assert_allclose(img, raw / 255.0, atol=1e-15)
        up = load_raster("img.pgm", side=16, base_dir=tmp_path)
        assert up.shape == (16, 16)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            load_raster("nope.pgm", side=8, base_dir=tmp_path)

    def test_load_batch_stacks(self):
        samples = flat_manifest(2).samples[:4]
        batch = load_batch(samples, side=16)
        assert batch.shape == (4, 16, 16)
        np.testing.assert_array_equal(batch[0], load_raster(samples[0].source, 16))


class TestPgmCodec:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.integers(0, 256, size=(12, 9), dtype=np.uint8)
        path = tmp_path / "x.pgm"
        write_pgm(path, img)
        np.testing.assert_array_equal(read_pgm(path), img)

    def test_write_requires_uint8_2d(self, tmp_path):
        with pytest.raises(ParseError):
            write_pgm(tmp_path / "f.pgm", np.zeros((4, 4), dtype=np.float64))
        with pytest.raises(ParseError):
            write_pgm(tmp_path / "f.pgm", np.zeros(16, dtype=np.uint8))

    def test_header_comments_ignored(self, tmp_path):
        path = tmp_path / "c.pgm"
        body = bytes(range(6))
        path.write_bytes(b"P5\n# a comment\n3 2\n# another\n255\n" + body)
        img = read_pgm(path)
        np.testing.assert_array_equal(img, np.frombuffer(body, dtype=np.uint8).reshape(2, 3))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(4))
        with pytest.raises(ParseError):
            read_pgm(path)

    def test_truncated_body_rejected(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(ParseError):
            read_pgm(path)

    def test_resize_nearest_matches_index_map(self):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 256, size=(10, 7), dtype=np.uint8)
        out = resize_nearest(img, 5)
        rows = (np.arange(5) * 10) // 5
        cols = (np.arange(5) * 7) // 5
        np.testing.assert_array_equal(out, img[np.ix_(rows, cols)])

    def test_resize_identity_when_sides_match(self):
        img = np.arange(16, dtype=np.uint8).reshape(4, 4)
        np.testing.assert_array_equal(resize_nearest(img, 4), img)
