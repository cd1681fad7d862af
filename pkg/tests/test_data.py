import struct

import numpy as np
import pytest

from demix.data import (
    Dataset,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    load_idx,
    make_image_classes,
    make_synthetic,
    save_idx,
    split,
    stratified_take,
)


def write_fixture(tmp_path, images, labels, image_magic=0x803, label_magic=0x801):
    """Hand-assembled IDX pair, byte by byte."""
    n, rows, cols = images.shape
    img_path = tmp_path / "images.idx"
    lbl_path = tmp_path / "labels.idx"
    img_path.write_bytes(
        struct.pack(">iiii", image_magic, n, rows, cols) + images.tobytes()
    )
    lbl_path.write_bytes(struct.pack(">ii", label_magic, len(labels)) + labels.tobytes())
    return img_path, lbl_path


class TestIdx:
    def two_image_fixture(self, tmp_path, **kw):
        images = np.zeros((2, 28, 28), dtype=np.uint8)
        images[0, 0, 0] = 255
        images[0, 13, 7] = 128
        images[1, 27, 27] = 1
        labels = np.array([3, 9], dtype=np.uint8)
        return write_fixture(tmp_path, images, labels, **kw), images, labels

    def test_parses_fixture(self, tmp_path):
        (img, lbl), images, labels = self.two_image_fixture(tmp_path)
        ds = load_idx(img, lbl)
        assert ds.x.shape == (2, 28, 28)
        assert ds.x[0, 0, 0] == 1.0  # byte 255 normalizes to exactly 1
        assert ds.x[0, 13, 7] == 128 / 255
        assert np.array_equal(ds.y, [3, 9])
        assert ds.num_classes == 10

    def test_bad_image_magic(self, tmp_path):
        (img, lbl), _, _ = self.two_image_fixture(tmp_path, image_magic=0x102)
        with pytest.raises(IdxMagicError):
            load_idx(img, lbl)

    def test_bad_label_magic(self, tmp_path):
        (img, lbl), _, _ = self.two_image_fixture(tmp_path, label_magic=0x803)
        with pytest.raises(IdxMagicError):
            load_idx(img, lbl)

    def test_count_mismatch(self, tmp_path):
        images = np.zeros((2, 4, 4), dtype=np.uint8)
        labels = np.array([1, 2, 3], dtype=np.uint8)
        img, lbl = write_fixture(tmp_path, images, labels)
        with pytest.raises(IdxCountMismatchError):
            load_idx(img, lbl)

    def test_truncated_file(self, tmp_path):
        (img, lbl), _, _ = self.two_image_fixture(tmp_path)
        img.write_bytes(img.read_bytes()[:-10])
        with pytest.raises(IdxTruncatedError):
            load_idx(img, lbl)

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(5, 6, 6), dtype=np.uint8)
        labels = rng.integers(0, 4, size=5).astype(np.uint8)
        save_idx(images, labels, tmp_path / "i.idx", tmp_path / "l.idx")
        ds = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
        assert np.array_equal((ds.x * 255).round().astype(np.uint8), images)
        assert np.array_equal(ds.y, labels)


class TestSynthetic:
    def test_blobs_noise_zero_at_centers(self):
        ds = make_synthetic("blobs", 30, 0.0, seed=1, num_classes=3)
        # every point sits exactly on one of the three fixed centers
        angles = 2 * np.pi * np.arange(3) / 3
        centers = 4.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        for x, y in zip(ds.x, ds.y):
            assert np.array_equal(x, centers[y])

    def test_same_seed_identical(self):
        a = make_synthetic("two_moons", 50, 0.1, seed=9)
        b = make_synthetic("two_moons", 50, 0.1, seed=9)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)

    def test_two_moons_geometry(self):
        ds = make_synthetic("two_moons", 200, 0.0, seed=0)
        r0 = np.linalg.norm(ds.x[ds.y == 0], axis=1)
        r1 = np.linalg.norm(ds.x[ds.y == 1] - np.array([1.0, 0.5]), axis=1)
        np.testing.assert_allclose(r0, 1.0, atol=1e-12)
        np.testing.assert_allclose(r1, 1.0, atol=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_synthetic("spirals", 10, 0.1, 0)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            make_synthetic("blobs", 1, 0.1, 0)


class TestImageClasses:
    def test_shapes_and_range(self):
        ds = make_image_classes(40, num_classes=4, seed=2)
        assert ds.x.shape == (40, 28, 28)
        assert ds.x.min() >= 0.0 and ds.x.max() <= 1.0
        assert set(np.unique(ds.y)) == {0, 1, 2, 3}

    def test_deterministic(self):
        a = make_image_classes(20, seed=5)
        b = make_image_classes(20, seed=5)
        assert np.array_equal(a.x, b.x)

    def test_classes_balanced(self):
        ds = make_image_classes(100, num_classes=10, seed=0)
        assert np.bincount(ds.y).tolist() == [10] * 10


class TestSplits:
    def test_split_disjoint_and_sized(self):
        ds = make_image_classes(50, num_classes=5, seed=1)
        a, b = split(ds, (30, 20), seed=3)
        assert len(a) == 30 and len(b) == 20

    def test_split_too_large(self):
        ds = make_image_classes(10, num_classes=5, seed=1)
        with pytest.raises(ValueError):
            split(ds, (8, 8), seed=0)

    def test_stratified_take_covers_classes(self):
        ds = make_synthetic("two_moons", 1000, 0.1, seed=0)
        labeled, rest = stratified_take(ds, 10, seed=0)
        assert len(labeled) == 10 and len(rest) == 990
        assert set(np.unique(labeled.y)) == {0, 1}
        assert np.bincount(labeled.y).tolist() == [5, 5]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(2), 2)
