import numpy as np
import pytest

from uapkit.datasets import (
    CIFAR_RECORD_BYTES,
    LabeledDataset,
    load_cifar10,
    load_dataset,
    save_dataset,
    split_balanced,
    synth_dataset,
    write_cifar10,
)
from uapkit.exceptions import FormatError


def make_cifar_batch(path, n_records=20, seed=0):
    rng = np.random.default_rng(seed)
    records = np.empty((n_records, CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = np.arange(n_records) % 10
    records[:, 1:] = rng.integers(0, 256, (n_records, 3072), dtype=np.uint8)
    path.write_bytes(records.tobytes())
    return records


class TestCifarLoader:
    def test_single_record_all_255(self, tmp_path):
        path = tmp_path / "batch.bin"
        record = bytes([7]) + bytes([255]) * 3072
        path.write_bytes(record)
        ds = load_cifar10([path])
        assert len(ds) == 1
        assert ds.labels[0] == 7
        np.testing.assert_array_equal(ds.images[0], np.ones((32, 32, 3)))

    def test_channel_plane_layout(self, tmp_path):
        # first plane is R: paint R=255, G=0, B=128 and check pixel (0, 0)
        path = tmp_path / "batch.bin"
        pixels = bytes([255]) * 1024 + bytes([0]) * 1024 + bytes([128]) * 1024
        path.write_bytes(bytes([1]) + pixels)
        ds = load_cifar10([path])
        np.testing.assert_allclose(ds.images[0, 0, 0], [1.0, 0.0, 128 / 255])

    def test_batch_of_many(self, tmp_path):
        path = tmp_path / "batch.bin"
        make_cifar_batch(path, n_records=50)
        ds = load_cifar10([path])
        assert len(ds) == 50
        assert ds.labels.min() >= 0 and ds.labels.max() <= 9

    def test_misaligned_file(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(bytes(3072))
        with pytest.raises(FormatError, match="multiple"):
            load_cifar10([path])

    def test_bad_label_byte_reports_offset(self, tmp_path):
        path = tmp_path / "bad.bin"
        record = bytes([11]) + bytes(3072)
        path.write_bytes(bytes([1]) + bytes(3072) + record)
        with pytest.raises(FormatError, match=str(CIFAR_RECORD_BYTES)):
            load_cifar10([path])

    def test_write_back_round_trip(self, tmp_path):
        src = tmp_path / "batch.bin"
        make_cifar_batch(src, n_records=30)
        ds = load_cifar10([src])
        out = tmp_path / "copy.bin"
        write_cifar10(ds, out)
        assert src.read_bytes() == out.read_bytes()


class TestSynthDataset:
    def test_sigma_zero_gives_templates(self):
        ds = synth_dataset(class_count=3, n_per_class=4, image_shape=(4, 4, 1),
                           sigma=0.0, seed=1)
        for k in range(3):
            imgs = ds.images[ds.labels == k]
            for img in imgs[1:]:
                np.testing.assert_array_equal(img, imgs[0])

    def test_deterministic(self):
        a = synth_dataset(class_count=4, n_per_class=5, seed=9)
        b = synth_dataset(class_count=4, n_per_class=5, seed=9)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self):
        a = synth_dataset(class_count=4, n_per_class=5, seed=9)
        b = synth_dataset(class_count=4, n_per_class=5, seed=10)
        assert np.any(a.images != b.images)

    def test_pixels_in_unit_interval(self):
        ds = synth_dataset(class_count=3, n_per_class=10, sigma=0.5, seed=2)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_balanced_labels(self):
        ds = synth_dataset(class_count=5, n_per_class=7, seed=0)
        np.testing.assert_array_equal(ds.class_counts(), np.full(5, 7))

    def test_mlp_learns_it(self, desk_mlp, desk_split):
        # the desk fixture: preset MLP on sigma=0.05 10-class data
        _, test_set = desk_split
        assert desk_mlp.accuracy(test_set.images, test_set.labels) >= 0.9

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            synth_dataset(class_count=1)
        with pytest.raises(ValueError):
            synth_dataset(sigma=-0.1)
        with pytest.raises(ValueError):
            synth_dataset(image_shape=(4, 4))


class TestSplitBalanced:
    def test_forty_ten_protocol_shape(self):
        # 40 per class from a 50-per-class pool leaves 10 per class as test
        ds = synth_dataset(class_count=5, n_per_class=50, image_shape=(2, 2, 1),
                           seed=4)
        inp, test = split_balanced(ds, 40, seed=0)
        np.testing.assert_array_equal(inp.class_counts(), np.full(5, 40))
        np.testing.assert_array_equal(test.class_counts(), np.full(5, 10))

    def test_take_all_leaves_empty_test(self):
        ds = synth_dataset(class_count=3, n_per_class=5, image_shape=(2, 2, 1),
                           seed=4)
        inp, test = split_balanced(ds, 5, seed=0)
        assert len(inp) == 15
        assert len(test) == 0

    def test_disjoint_by_indices(self):
        ds = synth_dataset(class_count=4, n_per_class=10, image_shape=(2, 2, 1),
                           seed=4)
        inp, test = split_balanced(ds, 6, seed=3)
        assert np.intersect1d(inp.source_indices, test.source_indices).size == 0
        assert len(inp) + len(test) == len(ds)

    def test_seed_determinism(self):
        ds = synth_dataset(class_count=4, n_per_class=10, image_shape=(2, 2, 1),
                           seed=4)
        a, _ = split_balanced(ds, 6, seed=3)
        b, _ = split_balanced(ds, 6, seed=3)
        c, _ = split_balanced(ds, 6, seed=4)
        np.testing.assert_array_equal(a.source_indices, b.source_indices)
        assert np.any(a.source_indices != c.source_indices)

    def test_insufficient_class(self):
        ds = synth_dataset(class_count=3, n_per_class=5, image_shape=(2, 2, 1),
                           seed=4)
        with pytest.raises(ValueError, match="class"):
            split_balanced(ds, 6, seed=0)


class TestDatasetIO:
    def test_uapd_round_trip_bytes_identical(self, tmp_path):
        ds = synth_dataset(class_count=4, n_per_class=6, image_shape=(3, 3, 2),
                           sigma=0.1, seed=5)
        p1, p2 = tmp_path / "a.uapd", tmp_path / "b.uapd"
        save_dataset(ds, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_metadata_survives(self, tmp_path):
        ds = synth_dataset(class_count=4, n_per_class=6, sigma=0.1, seed=5)
        path = tmp_path / "a.uapd"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded.class_count == 4
        assert loaded.provenance["sigma"] == 0.1
        assert loaded.provenance["seed"] == 5
        np.testing.assert_array_equal(loaded.labels, ds.labels)

    def test_truncated_rejected(self, tmp_path):
        ds = synth_dataset(class_count=3, n_per_class=2, image_shape=(2, 2, 1))
        path = tmp_path / "a.uapd"
        save_dataset(ds, path)
        (tmp_path / "t.uapd").write_bytes(path.read_bytes()[:30])
        with pytest.raises(FormatError):
            load_dataset(tmp_path / "t.uapd")


class TestLabeledDataset:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            LabeledDataset(images=np.zeros((2, 2, 2, 1)), labels=np.zeros(3, int),
                           class_count=2)
        with pytest.raises(ValueError):
            LabeledDataset(images=np.zeros((2, 2, 2, 1)),
                           labels=np.array([0, 5]), class_count=2)
        with pytest.raises(ValueError):
            LabeledDataset(images=np.full((2, 2, 2, 1), 1.5),
                           labels=np.array([0, 1]), class_count=2)
