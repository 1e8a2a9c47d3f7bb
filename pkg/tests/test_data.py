import numpy as np
import pytest

from fmd.data import (
    CLASS_NAMES,
    DatasetSpec,
    generate,
    load_dataset,
    render_image,
    save_dataset,
    split,
    split_indices,
)
from fmd.errors import ConfigError, DataError
from fmd.image import write_ppm


class TestGenerate:
    def test_counts_and_labels(self):
        ds = generate(DatasetSpec(seed=1, per_class=3))
        assert len(ds) == 30
        labels = [l for _, l in ds]
        assert np.array_equal(np.bincount(labels), [3] * 10)

    def test_pixels_in_range(self):
        for img, _ in generate(DatasetSpec(seed=2, per_class=1)):
            assert img.shape == (32, 32, 3)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_byte_identical_across_runs(self):
        spec = DatasetSpec(seed=3, per_class=2)
        a = generate(spec)
        b = generate(spec)
        for (ia, la), (ib, lb) in zip(a, b):
            assert la == lb
            assert write_ppm(ia) == write_ppm(ib)
            assert np.array_equal(ia, ib)

    def test_noise_free_images_are_bimodal_with_gap(self):
        ds = generate(DatasetSpec(seed=4, per_class=2, noise_sigma=0.0))
        for img, _ in ds:
            vals = np.unique(img)
            background = vals[vals <= 0.4]
            foreground = vals[vals >= 0.6]
            assert len(background) + len(foreground) == len(vals)
            assert background.max() <= 0.4
            assert foreground.min() >= 0.6

    def test_per_image_streams_are_independent_of_order(self):
        spec = DatasetSpec(seed=5, per_class=4)
        direct = render_image(spec, 7, 3)
        full = generate(spec)
        assert np.array_equal(full[7 * 4 + 3][0], direct)

    def test_seeds_differ(self):
        a = generate(DatasetSpec(seed=10, per_class=1))
        b = generate(DatasetSpec(seed=11, per_class=1))
        assert not np.array_equal(a[0][0], b[0][0])

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            DatasetSpec(seed=1, per_class=0).validate()
        with pytest.raises(ConfigError):
            DatasetSpec(seed=1, per_class=1, noise_sigma=-0.1).validate()


class TestSplit:
    def test_paper_ratio_half(self):
        labels = np.repeat(np.arange(10), 100)
        tr, te = split_indices(labels, 0.5, seed=1)
        assert len(tr) == 500 and len(te) == 500
        assert np.array_equal(np.bincount(labels[tr]), [50] * 10)
        assert np.array_equal(np.bincount(labels[te]), [50] * 10)

    def test_partition(self):
        labels = np.repeat(np.arange(10), 10)
        tr, te = split_indices(labels, 0.3, seed=2)
        merged = np.sort(np.concatenate([tr, te]))
        assert np.array_equal(merged, np.arange(100))

    def test_deterministic(self):
        labels = np.repeat(np.arange(5), 8)
        assert np.array_equal(split_indices(labels, 0.5, 3)[0], split_indices(labels, 0.5, 3)[0])

    def test_both_halves_nonempty_per_class(self):
        labels = np.repeat(np.arange(3), 2)
        tr, te = split_indices(labels, 0.9, seed=4)
        for half in (tr, te):
            assert np.array_equal(np.sort(np.unique(labels[half])), np.arange(3))

    def test_tiny_class_rejected(self):
        with pytest.raises(DataError, match="need >= 2"):
            split_indices(np.array([0, 0, 1]), 0.5, seed=5)

    def test_bad_ratio_rejected(self):
        with pytest.raises(ConfigError):
            split_indices(np.array([0, 0, 1, 1]), 1.0, seed=6)

    def test_split_on_pairs(self):
        ds = generate(DatasetSpec(seed=6, per_class=4))
        train, test = split(ds, 0.5, seed=7)
        assert len(train) == 20 and len(test) == 20


class TestDiskRoundtrip:
    def test_save_load(self, tmp_path):
        spec = DatasetSpec(seed=8, per_class=2)
        from fmd.image import quantize01

        ds = [(quantize01(img), label) for img, label in generate(spec)]
        save_dataset(tmp_path, ds)
        assert (tmp_path / "manifest.csv").exists()
        assert (tmp_path / "cls0_0000.ppm").exists()
        loaded = load_dataset(tmp_path)
        assert len(loaded) == len(ds)
        for (ia, la), (ib, lb) in zip(ds, loaded):
            assert la == lb
            assert np.array_equal(ia, ib)

    def test_class_names_count(self):
        assert len(CLASS_NAMES) == 10
