import numpy as np
import pytest

from brightcolor.colorspace import rgb_to_lab, write_png
from brightcolor.data import (
    DatasetError,
    ImagePair,
    augment,
    generate_synthetic_dataset,
    load_pairs,
    make_scene,
    synth_darken,
)


def write_pairs(root, names, size=16):
    low, high = root / "low", root / "high"
    low.mkdir(), high.mkdir()
    rng = np.random.default_rng(0)
    for name in names:
        img = rng.random((size, size, 3)).astype(np.float32)
        write_png(low / name, img * 0.2)
        write_png(high / name, img)
    return low, high


class TestLoadPairs:
    def test_matched_directories(self, tmp_path):
        low, high = write_pairs(tmp_path, ["a.png", "b.png", "c.png"])
        ds = load_pairs(low, high)
        assert len(ds) == 3
        pair = ds[0]
        assert pair.low.shape == pair.normal.shape

    def test_orphan_file_named_in_error(self, tmp_path):
        low, high = write_pairs(tmp_path, ["a.png", "b.png"])
        write_png(low / "stray.png", np.zeros((4, 4, 3), np.float32))
        with pytest.raises(DatasetError, match="stray.png"):
            load_pairs(low, high)

    def test_ordering_sorted_by_name(self, tmp_path):
        low, high = write_pairs(tmp_path, ["c.png", "a.png", "b.png"])
        ds = load_pairs(low, high)
        assert ds.ids() == ["a", "b", "c"]
        assert ds.ids() == load_pairs(low, high).ids()

    def test_undecodable_file_error_includes_path(self, tmp_path):
        low, high = write_pairs(tmp_path, ["a.png"])
        (low / "a.png").write_bytes(b"garbage")
        ds = load_pairs(low, high)
        with pytest.raises(DatasetError, match="a.png"):
            ds[0]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError, match="not a directory"):
            load_pairs(tmp_path / "nope", tmp_path / "also_nope")

    def test_empty_directories(self, tmp_path):
        (tmp_path / "low").mkdir(), (tmp_path / "high").mkdir()
        with pytest.raises(DatasetError, match="no images"):
            load_pairs(tmp_path / "low", tmp_path / "high")


class TestSynthDarken:
    def test_full_desaturation_is_grayscale(self):
        img = make_scene(0, 32)
        pair = synth_darken(img, noise_sigma=0.0, desat=1.0, seed=1)
        planes = rgb_to_lab(pair.low)
        assert np.abs(planes.C).max() <= 1e-2
        rgb = pair.low
        assert np.abs(rgb[..., 0] - rgb[..., 1]).max() <= 2e-3

    def test_identity_degradation(self):
        img = make_scene(1, 32)
        pair = synth_darken(img, gamma_range=(1.0, 1.0), noise_sigma=0.0, desat=0.0, seed=2)
        assert np.array_equal(pair.low, pair.normal)

    def test_same_seed_is_deterministic(self):
        img = make_scene(2, 32)
        a = synth_darken(img, seed=42)
        b = synth_darken(img, seed=42)
        assert np.array_equal(a.low, b.low)
        assert np.array_equal(a.normal, b.normal)

    def test_darkens(self):
        img = make_scene(3, 32)
        pair = synth_darken(img, noise_sigma=0.0, seed=3)
        assert pair.low.mean() < pair.normal.mean()

    def test_parameter_validation(self):
        img = make_scene(4, 32)
        with pytest.raises(ValueError):
            synth_darken(img, desat=1.5)
        with pytest.raises(ValueError):
            synth_darken(img, noise_sigma=-0.1)


class TestAugment:
    def marker_pair(self, size=32):
        low = np.zeros((size, size, 3), np.float32)
        normal = np.zeros((size, size, 3), np.float32)
        low[0, 0] = 1.0
        normal[0, 0] = 1.0
        return ImagePair(low=low, normal=normal, id="marker")

    def test_crop_equal_to_size_is_rotation_only(self):
        pair = self.marker_pair(32)
        out = augment(pair, crop=32, seed=0)
        assert out.low.shape == (32, 32, 3)
        assert (out.low == 1.0).sum() == 3  # the marker pixel, all channels

    def test_alignment_preserved(self):
        rng = np.random.default_rng(5)
        size = 64
        low = np.zeros((size, size, 3), np.float32)
        normal = np.zeros((size, size, 3), np.float32)
        y, x = rng.integers(16, 48, size=2)
        low[y, x] = 1.0
        normal[y, x] = 1.0
        pair = ImagePair(low=low, normal=normal, id="m")
        for seed in range(10):
            out = augment(pair, crop=32, seed=seed)
            assert np.array_equal(out.low, out.normal)

    def test_seed_sweep_enumerates_all_rotations(self):
        pair = self.marker_pair(16)
        seen = set()
        for seed in range(40):
            out = augment(pair, crop=16, seed=seed)
            pos = tuple(np.argwhere(out.low[..., 0] == 1.0)[0])
            seen.add(pos)
        assert seen == {(0, 0), (0, 15), (15, 0), (15, 15)}

    def test_crop_too_large_rejected(self):
        with pytest.raises(ValueError, match="crop"):
            augment(self.marker_pair(16), crop=32, seed=0)

    def test_crop_not_multiple_of_16_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            augment(self.marker_pair(32), crop=24, seed=0)

    def test_deterministic_given_seed(self):
        img = make_scene(6, 64)
        pair = synth_darken(img, seed=6)
        a = augment(pair, crop=32, seed=9)
        b = augment(pair, crop=32, seed=9)
        assert np.array_equal(a.low, b.low)


class TestSyntheticDataset:
    def test_generation_round_trip(self, tmp_path):
        ds = generate_synthetic_dataset(tmp_path / "d", count=3, size=32, seed=5)
        assert len(ds) == 3
        assert (tmp_path / "d" / "manifest.json").exists()
        pair = ds[0]
        assert pair.low.shape == (32, 32, 3)

    def test_same_seed_gives_identical_directories(self, tmp_path):
        generate_synthetic_dataset(tmp_path / "a", count=2, size=32, seed=7)
        generate_synthetic_dataset(tmp_path / "b", count=2, size=32, seed=7)
        for sub in ("low", "high"):
            for f in sorted((tmp_path / "a" / sub).iterdir()):
                other = tmp_path / "b" / sub / f.name
                assert f.read_bytes() == other.read_bytes()

    def test_scene_is_deterministic_and_in_range(self):
        a, b = make_scene(11, 48), make_scene(11, 48)
        assert np.array_equal(a, b)
        assert a.min() >= 0.0 and a.max() <= 1.0
        # scenes should carry usable chroma for the colorization task
        planes = rgb_to_lab(a)
        assert np.abs(planes.C).mean() > 3.0
