import numpy as np
import pytest

from maskprompt.errors import SpeckleTooLargeError, ValidationError
from maskprompt.masks import bbox_from_mask, downscale_mask, label_components, rescale_bbox, threshold
from maskprompt.storage import scan_dataset, load_case_arrays
from maskprompt.synth import (
    NoiseSpec,
    make_blob_mask,
    make_synthetic_dataset,
    make_target_mask,
    noisy_coarse_generator,
)

from oracles import union_find_labeling


def simple_gt(size=32):
    gt = np.zeros((size, size), dtype=bool)
    gt[8:16, 8:16] = True
    return gt


class TestNoisyCoarseGenerator:
    def test_no_noise_thresholds_back_to_gt(self):
        gt = simple_gt()
        conf = noisy_coarse_generator(gt, NoiseSpec(speckle_count=0))
        assert np.array_equal(threshold(conf, 0.75), gt)

    def test_one_speckle_makes_two_components(self):
        gt = simple_gt(64)
        conf = noisy_coarse_generator(gt, NoiseSpec(speckle_count=1, speckle_size=2, seed=3))
        mask = threshold(conf, 0.75)
        _, sizes = union_find_labeling(mask, 4)
        assert len(sizes) == 3
        assert sorted(sizes[1:].tolist()) == [2, 64]

    def test_deterministic_under_seed(self):
        gt = simple_gt(64)
        spec = NoiseSpec(speckle_count=3, speckle_size=2, seed=11)
        a = noisy_coarse_generator(gt, spec)
        b = noisy_coarse_generator(gt, spec)
        assert np.array_equal(a.view(np.uint32), b.view(np.uint32))

    def test_speckle_too_large(self):
        gt = simple_gt()
        with pytest.raises(SpeckleTooLargeError):
            noisy_coarse_generator(gt, NoiseSpec(speckle_count=1, speckle_size=64))

    def test_speckles_clear_of_target_box(self):
        gt = simple_gt(64)
        spec = NoiseSpec(speckle_count=4, speckle_size=3, clear_margin=8, seed=5)
        conf = noisy_coarse_generator(gt, spec)
        mask = threshold(conf, 0.75)
        speckles = mask & ~gt
        box = bbox_from_mask(gt)
        rows, cols = np.nonzero(speckles)
        for r, c in zip(rows, cols):
            assert (
                c < box.x_min - 8 or c > box.x_max + 8 or r < box.y_min - 8 or r > box.y_max + 8
            )

    def test_speckles_stay_separate_after_downscale(self):
        gt = simple_gt(64)
        spec = NoiseSpec(speckle_count=3, speckle_size=2, clear_margin=8, seed=9)
        mask = threshold(noisy_coarse_generator(gt, spec), 0.75)
        low = downscale_mask(mask, 4)
        lab = label_components(low, 8)
        assert lab.num_components == 4

    def test_crowded_mask_raises(self):
        gt = np.zeros((16, 16), dtype=bool)
        gt[6:10, 6:10] = True
        with pytest.raises(ValidationError):
            noisy_coarse_generator(
                gt, NoiseSpec(speckle_count=8, speckle_size=2, clear_margin=8, seed=0)
            )


class TestTargetMasks:
    @pytest.mark.parametrize("shape", ["rect", "cross"])
    def test_single_aligned_component(self, shape):
        rng = np.random.default_rng(17)
        for _ in range(20):
            gt = make_target_mask(rng, 64, align=4, shape=shape)
            lab = label_components(gt, 4)
            assert lab.num_components == 1
            box = bbox_from_mask(gt)
            assert box.x_min % 4 == 0 and box.y_min % 4 == 0
            assert box.x_max % 4 == 3 and box.y_max % 4 == 3

    def test_aligned_box_survives_downscale_round_trip(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            gt = make_target_mask(rng, 64, align=4, shape="cross")
            tight = bbox_from_mask(gt)
            low = downscale_mask(gt, 4)
            assert rescale_bbox(bbox_from_mask(low), 4) == tight

    def test_cross_has_background_corners(self):
        rng = np.random.default_rng(29)
        gt = make_target_mask(rng, 64, align=4, shape="cross")
        box = bbox_from_mask(gt)
        assert not gt[box.y_min, box.x_min] or not gt[box.y_max, box.x_max]

    def test_blob_mask_nonempty(self):
        rng = np.random.default_rng(31)
        blob = make_blob_mask(rng, 128)
        assert blob.any()
        assert blob.shape == (128, 128)


class TestSyntheticDataset:
    def test_layout_passes_ingestion(self, tmp_path):
        stems = make_synthetic_dataset(
            tmp_path, domains=("A", "B"), cases_per_domain=3, size=32, seed=1
        )
        index = scan_dataset(tmp_path)
        assert sorted(index) == ["A", "B"]
        assert [c.stem for c in index["A"]] == stems["A"]
        image, gt, coarse = load_case_arrays(index["A"][0])
        assert image.shape == gt.shape == coarse.shape == (32, 32)
        assert gt.any()
        assert np.array_equal(threshold(coarse, 0.75), gt)

    def test_noisy_dataset_has_speckles(self, tmp_path):
        noise = NoiseSpec(speckle_count=2, speckle_size=2, clear_margin=8)
        make_synthetic_dataset(
            tmp_path, domains=("A",), cases_per_domain=2, size=64, seed=2, noise=noise
        )
        index = scan_dataset(tmp_path)
        _, gt, coarse = load_case_arrays(index["A"][0])
        mask = threshold(coarse, 0.75)
        lab = label_components(mask, 4)
        assert lab.num_components == 3
        assert (mask & ~gt).sum() == 4

    def test_regeneration_is_identical(self, tmp_path):
        kwargs = dict(domains=("A",), cases_per_domain=2, size=32, seed=7)
        make_synthetic_dataset(tmp_path / "one", **kwargs)
        make_synthetic_dataset(tmp_path / "two", **kwargs)
        for rel in ["A/case0000_image.png", "A/case0000_gt.png", "A/case0000_coarse.npy"]:
            a = (tmp_path / "one" / rel).read_bytes()
            b = (tmp_path / "two" / rel).read_bytes()
            assert a == b
