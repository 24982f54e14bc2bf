import numpy as np
import pytest

import oracles
from sipseg import kernels
from sipseg.imgcore import SyntheticEyeSpec, render_synthetic_eye
from sipseg.restore import (
    fill_bright_holes,
    AdaptiveThresholdConfig,
    NlmConfig,
    adaptive_threshold,
    default_window,
    dilate_disk,
    disk_offsets,
    fill_holes,
    local_mean,
    nlm_filter,
    remove_ocular_reflections,
)

NLM_IMPLS = [("numpy", kernels.nlm_numpy)]
FILL_IMPLS = [("numpy", kernels.fill_holes_numpy)]
if kernels.HAS_NUMBA:
    NLM_IMPLS.append(("numba", kernels.nlm_numba))
    FILL_IMPLS.append(("numba", kernels.fill_holes_numba))


class TestAdaptiveThreshold:
    def test_local_mean_matches_naive(self, rng):
        img = rng.random((32, 32))
        for window in (3, 7, 15):
            got = local_mean(img, window)
            want = oracles.windowed_mean(img, window)
            assert np.abs(got - want).max() < 1e-9

    @pytest.mark.parametrize("s", [0.0, 0.25, 0.375, 0.5])
    @pytest.mark.parametrize("polarity", ["bright", "dark"])
    def test_constant_image_empty(self, s, polarity):
        img = np.full((24, 24), 0.5)
        mask = adaptive_threshold(img, AdaptiveThresholdConfig(sensitivity=s, polarity=polarity))
        assert not mask.any()

    def test_bright_spot_detected(self):
        # window (15 px default here) larger than the 5x5 spot, so the spot
        # center sees a mixed-mean neighbourhood and is flagged
        img = np.full((128, 128), 0.2)
        img[60:65, 60:65] = 1.0
        mask = adaptive_threshold(img, AdaptiveThresholdConfig(sensitivity=0.0, polarity="bright"))
        assert mask[62, 62]
        assert mask[60:65, 60:65].all()
        assert not mask[0, 0]
        # oracle check at the spot center: mean of the 15x15 window there
        mean = oracles.windowed_mean(img[50:75, 50:75], 15)[12, 12]
        assert 1.0 > mean * 1.3

    def test_dark_polarity_flags_dark(self):
        img = np.full((128, 128), 0.8)
        img[60:65, 60:65] = 0.05
        mask = adaptive_threshold(img, AdaptiveThresholdConfig(sensitivity=0.375, polarity="dark"))
        assert mask[62, 62]
        assert not mask[5, 5]

    def test_matches_formula_on_random_image(self, rng):
        img = rng.random((32, 32))
        cfg = AdaptiveThresholdConfig(sensitivity=0.2, polarity="bright", window=7)
        mask = adaptive_threshold(img, cfg)
        mean = oracles.windowed_mean(img, 7)
        want = img > mean * (1.0 + 0.6 * (0.5 - 0.2))
        # the integral-image mean may differ by ~1e-12 at the threshold knife
        # edge; on random data no pixel sits that close
        assert np.array_equal(mask, want)

    def test_default_window(self):
        assert default_window(128, 128) == 15
        assert default_window(24, 200) == 3
        assert default_window(9, 9) == 3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdaptiveThresholdConfig(window=4).validate()
        with pytest.raises(ValueError):
            AdaptiveThresholdConfig(polarity="up").validate()


class TestDilateDisk:
    def test_radius_zero_identity(self, rng):
        mask = rng.random((16, 16)) < 0.2
        assert np.array_equal(dilate_disk(mask, 0), mask)

    def test_single_pixel_radius_two_disk(self):
        mask = np.zeros((11, 11), dtype=bool)
        mask[5, 5] = True
        out = dilate_disk(mask, 2)
        assert out.sum() == 13  # offsets with dy^2+dx^2 <= 4
        assert len(disk_offsets(2)) == 13

    def test_monotone(self, rng):
        small = rng.random((20, 20)) < 0.1
        big = small | (rng.random((20, 20)) < 0.1)
        d_small, d_big = dilate_disk(small, 2), dilate_disk(big, 2)
        assert np.all(d_big[d_small])

    def test_union_of_disks(self):
        mask = np.zeros((15, 15), dtype=bool)
        mask[3, 3] = mask[10, 11] = True
        out = dilate_disk(mask, 2)
        manual = np.zeros_like(mask)
        for cy, cx in ((3, 3), (10, 11)):
            for dy, dx in disk_offsets(2):
                y, x = cy + dy, cx + dx
                if 0 <= y < 15 and 0 <= x < 15:
                    manual[y, x] = True
        assert np.array_equal(out, manual)


class TestFillHoles:
    def test_no_enclosed_minima_unchanged(self):
        img = np.tile(np.linspace(0.1, 0.9, 16), (16, 1))
        assert np.array_equal(fill_holes(img), img)

    def test_ring_interior_raised(self):
        img = np.full((16, 16), 0.9)
        img[6:10, 6:10] = 0.1
        img[7:9, 7:9] = 0.1
        filled = fill_holes(img)
        assert np.all(filled == 0.9)

    def test_open_basin_not_filled(self):
        # a dark channel touching the border keeps the basin connected
        img = np.full((16, 16), 0.9)
        img[6:10, 6:10] = 0.1
        img[8, 0:7] = 0.1
        filled = fill_holes(img)
        assert filled[8, 8] == 0.1

    def test_never_darkens(self, rng):
        img = rng.random((24, 24))
        assert np.all(fill_holes(img) >= img)

    def test_idempotent(self, rng):
        img = rng.random((20, 20))
        once = fill_holes(img)
        assert np.array_equal(fill_holes(once), once)

    @pytest.mark.parametrize("name,impl", FILL_IMPLS)
    def test_partial_pour_level(self, name, impl):
        # a 0.55 channel drains the hole to the border: the minimum rises
        # exactly to the channel level, not the surrounding 0.8
        img = np.full((12, 12), 0.8)
        img[5, 5] = 0.2
        img[5, 6:12] = 0.55
        out = impl(img)
        assert out[5, 5] == 0.55
        assert np.all(out[5, 6:12] == 0.55)

    @pytest.mark.parametrize("name,impl", FILL_IMPLS)
    def test_enclosed_gap_is_not_a_drain(self, name, impl):
        # a low rim pixel that does not reach the border is part of the
        # basin; everything rises to the 0.8 pour level
        img = np.full((12, 12), 0.8)
        img[5, 5] = 0.2
        img[5, 6] = 0.55
        out = impl(img)
        assert out[5, 5] == 0.8 and out[5, 6] == 0.8

    def test_backends_agree(self, rng):
        if len(FILL_IMPLS) < 2:
            pytest.skip("single backend")
        img = rng.random((20, 20))
        assert np.array_equal(kernels.fill_holes_numpy(img), kernels.fill_holes_numba(img))


class TestRemoveOcularReflections:
    def test_no_holes_identity(self):
        img = np.tile(np.linspace(0.2, 0.6, 32), (32, 1))
        out = remove_ocular_reflections(img)
        mask = dilate_disk(adaptive_threshold(img, AdaptiveThresholdConfig(0.0, "bright")), 2)
        assert np.array_equal(out[~mask], img[~mask])

    def test_changes_confined_to_dilated_mask(self):
        spec = SyntheticEyeSpec(reflections=((70.0, 60.0, 2.5),))
        img, _ = render_synthetic_eye(spec, seed=4)
        out = remove_ocular_reflections(img)
        mask = dilate_disk(adaptive_threshold(img, AdaptiveThresholdConfig(0.0, "bright")), 2)
        assert np.array_equal(out[~mask], img[~mask])
        # the specular spot itself was replaced by darker fill
        assert out[60, 70] < img[60, 70]

    def test_equals_manual_composition(self):
        spec = SyntheticEyeSpec(reflections=((58.0, 66.0, 2.0),), noise_variance=0.001)
        img, _ = render_synthetic_eye(spec, seed=6)
        mask = dilate_disk(adaptive_threshold(img, AdaptiveThresholdConfig(0.0, "bright")), 2)
        manual = np.where(mask, fill_bright_holes(img), img)
        assert np.array_equal(remove_ocular_reflections(img), manual)

    def test_bright_fill_darkens_enclosed_maxima(self):
        img = np.full((16, 16), 0.3)
        img[7:9, 7:9] = 1.0
        out = fill_bright_holes(img)
        # the double complement costs at most one ulp
        assert np.allclose(out, 0.3, atol=1e-15)


class TestNlm:
    @pytest.mark.parametrize("name,impl", NLM_IMPLS)
    def test_constant_identity_bit_exact(self, name, impl):
        img = np.full((16, 16), 0.37)
        out = impl(img, 7 / 255, 9, 5)
        assert np.array_equal(out, img)

    @pytest.mark.parametrize("name,impl", NLM_IMPLS)
    def test_matches_naive_oracle(self, name, impl, rng):
        img = rng.random((10, 10))
        got = impl(img, 0.2, 5, 3)
        want = oracles.nlm(img, 0.2, 5, 3)
        assert np.abs(got - want).max() < 1e-10

    @pytest.mark.parametrize("name,impl", NLM_IMPLS)
    def test_matches_naive_oracle_with_noise_compensation(self, name, impl, rng):
        img = rng.random((8, 8))
        got = impl(img, 0.1, 7, 3, 0.02)
        want = oracles.nlm(img, 0.1, 7, 3, 0.02)
        assert np.abs(got - want).max() < 1e-10

    def test_backends_agree(self, rng):
        if len(NLM_IMPLS) < 2:
            pytest.skip("single backend")
        img = rng.random((12, 12))
        a = kernels.nlm_numpy(img, 0.15, 7, 5)
        b = kernels.nlm_numba(img, 0.15, 7, 5)
        assert np.abs(a - b).max() < 1e-10

    def test_self_weight_is_maximal(self, rng):
        img = rng.random((9, 9))
        w = oracles.nlm_weights_at(img, 0.1, 5, 3, 4, 4)
        assert w[2, 2] == 1.0
        assert w.max() == w[2, 2]

    def test_output_within_input_range(self, rng):
        img = rng.random((16, 16))
        out = nlm_filter(img, NlmConfig(smoothing=0.3, search=7, comparison=3))
        assert out.min() >= img.min() and out.max() <= img.max()

    def test_denoises_noisy_disk(self):
        spec = SyntheticEyeSpec(noise_variance=0.01, eyelash_count=0)
        clean, _ = render_synthetic_eye(SyntheticEyeSpec(eyelash_count=0), seed=0)
        noisy, _ = render_synthetic_eye(spec, seed=0)
        cfg = NlmConfig(noise_variance=0.01)  # compensation at the known level
        out = nlm_filter(noisy, cfg)
        mse_before = ((noisy - clean) ** 2).mean()
        mse_after = ((out - clean) ** 2).mean()
        assert mse_after <= 0.7 * mse_before

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NlmConfig(search=8).validate()
        with pytest.raises(ValueError):
            NlmConfig(comparison=27).validate()
        with pytest.raises(ValueError):
            NlmConfig(smoothing=0.0).validate()
