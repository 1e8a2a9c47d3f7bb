import numpy as np
import pytest

from fmd.attacks import AttackConfig, bim, bim_batch, fgsm, fgsm_batch, quantize_budget
from fmd.errors import ConfigError
from fmd.image import clip01
from fmd.nn import ARCHITECTURE, ModelParams, init_params, input_gradient
from fmd.rng import SplitMix64


@pytest.fixture(scope="module")
def params():
    return init_params(21)


@pytest.fixture(scope="module")
def image():
    return SplitMix64(8).floats(32 * 32 * 3).reshape(32, 32, 3)


def zero_params():
    return ModelParams(
        {name: np.zeros(shape, dtype=np.float32) for name, shape, _ in ARCHITECTURE}
    )


class TestAttackConfig:
    def test_step_defaults_to_epsilon(self):
        cfg = AttackConfig(epsilon=0.1)
        assert cfg.step == 0.1

    def test_invalid_epsilon(self):
        with pytest.raises(ConfigError):
            AttackConfig(epsilon=0.0)
        with pytest.raises(ConfigError):
            AttackConfig(epsilon=1.5)

    def test_invalid_iterations(self):
        with pytest.raises(ConfigError):
            AttackConfig(epsilon=0.1, iterations=0)

    def test_step_above_epsilon_rejected(self):
        with pytest.raises(ConfigError):
            AttackConfig(epsilon=0.1, step=0.2)


class TestFgsm:
    def test_follows_gradient_sign_rule(self, params, image):
        cfg = AttackConfig(epsilon=0.1)
        grad = input_gradient(params, image, 3)
        adv = fgsm(params, image, 3, cfg)
        assert np.array_equal(adv, clip01(image + 0.1 * np.sign(grad)))

    def test_negative_gradient_moves_pixel_down(self, params, image):
        cfg = AttackConfig(epsilon=0.1)
        grad = input_gradient(params, image, 3)
        adv = fgsm(params, image, 3, cfg)
        # pick an interior pixel with negative gradient and room to move
        mask = (grad < 0) & (image > 0.2) & (image < 0.8)
        assert mask.any()
        i, j, c = [int(v[0]) for v in np.nonzero(mask)]
        assert adv[i, j, c] == pytest.approx(image[i, j, c] - 0.1, abs=1e-12)

    def test_zero_gradient_leaves_image_unchanged(self, image):
        adv = fgsm(zero_params(), image, 0, AttackConfig(epsilon=0.1))
        assert np.array_equal(adv, image)

    def test_linf_budget(self, params, image):
        for eps in (8 / 255, 0.1, 0.5):
            adv = fgsm(params, image, 1, AttackConfig(epsilon=eps))
            assert np.max(np.abs(adv - image)) <= eps + 1e-7
            assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_deterministic(self, params, image):
        cfg = AttackConfig(epsilon=0.05)
        assert np.array_equal(fgsm(params, image, 5, cfg), fgsm(params, image, 5, cfg))

    def test_batch_matches_loop(self, params):
        rng = SplitMix64(9)
        imgs = rng.floats(3 * 32 * 32 * 3).reshape(3, 32, 32, 3)
        labels = [0, 4, 9]
        cfg = AttackConfig(epsilon=0.05)
        batch = fgsm_batch(params, imgs, labels, cfg)
        for i in range(3):
            assert np.allclose(batch[i], fgsm(params, imgs[i], labels[i], cfg), atol=1e-9)


class TestBim:
    def test_single_iteration_equals_fgsm_bitwise(self, params, image):
        cfg = AttackConfig(epsilon=8 / 255, iterations=1)
        assert np.array_equal(
            bim(params, image, 2, cfg), fgsm(params, image, 2, AttackConfig(epsilon=8 / 255))
        )

    def test_every_pixel_within_ball_and_valid(self, params, image):
        cfg = AttackConfig(epsilon=0.06, iterations=7, step=0.02)
        adv = bim(params, image, 6, cfg)
        assert np.max(np.abs(adv - image)) <= 0.06 + 1e-7
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_deterministic(self, params, image):
        cfg = AttackConfig(epsilon=0.05, iterations=3, step=0.02)
        assert np.array_equal(bim(params, image, 7, cfg), bim(params, image, 7, cfg))

    def test_batch_matches_loop(self, params):
        rng = SplitMix64(10)
        imgs = rng.floats(2 * 32 * 32 * 3).reshape(2, 32, 32, 3)
        labels = [3, 8]
        cfg = AttackConfig(epsilon=0.05, iterations=4, step=0.02)
        batch = bim_batch(params, imgs, labels, cfg)
        for i in range(2):
            assert np.allclose(batch[i], bim(params, imgs[i], labels[i], cfg), atol=1e-9)


class TestQuantizeBudget:
    def test_stays_on_grid_and_inside_ball(self, params):
        rng = SplitMix64(13)
        src = np.rint(rng.floats(32 * 32 * 3).reshape(32, 32, 3) * 255) / 255
        for eps in (0.05, 8 / 255, 0.013):
            adv = fgsm(params, src, 2, AttackConfig(epsilon=eps))
            q = quantize_budget(src, adv, eps)
            assert np.array_equal(q, np.rint(q * 255) / 255)
            assert np.max(np.abs(q - src)) <= eps + 1e-9
            assert q.min() >= 0.0 and q.max() <= 1.0

    def test_grid_aligned_epsilon_is_plain_rounding(self):
        src = np.full((2, 2, 3), 100 / 255)
        adv = src + 8 / 255
        q = quantize_budget(src, adv, 8 / 255)
        assert np.allclose(q, 108 / 255, atol=1e-15)
