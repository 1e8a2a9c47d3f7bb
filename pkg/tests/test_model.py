import numpy as np
import pytest

from fmd.errors import ConfigError, DataError, NumericalError
from fmd.nn import (
    ARCHITECTURE,
    ModelParams,
    TrainConfig,
    cross_entropy,
    forward,
    forward_batch,
    init_params,
    input_gradient,
    load_weights,
    predict_batch,
    save_weights,
    softmax,
    train,
)
from fmd.rng import SplitMix64


@pytest.fixture(scope="module")
def params():
    return init_params(7)


@pytest.fixture(scope="module")
def image():
    return SplitMix64(3).floats(32 * 32 * 3).reshape(32, 32, 3)


def zero_params():
    return ModelParams(
        {name: np.zeros(shape, dtype=np.float32) for name, shape, _ in ARCHITECTURE}
    )


class TestSoftmax:
    def test_zero_logits_uniform(self):
        out = softmax(np.zeros(10))
        assert np.allclose(out, 0.1, atol=1e-15)

    def test_closed_form_two_class(self):
        out = softmax(np.array([np.log(2.0), 0.0]))
        assert out == pytest.approx([2 / 3, 1 / 3], abs=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=10) * 5
        assert np.max(np.abs(softmax(z) - softmax(z + 123.456))) < 1e-7

    def test_large_logits_stable(self):
        out = softmax(np.array([1000.0, 0.0, -1000.0]))
        assert np.isfinite(out).all()
        assert out.sum() == pytest.approx(1.0)


class TestCrossEntropy:
    def test_one_hot_correct_is_zero(self):
        probs = np.zeros(10)
        probs[3] = 1.0
        assert cross_entropy(probs, 3) == 0.0

    def test_uniform_is_ln10(self):
        assert cross_entropy(np.full(10, 0.1), 0) == pytest.approx(np.log(10), abs=1e-12)

    def test_zero_probability_floored(self):
        probs = np.zeros(10)
        probs[0] = 1.0
        loss = cross_entropy(probs, 5)
        assert loss == pytest.approx(-np.log(1e-12))

    def test_label_out_of_range(self):
        with pytest.raises(DataError, match="out of range"):
            cross_entropy(np.full(10, 0.1), 10)


class TestForward:
    def test_valid_distribution(self, params, image):
        probs = forward(params, image)
        assert probs.shape == (10,)
        assert np.all(probs >= 0.0) and np.all(probs <= 1.0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)

    def test_distribution_on_random_images(self, params):
        rng = SplitMix64(11)
        for _ in range(10):
            img = rng.floats(32 * 32 * 3).reshape(32, 32, 3)
            probs = forward(params, img)
            assert probs.sum() == pytest.approx(1.0, abs=1e-6)
            assert probs.min() >= 0.0

    def test_zero_weights_give_uniform(self, image):
        probs = forward(zero_params(), image)
        assert np.allclose(probs, 0.1, atol=1e-15)

    def test_deterministic(self, params, image):
        a = forward(params, image)
        b = forward(params, image)
        assert np.array_equal(a, b)

    def test_batch_matches_single(self, params):
        rng = SplitMix64(12)
        imgs = rng.floats(4 * 32 * 32 * 3).reshape(4, 32, 32, 3)
        batch = forward_batch(params, imgs)
        for i in range(4):
            assert np.allclose(batch[i], forward(params, imgs[i]), atol=1e-12)

    def test_wrong_shape_rejected(self, params):
        with pytest.raises(DataError, match="expected"):
            forward(params, np.zeros((16, 16, 3)))
        with pytest.raises(DataError):
            forward_batch(params, np.zeros((2, 32, 32, 1)))


class TestInputGradient:
    def test_matches_finite_differences(self, params, image):
        label = 4
        grad = input_gradient(params, image, label)
        rng = np.random.default_rng(0)
        h = 1e-3
        failures = 0
        for _ in range(100):
            i, j, c = rng.integers(32), rng.integers(32), rng.integers(3)
            plus, minus = image.copy(), image.copy()
            plus[i, j, c] += h
            minus[i, j, c] -= h
            fd = (
                cross_entropy(forward(params, plus), label)
                - cross_entropy(forward(params, minus), label)
            ) / (2 * h)
            denom = max(abs(grad[i, j, c]), abs(fd), 1e-8)
            if abs(fd - grad[i, j, c]) / denom > 1e-3:
                failures += 1
        assert failures <= 1

    def test_zero_weight_model_zero_gradient(self, image):
        grad = input_gradient(zero_params(), image, 0)
        assert np.array_equal(grad, np.zeros((32, 32, 3)))

    def test_deterministic(self, params, image):
        a = input_gradient(params, image, 2)
        b = input_gradient(params, image, 2)
        assert np.array_equal(a, b)

    def test_gradient_direction_increases_loss(self, params, image):
        label = 1
        grad = input_gradient(params, image, label)
        before = cross_entropy(forward(params, image), label)
        stepped = image + 1e-4 * np.sign(grad)
        after = cross_entropy(forward(params, stepped), label)
        assert after > before


def tiny_dataset(n_per_class=6, seed=5, classes=4):
    """Small, trivially separable set: one bright quadrant per class."""
    rng = SplitMix64(seed)
    corners = [(0, 0), (0, 16), (16, 0), (16, 16)]
    imgs, labels = [], []
    for label in range(classes):
        for _ in range(n_per_class):
            img = np.full((32, 32, 3), 0.1)
            r, c = corners[label % 4]
            img[r : r + 16, c : c + 16, :] = 0.9
            noise = 0.02 * rng.normals(32 * 32 * 3).reshape(32, 32, 3)
            imgs.append(np.clip(img + noise, 0, 1))
            labels.append(label)
    return np.stack(imgs), np.array(labels)


class TestTrain:
    def test_epochs_zero_returns_initial_params(self):
        imgs, labels = tiny_dataset()
        cfg = TrainConfig(seed=9, epochs=0)
        params, log = train(imgs, labels, cfg)
        assert log == []
        fresh = init_params(__import__("fmd.rng", fromlist=["derive_seed"]).derive_seed(9, "init"))
        for name in params.tensors:
            assert np.array_equal(params.tensors[name], fresh.tensors[name])

    def test_same_seed_bit_identical(self):
        imgs, labels = tiny_dataset()
        cfg = TrainConfig(seed=3, epochs=2, batch_size=16)
        a, _ = train(imgs, labels, cfg)
        b, _ = train(imgs, labels, cfg)
        for name in a.tensors:
            assert np.array_equal(a.tensors[name], b.tensors[name])

    def test_learns_separable_data(self):
        imgs, labels = tiny_dataset()
        cfg = TrainConfig(seed=1, epochs=5, batch_size=16)
        params, log = train(imgs, labels, cfg)
        assert log[-1].train_accuracy == 1.0
        assert np.array_equal(predict_batch(params, imgs), labels)

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError, match="empty"):
            train(np.zeros((0, 32, 32, 3)), [], TrainConfig(epochs=1))

    def test_divergence_aborts(self):
        imgs, labels = tiny_dataset()
        cfg = TrainConfig(seed=1, epochs=30, lr=1e9)
        with pytest.raises(NumericalError):
            train(imgs, labels, cfg)

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr=-1.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0).validate()


class TestWeightSerialization:
    def test_roundtrip_bit_identical(self, params):
        clone = load_weights(save_weights(params))
        for name in params.tensors:
            assert np.array_equal(clone.tensors[name], params.tensors[name])
            assert clone.tensors[name].dtype == np.float32

    def test_bad_magic(self, params):
        data = b"XXXX1\n" + save_weights(params)[6:]
        with pytest.raises(DataError, match="bad magic"):
            load_weights(data)

    def test_truncation(self, params):
        data = save_weights(params)
        with pytest.raises(DataError, match="truncated"):
            load_weights(data[: len(data) // 2])

    def test_wrong_architecture_shape(self, params):
        data = bytearray(save_weights(params))
        # corrupt the first tensor's row count (little-endian uint32 at magic end)
        data[6] = data[6] + 1
        with pytest.raises(DataError, match="shape mismatch"):
            load_weights(bytes(data))

    def test_trailing_data_rejected(self, params):
        with pytest.raises(DataError, match="trailing"):
            load_weights(save_weights(params) + b"\x00")


class TestInit:
    def test_he_uniform_bounds(self, params):
        for name, shape, fan_in in ARCHITECTURE:
            t = params.tensors[name]
            assert t.shape == shape
            if fan_in is None:
                assert np.array_equal(t, np.zeros(shape, dtype=np.float32))
            else:
                bound = np.sqrt(6.0 / fan_in)
                assert np.abs(t).max() <= bound
                assert np.abs(t).max() > 0.5 * bound  # actually fills the range

    def test_deterministic(self):
        a, b = init_params(123), init_params(123)
        for name in a.tensors:
            assert np.array_equal(a.tensors[name], b.tensors[name])
        c = init_params(124)
        assert not np.array_equal(a.tensors["conv1_w"], c.tensors["conv1_w"])
