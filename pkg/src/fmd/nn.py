"""Small convolutional classifier with exact analytic gradients.

Fixed architecture (32x32x3 input, 10 classes):

    conv 3x3, 8 filters, stride 1, zero-pad 1 -> ReLU -> 2x2 max pool
    conv 3x3, 16 filters, pad 1               -> ReLU -> 2x2 max pool
    flatten (8*8*16 = 1024, row-major H,W,C)
    dense 1024 -> 64 -> ReLU -> dense 64 -> 10 -> softmax

Parameters are stored float32 (the serialization precision); all forward
and backward arithmetic runs in float64 so that input gradients survive a
central finite-difference check.  Training is single-threaded and bitwise
deterministic for a fixed seed: weights are drawn He-uniform from a
SplitMix64 stream (layer by layer, row-major; biases start at zero) and
each epoch's batch order comes from a Fisher-Yates shuffle of a second
stream.

Weight file format: the magic bytes ``FMDW1\\n`` followed by, for each
tensor in the order conv1.w, conv1.b, conv2.w, conv2.b, fc1.w, fc1.b,
fc2.w, fc2.b: two little-endian uint32 shape fields (rows, cols) and then
rows*cols little-endian IEEE-754 float32 values, row-major.  Convolution
kernels are stored as (filters, kh*kw*in_channels) matrices; biases as
(1, n) rows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, NumericalError
from .rng import SplitMix64, derive_seed

INPUT_SIZE = 32
INPUT_CHANNELS = 3
NUM_CLASSES = 10
MAGIC = b"FMDW1\n"
LOSS_FLOOR = 1e-12

# (name, shape, fan_in); fan_in of None marks a bias (initialized to zero).
ARCHITECTURE = (
    ("conv1_w", (8, 3, 3, 3), 27),
    ("conv1_b", (8,), None),
    ("conv2_w", (16, 3, 3, 8), 72),
    ("conv2_b", (16,), None),
    ("fc1_w", (1024, 64), 1024),
    ("fc1_b", (64,), None),
    ("fc2_w", (64, 10), 64),
    ("fc2_b", (10,), None),
)


@dataclass
class ModelParams:
    """All trainable tensors, stored float32."""

    tensors: dict[str, np.ndarray]

    def __getattr__(self, name):
        try:
            return self.__dict__["tensors"][name]
        except KeyError:
            raise AttributeError(name) from None

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def check_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NumericalError(f"non-finite values in parameter tensor {name}")


def init_params(seed: int) -> ModelParams:
    """He-uniform weights (bound sqrt(6/fan_in)) from SplitMix64(seed)."""
    rng = SplitMix64(seed)
    tensors = {}
    for name, shape, fan_in in ARCHITECTURE:
        if fan_in is None:
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            bound = np.sqrt(6.0 / fan_in)
            flat = rng.floats(int(np.prod(shape))) * (2.0 * bound) - bound
            tensors[name] = flat.reshape(shape).astype(np.float32)
    return ModelParams(tensors)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """-ln(probs[label]) with the probability floored at 1e-12."""
    probs = np.asarray(probs)
    if not 0 <= label < probs.shape[-1]:
        raise DataError(f"label {label} out of range [0, {probs.shape[-1]})")
    return float(-np.log(max(float(probs[label]), LOSS_FLOOR)))


# ---------------------------------------------------------------------------
# forward / backward plumbing (all float64)

def _conv_forward(x, w, b):
    n, h, wd, _ = x.shape
    cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (n,h,w,cin,3,3)
    cols = win.reshape(n * h * wd, -1)                  # rows ordered (cin,kh,kw)
    wcol = w.transpose(3, 1, 2, 0).reshape(-1, cout)
    out = cols @ wcol + b
    return out.reshape(n, h, wd, cout), (xp, cols, wcol)


def _conv_backward(dout, cache, w_shape):
    xp, cols, wcol = cache
    n, hp, wp, cin = xp.shape
    h, wd = hp - 2, wp - 2
    cout = w_shape[0]
    dmat = dout.reshape(-1, cout)
    dwcol = cols.T @ dmat
    dw = dwcol.reshape(cin, 3, 3, cout).transpose(3, 1, 2, 0)
    db = dmat.sum(axis=0)
    dwin = (dmat @ wcol.T).reshape(n, h, wd, cin, 3, 3)
    dxp = np.zeros_like(xp)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + wd, :] += dwin[:, :, :, :, i, j]
    return dw, db, dxp[:, 1 : 1 + h, 1 : 1 + wd, :]


def _pool_forward(x):
    n, h, w, c = x.shape
    xr = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    xr = xr.reshape(n, h // 2, w // 2, 4, c)
    idx = xr.argmax(axis=3)  # first max wins ties
    out = np.take_along_axis(xr, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return out, idx


def _pool_backward(dout, idx, shape):
    n, h, w, c = shape
    dxr = np.zeros((n, h // 2, w // 2, 4, c))
    np.put_along_axis(dxr, idx[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
    dxr = dxr.reshape(n, h // 2, w // 2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    return dxr.reshape(n, h, w, c)


def _check_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != (INPUT_SIZE, INPUT_SIZE, INPUT_CHANNELS):
        raise DataError(
            f"expected images of shape (N, {INPUT_SIZE}, {INPUT_SIZE}, {INPUT_CHANNELS}), got {x.shape}"
        )
    return x


def _forward_full(params: ModelParams, x: np.ndarray):
    """Forward pass returning probabilities plus every cache backprop needs."""
    p = {k: v.astype(np.float64) for k, v in params.tensors.items()}
    z1, cache1 = _conv_forward(x, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    p1, idx1 = _pool_forward(a1)
    z2, cache2 = _conv_forward(p1, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    p2, idx2 = _pool_forward(a2)
    flat = p2.reshape(x.shape[0], -1)
    z3 = flat @ p["fc1_w"] + p["fc1_b"]
    a3 = np.maximum(z3, 0.0)
    logits = a3 @ p["fc2_w"] + p["fc2_b"]
    probs = softmax(logits)
    cache = (p, x, z1, cache1, a1, idx1, p1, z2, cache2, a2, idx2, p2, flat, z3, a3)
    return probs, cache


def _backward_full(dlogits: np.ndarray, cache, want_input_grad: bool):
    """Backprop from d(loss)/d(logits); returns (param grads, input grad)."""
    (p, x, z1, cache1, a1, idx1, p1, z2, cache2, a2, idx2, p2, flat, z3, a3) = cache
    grads = {}
    grads["fc2_w"] = a3.T @ dlogits
    grads["fc2_b"] = dlogits.sum(axis=0)
    da3 = dlogits @ p["fc2_w"].T
    dz3 = da3 * (z3 > 0.0)
    grads["fc1_w"] = flat.T @ dz3
    grads["fc1_b"] = dz3.sum(axis=0)
    dflat = dz3 @ p["fc1_w"].T
    dp2 = dflat.reshape(p2.shape)
    da2 = _pool_backward(dp2, idx2, a2.shape)
    dz2 = da2 * (z2 > 0.0)
    grads["conv2_w"], grads["conv2_b"], dp1 = _conv_backward(dz2, cache2, p["conv2_w"].shape)
    da1 = _pool_backward(dp1, idx1, a1.shape)
    dz1 = da1 * (z1 > 0.0)
    grads["conv1_w"], grads["conv1_b"], dx = _conv_backward(dz1, cache1, p["conv1_w"].shape)
    return grads, (dx if want_input_grad else None)


def forward_batch(params: ModelParams, imgs: np.ndarray) -> np.ndarray:
    """Probabilities for a batch of images, shape (N, 10)."""
    x = _check_batch(imgs)
    probs, _ = _forward_full(params, x)
    return probs


def forward(params: ModelParams, img: np.ndarray) -> np.ndarray:
    """Probability vector over the 10 classes for one (32, 32, 3) image."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (INPUT_SIZE, INPUT_SIZE, INPUT_CHANNELS):
        raise DataError(f"expected ({INPUT_SIZE}, {INPUT_SIZE}, {INPUT_CHANNELS}) image, got {img.shape}")
    return forward_batch(params, img[None])[0]


def predict_batch(params: ModelParams, imgs: np.ndarray) -> np.ndarray:
    """Argmax class per image; ties resolve to the lowest class id."""
    return np.argmax(forward_batch(params, imgs), axis=1)


def _check_labels(labels, n):
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DataError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
        raise DataError(f"labels must lie in [0, {NUM_CLASSES})")
    return labels.astype(np.int64)


def input_gradient_batch(params: ModelParams, imgs: np.ndarray, labels) -> np.ndarray:
    """d(sum of per-image cross-entropy)/d(pixels); each image independent."""
    x = _check_batch(imgs)
    labels = _check_labels(labels, x.shape[0])
    probs, cache = _forward_full(params, x)
    dlogits = probs.copy()
    dlogits[np.arange(x.shape[0]), labels] -= 1.0
    _, dx = _backward_full(dlogits, cache, want_input_grad=True)
    return dx


def input_gradient(params: ModelParams, img: np.ndarray, label: int) -> np.ndarray:
    """Exact gradient of the cross-entropy loss w.r.t. every pixel."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (INPUT_SIZE, INPUT_SIZE, INPUT_CHANNELS):
        raise DataError(f"expected ({INPUT_SIZE}, {INPUT_SIZE}, {INPUT_CHANNELS}) image, got {img.shape}")
    return input_gradient_batch(params, img[None], [label])[0]


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    seed: int = 42
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 20

    def validate(self) -> None:
        if self.lr <= 0 or not (0 <= self.momentum < 1):
            raise ConfigError("lr must be > 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_accuracy: float
    val_accuracy: float | None = None


def accuracy(params: ModelParams, imgs: np.ndarray, labels, batch: int = 256) -> float:
    labels = np.asarray(labels)
    correct = 0
    for lo in range(0, len(labels), batch):
        pred = predict_batch(params, imgs[lo : lo + batch])
        correct += int((pred == labels[lo : lo + batch]).sum())
    return correct / len(labels)


def train(
    images: np.ndarray,
    labels,
    config: TrainConfig,
    val_images: np.ndarray | None = None,
    val_labels=None,
) -> tuple[ModelParams, list[EpochLog]]:
    """SGD with momentum; returns trained params and the per-epoch log.

    Deterministic given config.seed: initialization and epoch shuffles use
    seeds derived from it.  epochs=0 returns the initial parameters.
    """
    config.validate()
    x = _check_batch(images)
    if x.shape[0] == 0:
        raise DataError("empty training set")
    y = _check_labels(labels, x.shape[0])

    params = init_params(derive_seed(config.seed, "init"))
    shuffle_rng = SplitMix64(derive_seed(config.seed, "shuffle"))
    velocity = {k: np.zeros(v.shape, dtype=np.float64) for k, v in params.tensors.items()}
    log: list[EpochLog] = []

    n = x.shape[0]
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            xb, yb = x[idx], y[idx]
            m = len(idx)
            probs, cache = _forward_full(params, xb)
            picked = np.maximum(probs[np.arange(m), yb], LOSS_FLOOR)
            batch_loss = float(-np.log(picked).sum())
            if not np.isfinite(batch_loss):
                raise NumericalError(f"training diverged: non-finite loss at epoch {epoch}")
            loss_sum += batch_loss
            dlogits = probs.copy()
            dlogits[np.arange(m), yb] -= 1.0
            dlogits /= m
            grads, _ = _backward_full(dlogits, cache, want_input_grad=False)
            for name in params.tensors:
                velocity[name] = config.momentum * velocity[name] - config.lr * grads[name]
                params.tensors[name] = (
                    params.tensors[name].astype(np.float64) + velocity[name]
                ).astype(np.float32)
        params.check_finite()
        entry = EpochLog(
            epoch=epoch,
            loss=loss_sum / n,
            train_accuracy=accuracy(params, x, y),
        )
        if val_images is not None:
            entry.val_accuracy = accuracy(params, val_images, np.asarray(val_labels))
        log.append(entry)
    return params, log


# ---------------------------------------------------------------------------
# serialization

def save_weights(params: ModelParams) -> bytes:
    """Serialize parameters in the documented FMDW1 layout."""
    chunks = [MAGIC]
    for name, shape, _ in ARCHITECTURE:
        t = params.tensors[name].astype("<f4")
        rows = shape[0] if len(shape) > 1 else 1
        cols = t.size // rows
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(t.reshape(rows, cols).tobytes())
    return b"".join(chunks)


def load_weights(data: bytes) -> ModelParams:
    """Parse FMDW1 bytes; raises distinct DataErrors for each malformation."""
    if data[: len(MAGIC)] != MAGIC:
        raise DataError("bad magic: not an FMDW1 weight file")
    offset = len(MAGIC)
    tensors = {}
    for name, shape, _ in ARCHITECTURE:
        if offset + 8 > len(data):
            raise DataError(f"truncated weight file: missing shape fields for {name}")
        rows, cols = struct.unpack_from("<II", data, offset)
        offset += 8
        exp_rows = shape[0] if len(shape) > 1 else 1
        exp_cols = int(np.prod(shape)) // exp_rows
        if (rows, cols) != (exp_rows, exp_cols):
            raise DataError(
                f"shape mismatch for {name}: file has ({rows}, {cols}), "
                f"architecture expects ({exp_rows}, {exp_cols})"
            )
        nbytes = rows * cols * 4
        if offset + nbytes > len(data):
            raise DataError(f"truncated weight file: missing values for {name}")
        flat = np.frombuffer(data[offset : offset + nbytes], dtype="<f4")
        offset += nbytes
        tensors[name] = flat.reshape(shape).astype(np.float32)
    if offset != len(data):
        raise DataError(f"trailing data after weight tensors ({len(data) - offset} bytes)")
    return ModelParams(tensors)


def save_weights_file(path, params: ModelParams) -> None:
    with open(path, "wb") as f:
        f.write(save_weights(params))


def load_weights_file(path) -> ModelParams:
    with open(path, "rb") as f:
        return load_weights(f.read())
