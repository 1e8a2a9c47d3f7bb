"""Deterministic synthetic 10-class image dataset.

Each image is one of ten 32x32 shapes drawn in a random foreground color on
a random background color:

    0 filled circle    1 hollow circle   2 filled square   3 hollow square
    4 filled triangle  5 plus sign       6 horizontal stripes
    7 vertical stripes 8 diagonal line   9 checkerboard

Background channels are uniform on [0, 0.4], foreground on [0.6, 1.0], the
shape center jitters by +-4 px, the size by +-20%, and Gaussian pixel noise
(sigma = spec.noise_sigma) is added before clipping back into [0, 1].

Every image gets its own SplitMix64 stream seeded by
derive_seed(spec.seed, label, index), so shards can be generated in
parallel by splitting the (class, index) space.  Within one image the draw
order is: 3 background channels, 3 foreground channels, center dx, center
dy, size factor, then H*W*C noise Gaussians (Box-Muller pairs in stream
order).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .image import clip01, load_ppm, save_ppm
from .rng import SplitMix64, derive_seed

CLASS_NAMES = (
    "filled_circle",
    "hollow_circle",
    "filled_square",
    "hollow_square",
    "filled_triangle",
    "plus_sign",
    "h_stripes",
    "v_stripes",
    "diagonal",
    "checkerboard",
)
NUM_CLASSES = len(CLASS_NAMES)


@dataclass
class DatasetSpec:
    seed: int = 42
    per_class: int = 100
    image_size: int = 32
    noise_sigma: float = 0.02

    def validate(self) -> None:
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.image_size < 8:
            raise ConfigError("image_size must be >= 8")


def image_id(label: int, index: int) -> str:
    return f"cls{label}_{index:04d}"


def _shape_mask(label: int, size: int, cx: float, cy: float, r: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dx, dy = xs - cx, ys - cy
    if label == 0:  # filled circle
        return dx * dx + dy * dy <= r * r
    if label == 1:  # hollow circle, thin ring
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.78 * r) ** 2)
    if label == 2:  # filled square
        a = 0.8 * r
        return np.maximum(np.abs(dx), np.abs(dy)) <= a
    if label == 3:  # hollow square, thin frame
        a = 0.8 * r
        m = np.maximum(np.abs(dx), np.abs(dy))
        return (m <= a) & (m >= 0.78 * a)
    if label == 4:  # filled triangle, apex up
        v0 = (cx, cy - r)
        v1 = (cx - 0.95 * r, cy + 0.72 * r)
        v2 = (cx + 0.95 * r, cy + 0.72 * r)

        def half_plane(p, q):
            return (q[0] - p[0]) * (ys - p[1]) - (q[1] - p[1]) * (xs - p[0])

        s0, s1, s2 = half_plane(v0, v1), half_plane(v1, v2), half_plane(v2, v0)
        # interior has a consistent sign for either vertex winding
        return ((s0 >= 0) & (s1 >= 0) & (s2 >= 0)) | ((s0 <= 0) & (s1 <= 0) & (s2 <= 0))
    if label == 5:  # plus sign, thin arms
        w = 0.16 * r
        return ((np.abs(dx) <= w) & (np.abs(dy) <= r)) | ((np.abs(dy) <= w) & (np.abs(dx) <= r))
    if label == 6:  # horizontal stripes over the whole canvas
        period = r / 2.6
        return np.floor(dy / period).astype(np.int64) % 2 == 0
    if label == 7:  # vertical stripes
        period = r / 2.6
        return np.floor(dx / period).astype(np.int64) % 2 == 0
    if label == 8:  # diagonal band through the center
        w = 0.16 * r
        return np.abs(dx - dy) <= w * np.sqrt(2.0)
    if label == 9:  # checkerboard
        cell = r / 2.6
        return (np.floor(dx / cell) + np.floor(dy / cell)).astype(np.int64) % 2 == 0
    raise DataError(f"unknown class label {label}")


def render_image(spec: DatasetSpec, label: int, index: int) -> np.ndarray:
    """Render one dataset image; pure function of (spec, label, index)."""
    size = spec.image_size
    rng = SplitMix64(derive_seed(spec.seed, label, index))
    bg = np.array([rng.next_float() * 0.4 for _ in range(3)])
    fg = np.array([0.6 + rng.next_float() * 0.4 for _ in range(3)])
    cx = size / 2.0 + rng.uniform(-4.0, 4.0)
    cy = size / 2.0 + rng.uniform(-4.0, 4.0)
    scale = rng.uniform(0.8, 1.2)
    r = 0.32 * size * scale
    mask = _shape_mask(label, size, cx, cy, r)
    img = np.where(mask[:, :, None], fg, bg)
    if spec.noise_sigma > 0:
        noise = rng.normals(size * size * 3).reshape(size, size, 3)
        img = img + spec.noise_sigma * noise
    return clip01(img)


def generate(spec: DatasetSpec) -> list[tuple[np.ndarray, int]]:
    """All per_class * 10 images, ordered by class then per-class index."""
    spec.validate()
    out = []
    for label in range(NUM_CLASSES):
        for index in range(spec.per_class):
            out.append((render_image(spec, label, index), label))
    return out


def dataset_ids(spec: DatasetSpec) -> list[str]:
    return [image_id(label, i) for label in range(NUM_CLASSES) for i in range(spec.per_class)]


# ---------------------------------------------------------------------------
# stratified splitting

def split_indices(labels, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified, seeded, disjoint and exhaustive index split.

    Per class: indices are shuffled and the first round(ratio * n) go to
    the first half, clamped so both halves keep at least one item.  A class
    with fewer than 2 members cannot appear in both halves and is an error.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    labels = np.asarray(labels)
    rng = SplitMix64(derive_seed(seed, "split"))
    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in np.unique(labels):
        members = list(np.flatnonzero(labels == label))
        if len(members) < 2:
            raise DataError(f"class {label} has {len(members)} item(s); need >= 2 to split")
        rng.shuffle(members)
        n_first = int(round(ratio * len(members)))
        n_first = min(max(n_first, 1), len(members) - 1)
        train_idx.extend(members[:n_first])
        test_idx.extend(members[n_first:])
    return np.asarray(train_idx, dtype=np.int64), np.asarray(test_idx, dtype=np.int64)


def split(dataset, ratio: float, seed: int):
    """Split a list of (image, label) pairs; returns (train, test) lists."""
    labels = [label for _, label in dataset]
    tr, te = split_indices(labels, ratio, seed)
    return [dataset[i] for i in tr], [dataset[i] for i in te]


# ---------------------------------------------------------------------------
# on-disk form: one PPM per image plus a manifest CSV

def save_dataset(dirpath, dataset, spec: DatasetSpec | None = None) -> None:
    os.makedirs(dirpath, exist_ok=True)
    rows = []
    counters = [0] * NUM_CLASSES
    for img, label in dataset:
        name = image_id(label, counters[label]) + ".ppm"
        counters[label] += 1
        save_ppm(os.path.join(dirpath, name), img)
        rows.append((name, label))
    with open(os.path.join(dirpath, "manifest.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)


def load_manifest(dirpath) -> list[tuple[str, int]]:
    path = os.path.join(dirpath, "manifest.csv")
    if not os.path.exists(path):
        raise DataError(f"no manifest.csv in {dirpath}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["filename", "label"]:
            raise DataError(f"bad manifest header in {path}: {header}")
        return [(row[0], int(row[1])) for row in reader]


def load_dataset(dirpath) -> list[tuple[np.ndarray, int]]:
    return [
        (load_ppm(os.path.join(dirpath, name)), label)
        for name, label in load_manifest(dirpath)
    ]
