"""Prediction-shift scoring: distance between top-k vectors before and
after denoising.

An image's score is (1/k) * || P_k(x) - P_k(denoise(x)) || where P_k is
the top-k (class, confidence) vector.  The two vectors are aligned on the
union of their class ids; a class missing from one side contributes
confidence zero there.  The norm is L1 by default (L2 available), and the
normalizer is k regardless of the union size.

Filter paths used for the denoised prediction:

* median: 3-channel median filter straight into the model.
* wiener: grayscale -> adaptive Wiener -> channels replicated back to 3.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .filters import median_filter, wiener_adaptive
from .image import replicate_gray, to_grayscale
from .nn import ModelParams, forward_batch

FILTER_NAMES = ("median", "wiener")
NORMS = ("l1", "l2")
ALIGNMENTS = ("union", "orig")


@dataclass(frozen=True)
class PredictionVector:
    """Ranked (class id, confidence) pairs, confidence non-increasing."""

    classes: tuple[int, ...]
    confidences: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.classes)


@dataclass
class ScoreRecord:
    image_id: str
    attack_tag: str   # clean | fgsm | bim
    filter_tag: str   # median | wiener
    score: float
    label: int        # 1 adversarial, 0 legitimate


def top_k(probs: np.ndarray, k: int) -> PredictionVector:
    """k highest-confidence classes; ties broken by ascending class id."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise DataError(f"expected a 1-D probability vector, got shape {probs.shape}")
    if not 1 <= k <= probs.shape[0]:
        raise ConfigError(f"k out of range: {k} not in [1, {probs.shape[0]}]")
    order = np.argsort(-probs, kind="stable")[:k]
    return PredictionVector(
        classes=tuple(int(c) for c in order),
        confidences=tuple(float(probs[c]) for c in order),
    )


def fmd_score(
    p_orig: PredictionVector,
    p_denoised: PredictionVector,
    norm: str = "l1",
    alignment: str = "union",
) -> float:
    """Normalized distance between two top-k prediction vectors."""
    if norm not in NORMS:
        raise ConfigError(f"norm must be one of {NORMS}, got {norm!r}")
    if alignment not in ALIGNMENTS:
        raise ConfigError(f"alignment must be one of {ALIGNMENTS}, got {alignment!r}")
    if p_orig.k != p_denoised.k:
        raise ConfigError(f"mismatched k: {p_orig.k} vs {p_denoised.k}")
    a = dict(zip(p_orig.classes, p_orig.confidences))
    b = dict(zip(p_denoised.classes, p_denoised.confidences))
    if alignment == "union":
        ids = sorted(set(a) | set(b))
    else:
        ids = sorted(a)
    diffs = np.array([a.get(c, 0.0) - b.get(c, 0.0) for c in ids])
    if norm == "l1":
        dist = float(np.sum(np.abs(diffs)))
    else:
        dist = float(np.sqrt(np.sum(diffs**2)))
    return dist / p_orig.k


def denoise_for_scoring(
    img: np.ndarray, filter_tag: str, median_window: int = 3, wiener_window: int = 5
) -> np.ndarray:
    """The denoised 3-channel image whose prediction is compared."""
    if filter_tag == "median":
        return median_filter(img, median_window)
    if filter_tag == "wiener":
        return replicate_gray(wiener_adaptive(to_grayscale(img), wiener_window))
    raise ConfigError(f"filter must be one of {FILTER_NAMES}, got {filter_tag!r}")


def score_dataset(
    params: ModelParams,
    images: np.ndarray,
    ids,
    labels,
    attack_tag: str,
    filter_tag: str,
    k: int = 5,
    norm: str = "l1",
    alignment: str = "union",
    median_window: int = 3,
    wiener_window: int = 5,
    batch: int = 64,
) -> list[ScoreRecord]:
    """Score every image; labels mark adversarial (1) vs legitimate (0)."""
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    ids = list(ids)
    labels = list(labels)
    if len(ids) != n or len(labels) != n:
        raise DataError("images, ids and labels must have equal length")
    records = []
    for lo in range(0, n, batch):
        chunk = images[lo : lo + batch]
        denoised = np.stack(
            [denoise_for_scoring(im, filter_tag, median_window, wiener_window) for im in chunk]
        )
        probs = forward_batch(params, chunk)
        probs_dn = forward_batch(params, denoised)
        for i in range(chunk.shape[0]):
            score = fmd_score(top_k(probs[i], k), top_k(probs_dn[i], k), norm, alignment)
            records.append(
                ScoreRecord(
                    image_id=ids[lo + i],
                    attack_tag=attack_tag,
                    filter_tag=filter_tag,
                    score=score,
                    label=int(labels[lo + i]),
                )
            )
    return records


# ---------------------------------------------------------------------------
# scores CSV: header image_id,attack,filter,score,label; 9 significant digits

def write_scores(path, records) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "attack", "filter", "score", "label"])
        for r in records:
            writer.writerow([r.image_id, r.attack_tag, r.filter_tag, f"{r.score:.9g}", r.label])


def read_scores(path) -> list[ScoreRecord]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["image_id", "attack", "filter", "score", "label"]:
            raise DataError(f"bad scores header in {path}: {header}")
        return [
            ScoreRecord(row[0], row[1], row[2], float(row[3]), int(row[4]))
            for row in reader
        ]
