"""Gradient-sign attacks against the classifier.

Both attacks are untargeted: they take the true label and move every pixel
in the direction that increases the cross-entropy loss.  sign(0) is 0, so
pixels with a flat loss are left alone.  Outputs always stay inside the
valid [0, 1] range and within an L-infinity ball of radius epsilon around
the original image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .image import clip01
from .nn import ModelParams, input_gradient, input_gradient_batch


@dataclass
class AttackConfig:
    epsilon: float
    iterations: int = 1
    step: float | None = None  # per-iteration step; defaults to epsilon

    def __post_init__(self):
        if self.step is None:
            self.step = self.epsilon
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not 0.0 < self.step <= self.epsilon:
            raise ConfigError(f"step must be in (0, epsilon], got {self.step}")


def fgsm(params: ModelParams, img: np.ndarray, label: int, cfg: AttackConfig) -> np.ndarray:
    """One step of size epsilon along the gradient sign."""
    grad = input_gradient(params, img, label)
    return clip01(img + cfg.epsilon * np.sign(grad))


def bim(params: ModelParams, img: np.ndarray, label: int, cfg: AttackConfig) -> np.ndarray:
    """Iterated gradient-sign steps, re-projected into the epsilon ball.

    After every step each pixel is clipped into
    [orig - epsilon, orig + epsilon] intersected with [0, 1].  With
    iterations=1 and step=epsilon this is bit-identical to fgsm().
    """
    lo = img - cfg.epsilon
    hi = img + cfg.epsilon
    x = np.asarray(img, dtype=np.float64)
    for _ in range(cfg.iterations):
        grad = input_gradient(params, x, label)
        x = clip01(np.clip(x + cfg.step * np.sign(grad), lo, hi))
    return x


def quantize_budget(orig: np.ndarray, adv: np.ndarray, epsilon: float) -> np.ndarray:
    """Round an adversarial image to the 1/255 grid without leaving the
    epsilon ball around the (grid-aligned) original.

    Plain rounding can overshoot the budget by up to half a grid step when
    epsilon is not a multiple of 1/255; this clamps each rounded pixel to
    the outermost grid points still inside [orig - epsilon, orig + epsilon].
    """
    scaled = np.asarray(orig, dtype=np.float64) * 255.0
    hi = np.minimum(np.floor(scaled + epsilon * 255.0 + 1e-7), 255.0)
    lo = np.maximum(np.ceil(scaled - epsilon * 255.0 - 1e-7), 0.0)
    q = np.clip(np.rint(np.asarray(adv, dtype=np.float64) * 255.0), lo, hi)
    return q / 255.0


def fgsm_batch(params: ModelParams, imgs: np.ndarray, labels, cfg: AttackConfig) -> np.ndarray:
    grads = input_gradient_batch(params, imgs, labels)
    return clip01(imgs + cfg.epsilon * np.sign(grads))


def bim_batch(params: ModelParams, imgs: np.ndarray, labels, cfg: AttackConfig) -> np.ndarray:
    lo = imgs - cfg.epsilon
    hi = imgs + cfg.epsilon
    x = np.asarray(imgs, dtype=np.float64)
    for _ in range(cfg.iterations):
        grads = input_gradient_batch(params, x, labels)
        x = clip01(np.clip(x + cfg.step * np.sign(grads), lo, hi))
    return x
