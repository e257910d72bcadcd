"""Training objective as pure numeric functions with analytic gradients.

Three terms: 2-way softmax cross-entropy over corner-presence scores with
online hard negative mining, smooth-L1 over regression offsets, and a Dice
term over the position-sensitive segmentation maps. The combined loss is

    total = conf / n_positive + lambda1 * loc / n_positive
            + lambda2 * seg / n_seg_pixels
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DICE_EPS = 1e-6
ZERO_POSITIVE_FLOOR = 16  # hardest negatives kept when a batch has no positives


@dataclass
class ConfBatch:
    """Corner-presence logits [N, 2] and binary labels [N]."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.ndim != 2 or self.scores.shape[1] != 2:
            raise ValueError(f"scores must be [N, 2], got {self.scores.shape}")
        if self.labels.shape != (self.scores.shape[0],):
            raise ValueError("labels must align with scores")
        if self.scores.shape[0] == 0:
            raise ValueError("empty confidence batch")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("non-finite scores")


@dataclass
class LocBatch:
    """Predicted and target offsets, both [M, 4], positives only."""

    predictions: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.predictions.shape != self.targets.shape:
            raise ValueError("prediction/target shapes differ")


@dataclass
class SegBatch:
    """Segmentation predictions in [0, 1] and binary labels, same shape."""

    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.predictions.shape != self.labels.shape:
            raise ValueError("prediction/label shapes differ")
        if self.predictions.size and (self.predictions.min() < 0.0 or self.predictions.max() > 1.0):
            raise ValueError("segmentation predictions must lie in [0, 1]")


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 10.0
    n_positive: int = 1
    n_seg_pixels: int = 1

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("balancing factors must be positive")


def cross_entropy_per_sample(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample softmax cross-entropy, stabilized by max subtraction."""
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    return logsum - z[np.arange(z.shape[0]), np.asarray(labels, dtype=np.int64)]


def ohem_select(losses_per_sample: np.ndarray, labels: np.ndarray, ratio: int = 3) -> np.ndarray:
    """Online hard example mining: all positives plus the hardest negatives
    at a 1:ratio cap. With no positives the ZERO_POSITIVE_FLOOR hardest
    negatives are kept so the score branch still trains.

    Returns the selected indices, sorted ascending. Ties in the negative
    losses break toward the lower index.
    """
    losses = np.asarray(losses_per_sample, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    quota = min(ratio * len(pos), len(neg)) if len(pos) else min(ZERO_POSITIVE_FLOOR, len(neg))
    order = neg[np.argsort(-losses[neg], kind="stable")]
    return np.sort(np.concatenate([pos, order[:quota]]).astype(np.int64))


def conf_loss(batch: ConfBatch, selection: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the selected samples and its gradient wrt the
    raw scores (zero outside the selection)."""
    selection = np.asarray(selection, dtype=np.int64)
    if selection.size == 0:
        raise ValueError("empty selection")
    z = batch.scores[selection]
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    y = batch.labels[selection]
    value = float(np.mean(cross_entropy_per_sample(batch.scores[selection], y)))
    grad = np.zeros_like(batch.scores)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(selection)), y] = 1.0
    grad[selection] = (p - onehot) / len(selection)
    return value, grad


def loc_loss(batch: LocBatch) -> tuple[float, np.ndarray]:
    """Smooth-L1 summed over all offset elements (quadratic below 1,
    linear above); normalization by the positive count happens in
    :func:`total_loss`."""
    d = batch.predictions - batch.targets
    a = np.abs(d)
    value = float(np.sum(np.where(a < 1.0, 0.5 * d * d, a - 0.5)))
    grad = np.where(a < 1.0, d, np.sign(d))
    return value, grad


def dice_loss(batch: SegBatch) -> tuple[float, np.ndarray]:
    """Dice loss with batch-summed numerator/denominator and epsilon
    smoothing in both, so an exact match (including all-empty) scores 0."""
    p = batch.predictions
    y = batch.labels
    overlap = float(np.sum(y * p))
    total = float(np.sum(y) + np.sum(p))
    value = 1.0 - (2.0 * overlap + DICE_EPS) / (total + DICE_EPS)
    grad = -(2.0 * y * (total + DICE_EPS) - (2.0 * overlap + DICE_EPS)) / (total + DICE_EPS) ** 2
    return float(value), grad


@dataclass
class TotalLoss:
    total: float
    conf_term: float
    loc_term: float
    seg_term: float
    zero_positive: bool = False


def total_loss(conf: float, loc: float, seg: float, weights: LossWeights) -> TotalLoss:
    """Weighted combination of the three terms. A zero positive count
    defines the detection terms as 0 and raises a warning flag."""
    if weights.n_seg_pixels <= 0:
        raise ValueError("n_seg_pixels must be positive")
    if weights.n_positive <= 0:
        conf_term = loc_term = 0.0
        zero_positive = True
    else:
        conf_term = conf / weights.n_positive
        loc_term = weights.lambda1 * loc / weights.n_positive
        zero_positive = False
    seg_term = weights.lambda2 * seg / weights.n_seg_pixels
    return TotalLoss(conf_term + loc_term + seg_term, conf_term, loc_term, seg_term, zero_positive)
