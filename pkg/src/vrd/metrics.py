"""
Evaluation metrics for per-pixel predictions.
"""

from typing import Tuple

import numpy as np

from .exceptions import ShapeMismatchError
from .lattice import Field
from .model import softmax


def predict(scores: Field) -> np.ndarray:
    """Per-pixel argmax over score channels."""
    return np.argmax(scores.data, axis=-1)


def pixel_accuracy(scores: Field, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.shape != scores.grid:
        raise ShapeMismatchError(f"labels shape {labels.shape} differs from score grid {scores.grid}")
    return float(np.mean(predict(scores) == labels))


def max_f1_and_average_precision(scores: Field, labels: np.ndarray) -> Tuple[float, float]:
    """
    Maximum F1 and average precision for a two-class problem.

    Pixels are ranked by the softmax probability of class 1 and the
    precision/recall curve is traced over every threshold.

    Returns:
        (max F1, AP); both are 0 when there is no positive pixel
    """
    if scores.channels != 2:
        raise ShapeMismatchError(f"binary metrics need 2 score channels, got {scores.channels}")
    labels = np.asarray(labels)
    if labels.shape != scores.grid:
        raise ShapeMismatchError(f"labels shape {labels.shape} differs from score grid {scores.grid}")
    prob = softmax(scores.data)[..., 1].ravel()
    positive = labels.ravel() == 1
    n_positive = int(positive.sum())
    if n_positive == 0:
        return 0.0, 0.0

    order = np.argsort(-prob, kind="stable")
    prob, positive = prob[order], positive[order]
    # Only the last index of each run of tied scores is a valid threshold
    last = np.r_[np.nonzero(np.diff(prob))[0], prob.size - 1]
    tp = np.cumsum(positive)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_positive

    f1 = np.where(precision + recall > 0, 2 * precision * recall / np.maximum(precision + recall, 1e-300), 0.0)
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return float(np.max(f1)), ap
