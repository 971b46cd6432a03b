"""
Synthetic segmentation data for training VRD networks.

Each example is a random layout of class regions (axis-aligned rectangles
and discs, later classes painted over earlier ones), observed through
one-hot class indicators plus Gaussian noise.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .exceptions import ShapeMismatchError
from .lattice import Field

logger = logging.getLogger(__name__)

MAX_SHAPES_PER_CLASS = 3


@dataclass
class LabeledExample:
    """One training example: an N_i-channel input and per-pixel labels."""
    input: Field
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != self.input.grid:
            raise ShapeMismatchError(
                f"labels shape {self.labels.shape} differs from input grid {self.input.grid}")


def _paint_shape(labels: np.ndarray, cls: int, rng: np.random.Generator):
    height, width = labels.shape
    rows, cols = np.mgrid[0:height, 0:width]
    if rng.random() < 0.5:
        r0, r1 = np.sort(rng.integers(0, height + 1, size=2))
        c0, c1 = np.sort(rng.integers(0, width + 1, size=2))
        r1, c1 = max(r1, r0 + 1), max(c1, c0 + 1)
        labels[r0:r1, c0:c1] = cls
    else:
        center_r = rng.uniform(0, height)
        center_c = rng.uniform(0, width)
        radius = rng.uniform(0.1, 0.4) * min(height, width)
        inside = (rows - center_r) ** 2 + (cols - center_c) ** 2 <= radius ** 2
        labels[inside] = cls


def gen_synthetic(seed: int, n_examples: int, height: int, width: int,
                  n_classes: int = 2, noise_sigma: float = 1.5) -> List[LabeledExample]:
    """
    Generate a reproducible synthetic segmentation dataset.

    Args:
        seed: random seed
        n_examples: number of examples
        height, width: lattice size
        n_classes: number of classes (>= 2); also the input channel count
        noise_sigma: standard deviation of the additive Gaussian noise

    Returns:
        List of LabeledExample
    """
    if n_classes < 2:
        raise ValueError(f"n_classes must be at least 2, got {n_classes}")
    rng = np.random.default_rng(seed)
    examples = []
    for _ in range(n_examples):
        labels = np.zeros((height, width), dtype=np.int64)
        for cls in range(1, n_classes):
            for _ in range(rng.integers(1, MAX_SHAPES_PER_CLASS + 1)):
                _paint_shape(labels, cls, rng)
        onehot = np.eye(n_classes)[labels]
        noisy = onehot + noise_sigma * rng.standard_normal(onehot.shape)
        examples.append(LabeledExample(input=Field(noisy, check=False), labels=labels))
    logger.info("Generated %d synthetic examples of size %dx%d", n_examples, height, width)
    return examples


def split_dataset(examples: List[LabeledExample], train_fraction: float = 0.8,
                  seed: int = 0) -> Tuple[List[LabeledExample], List[LabeledExample]]:
    """Single random split into (train, held-out)."""
    order = np.random.default_rng(seed).permutation(len(examples))
    n_train = int(round(train_fraction * len(examples)))
    return [examples[i] for i in order[:n_train]], [examples[i] for i in order[n_train:]]
