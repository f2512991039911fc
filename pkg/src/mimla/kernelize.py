"""Similarity-space features: a data-driven RBF map over anchor instances.

The linear model stays linear; nonlinearity comes from re-expressing every
instance as its kernel similarity to a dictionary of anchor instances drawn
from the training data.  The kernel width is picked from the data itself:
the mean squared distance between instance pairs, times a user scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bags import Dataset
from .errors import ContractViolation


def rbf(x: np.ndarray, y: np.ndarray, delta: float) -> float:
    """exp(-||x - y||^2 / delta) for a single pair."""
    if delta <= 0:
        raise ContractViolation("kernel width delta must be positive")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-(diff @ diff) / delta))


def select_delta(ds: Dataset, scale: float = 1.0) -> float:
    """Kernel width: ``scale`` times the mean squared distance over all
    unordered pairs of distinct instances.

    Uses the centered-moment identity (mean pair distance equals
    ``2 * sum ||x - mean||^2 / (N - 1)``), so no pair matrix is formed.
    """
    if scale <= 0:
        raise ContractViolation("delta scale must be positive")
    x = ds.stacked_features()
    n = x.shape[0]
    if n < 2:
        raise ContractViolation("delta selection needs at least two instances")
    centered = x - x.mean(axis=0)
    spread = float((centered * centered).sum())
    delta = scale * 2.0 * spread / (n - 1)
    if delta <= 0:
        raise ContractViolation(
            "all instances coincide; kernel width would be zero"
        )
    return delta


@dataclass
class KernelDictionary:
    """Anchor instances plus the width that defines the similarity map."""

    anchors: np.ndarray        # (S, d) anchor feature rows
    delta: float
    scale: float               # the width multiplier that produced delta
    anchor_indices: np.ndarray  # rows of the source dataset's instance stack

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors,
                                                dtype=np.float64))
        self.anchor_indices = np.asarray(self.anchor_indices, dtype=np.int64)
        if self.delta <= 0:
            raise ContractViolation("kernel width delta must be positive")

    @property
    def size(self) -> int:
        return self.anchors.shape[0]


def build_dictionary(ds: Dataset, fraction: float, seed: int, *,
                     delta: float, scale: float = 1.0) -> KernelDictionary:
    """Uniformly sample ``ceil(fraction * N)`` anchor instances.

    Sampling is without replacement; the kept anchors are stored in
    ascending stack order so ``fraction == 1`` reproduces every instance in
    its original order.
    """
    if not 0 < fraction <= 1:
        raise ContractViolation("dictionary fraction must lie in (0, 1]")
    x = ds.stacked_features()
    n = x.shape[0]
    if n == 0:
        raise ContractViolation("cannot build a dictionary from no instances")
    count = math.ceil(fraction * n)
    if count == n:
        indices = np.arange(n, dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(n, size=count, replace=False))
    return KernelDictionary(x[indices], delta, scale, indices)


def kernel_features(features: np.ndarray,
                    dictionary: KernelDictionary) -> np.ndarray:
    """Map raw rows to their RBF similarities with every anchor, (n, S)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    a = dictionary.anchors
    if x.shape[1] != a.shape[1]:
        raise ContractViolation(
            f"features have {x.shape[1]} dims, anchors have {a.shape[1]}"
        )
    sq = ((x * x).sum(axis=1)[:, None] + (a * a).sum(axis=1)[None, :]
          - 2.0 * (x @ a.T))
    np.maximum(sq, 0.0, out=sq)  # tiny negatives from cancellation
    return np.exp(-sq / dictionary.delta)


def kernelize(ds: Dataset, dictionary: KernelDictionary) -> Dataset:
    """The same bags with every instance re-expressed in similarity space."""
    transformed = kernel_features(ds.stacked_features(), dictionary)
    return ds.with_features(transformed, dictionary.size)
