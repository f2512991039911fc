"""Instance-level class probabilities from an affine multinomial logit.

Weights are a (d+1, C) matrix; the final row is the bias, applied by
augmenting every feature vector with a trailing 1.  Probabilities come from
a row-wise softmax with the row maximum subtracted first, so arbitrarily
large scores stay finite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .bags import Bag
from .errors import ContractViolation

if TYPE_CHECKING:  # pragma: no cover
    from .kernelize import KernelDictionary


def zero_weights(feature_dim: int, num_classes: int) -> np.ndarray:
    """The canonical starting point for training: all scores tied at zero."""
    return np.zeros((feature_dim + 1, num_classes))


def augment(features: np.ndarray) -> np.ndarray:
    """Append the constant-1 column that carries the bias."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.hstack([features, np.ones((features.shape[0], 1))])


def class_scores(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Raw affine scores, shape (n, C)."""
    weights = np.asarray(weights, dtype=np.float64)
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != weights.shape[0] - 1:
        raise ContractViolation(
            f"features have {features.shape[1]} dims but weights expect "
            f"{weights.shape[0] - 1}"
        )
    return features @ weights[:-1] + weights[-1]


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilised by subtracting each row's maximum."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def log_softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise log probabilities via the shifted log-sum-exp."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def instance_prior(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """p(y = c | x) for one instance, shape (C,)."""
    return softmax_rows(class_scores(weights, np.atleast_2d(x)))[0]


def prior_matrix(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """p(y = c | x) for each row of ``features``, shape (n, C)."""
    return softmax_rows(class_scores(weights, features))


def bag_prior(weights: np.ndarray, bag: Bag) -> np.ndarray:
    """Prior class probabilities for every instance of a bag, shape (n, C)."""
    return prior_matrix(weights, bag.features)


@dataclass
class Model:
    """A trained annotator: weights plus whatever feature map they expect.

    ``mode`` is "linear" (weights act on raw features) or "kernel" (raw
    features are first re-expressed as similarities to the dictionary
    anchors; the weights then act on that representation).
    """

    weights: np.ndarray
    num_classes: int
    input_dim: int
    mode: str = "linear"
    dictionary: "KernelDictionary | None" = None
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.mode not in ("linear", "kernel"):
            raise ContractViolation(f"unknown model mode {self.mode!r}")
        if self.mode == "kernel" and self.dictionary is None:
            raise ContractViolation("kernel mode requires a dictionary")

    def transform(self, features: np.ndarray) -> np.ndarray:
        """Map raw instance rows into the space the weights act on."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.input_dim:
            raise ContractViolation(
                f"model expects {self.input_dim}-dim inputs, "
                f"got {features.shape[1]}"
            )
        if self.mode == "kernel":
            from .kernelize import kernel_features

            return kernel_features(features, self.dictionary)
        return features

    def scores(self, features: np.ndarray) -> np.ndarray:
        return class_scores(self.weights, self.transform(features))

    def priors(self, features: np.ndarray) -> np.ndarray:
        return softmax_rows(self.scores(features))
