"""Synthetic bag generators with known instance ground truth.

Two geometries: well-separated gaussian clusters (one per class, means on a
sphere of radius ``separation``), and a two-class disc-vs-ring layout that
no linear boundary can cut, used to exercise the kernel feature map.  Bags
draw a label set first and always contain at least one instance of each
drawn class, so the union assumption holds exactly by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bags import Bag, Dataset, LabelSet
from .errors import ContractViolation


@dataclass
class SynthSpec:
    """Shape and difficulty of a generated dataset."""

    num_classes: int = 8
    feature_dim: int = 10
    num_bags: int = 300
    instances_low: int = 3
    instances_high: int = 8
    labels_low: int = 1
    labels_high: int = 3
    separation: float = 4.0
    noise: float = 1.0
    geometry: str = "clusters"
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.num_classes < 2:
            raise ContractViolation("need at least two classes")
        if self.num_bags < 1:
            raise ContractViolation("need at least one bag")
        if not 1 <= self.instances_low <= self.instances_high:
            raise ContractViolation("bad instance count range")
        if not 1 <= self.labels_low <= self.labels_high:
            raise ContractViolation("bad label count range")
        if self.labels_high > self.num_classes:
            raise ContractViolation("labels_high exceeds the class count")
        if self.labels_high > self.instances_high:
            raise ContractViolation(
                "labels_high exceeds instances_high: such bags could never "
                "cover their label set"
            )
        if self.geometry not in ("clusters", "ring"):
            raise ContractViolation(f"unknown geometry {self.geometry!r}")
        if self.geometry == "ring":
            if self.num_classes != 2:
                raise ContractViolation("ring geometry is two-class only")
            if self.feature_dim < 2:
                raise ContractViolation("ring geometry needs >= 2 dims")
        if self.noise < 0 or self.separation < 0:
            raise ContractViolation("noise and separation must be >= 0")


def generate(spec: SynthSpec) -> Dataset:
    """Draw a dataset; identical specs (same seed included) give identical
    datasets."""
    rng = np.random.default_rng(spec.seed)
    if spec.geometry == "clusters":
        directions = rng.standard_normal((spec.num_classes, spec.feature_dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means = spec.separation * directions

        def draw(labels):
            return means[labels] + spec.noise * rng.standard_normal(
                (len(labels), spec.feature_dim))
    else:
        def draw(labels):
            n = len(labels)
            angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
            radius = np.where(
                np.asarray(labels) == 0,
                rng.uniform(0.0, 1.0, size=n),
                rng.uniform(1.0 + spec.separation, 2.0 + spec.separation,
                            size=n),
            )
            points = np.zeros((n, spec.feature_dim))
            points[:, 0] = radius * np.cos(angle)
            points[:, 1] = radius * np.sin(angle)
            return points + spec.noise * rng.standard_normal(
                (n, spec.feature_dim))

    bags = []
    for b in range(spec.num_bags):
        k = int(rng.integers(spec.labels_low, spec.labels_high + 1))
        classes = np.sort(rng.choice(spec.num_classes, size=k, replace=False))
        n = int(rng.integers(max(spec.instances_low, k),
                             spec.instances_high + 1))
        labels = np.concatenate([classes,
                                 rng.choice(classes, size=n - k)])
        rng.shuffle(labels)
        bags.append(Bag(
            id=f"bag{b:05d}",
            features=draw(labels),
            label=LabelSet.from_classes(classes),
            true_labels=labels,
        ))
    return Dataset(spec.num_classes, spec.feature_dim, bags,
                   spec.name or f"synth-{spec.geometry}")
