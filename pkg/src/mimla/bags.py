"""Bags, label sets, datasets, and structural validation.

A bag is a group of feature vectors (one per instance) carrying a single
bag-level label set; the generative story is that every instance has one
hidden class and the bag's label set is the union of those classes.
Instance-level ground truth, when a corpus provides it, is kept alongside
for evaluation only and never consulted during training.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractViolation

# Hard cap on the size of any bag's label set: every posterior computation
# enumerates the 2^|Y| - 1 nonempty subsets of the bag label, so this bounds
# both memory and the subset-table length.
MAX_LABELS_PER_BAG = 20


@dataclass(frozen=True, order=True)
class LabelSet:
    """An immutable set of class indices stored as a bitmask (bit c <-> class c)."""

    mask: int

    @classmethod
    def from_classes(cls, classes: Iterable[int]) -> "LabelSet":
        mask = 0
        for c in classes:
            c = int(c)
            if c < 0:
                raise ContractViolation(f"class index must be nonnegative, got {c}")
            mask |= 1 << c
        return cls(mask)

    def classes(self) -> list[int]:
        """Member class indices in ascending order."""
        out, mask, c = [], self.mask, 0
        while mask:
            if mask & 1:
                out.append(c)
            mask >>= 1
            c += 1
        return out

    def __contains__(self, c: int) -> bool:
        return c >= 0 and bool(self.mask >> c & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __iter__(self) -> Iterator[int]:
        return iter(self.classes())

    def __or__(self, other: "LabelSet") -> "LabelSet":
        return LabelSet(self.mask | other.mask)

    def remove(self, c: int) -> "LabelSet":
        return LabelSet(self.mask & ~(1 << c))

    def max_class(self) -> int:
        return self.mask.bit_length() - 1

    def __repr__(self) -> str:
        return f"LabelSet({{{', '.join(map(str, self.classes()))}}})"


@dataclass
class Bag:
    """One bag: an (n, d) feature matrix, its label set, optional true labels."""

    id: str
    features: np.ndarray
    label: LabelSet
    true_labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ContractViolation(
                f"bag {self.id!r}: features must be 2-d (instances x dims), "
                f"got shape {self.features.shape}"
            )
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
            if self.true_labels.shape != (self.features.shape[0],):
                raise ContractViolation(
                    f"bag {self.id!r}: true_labels must have one entry per instance"
                )

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass
class Dataset:
    """A list of bags with shared class count and feature dimension."""

    num_classes: int
    feature_dim: int
    bags: list[Bag] = field(default_factory=list)
    name: str = ""

    def __len__(self) -> int:
        return len(self.bags)

    def __iter__(self) -> Iterator[Bag]:
        return iter(self.bags)

    def __getitem__(self, i: int) -> Bag:
        return self.bags[i]

    @property
    def num_instances(self) -> int:
        return sum(b.size for b in self.bags)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """A new dataset holding the given bags, in the order given."""
        return Dataset(
            num_classes=self.num_classes,
            feature_dim=self.feature_dim,
            bags=[self.bags[i] for i in indices],
            name=self.name,
        )

    def stacked_features(self) -> np.ndarray:
        """All instance rows concatenated in bag order, shape (N, d)."""
        if not self.bags:
            return np.zeros((0, self.feature_dim))
        return np.concatenate([b.features for b in self.bags], axis=0)

    def has_true_labels(self) -> bool:
        return any(b.true_labels is not None for b in self.bags)

    def with_features(self, transformed: np.ndarray, feature_dim: int) -> "Dataset":
        """Copy of the dataset with instance rows replaced by new features.

        `transformed` must stack rows in the same bag order as
        :meth:`stacked_features`.
        """
        if transformed.shape[0] != self.num_instances:
            raise ContractViolation(
                "transformed feature matrix must keep one row per instance"
            )
        bags, start = [], 0
        for b in self.bags:
            stop = start + b.size
            bags.append(
                Bag(b.id, transformed[start:stop], b.label, b.true_labels)
            )
            start = stop
        return Dataset(self.num_classes, feature_dim, bags, self.name)


@dataclass(frozen=True)
class Finding:
    """One validation finding; ``fatal`` findings make a dataset unusable."""

    fatal: bool
    bag_id: str
    code: str
    message: str

    def __str__(self) -> str:
        level = "fatal" if self.fatal else "warning"
        where = f" [bag {self.bag_id}]" if self.bag_id else ""
        return f"{level}: {self.code}{where}: {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def fatal(self) -> bool:
        return any(f.fatal for f in self.findings)

    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if not f.fatal]

    def fatals(self) -> list[Finding]:
        return [f for f in self.findings if f.fatal]

    def __str__(self) -> str:
        if not self.findings:
            return "ok"
        return "\n".join(str(f) for f in self.findings)


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Check every bag against the structural rules of the data model.

    Fatal findings: class index outside [0, num_classes), empty label set,
    label set larger than MAX_LABELS_PER_BAG, more labels than instances
    (an unsatisfiable union), wrong feature width, non-finite features, or
    out-of-range true labels.  A bag whose recorded true labels do not
    union to its label set is only a warning: published corpora contain
    such bags and they remain trainable.
    """
    report = ValidationReport()
    add = report.findings.append
    if ds.num_classes <= 0:
        add(Finding(True, "", "bad-class-count", "num_classes must be positive"))
        return report
    seen_ids: set[str] = set()
    for bag in ds.bags:
        if bag.id in seen_ids:
            add(Finding(True, bag.id, "duplicate-bag-id", "bag id appears twice"))
        seen_ids.add(bag.id)
        if bag.size == 0:
            add(Finding(True, bag.id, "empty-bag", "bag has no instances"))
            continue
        if bag.features.shape[1] != ds.feature_dim:
            add(Finding(True, bag.id, "feature-dim-mismatch",
                        f"expected {ds.feature_dim} feature dims, "
                        f"got {bag.features.shape[1]}"))
        if not np.isfinite(bag.features).all():
            add(Finding(True, bag.id, "nonfinite-features",
                        "features contain NaN or infinity"))
        k = len(bag.label)
        if k == 0:
            add(Finding(True, bag.id, "empty-label-set",
                        "bag label set must be nonempty"))
            continue
        if k > MAX_LABELS_PER_BAG:
            add(Finding(True, bag.id, "label-set-too-large",
                        f"{k} labels exceeds the cap of {MAX_LABELS_PER_BAG}"))
            continue
        if bag.label.max_class() >= ds.num_classes:
            add(Finding(True, bag.id, "label-out-of-range",
                        f"label set {bag.label.classes()} exceeds "
                        f"num_classes={ds.num_classes}"))
            continue
        if bag.size < k:
            add(Finding(True, bag.id, "unsatisfiable-union",
                        f"{bag.size} instances cannot cover {k} labels: "
                        "the bag's likelihood is identically zero"))
        if bag.true_labels is not None:
            if ((bag.true_labels < 0) | (bag.true_labels >= ds.num_classes)).any():
                add(Finding(True, bag.id, "bad-true-labels",
                            "instance labels outside [0, num_classes)"))
            else:
                union = LabelSet.from_classes(np.unique(bag.true_labels))
                if union.mask != bag.label.mask:
                    add(Finding(False, bag.id, "union-mismatch",
                                f"instance labels union to {union.classes()} "
                                f"but the bag is labelled {bag.label.classes()}"))
    return report
