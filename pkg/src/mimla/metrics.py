"""Prediction modes and the evaluation suite.

Two instance-annotation modes: inductive (argmax of the raw class scores,
usable on any instance) and transductive (argmax of the exact joint with
the bag's label set, so predictions always fall inside it).  Bag-level
label prediction is the union of inductive instance predictions; bag-level
class confidence is the best instance prior for that class.

Ranking metrics rank classes per bag by descending confidence with ties
broken toward the smaller class index; every rank is 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .bags import Bag, Dataset, LabelSet
from .errors import ContractViolation
from .model import Model
from .posterior import posteriors_fast


def _argmax_smallest(rows: np.ndarray) -> np.ndarray:
    # np.argmax already resolves ties toward the first (smallest) index.
    return rows.argmax(axis=1)


def predict_inductive(model: Model, bag: Bag) -> np.ndarray:
    """Most likely class per instance from the raw scores alone."""
    return _argmax_smallest(model.scores(bag.features))


def predict_transductive(model: Model, bag: Bag) -> np.ndarray:
    """Most likely class per instance given the bag's label set.

    Maximizes the exact joint with the observed label set, so every
    prediction is a member of that set.
    """
    joint, _, _ = posteriors_fast(model.priors(bag.features), bag.label)
    return _argmax_smallest(joint.values)


def predict_bag(model: Model, bag: Bag) -> LabelSet:
    """Union of the inductive instance predictions."""
    return LabelSet.from_classes(np.unique(predict_inductive(model, bag)))


def bag_confidence(model: Model, bag: Bag) -> np.ndarray:
    """Per-class bag score: the best instance prior for each class."""
    return model.priors(bag.features).max(axis=0)


@dataclass
class Predictions:
    """Instance and bag predictions for a dataset, in bag order."""

    mode: str
    num_classes: int
    bag_ids: list[str]
    instance_labels: list[np.ndarray]
    bag_labels: list[LabelSet]
    bag_scores: np.ndarray  # (B, C) per-class confidences

    def __len__(self) -> int:
        return len(self.bag_ids)


def predict_dataset(model: Model, ds: Dataset, mode: str = "inductive",
                    ) -> Predictions:
    if mode not in ("inductive", "transductive"):
        raise ContractViolation(f"unknown prediction mode {mode!r}")
    instance_labels, bag_labels, scores = [], [], []
    for bag in ds.bags:
        if mode == "transductive":
            instance_labels.append(predict_transductive(model, bag))
        else:
            instance_labels.append(predict_inductive(model, bag))
        bag_labels.append(predict_bag(model, bag))
        scores.append(bag_confidence(model, bag))
    return Predictions(mode, ds.num_classes, [b.id for b in ds.bags],
                       instance_labels, bag_labels,
                       np.array(scores) if scores else
                       np.zeros((0, ds.num_classes)))


def ranks_from_scores(scores: np.ndarray) -> np.ndarray:
    """1-based rank of every class under descending score; ties go to the
    smaller class index first."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranks = np.empty(len(scores), dtype=np.int64)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


@dataclass
class MetricReport:
    """Bag-averaged evaluation results.

    ``instance_accuracy`` is None when no bag carries instance ground truth.
    ``ranking_skipped`` counts bags excluded from ranking-based metrics
    because their label set was empty or covered every class (no
    relevant/irrelevant pair exists there).  ``coverage`` is normalized by
    the class count unless ``raw_coverage`` was requested at evaluation.
    """

    instance_accuracy: float | None
    hamming_loss: float
    ranking_loss: float
    one_error: float
    coverage: float
    average_precision: float
    bags: int
    ranking_skipped: int
    coverage_is_raw: bool = False

    def to_dict(self) -> dict:
        return {
            "instance_accuracy": self.instance_accuracy,
            "hamming_loss": self.hamming_loss,
            "ranking_loss": self.ranking_loss,
            "one_error": self.one_error,
            "coverage": self.coverage,
            "average_precision": self.average_precision,
            "bags": self.bags,
            "ranking_skipped": self.ranking_skipped,
            "coverage_is_raw": self.coverage_is_raw,
        }


def evaluate(predictions: Predictions, ds: Dataset,
             raw_coverage: bool = False) -> MetricReport:
    """Score predictions against a dataset's bag labels (and instance labels
    where present).  See :class:`MetricReport` for the conventions."""
    if len(predictions) != len(ds):
        raise ContractViolation("predictions cover a different bag count")
    c = ds.num_classes
    correct = 0
    labelled = 0
    hamming_total = 0.0
    rloss, one_err, cover, avg_prec = [], [], [], []
    skipped = 0
    for i, bag in enumerate(ds.bags):
        if bag.true_labels is not None:
            correct += int((predictions.instance_labels[i]
                            == bag.true_labels).sum())
            labelled += bag.size
        hamming_total += len(
            set(predictions.bag_labels[i].classes())
            ^ set(bag.label.classes())) / c

        truth = bag.label.classes()
        if not truth or len(truth) == c:
            skipped += 1
            continue
        scores = predictions.bag_scores[i]
        ranks = ranks_from_scores(scores)
        relevant = np.zeros(c, dtype=bool)
        relevant[truth] = True
        # A relevant class scoring no better than an irrelevant one is a
        # violated pair; score ties count as violations.
        violations = sum(
            1
            for t in truth
            for f in np.flatnonzero(~relevant)
            if scores[t] <= scores[f]
        )
        rloss.append(violations / (len(truth) * (c - len(truth))))
        one_err.append(0.0 if relevant[int(ranks.argmin())] else 1.0)
        worst = int(ranks[truth].max())
        cover.append(float(worst - 1) if raw_coverage else (worst - 1) / c)
        prec = [
            int((ranks[truth] <= ranks[t]).sum()) / int(ranks[t])
            for t in truth
        ]
        avg_prec.append(float(np.mean(prec)))

    def _mean(values):
        return float(np.mean(values)) if values else 0.0

    return MetricReport(
        instance_accuracy=(correct / labelled) if labelled else None,
        hamming_loss=hamming_total / len(ds) if len(ds) else 0.0,
        ranking_loss=_mean(rloss),
        one_error=_mean(one_err),
        coverage=_mean(cover),
        average_precision=_mean(avg_prec),
        bags=len(ds),
        ranking_skipped=skipped,
        coverage_is_raw=raw_coverage,
    )


@dataclass
class DummyBaseline:
    """Training-set marginals dressed up as a predictor.

    Every instance gets the modal class; every bag gets the set of classes
    present in more than half the training bags; per-class confidence is the
    fraction of training bags containing the class.
    """

    modal_class: int
    class_bag_fraction: np.ndarray  # (C,)
    frequent_set: LabelSet


def dummy_baseline(train_ds: Dataset) -> DummyBaseline:
    """Fit the no-features baseline on a training dataset.

    The modal class comes from instance ground truth when any bag has it,
    otherwise from bag-level label membership; ties take the smaller class.
    """
    c = train_ds.num_classes
    if not train_ds.bags:
        raise ContractViolation("cannot fit a baseline on an empty dataset")
    if train_ds.has_true_labels():
        counts = np.zeros(c, dtype=np.int64)
        for bag in train_ds.bags:
            if bag.true_labels is not None:
                counts += np.bincount(bag.true_labels, minlength=c)
    else:
        counts = np.zeros(c, dtype=np.int64)
        for bag in train_ds.bags:
            counts[bag.label.classes()] += 1
    modal = int(counts.argmax())
    fractions = np.zeros(c)
    for bag in train_ds.bags:
        fractions[bag.label.classes()] += 1.0
    fractions /= len(train_ds.bags)
    frequent = LabelSet.from_classes(np.flatnonzero(fractions > 0.5))
    return DummyBaseline(modal, fractions, frequent)


def dummy_predictions(baseline: DummyBaseline, ds: Dataset) -> Predictions:
    """The baseline's constant predictions shaped like a real model's."""
    return Predictions(
        mode="dummy",
        num_classes=len(baseline.class_bag_fraction),
        bag_ids=[b.id for b in ds.bags],
        instance_labels=[np.full(b.size, baseline.modal_class,
                                 dtype=np.int64) for b in ds.bags],
        bag_labels=[baseline.frequent_set for _ in ds.bags],
        bag_scores=np.tile(baseline.class_bag_fraction, (len(ds.bags), 1)),
    )


def dummy_baselines(train_ds: Dataset, test_ds: Dataset):
    """Convenience: fit on train, predict on test; returns
    ``(Predictions, DummyBaseline)``."""
    baseline = dummy_baseline(train_ds)
    return dummy_predictions(baseline, test_ds), baseline


def kfold_split(ds: Dataset, folds: int, seed: int = 0):
    """Deterministic shuffled k-fold split over bags.

    Returns a list of ``(train_indices, test_indices)`` pairs, each sorted
    ascending.  Folds partition the bags; the first ``B mod k`` folds get
    the extra bag when sizes do not divide evenly.
    """
    b = len(ds)
    if folds < 2:
        raise ContractViolation("need at least two folds")
    if folds > b:
        raise ContractViolation(f"cannot split {b} bags into {folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(b)
    base, extra = divmod(b, folds)
    splits, start = [], 0
    for f in range(folds):
        size = base + (1 if f < extra else 0)
        test = np.sort(order[start:start + size])
        mask = np.ones(b, dtype=bool)
        mask[test] = False
        splits.append((np.flatnonzero(mask), test))
        start += size
    return splits
