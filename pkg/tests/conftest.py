"""Shared fixtures: backend switching and random-bag helpers."""
import numpy as np
import pytest

from mimla import backend
from mimla.bags import Bag, Dataset, LabelSet
from mimla.model import softmax_rows


@pytest.fixture(params=backend.available())
def each_backend(request):
    """Run the test once per usable kernel backend, restoring afterwards."""
    previous = backend.active()
    backend.select(request.param)
    yield request.param
    backend.select(backend.name_of(previous))


def random_bag_priors(rng, num_classes=None, card=None, size=None):
    """A random (priors, label_set) pair that a bag could legally carry."""
    if num_classes is None:
        num_classes = int(rng.integers(2, 7))
    if card is None:
        card = int(rng.integers(1, min(3, num_classes) + 1))
    if size is None:
        size = int(rng.integers(card, 8))
    priors = softmax_rows(1.5 * rng.standard_normal((size, num_classes)))
    classes = np.sort(rng.choice(num_classes, size=card, replace=False))
    return priors, LabelSet.from_classes(classes)


def tiny_dataset(rng, num_bags=12, num_classes=3, dim=4,
                 max_card=2, max_size=5, with_truth=True):
    """A small random dataset that satisfies every structural rule."""
    bags = []
    for b in range(num_bags):
        card = int(rng.integers(1, max_card + 1))
        classes = np.sort(rng.choice(num_classes, size=card, replace=False))
        n = int(rng.integers(card, max_size + 1))
        labels = np.concatenate([classes, rng.choice(classes, size=n - card)])
        rng.shuffle(labels)
        bags.append(Bag(
            id=f"b{b:03d}",
            features=rng.standard_normal((n, dim)),
            label=LabelSet.from_classes(classes),
            true_labels=labels if with_truth else None,
        ))
    return Dataset(num_classes, dim, bags, name="tiny")
