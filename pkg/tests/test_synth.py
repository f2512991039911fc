"""Synthetic data generators: determinism and the union guarantee."""
import numpy as np
import pytest

from mimla.bags import LabelSet, validate_dataset
from mimla.errors import ContractViolation
from mimla.synth import SynthSpec, generate


def test_same_spec_same_bytes():
    spec = SynthSpec(num_bags=20, seed=3)
    a, b = generate(spec), generate(spec)
    assert len(a) == len(b) == 20
    for x, y in zip(a.bags, b.bags):
        assert x.id == y.id
        assert np.array_equal(x.features, y.features)
        assert np.array_equal(x.true_labels, y.true_labels)


def test_different_seeds_differ():
    a = generate(SynthSpec(num_bags=5, seed=0))
    b = generate(SynthSpec(num_bags=5, seed=1))
    assert not np.array_equal(a.bags[0].features, b.bags[0].features)


def test_union_assumption_holds_exactly():
    ds = generate(SynthSpec(num_bags=50, seed=7))
    for bag in ds.bags:
        union = LabelSet.from_classes(np.unique(bag.true_labels))
        assert union.mask == bag.label.mask


def test_respects_declared_ranges():
    spec = SynthSpec(num_bags=80, instances_low=2, instances_high=6,
                     labels_low=1, labels_high=3, seed=11)
    ds = generate(spec)
    for bag in ds.bags:
        assert len(bag.label) <= 3
        assert bag.size <= 6
        assert bag.size >= max(2, len(bag.label))
    assert len({b.id for b in ds.bags}) == 80


def test_generated_data_validates_cleanly():
    report = validate_dataset(generate(SynthSpec(num_bags=30, seed=2)))
    assert not report.findings


def test_ring_geometry_separates_by_radius():
    spec = SynthSpec(num_classes=2, feature_dim=2, num_bags=40,
                     labels_high=2, geometry="ring", noise=0.0,
                     separation=2.0, seed=5)
    ds = generate(spec)
    for bag in ds.bags:
        radii = np.linalg.norm(bag.features[:, :2], axis=1)
        inner = radii[bag.true_labels == 0]
        outer = radii[bag.true_labels == 1]
        assert (inner <= 1.0 + 1e-9).all()
        assert (outer >= 3.0 - 1e-9).all()


def test_ring_requires_two_classes_and_two_dims():
    with pytest.raises(ContractViolation):
        SynthSpec(num_classes=3, geometry="ring")
    with pytest.raises(ContractViolation):
        SynthSpec(num_classes=2, feature_dim=1, geometry="ring",
                  labels_high=2)


def test_infeasible_specs_rejected():
    with pytest.raises(ContractViolation):
        SynthSpec(num_classes=1)
    with pytest.raises(ContractViolation):
        SynthSpec(labels_high=9, num_classes=8)
    with pytest.raises(ContractViolation):
        SynthSpec(labels_high=4, instances_high=3, instances_low=1)
    with pytest.raises(ContractViolation):
        SynthSpec(instances_low=5, instances_high=3)
    with pytest.raises(ContractViolation):
        SynthSpec(noise=-1.0)
    with pytest.raises(ContractViolation):
        SynthSpec(geometry="moons")
