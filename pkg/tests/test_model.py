"""The affine softmax scorer and the Model wrapper."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from mimla.bags import Bag, LabelSet
from mimla.errors import ContractViolation
from mimla.kernelize import KernelDictionary
from mimla.model import (Model, augment, bag_prior, class_scores,
                         instance_prior, log_softmax_rows, prior_matrix,
                         softmax_rows, zero_weights)


def test_augment_appends_a_ones_column():
    out = augment(np.array([[1.0, 2.0]]))
    assert out.shape == (1, 3)
    assert out[0, 2] == 1.0


def test_scores_are_affine():
    # weights: identity on two features, then a bias row.
    w = np.array([[2.0, 0.0], [0.0, 1.0], [10.0, -1.0]])
    s = class_scores(w, np.array([[1.0, 3.0]]))
    assert_allclose(s, [[12.0, 2.0]])


def test_log_ratio_recovers_known_probabilities():
    # Score gap of ln 3 puts exactly 75% of the mass on the first class.
    p = softmax_rows(np.array([[np.log(3.0), 0.0]]))
    assert_allclose(p, [[0.75, 0.25]], atol=1e-15)


def test_softmax_is_shift_invariant_and_normalized():
    rng = np.random.default_rng(0)
    s = rng.standard_normal((40, 5))
    assert_allclose(softmax_rows(s), softmax_rows(s + 123.0), atol=1e-12)
    assert_allclose(softmax_rows(s).sum(axis=1), 1.0, atol=1e-12)


def test_softmax_survives_huge_scores():
    p = softmax_rows(np.array([[800.0, -800.0, 0.0]]))
    assert np.isfinite(p).all()
    assert_allclose(p[0, 0], 1.0, atol=1e-12)


def test_log_softmax_matches_log_of_softmax():
    rng = np.random.default_rng(1)
    s = 5 * rng.standard_normal((30, 4))
    assert_allclose(log_softmax_rows(s), np.log(softmax_rows(s)), atol=1e-12)


def test_zero_weights_give_uniform_priors():
    w = zero_weights(3, 4)
    assert w.shape == (4, 4)
    p = prior_matrix(w, np.random.default_rng(2).standard_normal((6, 3)))
    assert_allclose(p, 0.25, atol=1e-15)


def test_instance_prior_is_one_row_of_the_matrix():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((4, 3))
    x = rng.standard_normal((5, 3))
    assert_allclose(instance_prior(w, x[2]), prior_matrix(w, x)[2])


def test_bag_prior_shape():
    w = zero_weights(2, 3)
    bag = Bag("a", np.zeros((4, 2)), LabelSet.from_classes([1]))
    assert bag_prior(w, bag).shape == (4, 3)


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ContractViolation):
        class_scores(zero_weights(3, 2), np.zeros((1, 5)))


class TestModel:
    def test_linear_transform_is_identity(self):
        m = Model(zero_weights(3, 2), 2, 3)
        x = np.arange(6.0).reshape(2, 3)
        assert_allclose(m.transform(x), x)
        assert m.priors(x).shape == (2, 2)

    def test_kernel_mode_requires_a_dictionary(self):
        with pytest.raises(ContractViolation):
            Model(zero_weights(3, 2), 2, 3, mode="kernel")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ContractViolation):
            Model(zero_weights(3, 2), 2, 3, mode="magic")

    def test_kernel_transform_maps_to_anchor_similarities(self):
        anchors = np.array([[0.0, 0.0], [1.0, 0.0]])
        d = KernelDictionary(anchors, delta=1.0, scale=1.0,
                             anchor_indices=np.array([0, 1]))
        m = Model(zero_weights(2, 2), 2, 2, mode="kernel", dictionary=d)
        out = m.transform(np.array([[0.0, 0.0]]))
        assert_allclose(out, [[1.0, np.exp(-1.0)]])

    def test_wrong_input_width_rejected(self):
        m = Model(zero_weights(3, 2), 2, 3)
        with pytest.raises(ContractViolation):
            m.scores(np.zeros((1, 4)))
