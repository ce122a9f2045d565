import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from classwise_mtl._validation import NonFiniteError
from classwise_mtl.losses import (PerClassLoss, cross_entropy_per_point, l1_per_point,
                                  partition_by_class, total_loss, weighted_aux_loss)


def naive_ce(logits, labels):
    out = []
    for row, y in zip(logits.tolist(), labels.tolist()):
        denom = sum(math.exp(v) for v in row)
        out.append(-math.log(math.exp(row[y]) / denom))
    return np.array(out)


def test_uniform_logits_give_log_k():
    d = cross_entropy_per_point(np.zeros((3, 4)), [0, 2, 3])
    np.testing.assert_allclose(d, np.log(4.0), rtol=1e-15)


def test_saturated_true_logit_gives_zero_loss():
    logits = np.zeros((2, 4))
    logits[[0, 1], [1, 3]] = 50.0
    assert np.all(cross_entropy_per_point(logits, [1, 3]) < 1e-20)


def test_cross_entropy_matches_naive_softmax():
    rng = np.random.default_rng(0)
    logits = rng.normal(scale=3.0, size=(200, 5))
    labels = rng.integers(0, 5, size=200)
    np.testing.assert_allclose(cross_entropy_per_point(logits, labels), naive_ce(logits, labels),
                               rtol=0, atol=1e-12)


def test_cross_entropy_rejects_out_of_range_label():
    with pytest.raises(ValueError, match="outside"):
        cross_entropy_per_point(np.zeros((2, 3)), [0, 3])


def test_l1_examples():
    x = np.arange(6.0).reshape(3, 2)
    assert not l1_per_point(x, x).any()
    assert l1_per_point([[1.0, -1.0]], [[0.0, 0.0]])[0] == 1.0
    with pytest.raises(ValueError, match="shape"):
        l1_per_point(np.zeros((2, 2)), np.zeros((2, 3)))


def test_l1_matches_naive_loop():
    rng = np.random.default_rng(1)
    pred, target = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    naive = [sum(abs(p - t) for p, t in zip(pr, tr)) / 3 for pr, tr in zip(pred.tolist(), target.tolist())]
    np.testing.assert_array_equal(l1_per_point(pred, target), naive)


def test_partition_single_class_and_absent_flags():
    pc = partition_by_class([1.0, 2.0, 6.0], [0, 0, 0], 3)
    assert pc.values[0] == 3.0
    assert list(pc.present) == [True, False, False]
    assert np.isnan(pc.values[1:]).all()
    assert pc.as_dict() == {0: 3.0}


def test_partition_hand_example():
    pc = partition_by_class([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], 2)
    assert pc.as_dict() == {0: 1.5, 1: 3.5}
    assert list(pc.counts) == [2, 2]


def test_partition_batch_normalization_divides_by_batch():
    pc = partition_by_class([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], 2, normalization="batch")
    assert pc.as_dict() == {0: 0.75, 1: 1.75}


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 60), elements=st.floats(0, 100)), st.integers(2, 6), st.data())
def test_partition_identity(distances, k, data):
    labels = np.array(data.draw(st.lists(st.integers(0, k - 1), min_size=distances.size,
                                         max_size=distances.size)))
    pc = partition_by_class(distances, labels, k)
    recombined = np.nansum(pc.counts * pc.values)
    assert recombined == pytest.approx(distances.sum(), rel=1e-12, abs=1e-12)
    assert np.nansum(pc.counts * pc.values) / distances.size == pytest.approx(distances.mean(), rel=1e-12, abs=1e-12)


def test_weighted_aux_loss_examples():
    pc = PerClassLoss.from_values({0: 1.5, 1: 3.5}, 3)
    assert weighted_aux_loss(pc, np.ones(3)) == 5.0
    assert weighted_aux_loss(pc, np.zeros(3)) == 0.0
    assert weighted_aux_loss(pc, {0: 2.0, 1: 0.5}) == 4.75


def test_weighted_aux_loss_requires_weight_for_present_class():
    pc = PerClassLoss.from_values({0: 1.5, 2: 3.5}, 3)
    with pytest.raises(KeyError, match="class 2"):
        weighted_aux_loss(pc, {0: 1.0, 1: 1.0})
    assert weighted_aux_loss(pc, {0: 1.0, 2: 1.0}) == 5.0


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(0.01, 10)), arrays(np.float64, 4, elements=st.floats(0, 5)),
       st.integers(0, 3), st.floats(1e-3, 5))
def test_weighted_aux_loss_strictly_increases_in_each_weight(values, weights, c, bump):
    pc = PerClassLoss.from_values(dict(enumerate(values)), 4)
    raised = weights.copy()
    raised[c] += bump
    assert weighted_aux_loss(pc, raised) > weighted_aux_loss(pc, weights)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (8, 3), elements=st.floats(-30, 30)), arrays(np.float64, (8, 3), elements=st.floats(-30, 30)))
def test_losses_are_nonnegative(a, b):
    labels = np.arange(8) % 3
    assert np.all(cross_entropy_per_point(a, labels) >= 0)
    assert np.all(l1_per_point(a, b) >= 0)


def test_total_loss():
    assert total_loss(0.0, 0.0) == 0.0
    assert total_loss(1.5, 2.5) == 4.0
    with pytest.raises(NonFiniteError):
        total_loss(np.inf, 1.0)
    with pytest.raises(NonFiniteError):
        total_loss(1.0, np.nan)


def test_total_loss_with_unit_weights_equals_unit_task_weighted_sum():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 4, size=50)
    aux_d, main_d = rng.uniform(0, 2, 50), rng.uniform(0, 2, 50)
    pc = partition_by_class(aux_d, labels, 4)
    aux_task = sum(pc.values[c] for c in range(4) if pc.present[c])
    w_t1, w_t2 = 1.0, 1.0
    baseline = w_t1 * main_d.mean() + w_t2 * aux_task
    assert total_loss(weighted_aux_loss(pc, np.ones(4)), main_d.mean()) == pytest.approx(baseline, rel=1e-15)
