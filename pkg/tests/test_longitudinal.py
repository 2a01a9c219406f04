"""Tests for trajectories, the reference-trajectory EMA and the direction loss."""

import numpy as np
import pytest

import diffcore as dc
from errors import DataError, ShapeError, SomError
from longitudinal import (BatchTrajectoryStats, ReferenceTrajectories, direction_loss,
                          ema_update, trajectory)


def test_trajectory_single_pair():
    dz = trajectory(np.array([1.0, 2.0]), np.array([3.0, 6.0]), 2.0)
    np.testing.assert_allclose(dz.values, [1.0, 2.0])


def test_trajectory_batch_uses_row_delta_t():
    z_u = np.zeros((2, 2))
    z_v = np.array([[2.0, 2.0], [3.0, 0.0]])
    dz = trajectory(z_u, z_v, np.array([2.0, 3.0]))
    np.testing.assert_allclose(dz.values, [[1.0, 1.0], [1.0, 0.0]])


@pytest.mark.parametrize("delta_t", [0.0, -1.0])
def test_trajectory_rejects_non_positive_gap(delta_t):
    with pytest.raises(DataError):
        trajectory(np.zeros(2), np.ones(2), delta_t)


def test_batch_stats_counts_every_sample():
    dz = np.array([[1.0, 0.0], [3.0, 0.0], [0.0, 2.0]])
    stats = BatchTrajectoryStats.from_batch(dz, np.array([0, 0, 2]), n_cells=4)
    assert stats.counts.sum() == stats.batch_size == 3
    np.testing.assert_allclose(stats.mean_trajectories(), [[2.0, 0.0], [0, 0], [0.0, 2.0], [0, 0]])


def test_ema_first_iteration_copies_batch_means():
    refs = ReferenceTrajectories(1, 2, 2)
    stats = BatchTrajectoryStats.from_batch(np.array([[1.0, 1.0]]), np.array([1]), 2)
    ema_update(refs, stats, 0.99, t=0)
    np.testing.assert_allclose(refs.flat_values()[1], [1.0, 1.0])
    assert refs.flat_initialized().tolist() == [False, True]


def test_ema_blends_hit_cells_and_keeps_missed_cells():
    refs = ReferenceTrajectories(1, 2, 1, values=[[[2.0], [5.0]]], initialized=[[True, True]])
    stats = BatchTrajectoryStats.from_batch(np.array([[4.0]]), np.array([0]), 2)
    ema_update(refs, stats, 0.75, t=10)
    np.testing.assert_allclose(refs.flat_values(), [[0.75 * 2.0 + 0.25 * 4.0], [5.0]])


def test_ema_first_hit_after_start_adopts_batch_mean():
    refs = ReferenceTrajectories(1, 2, 1)
    stats = BatchTrajectoryStats.from_batch(np.array([[3.0]]), np.array([1]), 2)
    ema_update(refs, stats, 0.9, t=7)
    np.testing.assert_allclose(refs.flat_values(), [[0.0], [3.0]])
    assert refs.uninitialized_count() == 1


def test_ema_rejects_bad_alpha():
    refs = ReferenceTrajectories(1, 1, 1)
    stats = BatchTrajectoryStats.from_batch(np.ones((1, 1)), np.array([0]), 1)
    with pytest.raises(SomError):
        ema_update(refs, stats, 1.0, t=0)


def test_ema_rejects_mismatched_stats():
    refs = ReferenceTrajectories(1, 2, 2)
    stats = BatchTrajectoryStats.from_batch(np.ones((1, 3)), np.array([0]), 2)
    with pytest.raises(ShapeError):
        ema_update(refs, stats, 0.9, t=0)


def test_direction_loss_zero_when_aligned():
    refs = ReferenceTrajectories(1, 1, 2, values=[[[1.0, 0.0]]], initialized=[[True]])
    result = direction_loss(dc.Tensor([[2.0, 0.0]]), refs, np.array([0]))
    assert result.loss.item() == pytest.approx(0.0, abs=1e-12)
    assert (result.included, result.excluded) == (1, 0)


def test_direction_loss_is_two_when_opposite():
    refs = ReferenceTrajectories(1, 1, 2, values=[[[1.0, 0.0]]], initialized=[[True]])
    result = direction_loss(dc.Tensor([[-3.0, 0.0]]), refs, np.array([0]))
    assert result.loss.item() == pytest.approx(2.0)


def test_direction_loss_excludes_uninitialized_and_zero_vectors():
    refs = ReferenceTrajectories(1, 2, 2, values=[[[1.0, 0.0], [0.0, 0.0]]],
                                 initialized=[[True, False]])
    dz = dc.Tensor([[0.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    result = direction_loss(dz, refs, np.array([0, 1, 0]))
    assert (result.included, result.excluded) == (1, 2)
    assert result.loss.item() == pytest.approx(1.0)


def test_direction_loss_all_excluded_is_constant_zero():
    refs = ReferenceTrajectories(1, 1, 2)
    result = direction_loss(dc.Tensor([[1.0, 0.0]], requires_grad=True), refs, np.array([0]))
    assert result.loss.item() == 0.0
    assert not result.loss.requires_grad


def test_direction_loss_does_not_train_references(rng):
    refs = ReferenceTrajectories(1, 2, 3, values=rng.normal(size=(1, 2, 3)),
                                 initialized=[[True, True]])
    before = refs.values.copy()
    dz = dc.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    result = direction_loss(dz, refs, np.array([0, 1, 1, 0]))
    dc.backward(result.loss)
    assert np.any(dz.grad)
    np.testing.assert_array_equal(refs.values, before)


def test_direction_loss_gradient_matches_finite_differences(rng):
    refs = ReferenceTrajectories(1, 2, 3, values=rng.normal(size=(1, 2, 3)),
                                 initialized=[[True, True]])
    dz = dc.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    eps_u = np.array([0, 1, 1, 0])

    def fn():
        return direction_loss(dz, refs, eps_u).loss

    dc.backward(fn())
    analytic = dz.grad.copy()
    np.testing.assert_allclose(analytic, dc.numerical_gradient(fn, dz), rtol=1e-4, atol=1e-6)


def test_reference_flip_and_round_trip():
    refs = ReferenceTrajectories(1, 2, 1, values=[[[1.0], [2.0]]], initialized=[[True, False]])
    refs.flip(1)
    np.testing.assert_array_equal(refs.flat_values().ravel(), [2.0, 1.0])
    restored = ReferenceTrajectories.from_dict(refs.to_dict(), 1, 2, 1)
    assert restored.flat_initialized().tolist() == [False, True]
