import numpy as np
import pytest

from robustfl.core import RoundRecord
from robustfl.metrics import (
    clamp_loss,
    mean_offdiagonal,
    pairwise_cosine,
    summarize,
)


def test_pairwise_cosine_identical_updates():
    sim = pairwise_cosine([np.array([1.0, 2.0])] * 3)
    np.testing.assert_allclose(sim, np.ones((3, 3)))


def test_pairwise_cosine_orthogonal():
    sim = pairwise_cosine([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert sim[0, 1] == 0.0
    assert sim[1, 0] == 0.0


def test_pairwise_cosine_opposed():
    sim = pairwise_cosine([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
    assert sim[0, 1] == -1.0


def test_pairwise_cosine_zero_norm_row():
    sim = pairwise_cosine([np.zeros(2), np.array([1.0, 0.0])])
    assert sim[0, 1] == 0.0
    assert sim[0, 0] == 1.0


def test_pairwise_cosine_symmetric_unit_diag_in_range():
    rng = np.random.default_rng(0)
    for _ in range(20):
        sim = pairwise_cosine(rng.normal(size=(6, 4)))
        np.testing.assert_allclose(sim, sim.T)
        np.testing.assert_allclose(np.diag(sim), 1.0)
        assert sim.min() >= -1.0 and sim.max() <= 1.0


def test_mean_offdiagonal():
    matrix = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert mean_offdiagonal(matrix) == 0.5


def test_clamp_loss_passthrough():
    assert clamp_loss(2.3) == 2.3


def test_clamp_loss_ceiling():
    assert clamp_loss(1e9) == 1e5


def test_clamp_loss_nan_sentinel():
    assert clamp_loss(float("nan")) == 1e5


def test_clamp_loss_floor():
    assert clamp_loss(-3.0) == 0.0


def _record(round_idx, accuracy, updates=None):
    return RoundRecord(round=round_idx, update_norms=np.ones(2),
                       aggregate=np.zeros(2), test_accuracy=accuracy,
                       test_loss=0.1 if accuracy is not None else None,
                       updates=updates)


def test_summarize_single_record():
    summary = summarize([_record(0, 0.5)])
    assert summary.final_accuracy == 0.5
    assert summary.best_accuracy == 0.5
    assert summary.rounds == 1


def test_summarize_monotone():
    summary = summarize([_record(t, a) for t, a in enumerate([0.1, 0.5, 0.9])])
    assert summary.final_accuracy == 0.9
    assert summary.best_accuracy == 0.9


def test_summarize_divergence_keeps_best():
    summary = summarize([_record(0, 0.9), _record(1, 0.2)])
    assert summary.final_accuracy == 0.2
    assert summary.best_accuracy == 0.9


def test_summarize_skips_unevaluated_rounds():
    summary = summarize([_record(0, None), _record(1, 0.4), _record(2, None)])
    assert summary.final_accuracy == 0.4
    assert summary.rounds == 3


def test_summarize_empty():
    with pytest.raises(ValueError, match="empty"):
        summarize([])


def test_summarize_mean_similarity_over_captures():
    updates = {0: np.array([1.0, 0.0]), 1: np.array([1.0, 0.0])}
    summary = summarize([_record(0, 0.5, updates=updates), _record(1, 0.6)])
    assert summary.mean_similarity == pytest.approx(1.0)
    assert summarize([_record(0, 0.5)]).mean_similarity is None
