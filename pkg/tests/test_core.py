import numpy as np
import pytest

from robustfl.core import (
    AttackSpec,
    RoundRecord,
    as_update,
    check_finite,
    cosine_distance,
    l2_norm,
)


def test_l2_norm_pythagorean():
    assert l2_norm([3, 4]) == 5.0


def test_l2_norm_zero_vector():
    assert l2_norm([0, 0, 0]) == 0.0


def test_l2_norm_ones():
    assert l2_norm([1, 1, 1, 1]) == 2.0


def test_l2_norm_triangle_inequality():
    rng = np.random.default_rng(7)
    for _ in range(200):
        a = rng.normal(size=8)
        b = rng.normal(size=8)
        assert l2_norm(a + b) <= l2_norm(a) + l2_norm(b) + 1e-12


def test_cosine_distance_identical():
    assert cosine_distance([1, 2], [1, 2]) == pytest.approx(0.0, abs=1e-15)


def test_cosine_distance_opposite():
    assert cosine_distance([1, 0], [-1, 0]) == pytest.approx(2.0)


def test_cosine_distance_orthogonal():
    assert cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)


def test_cosine_distance_zero_vector_is_one_to_everything():
    assert cosine_distance([0, 0], [3, 4]) == 1.0
    assert cosine_distance([3, 4], [0, 0]) == 1.0
    assert cosine_distance([0, 0], [0, 0]) == 1.0


def test_cosine_distance_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        cosine_distance([1, 2], [1, 2, 3])


def test_cosine_distance_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.normal(size=5)
        b = rng.normal(size=5)
        assert cosine_distance(a, b) == pytest.approx(cosine_distance(b, a), abs=1e-12)


def test_cosine_distance_scale_invariant_for_positive_scalars():
    rng = np.random.default_rng(13)
    for _ in range(100):
        a = rng.normal(size=4)
        b = rng.normal(size=4)
        c = float(rng.uniform(0.01, 100.0))
        assert cosine_distance(c * a, b) == pytest.approx(cosine_distance(a, b),
                                                          abs=1e-10)


def test_cosine_distance_range():
    rng = np.random.default_rng(17)
    for _ in range(200):
        d = cosine_distance(rng.normal(size=6), rng.normal(size=6))
        assert 0.0 <= d <= 2.0 + 1e-12


def test_as_update_rejects_matrices():
    with pytest.raises(ValueError, match="1-D"):
        as_update(np.zeros((2, 2)))


def test_check_finite_rejects_nan_and_inf():
    with pytest.raises(ValueError, match="NaN or Inf"):
        check_finite(np.array([1.0, np.nan]))
    with pytest.raises(ValueError, match="NaN or Inf"):
        check_finite(np.array([np.inf]))


class TestAttackSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown attack kind"):
            AttackSpec("gradient_inversion")

    def test_ipm_requires_epsilon(self):
        with pytest.raises(ValueError, match="'epsilon'"):
            AttackSpec("ipm")

    def test_parameter_for_wrong_kind_rejected(self):
        with pytest.raises(ValueError, match="does not take parameter 'epsilon'"):
            AttackSpec("sign_flip", epsilon=1.0)

    def test_defaults_fill_in(self):
        assert AttackSpec("alie").z_max == 1.0
        noise = AttackSpec("noise")
        assert noise.noise_mean == 0.1
        assert noise.noise_var == 0.1
        assert AttackSpec("adaptive_clipped").eps_margin == 1e-3

    def test_labels(self):
        assert AttackSpec("ipm", epsilon=0.5).label() == "ipm_eps0.5"
        assert AttackSpec("none").label() == "none"
        assert AttackSpec("alie", z_max=1.5).label() == "alie_z1.5"


class TestRoundRecord:
    def test_captured_updates_must_cover_all_clients(self):
        with pytest.raises(ValueError, match="cover all clients"):
            RoundRecord(round=0, update_norms=[1.0, 2.0], aggregate=[0.5],
                        updates={0: np.array([1.0])})

    def test_update_dimension_must_match_aggregate(self):
        with pytest.raises(ValueError, match="dimension"):
            RoundRecord(round=0, update_norms=[1.0], aggregate=[0.5],
                        updates={0: np.array([1.0, 2.0])})

    def test_aggregate_norm(self):
        record = RoundRecord(round=3, update_norms=[1.0], aggregate=[3.0, 4.0])
        assert record.aggregate_norm == 5.0
        assert record.test_accuracy is None
