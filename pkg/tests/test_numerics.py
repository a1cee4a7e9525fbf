"""Unit tests for the numeric kernel: mixing, regularized gradients,
finite differences, and the three objective families."""

import numpy as np
import pytest

from fedasync.numerics import (
    LogisticObjective,
    MlpObjective,
    QuadraticObjective,
    finite_diff_grad,
    mix,
    reg_grad,
)

# one float64 ulp of relative slack for algebraic identities evaluated
# through the (1 - a) * x + a * y expression
ULP = 2.3e-16


class TestMix:
    def test_alpha_zero_returns_current(self):
        out = mix(np.array([1.0, 2.0]), np.array([3.0, 4.0]), 0.0)
        np.testing.assert_array_equal(out, [1.0, 2.0])

    def test_alpha_one_returns_incoming(self):
        out = mix(np.array([1.0, 2.0]), np.array([3.0, 4.0]), 1.0)
        np.testing.assert_array_equal(out, [3.0, 4.0])

    def test_midpoint(self):
        out = mix(np.array([1.0, 2.0]), np.array([3.0, 4.0]), 0.5)
        np.testing.assert_array_equal(out, [2.0, 3.0])

    def test_identical_inputs_fixed_point(self):
        # (1-a)*x + a*x can differ from x by one rounding step
        rng = np.random.default_rng(7)
        for _ in range(200):
            x = rng.standard_normal(12) * 100.0
            a = float(rng.uniform(0.0, 1.0))
            np.testing.assert_allclose(mix(x, x, a), x, rtol=ULP, atol=0.0)

    def test_stays_within_elementwise_envelope(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            x = rng.standard_normal(9)
            y = rng.standard_normal(9)
            a = float(rng.uniform(0.0, 1.0))
            m = mix(x, y, a)
            scale = np.maximum(np.abs(x), np.abs(y)) + 1.0
            assert np.all(m >= np.minimum(x, y) - ULP * scale)
            assert np.all(m <= np.maximum(x, y) + ULP * scale)

    def test_inputs_not_mutated(self):
        x = np.array([1.0, 2.0])
        y = np.array([3.0, 4.0])
        mix(x, y, 0.25)
        np.testing.assert_array_equal(x, [1.0, 2.0])
        np.testing.assert_array_equal(y, [3.0, 4.0])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            mix(np.zeros(2), np.zeros(3), 0.5)

    @pytest.mark.parametrize("alpha", [-0.1, 1.1, float("nan"), float("inf")])
    def test_alpha_out_of_range_rejected(self, alpha):
        with pytest.raises(ValueError, match="alpha"):
            mix(np.zeros(2), np.zeros(2), alpha)


class TestRegGrad:
    def test_rho_zero_is_plain_gradient(self):
        obj = QuadraticObjective(3)
        rng = np.random.default_rng(11)
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        x = rng.standard_normal(3)
        anchor = rng.standard_normal(3)
        np.testing.assert_array_equal(
            reg_grad(obj, x, anchor, 0.0, X, y), obj.grad(x, X, y)
        )

    def test_at_anchor_is_plain_gradient(self):
        obj = QuadraticObjective(3)
        rng = np.random.default_rng(12)
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        x = rng.standard_normal(3)
        np.testing.assert_array_equal(
            reg_grad(obj, x, x, 5.0, X, y), obj.grad(x, X, y)
        )

    def test_one_dimensional_hand_value(self):
        # single sample (a=1, b=1): data grad at x=2 is 1*(2-1) = 1;
        # pull term 2*(2-0.5) = 3; total 4
        obj = QuadraticObjective(1)
        X = np.array([[1.0]])
        y = np.array([1.0])
        out = reg_grad(obj, np.array([2.0]), np.array([0.5]), 2.0, X, y)
        np.testing.assert_allclose(out, [4.0], rtol=1e-15)

    def test_negative_rho_rejected(self):
        obj = QuadraticObjective(1)
        with pytest.raises(ValueError, match="rho"):
            reg_grad(obj, np.zeros(1), np.zeros(1), -1.0, np.ones((1, 1)), np.ones(1))

    def test_dimension_mismatch_rejected(self):
        obj = QuadraticObjective(2)
        with pytest.raises(ValueError, match="mismatch"):
            reg_grad(obj, np.zeros(2), np.zeros(3), 1.0, np.ones((1, 2)), np.ones(1))


class TestFiniteDiff:
    def test_quadratic_matches_analytic(self):
        obj = QuadraticObjective(5)
        rng = np.random.default_rng(21)
        X = rng.standard_normal((40, 5))
        y = rng.standard_normal(40)
        for _ in range(5):
            x = rng.standard_normal(5)
            ga = obj.grad(x, X, y)
            gf = finite_diff_grad(obj, x, X, y)
            assert np.linalg.norm(ga - gf) <= 1e-5 * max(1.0, np.linalg.norm(ga))

    def test_zero_objective_gives_zero_vector(self):
        obj = QuadraticObjective(4)
        X = np.zeros((6, 4))
        y = np.zeros(6)
        np.testing.assert_allclose(
            finite_diff_grad(obj, np.zeros(4), X, y), np.zeros(4), atol=1e-12
        )

    def test_mlp_matches_analytic(self):
        obj = MlpObjective(4, 6, 3)
        rng = np.random.default_rng(22)
        X = rng.standard_normal((30, 4))
        y = rng.integers(0, 3, size=30)
        x = rng.standard_normal(obj.dim) * 0.3
        ga = obj.grad(x, X, y)
        gf = finite_diff_grad(obj, x, X, y)
        assert np.linalg.norm(ga - gf) <= 1e-4 * max(1.0, np.linalg.norm(ga))

    def test_bad_eps_rejected(self):
        obj = QuadraticObjective(1)
        with pytest.raises(ValueError, match="eps"):
            finite_diff_grad(obj, np.zeros(1), np.ones((1, 1)), np.ones(1), eps=0.0)


class TestQuadraticObjective:
    def test_loss_formula(self):
        obj = QuadraticObjective(2)
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        y = np.array([1.0, 2.0, 3.0])
        w = np.array([1.0, 2.0])
        # residuals (0, 0, 0): exact fit
        assert obj.loss(w, X, y) == 0.0
        w2 = np.array([0.0, 0.0])
        # 0.5 * (1 + 4 + 9) / 3
        np.testing.assert_allclose(obj.loss(w2, X, y), 7.0 / 3.0, rtol=1e-15)

    def test_grad_is_normal_equations_residual(self):
        obj = QuadraticObjective(3)
        rng = np.random.default_rng(31)
        X = rng.standard_normal((50, 3))
        y = rng.standard_normal(50)
        w = rng.standard_normal(3)
        expected = X.T @ (X @ w - y) / 50
        np.testing.assert_array_equal(obj.grad(w, X, y), expected)

    def test_gradient_vanishes_at_least_squares_solution(self):
        rng = np.random.default_rng(32)
        X = rng.standard_normal((60, 4))
        y = rng.standard_normal(60)
        w_star, *_ = np.linalg.lstsq(X, y, rcond=None)
        obj = QuadraticObjective(4)
        assert np.linalg.norm(obj.grad(w_star, X, y)) < 1e-10

    def test_no_accuracy_metric(self):
        obj = QuadraticObjective(2)
        with pytest.raises(NotImplementedError):
            obj.accuracy(np.zeros(2), np.zeros((1, 2)), np.zeros(1))

    def test_wrong_param_length_rejected(self):
        obj = QuadraticObjective(2)
        with pytest.raises(ValueError, match="parameters"):
            obj.loss(np.zeros(3), np.zeros((1, 2)), np.zeros(1))


class TestLogisticObjective:
    def test_loss_at_origin_is_log_two(self):
        obj = LogisticObjective(3)
        rng = np.random.default_rng(41)
        X = rng.standard_normal((25, 3))
        y = rng.integers(0, 2, size=25)
        np.testing.assert_allclose(
            obj.loss(np.zeros(3), X, y), np.log(2.0), rtol=1e-15
        )

    def test_grad_matches_finite_differences(self):
        obj = LogisticObjective(4, l2=0.01)
        rng = np.random.default_rng(42)
        X = rng.standard_normal((30, 4))
        y = rng.integers(0, 2, size=30)
        for _ in range(5):
            w = rng.standard_normal(4)
            ga = obj.grad(w, X, y)
            gf = finite_diff_grad(obj, w, X, y)
            assert np.linalg.norm(ga - gf) <= 1e-5 * max(1.0, np.linalg.norm(ga))

    def test_large_margins_do_not_overflow(self):
        obj = LogisticObjective(2)
        X = np.array([[1000.0, 0.0], [-1000.0, 0.0]])
        y = np.array([1, 0])
        w = np.array([5.0, 0.0])
        assert np.isfinite(obj.loss(w, X, y))
        assert np.all(np.isfinite(obj.grad(w, X, y)))

    def test_perfect_separation_accuracy(self):
        obj = LogisticObjective(1)
        X = np.array([[2.0], [3.0], [-2.0], [-5.0]])
        y = np.array([1, 1, 0, 0])
        assert obj.accuracy(np.array([1.0]), X, y) == 1.0

    def test_l2_term_added_to_loss(self):
        rng = np.random.default_rng(43)
        X = rng.standard_normal((10, 2))
        y = rng.integers(0, 2, size=10)
        w = np.array([1.0, -2.0])
        plain = LogisticObjective(2).loss(w, X, y)
        ridged = LogisticObjective(2, l2=0.5).loss(w, X, y)
        np.testing.assert_allclose(ridged - plain, 0.25 * 5.0, rtol=1e-12)


class TestMlpObjective:
    def test_parameter_count(self):
        obj = MlpObjective(4, 6, 3)
        assert obj.dim == 4 * 6 + 6 + 6 * 3 + 3

    def test_grad_matches_finite_differences_at_several_points(self):
        obj = MlpObjective(3, 5, 4)
        rng = np.random.default_rng(51)
        X = rng.standard_normal((24, 3))
        y = rng.integers(0, 4, size=24)
        for _ in range(3):
            w = rng.standard_normal(obj.dim) * 0.4
            ga = obj.grad(w, X, y)
            gf = finite_diff_grad(obj, w, X, y)
            assert np.linalg.norm(ga - gf) <= 1e-4 * max(1.0, np.linalg.norm(ga))

    def test_loss_is_log_classes_under_symmetric_init(self):
        # zero weights give uniform class probabilities
        obj = MlpObjective(3, 4, 5)
        rng = np.random.default_rng(52)
        X = rng.standard_normal((12, 3))
        y = rng.integers(0, 5, size=12)
        np.testing.assert_allclose(
            obj.loss(np.zeros(obj.dim), X, y), np.log(5.0), rtol=1e-12
        )

    def test_extreme_logits_stay_finite(self):
        obj = MlpObjective(2, 3, 2)
        rng = np.random.default_rng(53)
        X = rng.standard_normal((8, 2)) * 50.0
        y = rng.integers(0, 2, size=8)
        w = rng.standard_normal(obj.dim) * 40.0
        assert np.isfinite(obj.loss(w, X, y))
        assert np.all(np.isfinite(obj.grad(w, X, y)))

    def test_predict_returns_class_ids(self):
        obj = MlpObjective(2, 3, 4)
        rng = np.random.default_rng(54)
        X = rng.standard_normal((10, 2))
        pred = obj.predict(rng.standard_normal(obj.dim), X)
        assert pred.shape == (10,)
        assert set(np.unique(pred)) <= {0, 1, 2, 3}

    def test_invalid_shape_rejected(self):
        with pytest.raises(ValueError):
            MlpObjective(0, 3, 2)
        with pytest.raises(ValueError):
            MlpObjective(2, 3, 1)
