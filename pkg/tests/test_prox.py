"""Proximal operators against independent brute-force oracles."""
import numpy as np
import pytest

from conftest import oracle_logistic_r, oracle_prox
from parafit.prox import (
    classification_r_update,
    group_soft_threshold,
    logistic_derivs,
    logistic_r_newton,
    prox_loss_scalar,
    prox_regularizer,
    regression_r_update,
    ridge_prox,
    soft_threshold,
)
from parafit.types import ProblemSpec, UnsupportedFeature

LOSS_GRID = [
    ("least_squares", {}),
    ("quantile", {"tau": 0.1}),
    ("quantile", {"tau": 0.5}),
    ("quantile", {"tau": 0.9}),
    ("huber", {"delta": 0.5}),
    ("huber", {"delta": 1.345}),
    ("svr", {"epsilon": 0.0}),
    ("svr", {"epsilon": 0.1}),
    ("svr", {"epsilon": 0.5}),
    ("hinge", {}),
    ("squared_hinge", {}),
]


class TestSoftThreshold:
    def test_hand_values(self):
        np.testing.assert_allclose(
            soft_threshold([3.0, -3.0, 0.5, -0.5], 1.0),
            [2.0, -2.0, 0.0, 0.0],
        )

    def test_vector_threshold(self):
        np.testing.assert_allclose(
            soft_threshold([3.0, 3.0], [1.0, 0.0]), [2.0, 3.0]
        )

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold([1.0], -0.1)

    def test_shrinkage_never_flips_sign(self, rng):
        a = rng.standard_normal(100) * 5
        out = soft_threshold(a, 0.7)
        assert np.all(out * a >= 0)
        assert np.all(np.abs(out) <= np.abs(a))


class TestGroupSoftThreshold:
    def test_block_zeroing(self):
        a = np.array([3.0, 4.0, 0.1, 0.1])
        out = group_soft_threshold(a, 1.0, ([0, 1], [2, 3]))
        # first block norm 5 -> scaled by 4/5; second block norm < 1 -> zero
        np.testing.assert_allclose(out, [2.4, 3.2, 0.0, 0.0])

    def test_incomplete_cover_rejected(self):
        with pytest.raises(ValueError):
            group_soft_threshold(np.ones(3), 0.5, ([0, 1],))

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            group_soft_threshold(np.ones(3), 0.5, ([0, 1], [1, 2]))

    def test_matches_scalar_soft_threshold_for_singletons(self, rng):
        a = rng.standard_normal(6)
        groups = tuple([j] for j in range(6))
        np.testing.assert_allclose(
            group_soft_threshold(a, 0.4, groups), soft_threshold(a, 0.4)
        )


class TestRidgeProx:
    def test_formula(self):
        # argmin lam c^2 + (gamma/2)(c-a)^2 -> gamma a / (2 lam + gamma)
        assert ridge_prox(3.0, 1.0, 4.0) == pytest.approx(2.0)

    def test_optimality(self, rng):
        a, lam, gamma = 1.7, 0.3, 2.5
        c = float(ridge_prox(a, lam, gamma))
        # stationarity: 2 lam c + gamma (c - a) = 0
        assert 2 * lam * c + gamma * (c - a) == pytest.approx(0.0, abs=1e-12)


class TestProxRegularizer:
    def test_l1_uses_lambda_over_gamma(self):
        spec = ProblemSpec(loss="least_squares", regularizer="l1", lam=2.0)
        np.testing.assert_allclose(
            prox_regularizer(spec, [3.0, -0.5], 4.0),
            soft_threshold([3.0, -0.5], 0.5),
        )

    def test_intercept_passes_through(self):
        spec = ProblemSpec(loss="least_squares", regularizer="l1", lam=10.0,
                           intercept=True)
        out = prox_regularizer(spec, [0.3, 0.3], 1.0)
        assert out[0] == pytest.approx(0.3)
        assert out[1] == 0.0

    def test_gamma_must_be_positive(self):
        spec = ProblemSpec(loss="least_squares")
        with pytest.raises(ValueError):
            prox_regularizer(spec, [1.0], 0.0)


class TestScalarProx:
    @pytest.mark.parametrize("loss,params", LOSS_GRID)
    def test_against_oracle(self, loss, params, rng):
        for _ in range(60):
            a = float(rng.uniform(-10, 10))
            mu = float(rng.uniform(0.1, 10))
            got = prox_loss_scalar(loss, a, mu, **params)
            want = oracle_prox(loss, a, mu, **params)
            assert got == pytest.approx(want, abs=1e-4), (loss, a, mu)

    @pytest.mark.parametrize("loss,params", LOSS_GRID)
    def test_kink_neighborhoods(self, loss, params):
        # breakpoints of every piecewise form, approached from both sides
        for mu in (0.1, 1.0, 3.0):
            pts = [0.0, 1.0 / mu, -1.0 / mu]
            tau = params.get("tau", 0.5)
            delta = params.get("delta", 1.345)
            eps = params.get("epsilon", 0.1)
            pts += [tau / mu, -(1 - tau) / mu, delta * (1 + mu) / mu,
                    -delta * (1 + mu) / mu, eps, -eps, eps + 1 / mu,
                    -(eps + 1 / mu)]
            for p in pts:
                for a in (p - 1e-9, p, p + 1e-9):
                    got = prox_loss_scalar(loss, a, mu, **params)
                    want = oracle_prox(loss, a, mu, **params)
                    assert got == pytest.approx(want, abs=1e-4)

    def test_logistic_rejected(self):
        with pytest.raises(UnsupportedFeature):
            prox_loss_scalar("logistic", 1.0, 1.0)

    def test_nonpositive_mu_rejected(self):
        with pytest.raises(ValueError):
            prox_loss_scalar("least_squares", 1.0, 0.0)

    def test_nonexpansive(self, rng):
        # prox of a convex function is 1-Lipschitz in the anchor
        for loss, params in LOSS_GRID:
            a1, a2 = rng.uniform(-5, 5, size=2)
            mu = 0.7
            d = abs(prox_loss_scalar(loss, a1, mu, **params)
                    - prox_loss_scalar(loss, a2, mu, **params))
            assert d <= abs(a1 - a2) + 1e-12


class TestResidualUpdates:
    def test_regression_relation(self, rng):
        # r = b - prox(b - q + u/mu) for each regression loss
        for loss in ("least_squares", "quantile", "huber", "svr"):
            b, q, u, mu = 1.3, 0.4, -0.2, 0.5
            got = regression_r_update(loss, b, q, u, mu)
            want = b - oracle_prox(loss, b - q + u / mu, mu)
            assert got == pytest.approx(want, abs=1e-4)

    def test_regression_least_squares_hand_value(self):
        # b=2, q=0, u=0, mu=1: prox anchor 2 -> c=1, r=1
        assert regression_r_update("least_squares", 2.0, 0.0, 0.0, 1.0) == \
            pytest.approx(1.0)

    def test_classification_relation(self):
        for loss in ("hinge", "squared_hinge"):
            for b in (-1.0, 1.0):
                q, u, mu = 0.7, -0.1, 0.8
                got = classification_r_update(loss, b, q, u, mu)
                anchor = 1.0 - b * q + b * u / mu
                want = b - b * oracle_prox(loss, anchor, mu)
                assert got == pytest.approx(want, abs=1e-4)

    def test_classification_squared_hinge_hand_value(self):
        # b=-1, q=-3, mu=1: anchor = 1 - 3 = -2 <= 0 -> c=-2, r = -1 + 2*(-1)...
        # r = b - b*c = -1 - (-1)(-2) = -3
        assert classification_r_update("squared_hinge", -1.0, -3.0, 0.0, 1.0) \
            == pytest.approx(-3.0)

    def test_classification_requires_pm_one(self):
        with pytest.raises(ValueError):
            classification_r_update("hinge", 0.5, 0.0, 0.0, 1.0)


class TestLogisticNewton:
    def test_derivs(self):
        d1, d2 = logistic_derivs(0.0, 1.0)
        assert d1 == pytest.approx(-0.5)
        assert d2 == pytest.approx(0.25)

    def test_derivs_extreme_margin_stable(self):
        d1, d2 = logistic_derivs(1000.0, 1.0)
        assert d1 == pytest.approx(0.0, abs=1e-300)
        assert np.isfinite(d2)
        d1, d2 = logistic_derivs(-1000.0, 1.0)
        assert d1 == pytest.approx(-1.0)

    def test_stationarity_residual(self, rng):
        from scipy.special import expit
        for _ in range(100):
            b = float(rng.choice([-1.0, 1.0]))
            q = float(rng.uniform(-10, 10))
            u = float(rng.uniform(-5, 5))
            mu = float(rng.uniform(0.1, 10))
            r = logistic_r_newton(b, q, u, mu, tol=1e-10)
            resid = -b * expit(-r * b) + mu * (r - (q - u / mu))
            assert abs(resid) <= 1e-10

    def test_matches_bisection_oracle(self, rng):
        for _ in range(100):
            b = float(rng.choice([-1.0, 1.0]))
            anchor = float(rng.uniform(-10, 10))
            mu = float(rng.uniform(0.1, 10))
            r = logistic_r_newton(b, anchor, 0.0, mu)
            want = oracle_logistic_r(b, anchor, mu)
            assert r == pytest.approx(want, abs=1e-8)

    def test_warm_start_same_answer(self):
        cold = logistic_r_newton(1.0, 2.0, 0.5, 0.7)
        warm = logistic_r_newton(1.0, 2.0, 0.5, 0.7, warm=cold + 3.0)
        assert warm == pytest.approx(cold, abs=1e-9)

    def test_forced_bisection_path(self):
        # max_newton=0 falls straight through to bisection
        r = logistic_r_newton(1.0, 1.5, 0.0, 2.0, max_newton=0)
        want = oracle_logistic_r(1.0, 1.5, 2.0)
        assert r == pytest.approx(want, abs=1e-8)

    def test_bad_label_rejected(self):
        with pytest.raises(ValueError):
            logistic_r_newton(0.0, 1.0, 0.0, 1.0)
