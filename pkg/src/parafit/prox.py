"""Proximal operators for the supported regularizers and losses.

Every scalar loss prox here solves ``argmin_c L(c) + (mu/2)(c - a)^2``
exactly via the loss's closed form:

* least_squares  L(c) = c^2/2        ->  mu*a / (1 + mu)
* quantile       L(c) = c*(tau - [c<0])
                 ->  a - tau/mu if a > tau/mu; a + (1-tau)/mu if
                     a < -(1-tau)/mu; else 0
* huber          L(c) = c^2/2 for |c| <= delta, delta*|c| - delta^2/2 else
                 ->  mu*a/(1+mu) inside |a| <= delta*(1+mu)/mu,
                     a - sign(a)*delta/mu outside
* svr            L(c) = max(|c| - eps, 0)
                 ->  a in the tube |a| <= eps; sign(a)*eps for
                     eps < |a| <= eps + 1/mu; sign(a)*(|a| - 1/mu) beyond
* hinge          L(c) = max(c, 0)
                 ->  a - 1/mu if a > 1/mu; a if a < 0; else 0
* squared_hinge  L(c) = max(c, 0)^2 / 2
                 ->  a if a <= 0 else mu*a/(1+mu)

The logistic loss has no closed form and is handled by a damped Newton
iteration with a guaranteed bisection fallback (`logistic_r_newton`).
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from .types import ProblemSpec, UnsupportedFeature


def soft_threshold(a, kappa):
    """Elementwise sign(a) * max(|a| - kappa, 0); kappa scalar or vector."""
    a = np.asarray(a, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    if np.any(kappa < 0):
        raise ValueError("threshold must be nonnegative")
    return np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)


def group_soft_threshold(a, kappa, groups):
    """Blockwise shrinkage: each group scaled by max(||a_g|| - kappa_g, 0)/||a_g||."""
    a = np.asarray(a, dtype=np.float64)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), (len(groups),))
    if np.any(kappa < 0):
        raise ValueError("threshold must be nonnegative")
    seen = np.zeros(a.shape[0], dtype=bool)
    out = np.zeros_like(a)
    for kap, g in zip(kappa, groups):
        g = np.asarray(g, dtype=np.intp)
        if np.any(seen[g]):
            raise ValueError("overlapping groups")
        seen[g] = True
        norm = np.linalg.norm(a[g])
        if norm > kap:
            out[g] = a[g] * (1.0 - kap / norm)
    if not seen.all():
        raise ValueError("groups do not cover all coordinates")
    return out


def ridge_prox(a, lam, gamma):
    """Prox of lam * c^2 with quadratic weight gamma: gamma*a / (2*lam + gamma)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a = np.asarray(a, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    return gamma * a / (2.0 * lam + gamma)


def prox_regularizer(spec: ProblemSpec, a, gamma):
    """Prox of the spec's regularizer at anchor ``a`` with weight ``gamma``.

    Coordinates with zero penalty weight (the intercept column) pass through
    unchanged by construction of the weight vector.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a = np.asarray(a, dtype=np.float64)
    w = spec.lambda_weights(a.shape[0])
    if spec.regularizer == "l1":
        return soft_threshold(a, w / gamma)
    if spec.regularizer == "l2_squared":
        return ridge_prox(a, w, gamma)
    if spec.regularizer == "group_l21":
        spec.validate_groups(a.shape[0])
        return group_soft_threshold(a, w / gamma, spec.groups)
    raise UnsupportedFeature(f"regularizer {spec.regularizer!r}")


def prox_loss_scalar(loss, a, mu, tau=0.5, delta=1.345, epsilon=0.1):
    """Exact scalar minimizer of L(c) + (mu/2)(c - a)^2 for non-logistic losses."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if loss == "logistic":
        raise UnsupportedFeature(
            "logistic loss has no closed-form prox; use logistic_r_newton"
        )
    a = float(a)
    if loss == "least_squares":
        return mu * a / (1.0 + mu)
    if loss == "quantile":
        if a > tau / mu:
            return a - tau / mu
        if a < -(1.0 - tau) / mu:
            return a + (1.0 - tau) / mu
        return 0.0
    if loss == "huber":
        if abs(a) <= delta * (1.0 + mu) / mu:
            return mu * a / (1.0 + mu)
        return a - math.copysign(delta / mu, a)
    if loss == "svr":
        aa = abs(a)
        if aa <= epsilon:
            return a
        if aa <= epsilon + 1.0 / mu:
            return math.copysign(epsilon, a)
        return math.copysign(aa - 1.0 / mu, a)
    if loss == "hinge":
        if a > 1.0 / mu:
            return a - 1.0 / mu
        return a if a < 0 else 0.0
    if loss == "squared_hinge":
        return a if a <= 0 else mu * a / (1.0 + mu)
    raise UnsupportedFeature(f"unknown loss {loss!r}")


def regression_r_update(loss, b_i, q_i, u_i, mu, **params):
    """Scalar residual update r = b - prox(b - q + u/mu) for regression losses."""
    return b_i - prox_loss_scalar(loss, b_i - q_i + u_i / mu, mu, **params)


def classification_r_update(loss, b_i, q_i, u_i, mu, **params):
    """Scalar margin update r = b - b * prox(1 - b*q + b*u/mu), b in {-1, +1}."""
    if b_i not in (-1.0, 1.0, -1, 1):
        raise ValueError("classification response must be -1 or +1")
    anchor = 1.0 - b_i * q_i + b_i * u_i / mu
    return b_i - b_i * prox_loss_scalar(loss, anchor, mu, **params)


def logistic_derivs(r, b):
    """First and second derivatives of log(1 + exp(-r*b)) with respect to r*b.

    Returns (-b / (exp(rb) + 1), exp(rb) / (exp(rb) + 1)^2), computed through
    the sigmoid so large |rb| neither overflows nor loses the tail.
    """
    rb = r * b
    s = expit(-rb)  # 1 / (exp(rb) + 1)
    return -b * s, s * (1.0 - s)


def _logistic_subproblem(r, b, mu, anchor):
    return float(np.logaddexp(0.0, -r * b)) + 0.5 * mu * (r - anchor) ** 2


def logistic_r_newton(b_i, q_i, u_i, mu, tol=1e-10, max_newton=50, warm=None):
    """Solve the logistic r-subproblem to stationarity residual <= tol.

    Minimizes log(1 + exp(-r*b)) + (mu/2)(r - anchor)^2 with
    anchor = q - u/mu.  Newton steps are damped (step halved while the
    objective increases); if Newton has not met ``tol`` after ``max_newton``
    iterations, a bisection on the strictly increasing stationarity function
    finishes the job, so the residual bound holds on every return.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    b = float(b_i)
    if b not in (-1.0, 1.0):
        raise ValueError("classification response must be -1 or +1")
    anchor = q_i - u_i / mu
    r = float(warm) if warm is not None else anchor

    def grad(r):
        d1, _ = logistic_derivs(r, b)
        return d1 + mu * (r - anchor)

    for _ in range(max_newton):
        g = grad(r)
        if abs(g) <= tol:
            return r
        _, d2 = logistic_derivs(r, b)
        step = -g / (d2 + mu)
        f0 = _logistic_subproblem(r, b, mu, anchor)
        t = 1.0
        for _ in range(20):
            if _logistic_subproblem(r + t * step, b, mu, anchor) <= f0:
                break
            t *= 0.5
        r = r + t * step
    if abs(grad(r)) <= tol:
        return r
    # grad is strictly increasing and the loss derivative lies in (-1, 1),
    # so the root is bracketed by anchor +/- 1/mu
    lo, hi = anchor - 1.0 / mu, anchor + 1.0 / mu
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = grad(mid)
        if abs(g) <= tol or hi - lo < 1e-16 * max(1.0, abs(mid)):
            return mid
        if g > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
