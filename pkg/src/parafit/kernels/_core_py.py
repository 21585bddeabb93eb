"""Pure-numpy implementation of the per-row residual update kernels.

Used when the compiled extension is unavailable (or forced via the
``PARAFIT_KERNELS`` environment variable).  Semantics match
``parafit.kernels._core`` exactly; see that module for the closed forms.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

LS, QUANTILE, HUBER, SVR, HINGE, SQHINGE = range(6)


def _prox_vec(loss_id, a, mu, p1):
    if loss_id == LS:
        return mu * a / (1.0 + mu)
    if loss_id == QUANTILE:
        tau = p1
        return np.where(
            a > tau / mu,
            a - tau / mu,
            np.where(a < -(1.0 - tau) / mu, a + (1.0 - tau) / mu, 0.0),
        )
    if loss_id == HUBER:
        delta = p1
        return np.where(
            np.abs(a) <= delta * (1.0 + mu) / mu,
            mu * a / (1.0 + mu),
            a - np.sign(a) * delta / mu,
        )
    if loss_id == SVR:
        eps = p1
        aa = np.abs(a)
        return np.where(
            aa <= eps,
            a,
            np.where(
                aa <= eps + 1.0 / mu,
                np.sign(a) * eps,
                np.sign(a) * (aa - 1.0 / mu),
            ),
        )
    if loss_id == HINGE:
        return np.where(a > 1.0 / mu, a - 1.0 / mu, np.where(a < 0.0, a, 0.0))
    if loss_id == SQHINGE:
        return np.where(a <= 0.0, a, mu * a / (1.0 + mu))
    raise ValueError(f"unknown loss id {loss_id}")


def regression_r(loss_id, b, q, u, mu, p1=0.0):
    """Vector residual update r = b - prox(b - q + u/mu)."""
    b = np.asarray(b, dtype=np.float64)
    return b - _prox_vec(loss_id, b - q + u / mu, mu, p1)


def classification_r(loss_id, b, q, u, mu, p1=0.0):
    """Vector margin update r = b - b * prox(1 - b*q + b*u/mu)."""
    b = np.asarray(b, dtype=np.float64)
    anchor = 1.0 - b * q + b * u / mu
    return b - b * _prox_vec(loss_id, anchor, mu, p1)


def _logistic_objective(r, b, mu, anchor):
    return np.logaddexp(0.0, -r * b) + 0.5 * mu * (r - anchor) ** 2


def logistic_r(b, q, u, mu, warm, tol=1e-10, max_newton=50):
    """Damped-Newton logistic r-update with bisection fallback, elementwise."""
    b = np.asarray(b, dtype=np.float64)
    anchor = q - u / mu
    r = np.array(warm, dtype=np.float64, copy=True)
    for _ in range(max_newton):
        s = expit(-r * b)
        g = -b * s + mu * (r - anchor)
        active = np.abs(g) > tol
        if not active.any():
            return r
        step = np.where(active, -g / (s * (1.0 - s) + mu), 0.0)
        f0 = _logistic_objective(r, b, mu, anchor)
        t = np.ones_like(r)
        for _ in range(20):
            fn = _logistic_objective(r + t * step, b, mu, anchor)
            bad = active & (fn > f0)
            if not bad.any():
                break
            t[bad] *= 0.5
        r = r + t * step
    s = expit(-r * b)
    g = -b * s + mu * (r - anchor)
    for i in np.nonzero(np.abs(g) > tol)[0]:
        r[i] = _bisect(b[i], anchor[i], mu, tol)
    return r


def _bisect(b, anchor, mu, tol):
    # the loss derivative is bounded by 1, so the root lies in anchor +/- 1/mu
    lo, hi = anchor - 1.0 / mu, anchor + 1.0 / mu
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = -b * expit(-mid * b) + mu * (mid - anchor)
        if abs(g) <= tol or hi - lo < 1e-16 * max(1.0, abs(mid)):
            return mid
        if g > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
