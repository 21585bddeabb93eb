# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-row residual update kernels.

These are the hot inner loops of the solver: every iteration touches all m
rows, applying a closed-form scalar prox (or a small Newton solve for the
logistic loss) to each.  A numpy fallback with identical semantics lives in
``_core_py``.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p

cnp.import_array()

LS, QUANTILE, HUBER, SVR, HINGE, SQHINGE = range(6)


cdef inline double _prox_scalar(int loss_id, double a, double mu, double p1) nogil:
    cdef double aa
    if loss_id == 0:  # least squares
        return mu * a / (1.0 + mu)
    if loss_id == 1:  # quantile, p1 = tau
        if a > p1 / mu:
            return a - p1 / mu
        if a < -(1.0 - p1) / mu:
            return a + (1.0 - p1) / mu
        return 0.0
    if loss_id == 2:  # huber, p1 = delta
        if fabs(a) <= p1 * (1.0 + mu) / mu:
            return mu * a / (1.0 + mu)
        return a - p1 / mu if a > 0 else a + p1 / mu
    if loss_id == 3:  # svr, p1 = epsilon
        aa = fabs(a)
        if aa <= p1:
            return a
        if aa <= p1 + 1.0 / mu:
            return p1 if a > 0 else -p1
        return aa - 1.0 / mu if a > 0 else -(aa - 1.0 / mu)
    if loss_id == 4:  # hinge
        if a > 1.0 / mu:
            return a - 1.0 / mu
        return a if a < 0.0 else 0.0
    # squared hinge
    return a if a <= 0.0 else mu * a / (1.0 + mu)


cdef inline double _signeg(double rb) nogil:
    # expit(-rb) = 1 / (1 + exp(rb)), overflow-safe
    cdef double e
    if rb > 0:
        e = exp(-rb)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(rb))


cdef inline double _log1pexp_neg(double rb) nogil:
    # log(1 + exp(-rb)), overflow-safe
    if rb > 0:
        return log1p(exp(-rb))
    return -rb + log1p(exp(rb))


def regression_r(int loss_id, double[::1] b, double[::1] q, double[::1] u,
                 double mu, double p1=0.0):
    """Vector residual update r = b - prox(b - q + u/mu)."""
    cdef Py_ssize_t i, m = b.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] r = out
    with nogil:
        for i in range(m):
            r[i] = b[i] - _prox_scalar(loss_id, b[i] - q[i] + u[i] / mu, mu, p1)
    return out


def classification_r(int loss_id, double[::1] b, double[::1] q, double[::1] u,
                     double mu, double p1=0.0):
    """Vector margin update r = b - b * prox(1 - b*q + b*u/mu)."""
    cdef Py_ssize_t i, m = b.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] r = out
    with nogil:
        for i in range(m):
            r[i] = b[i] - b[i] * _prox_scalar(
                loss_id, 1.0 - b[i] * q[i] + b[i] * u[i] / mu, mu, p1)
    return out


cdef double _logistic_scalar(double b, double anchor, double mu, double warm,
                             double tol, int max_newton) nogil:
    cdef double r = warm
    cdef double s, g, d2, step, f0, fn, t, lo, hi, mid
    cdef int it, ls
    for it in range(max_newton):
        s = _signeg(r * b)
        g = -b * s + mu * (r - anchor)
        if fabs(g) <= tol:
            return r
        d2 = s * (1.0 - s)
        step = -g / (d2 + mu)
        f0 = _log1pexp_neg(r * b) + 0.5 * mu * (r - anchor) * (r - anchor)
        t = 1.0
        for ls in range(20):
            fn = _log1pexp_neg((r + t * step) * b) \
                + 0.5 * mu * (r + t * step - anchor) * (r + t * step - anchor)
            if fn <= f0:
                break
            t *= 0.5
        r = r + t * step
    g = -b * _signeg(r * b) + mu * (r - anchor)
    if fabs(g) <= tol:
        return r
    # bisection fallback: the loss derivative is bounded by 1, so the
    # stationarity root lies in anchor +/- 1/mu
    lo = anchor - 1.0 / mu
    hi = anchor + 1.0 / mu
    for it in range(200):
        mid = 0.5 * (lo + hi)
        g = -b * _signeg(mid * b) + mu * (mid - anchor)
        if fabs(g) <= tol or hi - lo < 1e-16 * max(1.0, fabs(mid)):
            return mid
        if g > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def logistic_r(double[::1] b, double[::1] q, double[::1] u, double mu,
               double[::1] warm, double tol=1e-10, int max_newton=50):
    """Damped-Newton logistic r-update with bisection fallback, elementwise."""
    cdef Py_ssize_t i, m = b.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] r = out
    with nogil:
        for i in range(m):
            r[i] = _logistic_scalar(b[i], q[i] - u[i] / mu, mu, warm[i],
                                    tol, max_newton)
    return out
