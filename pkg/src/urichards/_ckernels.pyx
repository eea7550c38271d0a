# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the incomplete beta function and the bounded transform.

The transform is ``u(S) = B(S**c, 1/c, 1 - b) / c``. Everything here works on
contiguous float64 arrays and mirrors :mod:`urichards._pykernels` exactly.
"""
import numpy as np

from libc.math cimport exp, log, expm1, lgamma, fabs, isfinite, nextafter

cdef double FPMIN = 1e-300
cdef double CF_EPS = 1e-16
cdef int CF_MAXIT = 1000


cdef double _betacf(double a, double b, double x) noexcept nogil:
    # modified Lentz evaluation of the incomplete beta continued fraction
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < CF_EPS:
            break
    return h


cdef double _ibeta(double w, double wc, double p, double q, double beta_pq) noexcept nogil:
    # unregularised B(w; p, q); wc = 1 - w supplied by the caller for accuracy near 1
    cdef double front
    if w <= 0.0:
        return 0.0
    if wc <= 0.0:
        return beta_pq
    front = exp(p * log(w) + q * log(wc))
    if w < (p + 1.0) / (p + q + 2.0):
        return front * _betacf(p, q, w) / p
    return beta_pq - front * _betacf(q, p, wc) / q


cdef inline double _u_of_s(double s, double b, double c, double beta_pq) noexcept nogil:
    cdef double ls, w, wc
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return beta_pq / c
    ls = c * log(s)
    w = exp(ls)
    wc = -expm1(ls)
    return _ibeta(w, wc, 1.0 / c, 1.0 - b, beta_pq) / c


cdef inline double _dsdu(double s, double b, double c) noexcept nogil:
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0 if b > 0.0 else 1.0
    return exp(b * log(-expm1(c * log(s))))


def complete_beta(double p, double q):
    return exp(lgamma(p) + lgamma(q) - lgamma(p + q))


def incomplete_beta(w, double p, double q):
    """Unregularised ``B(w; p, q)`` evaluated elementwise."""
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64).ravel()
    cdef Py_ssize_t n = wv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double beta_pq = exp(lgamma(p) + lgamma(q) - lgamma(p + q))
    with nogil:
        for i in range(n):
            ov[i] = _ibeta(wv[i], 1.0 - wv[i], p, q, beta_pq)
    return out


def u_from_s(S, double b, double c):
    """``u(S)`` for exponents ``(b, c)``; ``S`` must already lie in [0, 1]."""
    cdef double[::1] sv = np.ascontiguousarray(S, dtype=np.float64).ravel()
    cdef Py_ssize_t n = sv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double beta_pq = exp(lgamma(1.0 / c) + lgamma(1.0 - b) - lgamma(1.0 / c + 1.0 - b))
    with nogil:
        for i in range(n):
            ov[i] = _u_of_s(sv[i], b, c, beta_pq)
    return out


def dsdu_from_s(S, double b, double c):
    cdef double[::1] sv = np.ascontiguousarray(S, dtype=np.float64).ravel()
    cdef Py_ssize_t n = sv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _dsdu(sv[i], b, c)
    return out


def s_from_u(u, double b, double c, grid_s, grid_u, double tol, guess=None):
    """Invert ``u(S)`` by bracketed Newton with bisection fallback.

    ``u`` must already lie in ``[0, u_max]``. ``grid_s``/``grid_u`` is a
    strictly increasing sample of the transform used for the initial bracket.
    Returns ``(S, max_iterations_used)``.
    """
    cdef double[::1] uv = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef double[::1] gs = np.ascontiguousarray(grid_s, dtype=np.float64)
    cdef double[::1] gu = np.ascontiguousarray(grid_u, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], i, k, lo_k, hi_k, mid_k
    cdef Py_ssize_t ng = gs.shape[0]
    cdef bint has_guess = guess is not None
    cdef double[::1] gv
    if has_guess:
        gv = np.ascontiguousarray(guess, dtype=np.float64).ravel()
    else:
        gv = np.empty(1, dtype=np.float64)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double beta_pq = exp(lgamma(1.0 / c) + lgamma(1.0 - b) - lgamma(1.0 / c + 1.0 - b))
    cdef double umax = beta_pq / c
    cdef double target, lo, hi, s, f, step, dxold, dx, snew, t
    cdef int it, worst = 0
    with nogil:
        for i in range(n):
            target = uv[i]
            if target <= 0.0:
                ov[i] = 0.0
                continue
            if target >= umax:
                ov[i] = 1.0
                continue
            # bracket from the monotone sample grid
            lo_k = 0
            hi_k = ng - 1
            while hi_k - lo_k > 1:
                mid_k = (lo_k + hi_k) // 2
                if gu[mid_k] <= target:
                    lo_k = mid_k
                else:
                    hi_k = mid_k
            lo = gs[lo_k]
            hi = gs[hi_k]
            t = (target - gu[lo_k]) / (gu[hi_k] - gu[lo_k])
            s = lo + t * (hi - lo)
            if has_guess and gv[i] > lo and gv[i] < hi:
                s = gv[i]
            dxold = hi - lo
            dx = dxold
            it = 0
            while it < 200:
                it += 1
                f = _u_of_s(s, b, c, beta_pq) - target
                if fabs(f) <= tol:
                    break
                if f < 0.0:
                    lo = s
                else:
                    hi = s
                if hi - lo <= 4.0 * (nextafter(hi, 2.0) - hi):
                    break
                step = f * _dsdu(s, b, c)
                snew = s - step
                if (not isfinite(snew)) or snew <= lo or snew >= hi or fabs(2.0 * step) > fabs(dxold):
                    dxold = dx
                    dx = 0.5 * (hi - lo)
                    s = lo + dx
                else:
                    dxold = dx
                    dx = step
                    s = snew
            if it > worst:
                worst = it
            ov[i] = s
    return out, worst
