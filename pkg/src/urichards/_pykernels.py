"""Pure numpy fallback for :mod:`urichards._ckernels`.

Same algorithms and signatures, vectorised over the input arrays instead of
compiled loops. Used when the extension is not built or when
``URICHARDS_PURE_PYTHON=1`` is set.
"""
import math

import numpy as np

FPMIN = 1e-300
CF_EPS = 1e-16
CF_MAXIT = 1000


def _betacf(a, b, x):
    a = np.broadcast_to(a, x.shape).astype(float)
    b = np.broadcast_to(b, x.shape).astype(float)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < FPMIN, FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for m in range(1, CF_MAXIT + 1):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        xa, aa_, ba, qa, qp, qm = x[idx], a[idx], b[idx], qab[idx], qap[idx], qam[idx]
        ca, da, ha = c[idx], d[idx], h[idx]
        m2 = 2 * m
        aa = m * (ba - m) * xa / ((qm + m2) * (aa_ + m2))
        da = 1.0 + aa * da
        da = np.where(np.abs(da) < FPMIN, FPMIN, da)
        ca = 1.0 + aa / ca
        ca = np.where(np.abs(ca) < FPMIN, FPMIN, ca)
        da = 1.0 / da
        ha = ha * da * ca
        aa = -(aa_ + m) * (qa + m) * xa / ((aa_ + m2) * (qp + m2))
        da = 1.0 + aa * da
        da = np.where(np.abs(da) < FPMIN, FPMIN, da)
        ca = 1.0 + aa / ca
        ca = np.where(np.abs(ca) < FPMIN, FPMIN, ca)
        da = 1.0 / da
        delta = da * ca
        ha = ha * delta
        c[idx], d[idx], h[idx] = ca, da, ha
        active[idx] = np.abs(delta - 1.0) >= CF_EPS
    return h


def _ibeta(w, wc, p, q, beta_pq):
    w = np.asarray(w, dtype=float)
    wc = np.asarray(wc, dtype=float)
    out = np.empty_like(w)
    zero = w <= 0.0
    one = (wc <= 0.0) & ~zero
    inner = ~(zero | one)
    out[zero] = 0.0
    out[one] = beta_pq
    if inner.any():
        wi, wci = w[inner], wc[inner]
        front = np.exp(p * np.log(wi) + q * np.log(wci))
        direct = wi < (p + 1.0) / (p + q + 2.0)
        res = np.empty_like(wi)
        if direct.any():
            res[direct] = front[direct] * _betacf(p, q, wi[direct]) / p
        if (~direct).any():
            nd = ~direct
            res[nd] = beta_pq - front[nd] * _betacf(q, p, wci[nd]) / q
        out[inner] = res
    return out


def complete_beta(p, q):
    return math.exp(math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q))


def incomplete_beta(w, p, q):
    w = np.ascontiguousarray(w, dtype=float).ravel()
    return _ibeta(w, 1.0 - w, p, q, complete_beta(p, q))


def _u_of_s(s, b, c, beta_pq):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    lo = s <= 0.0
    hi = (s >= 1.0) & ~lo
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = beta_pq / c
    if mid.any():
        ls = c * np.log(s[mid])
        out[mid] = _ibeta(np.exp(ls), -np.expm1(ls), 1.0 / c, 1.0 - b, beta_pq) / c
    return out


def u_from_s(S, b, c):
    S = np.ascontiguousarray(S, dtype=float).ravel()
    return _u_of_s(S, b, c, complete_beta(1.0 / c, 1.0 - b))


def dsdu_from_s(S, b, c):
    S = np.ascontiguousarray(S, dtype=float).ravel()
    out = np.empty_like(S)
    lo = S <= 0.0
    hi = (S >= 1.0) & ~lo
    mid = ~(lo | hi)
    out[lo] = 1.0
    out[hi] = 0.0 if b > 0.0 else 1.0
    out[mid] = np.exp(b * np.log(-np.expm1(c * np.log(S[mid]))))
    return out


def s_from_u(u, b, c, grid_s, grid_u, tol, guess=None):
    u = np.ascontiguousarray(u, dtype=float).ravel()
    grid_s = np.asarray(grid_s, dtype=float)
    grid_u = np.asarray(grid_u, dtype=float)
    beta_pq = complete_beta(1.0 / c, 1.0 - b)
    umax = beta_pq / c
    out = np.empty_like(u)
    out[u <= 0.0] = 0.0
    out[u >= umax] = 1.0
    todo = np.nonzero((u > 0.0) & (u < umax))[0]
    if todo.size == 0:
        return out, 0
    target = u[todo]
    k = np.clip(np.searchsorted(grid_u, target, side="right") - 1, 0, grid_u.size - 2)
    lo = grid_s[k].copy()
    hi = grid_s[k + 1].copy()
    t = (target - grid_u[k]) / (grid_u[k + 1] - grid_u[k])
    s = lo + t * (hi - lo)
    if guess is not None:
        g = np.asarray(guess, dtype=float).ravel()[todo]
        use = (g > lo) & (g < hi)
        s[use] = g[use]
    dxold = hi - lo
    dx = dxold.copy()
    active = np.ones(todo.size, dtype=bool)
    iters = 0
    while active.any() and iters < 200:
        iters += 1
        a = np.nonzero(active)[0]
        sa = s[a]
        f = _u_of_s(sa, b, c, beta_pq) - target[a]
        done = np.abs(f) <= tol
        neg = f < 0.0
        lo[a] = np.where(neg, sa, lo[a])
        hi[a] = np.where(neg, hi[a], sa)
        done |= (hi[a] - lo[a]) <= 4.0 * (np.nextafter(hi[a], 2.0) - hi[a])
        step = f * dsdu_from_s(sa, b, c)
        snew = sa - step
        bad = ~np.isfinite(snew) | (snew <= lo[a]) | (snew >= hi[a]) | (np.abs(2.0 * step) > np.abs(dxold[a]))
        dxold_new = dx[a].copy()
        dx_new = np.where(bad, 0.5 * (hi[a] - lo[a]), step)
        s_new = np.where(bad, lo[a] + 0.5 * (hi[a] - lo[a]), snew)
        keep = ~done
        upd = a[keep]
        dxold[upd] = dxold_new[keep]
        dx[upd] = dx_new[keep]
        s[upd] = s_new[keep]
        active[a[done]] = False
    out[todo] = s
    return out, iters
