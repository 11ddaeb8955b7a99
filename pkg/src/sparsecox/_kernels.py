"""Compiled inner loops for iterative coordinate ascent.

Arrays are in the descending-time order of ``Dataset``: ``Xs`` (n x p,
Fortran order), ``ds`` event flags and ``rs_end`` risk-set prefix ends.
Risk-set sums are prefix sums; each prefix is kept relative to its own
running maximum of the linear predictor so no prefix underflows.
"""

import numpy as np
from numba import njit

from .penalties import pen_deriv, pen_value, solve_scalar


@njit(cache=True)
def partial_loglik(eta, ds, rs_end):
    n = eta.shape[0]
    mr = -np.inf
    c0 = 0.0
    q = 0.0
    start = 0
    for i in range(n):
        e = eta[i]
        if e > mr:
            c0 *= np.exp(mr - e)
            mr = e
        c0 += np.exp(e - mr)
        if rs_end[i] == i:
            lse = mr + np.log(c0)
            for k in range(start, i + 1):
                if ds[k]:
                    q += eta[k] - lse
            start = i + 1
    return q


@njit(cache=True)
def coord_grad_hess(eta, x, ds, rs_end):
    n = eta.shape[0]
    mr = -np.inf
    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    g = 0.0
    h = 0.0
    start = 0
    for i in range(n):
        e = eta[i]
        if e > mr:
            s = np.exp(mr - e)
            c0 *= s
            c1 *= s
            c2 *= s
            mr = e
        w = np.exp(e - mr)
        c0 += w
        c1 += w * x[i]
        c2 += w * x[i] * x[i]
        if rs_end[i] == i:
            e1 = c1 / c0
            v = c2 / c0 - e1 * e1
            if v < 0.0:
                v = 0.0
            for k in range(start, i + 1):
                if ds[k]:
                    g += x[k] - e1
                    h += v
            start = i + 1
    return g, h


@njit(cache=True)
def score_all(Xs, eta, ds, rs_end):
    n, p = Xs.shape
    mr = -np.inf
    c0 = 0.0
    c1 = np.zeros(p)
    z = np.zeros(p)
    start = 0
    for i in range(n):
        e = eta[i]
        if e > mr:
            s = np.exp(mr - e)
            c0 *= s
            for j in range(p):
                c1[j] *= s
            mr = e
        w = np.exp(e - mr)
        c0 += w
        for j in range(p):
            c1[j] += w * Xs[i, j]
        if rs_end[i] == i:
            for k in range(start, i + 1):
                if ds[k]:
                    for j in range(p):
                        z[j] += Xs[k, j] - c1[j] / c0
            start = i + 1
    return z


@njit(cache=True)
def info_sum(XB, eta, ds, rs_end):
    """Sum over events of the risk-set weighted covariance of the columns of XB."""
    n, b = XB.shape
    mr = -np.inf
    c0 = 0.0
    c1 = np.zeros(b)
    c2 = np.zeros((b, b))
    H = np.zeros((b, b))
    start = 0
    for i in range(n):
        e = eta[i]
        if e > mr:
            s = np.exp(mr - e)
            c0 *= s
            c1 *= s
            c2 *= s
            mr = e
        w = np.exp(e - mr)
        c0 += w
        for j in range(b):
            wx = w * XB[i, j]
            c1[j] += wx
            for k in range(j + 1):
                c2[j, k] += wx * XB[i, k]
        if rs_end[i] == i:
            cnt = 0
            for k in range(start, i + 1):
                if ds[k]:
                    cnt += 1
            if cnt:
                for j in range(b):
                    ej = c1[j] / c0
                    for k in range(j + 1):
                        v = c2[j, k] / c0 - ej * (c1[k] / c0)
                        H[j, k] += cnt * v
            start = i + 1
    for j in range(b):
        for k in range(j):
            H[k, j] = H[j, k]
    return H


@njit(cache=True)
def ica(Xs, ds, rs_end, beta0, kind, lam, a, tol, step_tol, max_sweeps, max_halvings,
        h_floor, newton_steps):
    """Cyclic coordinate ascent on the penalized partial likelihood.

    A proposed move with ``h * |delta| <= step_tol`` is treated as already
    optimal and skipped.  Iteration stops after a sweep whose objective gain
    is at most ``tol`` and which made no non-negligible move.

    Returns (beta, sweeps, converged, trace, n_accepted, min_increase).
    """
    n, p = Xs.shape
    c = float(n)
    beta = beta0.copy()
    eta = np.zeros(n)
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(n):
                eta[i] += Xs[i, j] * beta[j]
    pen = 0.0
    for j in range(p):
        pen += pen_value(kind, lam, a, abs(beta[j]))
    obj = partial_loglik(eta, ds, rs_end) - c * pen
    thr = c * pen_deriv(kind, lam, a, 0.0)

    trace = np.empty(max_sweeps)
    trial = np.empty(n)
    cand = np.empty(p, dtype=np.int64)
    n_accepted = 0
    min_inc = np.inf
    converged = False
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        z = score_all(Xs, eta, ds, rs_end)
        nc = 0
        for j in range(p):
            if beta[j] != 0.0 or abs(z[j]) > thr:
                cand[nc] = j
                nc += 1
        prev = obj
        moved = False
        for ci in range(nc):
            j = cand[ci]
            x = Xs[:, j]
            for _step in range(newton_steps):
                g, h = coord_grad_hess(eta, x, ds, rs_end)
                if h < h_floor:
                    h = h_floor
                bj = beta[j]
                u = solve_scalar(kind, lam, a, g + h * bj, h, c)
                delta = u - bj
                if delta == 0.0 or h * abs(delta) <= step_tol:
                    break
                moved = True
                pj = pen_value(kind, lam, a, abs(bj))
                accepted = False
                for _ in range(max_halvings + 1):
                    bn = bj + delta
                    for i in range(n):
                        trial[i] = eta[i] + delta * x[i]
                    new_pen = pen - pj + pen_value(kind, lam, a, abs(bn))
                    new_obj = partial_loglik(trial, ds, rs_end) - c * new_pen
                    inc = new_obj - obj
                    if inc > 0.0:
                        beta[j] = bn
                        eta[:] = trial
                        pen = new_pen
                        obj = new_obj
                        n_accepted += 1
                        if inc < min_inc:
                            min_inc = inc
                        accepted = True
                        break
                    delta *= 0.5
                if not accepted:
                    break
        trace[sweep] = obj
        gain = obj - prev
        if gain <= tol and (not moved or gain == 0.0):
            converged = True
            break
    return beta, sweeps, converged, trace[:sweeps].copy(), n_accepted, min_inc
