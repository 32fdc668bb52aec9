"""Numba-compiled inner loops.

Everything here operates on plain float64 arrays and mutates its in/out
arguments; the public wrappers live in the sibling modules. Patient blocks
are passed as one row-stacked matrix plus an ``offsets`` vector so the
kernels work for unequal block sizes.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def cd_weighted_lasso(X, y, weights, loss_scale, beta, tol, max_iter):
    """Cyclic coordinate descent on loss_scale*||y-Xb||^2 + sum w_i|b_i|.

    Mutates ``beta`` in place. Returns (sweeps, converged). Convergence is
    max absolute coordinate change over a full sweep <= tol.
    """
    n, m = X.shape
    colsq = np.zeros(m)
    for i in range(m):
        s = 0.0
        for t in range(n):
            s += X[t, i] * X[t, i]
        colsq[i] = s
    r = y - X @ beta
    two_c = 2.0 * loss_scale
    for sweep in range(1, max_iter + 1):
        max_change = 0.0
        for i in range(m):
            if colsq[i] == 0.0:
                continue
            old = beta[i]
            rho = 0.0
            for t in range(n):
                rho += X[t, i] * r[t]
            rho = two_c * (rho + colsq[i] * old)
            z = abs(rho) - weights[i]
            if z <= 0.0:
                new = 0.0
            else:
                new = z / (two_c * colsq[i])
                if rho < 0.0:
                    new = -new
            if new != old:
                d = new - old
                for t in range(n):
                    r[t] -= X[t, i] * d
                beta[i] = new
                if abs(d) > max_change:
                    max_change = abs(d)
        if max_change <= tol:
            return sweep, True
    return max_iter, False


@njit(cache=True)
def glop_objective_kernel(X, y, offsets, scales, lam_g, lam_l, wg_mask, wl_mask, g, L):
    """sum_k scale_k ||y^k - X^k(g+L_k)||^2 + lam_g||g.wg||_1 + lam_l||L.wl||_1.

    ``wg_mask``/``wl_mask`` are per-feature 0/1 penalty masks (0 frees the
    intercept).
    """
    kappa = scales.shape[0]
    p = X.shape[1]
    total = 0.0
    for k in range(kappa):
        lo, hi = offsets[k], offsets[k + 1]
        ss = 0.0
        for t in range(lo, hi):
            pred = 0.0
            for j in range(p):
                pred += X[t, j] * (g[j] + L[j, k])
            d = y[t] - pred
            ss += d * d
        total += scales[k] * ss
    for j in range(p):
        total += lam_g * wg_mask[j] * abs(g[j])
        for k in range(kappa):
            total += lam_l * wl_mask[j] * abs(L[j, k])
    return total


@njit(cache=True)
def glop_kkt_kernel(X, y, offsets, scales, lam_g, lam_l, wg_mask, wl_mask, g, L):
    """Max first-order violation of the joint objective at (g, L)."""
    kappa = scales.shape[0]
    p = X.shape[1]
    n = X.shape[0]
    r = np.empty(n)
    for k in range(kappa):
        lo, hi = offsets[k], offsets[k + 1]
        for t in range(lo, hi):
            pred = 0.0
            for j in range(p):
                pred += X[t, j] * (g[j] + L[j, k])
            r[t] = y[t] - pred
    worst = 0.0
    for j in range(p):
        grad = 0.0
        for k in range(kappa):
            lo, hi = offsets[k], offsets[k + 1]
            s = 0.0
            for t in range(lo, hi):
                s += X[t, j] * r[t]
            grad += -2.0 * scales[k] * s
        w = lam_g * wg_mask[j]
        if g[j] != 0.0:
            v = abs(grad + w * np.sign(g[j]))
        else:
            v = max(abs(grad) - w, 0.0)
        if v > worst:
            worst = v
        for k in range(kappa):
            lo, hi = offsets[k], offsets[k + 1]
            s = 0.0
            for t in range(lo, hi):
                s += X[t, j] * r[t]
            gradl = -2.0 * scales[k] * s
            wl = lam_l * wl_mask[j]
            if L[j, k] != 0.0:
                v = abs(gradl + wl * np.sign(L[j, k]))
            else:
                v = max(abs(gradl) - wl, 0.0)
            if v > worst:
                worst = v
    return worst


@njit(cache=True)
def bcm_kernel(X, y, offsets, scales, lam_g, lam_l, wg_mask, wl_mask, g, L,
               tol, max_sweeps, inner_tol, inner_max, kkt_threshold):
    """Alternate a pooled lasso step for g with per-patient lasso steps for L.

    Mutates g and L. Returns (objective, sweeps, converged, max_kkt).
    Convergence needs both a small relative objective decrease and the joint
    first-order conditions within ``kkt_threshold``.
    """
    kappa = scales.shape[0]
    n, p = X.shape
    # rows pre-scaled by sqrt(scale_k) turn the g-step into a unit-scale lasso
    Xs = np.empty_like(X)
    sq = np.empty(kappa)
    for k in range(kappa):
        sq[k] = np.sqrt(scales[k])
        for t in range(offsets[k], offsets[k + 1]):
            for j in range(p):
                Xs[t, j] = X[t, j] * sq[k]
    wg = lam_g * wg_mask
    wl = lam_l * wl_mask
    ytil = np.empty(n)
    prev = glop_objective_kernel(X, y, offsets, scales, lam_g, lam_l, wg_mask, wl_mask, g, L)
    obj = prev
    max_kkt = np.inf
    stalled = 0
    for sweep in range(1, max_sweeps + 1):
        # g-step on targets adjusted for the local fits
        for k in range(kappa):
            lo, hi = offsets[k], offsets[k + 1]
            for t in range(lo, hi):
                pred = 0.0
                for j in range(p):
                    pred += X[t, j] * L[j, k]
                ytil[t] = (y[t] - pred) * sq[k]
        cd_weighted_lasso(Xs, ytil, wg, 1.0, g, inner_tol, inner_max)
        # independent per-patient L-steps on targets adjusted for g
        for k in range(kappa):
            lo, hi = offsets[k], offsets[k + 1]
            yk = np.empty(hi - lo)
            for t in range(lo, hi):
                pred = 0.0
                for j in range(p):
                    pred += X[t, j] * g[j]
                yk[t - lo] = y[t] - pred
            Lk = L[:, k].copy()
            cd_weighted_lasso(X[lo:hi], yk, wl, scales[k], Lk, inner_tol, inner_max)
            L[:, k] = Lk
        obj = glop_objective_kernel(X, y, offsets, scales, lam_g, lam_l,
                                    wg_mask, wl_mask, g, L)
        if prev - obj <= tol * max(abs(prev), 1.0):
            max_kkt = glop_kkt_kernel(X, y, offsets, scales, lam_g, lam_l,
                                      wg_mask, wl_mask, g, L)
            if max_kkt <= kkt_threshold:
                return obj, sweep, True, max_kkt
            stalled += 1
            if stalled >= 50:
                return obj, sweep, False, max_kkt
        else:
            stalled = 0
        prev = obj
    max_kkt = glop_kkt_kernel(X, y, offsets, scales, lam_g, lam_l,
                              wg_mask, wl_mask, g, L)
    return obj, max_sweeps, max_kkt <= kkt_threshold, max_kkt


@njit(cache=True)
def project_l1_ball(v, radius):
    """Euclidean projection of v onto {x : ||x||_1 <= radius}."""
    if radius <= 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    u = np.sort(a)[::-1]
    css = 0.0
    theta = 0.0
    rho = 0
    for i in range(u.shape[0]):
        css += u[i]
        t = (css - radius) / (i + 1)
        if u[i] > t:
            theta = t
            rho = i + 1
        else:
            break
    out = np.empty_like(v)
    for i in range(v.shape[0]):
        m = a[i] - theta
        if m < 0.0:
            m = 0.0
        out[i] = m if v[i] >= 0 else -m
    return out


@njit(cache=True)
def prox_linf(v, t):
    """prox of t*||.||_inf via the Moreau identity."""
    return v - project_l1_ball(v, t)


@njit(cache=True)
def _dirty_smooth(X, y, offsets, B, S):
    kappa = offsets.shape[0] - 1
    p = X.shape[1]
    total = 0.0
    for k in range(kappa):
        for t in range(offsets[k], offsets[k + 1]):
            pred = 0.0
            for j in range(p):
                pred += X[t, j] * (B[j, k] + S[j, k])
            d = y[t] - pred
            total += d * d
    return total


@njit(cache=True)
def _dirty_grad(X, y, offsets, B, S, G):
    """Gradient of the smooth part w.r.t. B_k (identical for S_k); fills G."""
    kappa = offsets.shape[0] - 1
    p = X.shape[1]
    for k in range(kappa):
        lo, hi = offsets[k], offsets[k + 1]
        nres = hi - lo
        res = np.empty(nres)
        for t in range(lo, hi):
            pred = 0.0
            for jj in range(p):
                pred += X[t, jj] * (B[jj, k] + S[jj, k])
            res[t - lo] = y[t] - pred
        for j in range(p):
            s = 0.0
            for t in range(lo, hi):
                s += X[t, j] * res[t - lo]
            G[j, k] = -2.0 * s
    return G


@njit(cache=True)
def dirty_penalty(B, S, lam_b, lam_s):
    p, kappa = B.shape
    pen = 0.0
    for j in range(p):
        mx = 0.0
        for k in range(kappa):
            if abs(B[j, k]) > mx:
                mx = abs(B[j, k])
        pen += lam_b * mx
    for j in range(p):
        for k in range(kappa):
            pen += lam_s * abs(S[j, k])
    return pen


@njit(cache=True)
def dirty_prox_gradient(X, y, offsets, lam_b, lam_s, B, S, step0, tol, max_iter):
    """Proximal gradient with halving backtracking on the dirty objective.

    Mutates B and S. Returns (objective, iterations, converged).
    """
    p, kappa = B.shape
    G = np.empty((p, kappa))
    f = _dirty_smooth(X, y, offsets, B, S)
    obj = f + dirty_penalty(B, S, lam_b, lam_s)
    step = step0
    Bn = np.empty_like(B)
    Sn = np.empty_like(S)
    for it in range(1, max_iter + 1):
        _dirty_grad(X, y, offsets, B, S, G)
        accepted = False
        for _bt in range(60):
            for j in range(p):
                row = np.empty(kappa)
                for k in range(kappa):
                    row[k] = B[j, k] - step * G[j, k]
                row = prox_linf(row, step * lam_b)
                for k in range(kappa):
                    Bn[j, k] = row[k]
            for j in range(p):
                for k in range(kappa):
                    v = S[j, k] - step * G[j, k]
                    thr = step * lam_s
                    if v > thr:
                        Sn[j, k] = v - thr
                    elif v < -thr:
                        Sn[j, k] = v + thr
                    else:
                        Sn[j, k] = 0.0
            fn = _dirty_smooth(X, y, offsets, Bn, Sn)
            # quadratic upper bound check (same gradient acts on both blocks)
            q = f
            sqn = 0.0
            for j in range(p):
                for k in range(kappa):
                    db = Bn[j, k] - B[j, k]
                    ds = Sn[j, k] - S[j, k]
                    q += G[j, k] * (db + ds)
                    sqn += db * db + ds * ds
            q += sqn / (2.0 * step)
            if fn <= q + 1e-12 * max(abs(q), 1.0):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return obj, it, False
        new_obj = fn + dirty_penalty(Bn, Sn, lam_b, lam_s)
        for j in range(p):
            for k in range(kappa):
                B[j, k] = Bn[j, k]
                S[j, k] = Sn[j, k]
        f = fn
        done = obj - new_obj <= tol * max(abs(obj), 1.0) and obj - new_obj >= 0.0
        obj = new_obj
        if done:
            return obj, it, True
    return obj, max_iter, False
