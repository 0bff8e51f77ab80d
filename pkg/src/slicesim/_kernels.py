"""Compiled inner kernels for the per-slot solver.

The subproblem arrays are tiny (tens to a few thousand elements), so the
pure-numpy evaluation is dominated by per-call overhead rather than
arithmetic; these jitted loops remove that floor.  Everything here mirrors
the numpy expressions in drra.py one-to-one and the solver falls back to
those when numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:                                    # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

LN2 = np.log(2.0)


@njit(cache=True)
def project_rb(x: np.ndarray) -> np.ndarray:
    """Clip to [0, 1]; rescale any RB column whose ownership exceeds 1."""
    K, B = x.shape
    out = np.empty((K, B))
    for b in range(B):
        col = 0.0
        for k in range(K):
            v = x[k, b]
            v = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
            out[k, b] = v
            col += v
        if col > 1.0:
            for k in range(K):
                out[k, b] /= col
    return out


@njit(cache=True)
def project_power(p: np.ndarray, p_max: float) -> np.ndarray:
    """Clip negatives; rescale onto the total power budget."""
    K, B = p.shape
    out = np.empty((K, B))
    total = 0.0
    for k in range(K):
        for b in range(B):
            v = p[k, b]
            v = 0.0 if v < 0.0 else v
            out[k, b] = v
            total += v
    if total > p_max and total > 0.0:
        scale = p_max / total
        for k in range(K):
            for b in range(B):
                out[k, b] *= scale
    return out


@njit(cache=True)
def project_box(w: np.ndarray) -> np.ndarray:
    out = np.empty(w.size)
    for i in range(w.size):
        v = w[i]
        out[i] = 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)
    return out


@njit(cache=True)
def utility(rates: np.ndarray, mu: float) -> float:
    """(1/mu) log mean exp(mu * r) over a flat rate array."""
    n = rates.size
    flat = rates.ravel()
    peak = mu * flat[0]
    for i in range(n):
        e = mu * flat[i]
        if e > peak:
            peak = e
    acc = 0.0
    for i in range(n):
        acc += np.exp(mu * flat[i] - peak)
    return (peak + np.log(acc / n)) / mu


@njit(cache=True)
def softmin_weights(rates: np.ndarray, mu: float) -> np.ndarray:
    """Gradient of ``utility`` in the rates: softmax of mu * r."""
    S, K = rates.shape
    out = np.empty((S, K))
    peak = mu * rates[0, 0]
    for s in range(S):
        for k in range(K):
            e = mu * rates[s, k]
            if e > peak:
                peak = e
    total = 0.0
    for s in range(S):
        for k in range(K):
            v = np.exp(mu * rates[s, k] - peak)
            out[s, k] = v
            total += v
    for s in range(S):
        for k in range(K):
            out[s, k] /= total
    return out


@njit(cache=True)
def rb_rates(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    S, K, B = m.shape
    r = np.zeros((S, K))
    for s in range(S):
        for k in range(K):
            acc = 0.0
            for b in range(B):
                acc += x[k, b] * m[s, k, b]
            r[s, k] = acc
    return r


@njit(cache=True)
def rb_value(x: np.ndarray, m: np.ndarray, mu: float) -> float:
    return utility(rb_rates(x, m), mu)


@njit(cache=True)
def rb_grad(x: np.ndarray, m: np.ndarray, mu: float) -> np.ndarray:
    S, K, B = m.shape
    omega = softmin_weights(rb_rates(x, m), mu)
    g = np.zeros((K, B))
    for s in range(S):
        for k in range(K):
            o = omega[s, k]
            for b in range(B):
                g[k, b] += o * m[s, k, b]
    return g


@njit(cache=True)
def power_rates(p: np.ndarray, gon: np.ndarray, xc: np.ndarray) -> np.ndarray:
    S, K, B = gon.shape
    r = np.zeros((S, K))
    for s in range(S):
        for k in range(K):
            acc = 0.0
            for b in range(B):
                acc += xc[k, b] * np.log1p(p[k, b] * gon[s, k, b])
            r[s, k] = acc / LN2
    return r


@njit(cache=True)
def power_value(p: np.ndarray, gon: np.ndarray, xc: np.ndarray,
                mu: float) -> float:
    return utility(power_rates(p, gon, xc), mu)


@njit(cache=True)
def power_grad(p: np.ndarray, gon: np.ndarray, xc: np.ndarray,
               mu: float) -> np.ndarray:
    S, K, B = gon.shape
    omega = softmin_weights(power_rates(p, gon, xc), mu)
    g = np.zeros((K, B))
    for s in range(S):
        for k in range(K):
            o = omega[s, k]
            for b in range(B):
                slope = gon[s, k, b] / (1.0 + p[k, b] * gon[s, k, b])
                g[k, b] += o * slope * xc[k, b]
    return g / LN2


@njit(cache=True)
def weight_rates(wb: np.ndarray, q_user: np.ndarray,
                 base: np.ndarray) -> np.ndarray:
    S, K, B = q_user.shape
    r = np.empty((S, K))
    for s in range(S):
        for k in range(K):
            acc = base[s, k]
            for b in range(B):
                acc -= wb[b] * q_user[s, k, b]
            r[s, k] = acc
    return r


@njit(cache=True)
def weight_value(wb: np.ndarray, q_user: np.ndarray, base: np.ndarray,
                 svc: np.ndarray, pen_total: float,
                 req: float, lam: float, rho: float, mu: float) -> float:
    u = utility(weight_rates(wb, q_user, base), mu)
    if req <= 0.0:
        return u
    served = svc @ wb - pen_total
    v = (req - served) / req
    if v <= 0.0:
        return u
    return u - lam * v - rho * v * v


@njit(cache=True)
def weight_grad(wb: np.ndarray, q_user: np.ndarray, base: np.ndarray,
                svc: np.ndarray, pen_total: float,
                req: float, lam: float, rho: float, mu: float) -> np.ndarray:
    S, K, B = q_user.shape
    omega = softmin_weights(weight_rates(wb, q_user, base), mu)
    g = np.zeros(B)
    for s in range(S):
        for k in range(K):
            o = omega[s, k]
            for b in range(B):
                g[b] -= o * q_user[s, k, b]
    if req <= 0.0:
        return g
    served = svc @ wb - pen_total
    v = (req - served) / req
    if v <= 0.0:
        return g
    scale = (lam + 2.0 * rho * v) / req
    for b in range(B):
        g[b] += scale * svc[b]
    return g
