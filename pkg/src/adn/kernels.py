"""Numba kernels for column-sparse arithmetic and the coordinate-descent loop.

Matrices are passed as raw CSC arrays (indptr, indices, data) so the same
kernels serve full matrices and per-worker column blocks.  Everything here is
deterministic: no fastmath, fixed iteration order, permutations generated by
the caller.
"""

import numpy as np
from numba import njit

# Regularizer kind codes shared with objectives.Regularizer.
REG_L2 = 0
REG_L1_BOUNDED = 1
REG_ELASTIC_NET = 2
REG_BINARY_ENTROPY = 3

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _softplus(w):
    # log(1 + e^w) without overflow
    if w > 0.0:
        return w + np.log1p(np.exp(-w))
    return np.log1p(np.exp(w))


@njit(**_JIT)
def _sigmoid(w):
    if w >= 0.0:
        return 1.0 / (1.0 + np.exp(-w))
    e = np.exp(w)
    return e / (1.0 + e)


@njit(**_JIT)
def g_value(kind, p1, p2, x):
    """Pointwise regularizer value, +inf outside the support."""
    if kind == REG_L2:
        return 0.5 * p1 * x * x
    if kind == REG_L1_BOUNDED:
        if np.abs(x) > p2:
            return np.inf
        return p1 * np.abs(x)
    if kind == REG_ELASTIC_NET:
        return p1 * np.abs(x) + 0.5 * p2 * x * x
    # binary entropy on [0, 1]
    if x < 0.0 or x > 1.0:
        return np.inf
    if x == 0.0 or x == 1.0:
        return 0.0
    return x * np.log(x) + (1.0 - x) * np.log1p(-x)


@njit(**_JIT)
def g_conjugate(kind, p1, p2, w):
    if kind == REG_L2:
        return 0.5 * w * w / p1
    if kind == REG_L1_BOUNDED:
        excess = np.abs(w) - p1
        if excess <= 0.0:
            return 0.0
        return p2 * excess
    if kind == REG_ELASTIC_NET:
        excess = np.abs(w) - p1
        if excess <= 0.0:
            return 0.0
        return 0.5 * excess * excess / p2
    return _softplus(w)


@njit(**_JIT)
def g_conjugate_subgrad(kind, p1, p2, w):
    """One element of the conjugate subdifferential, deterministic tie-break."""
    if kind == REG_L2:
        return w / p1
    if kind == REG_L1_BOUNDED:
        if np.abs(w) <= p1:
            return 0.0
        return p2 if w > 0.0 else -p2
    if kind == REG_ELASTIC_NET:
        excess = np.abs(w) - p1
        if excess <= 0.0:
            return 0.0
        return (excess / p2) if w > 0.0 else (-excess / p2)
    return _sigmoid(w)


@njit(**_JIT)
def prox(kind, p1, p2, z, step):
    """argmin_x (x - z)^2 / (2 step) + g(x) for one coordinate."""
    if kind == REG_L2:
        return z / (1.0 + step * p1)
    if kind == REG_L1_BOUNDED:
        t = step * p1
        if z > t:
            x = z - t
        elif z < -t:
            x = z + t
        else:
            x = 0.0
        if x > p2:
            return p2
        if x < -p2:
            return -p2
        return x
    if kind == REG_ELASTIC_NET:
        t = step * p1
        if z > t:
            x = z - t
        elif z < -t:
            x = z + t
        else:
            return 0.0
        return x / (1.0 + step * p2)
    # binary entropy: solve x + step*log(x/(1-x)) = z on (0, 1) by
    # safeguarded Newton; the barrier keeps the root strictly interior.
    if step == 0.0:
        if z < 0.0:
            return 0.0
        if z > 1.0:
            return 1.0
        return z  # includes nan passthrough
    lo = 0.0
    hi = 1.0
    x = 0.5
    for _ in range(200):
        phi = x + step * (np.log(x) - np.log1p(-x)) - z
        if phi != phi:  # nan input: propagate instead of looping
            return phi
        if phi > 0.0:
            hi = x
        else:
            lo = x
        dphi = 1.0 + step * (1.0 / x + 1.0 / (1.0 - x))
        x_new = x - phi / dphi
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
            if x_new <= lo or x_new >= hi:
                break  # bracket exhausted at float resolution
        if np.abs(x_new - x) <= 1e-17 + 1e-16 * np.abs(x_new):
            x = x_new
            break
        x = x_new
    return x


@njit(**_JIT)
def g_sum(kind, p1, p2, xs):
    total = 0.0
    for i in range(xs.size):
        total += g_value(kind, p1, p2, xs[i])
    return total


@njit(**_JIT)
def column_dots(indptr, indices, data, y):
    """A^T y for CSC arrays: one dot product per column."""
    n = indptr.size - 1
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            s += data[t] * y[indices[t]]
        out[i] = s
    return out


@njit(**_JIT)
def accumulate_columns(indptr, indices, data, u, n_rows):
    """A u for CSC arrays: weighted sum of columns, dense result."""
    out = np.zeros(n_rows)
    n = indptr.size - 1
    for i in range(n):
        ui = u[i]
        if ui == 0.0:
            continue
        for t in range(indptr[i], indptr[i + 1]):
            out[indices[t]] += ui * data[t]
    return out


@njit(**_JIT)
def column_curvatures(indptr, indices, sq_data, diag, sigma, sigma_damp):
    """Per-coordinate curvature sigma * sum_j diag_j A_ji^2 + sigma_damp."""
    n = indptr.size - 1
    q = np.empty(n)
    for i in range(n):
        s = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            s += sq_data[t] * diag[indices[t]]
        q[i] = sigma * s + sigma_damp
    return q


@njit(**_JIT)
def weighted_image_norm(diag, w):
    """w^T diag(d) w, the curvature term of the local model."""
    s = 0.0
    for j in range(w.size):
        s += diag[j] * w[j] * w[j]
    return s


@njit(**_JIT)
def gap_block(indptr, indices, data, margins_buf, alpha, kind, p1, p2):
    """Sum of per-coordinate duality-gap terms over a column block.

    margins_buf must hold A^T grad for the block's columns (see column_dots).
    Each term g*(-s_i) + g(alpha_i) + alpha_i s_i is non-negative.
    """
    total = 0.0
    n = indptr.size - 1
    for i in range(n):
        s = margins_buf[i]
        total += g_conjugate(kind, p1, p2, -s) + g_value(kind, p1, p2, alpha[i]) + alpha[i] * s
    return total


@njit(**_JIT)
def cd_epochs(indptr, indices, data, lin0, q, alpha0, diag, sigma, sigma_damp,
              kind, p1, p2, perms, w, delta, epoch_decrease):
    """Randomized proximal coordinate descent on one local subproblem.

    Minimizes, over the block update delta,

        lin0^T delta + (sigma/2) w^T diag w + (sigma_damp/2) ||delta||^2
        + sum_i g(alpha0_i + delta_i),        w = A_block delta,

    doing one exact 1-D prox step per visited coordinate and maintaining the
    image w incrementally.  perms holds one coordinate permutation per epoch.
    w, delta and epoch_decrease are outputs and must come in zeroed.

    Returns (status, decrease): status 1 flags a negative curvature (corrupted
    state), decrease accumulates the exact model decrease.
    """
    total = 0.0
    for e in range(perms.shape[0]):
        for jj in range(perms.shape[1]):
            i = perms[e, jj]
            qi = q[i]
            if qi < 0.0:
                return 1, total
            lin = lin0[i]
            for t in range(indptr[i], indptr[i + 1]):
                r = indices[t]
                lin += sigma * data[t] * diag[r] * w[r]
            lin += sigma_damp * delta[i]
            x_old = alpha0[i] + delta[i]
            if qi > 0.0:
                z = x_old - lin / qi
                x_new = prox(kind, p1, p2, z, 1.0 / qi)
            else:
                if lin == 0.0:
                    continue
                # flat quadratic: fall back to the g-only minimizer
                x_new = g_conjugate_subgrad(kind, p1, p2, -lin)
            step = x_new - x_old
            if step == 0.0:
                continue
            total -= (lin * step + 0.5 * qi * step * step
                      + g_value(kind, p1, p2, x_new) - g_value(kind, p1, p2, x_old))
            delta[i] = x_new - alpha0[i]
            for t in range(indptr[i], indptr[i + 1]):
                w[indices[t]] += step * data[t]
        epoch_decrease[e] = total
    return 0, total
