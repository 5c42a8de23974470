"""Smooth losses, separable regularizers, objective value and duality gap.

The objective is O(alpha) = f(A alpha) + sum_i g_i(alpha_i) with f convex,
coordinate-separable and (1/tau)-smooth, and each g_i convex.  All loss
formulas use overflow-safe branches so large margins stay exact.
"""

import numpy as np

from . import kernels
from .errors import (InconsistentSharedVector, InfiniteConjugate,
                     InvalidInput, LengthMismatch)

LOSS_KINDS = ("least_squares", "logistic", "quadratic_dual")
REG_KINDS = ("l2", "l1", "elastic_net", "box_entropy_dual")


class SmoothLoss:
    """A convex, coordinate-separable smooth loss f(v) with v of length d.

    kinds:
      least_squares(b):      0.5 * ||v - b||^2,                 tau = 1
      logistic(y):           sum_j log(1 + exp(-y_j v_j)),      tau = 4
      quadratic_dual(scale): ||v - offset||^2 / (2 scale),      tau = scale
    """

    __slots__ = ("kind", "targets", "labels", "scale", "offset", "dim")

    def __init__(self, kind, targets=None, labels=None, scale=None,
                 offset=None, dim=None):
        if kind not in LOSS_KINDS:
            raise InvalidInput(f"unknown loss kind {kind!r}")
        self.kind = kind
        self.targets = None if targets is None else np.asarray(targets, float)
        self.labels = None if labels is None else np.asarray(labels, float)
        self.scale = scale
        self.offset = None if offset is None else np.asarray(offset, float)
        if kind == "least_squares":
            if self.targets is None:
                raise InvalidInput("least_squares needs targets")
            self.dim = self.targets.size
        elif kind == "logistic":
            if self.labels is None:
                raise InvalidInput("logistic needs labels")
            if not np.all(np.abs(self.labels) == 1.0):
                raise InvalidInput("logistic labels must be in {-1, +1}")
            self.dim = self.labels.size
        else:
            if scale is None or scale <= 0:
                raise InvalidInput("quadratic_dual needs a positive scale")
            if dim is None and self.offset is None:
                raise InvalidInput("quadratic_dual needs dim or an offset")
            self.dim = dim if dim is not None else self.offset.size

    @classmethod
    def least_squares(cls, targets):
        return cls("least_squares", targets=targets)

    @classmethod
    def logistic(cls, labels):
        return cls("logistic", labels=labels)

    @classmethod
    def quadratic_dual(cls, scale, dim=None, offset=None):
        return cls("quadratic_dual", scale=scale, offset=offset, dim=dim)

    @property
    def tau(self):
        """Smoothness constant: f is (1/tau)-smooth."""
        if self.kind == "least_squares":
            return 1.0
        if self.kind == "logistic":
            return 4.0
        return float(self.scale)

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise LengthMismatch(f"expected length {self.dim}, got {v.shape}")
        return v


def _stable_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def f_eval(loss, v):
    """Value of f at v."""
    v = loss._check(v)
    if loss.kind == "least_squares":
        r = v - loss.targets
        return 0.5 * float(np.dot(r, r))
    if loss.kind == "logistic":
        return float(np.sum(np.logaddexp(0.0, -loss.labels * v)))
    r = v if loss.offset is None else v - loss.offset
    return 0.5 * float(np.dot(r, r)) / loss.scale


def f_grad(loss, v):
    """Analytic gradient of f at v (length d)."""
    v = loss._check(v)
    if loss.kind == "least_squares":
        return v - loss.targets
    if loss.kind == "logistic":
        return -loss.labels * _stable_sigmoid(-loss.labels * v)
    r = v if loss.offset is None else v - loss.offset
    return r / loss.scale


def f_hess_diag(loss, v):
    """Diagonal of the (coordinate-separable) Hessian of f at v."""
    v = loss._check(v)
    if loss.kind == "least_squares":
        return np.ones_like(v)
    if loss.kind == "logistic":
        e = np.exp(-np.abs(loss.labels * v))
        return e / (1.0 + e) ** 2
    return np.full_like(v, 1.0 / loss.scale)


class Regularizer:
    """Separable convex regularizer applied per coordinate.

    kinds:
      l2(mu):                      (mu/2) x^2
      l1(lam, support_bound):      lam |x| on [-B, B], +inf outside
      elastic_net(lam1, lam2):     lam1 |x| + (lam2/2) x^2
      box_entropy_dual():          x log x + (1-x) log(1-x) on [0, 1]

    The L1 kind ships with a finite support bound B (default 1e6 / lam) so its
    conjugate, and with it the duality gap, stays finite.
    """

    __slots__ = ("kind", "kind_code", "p1", "p2", "mu", "support_bound")

    def __init__(self, kind, kind_code, p1, p2, mu, support_bound):
        self.kind = kind
        self.kind_code = kind_code
        self.p1 = float(p1)
        self.p2 = float(p2)
        self.mu = float(mu)
        self.support_bound = float(support_bound)

    @classmethod
    def l2(cls, mu):
        if mu <= 0:
            raise InvalidInput("l2 needs mu > 0")
        return cls("l2", kernels.REG_L2, mu, 0.0, mu, np.inf)

    @classmethod
    def l1(cls, lam, support_bound=None):
        if lam <= 0:
            raise InvalidInput("l1 needs lam > 0")
        bound = 1e6 / lam if support_bound is None else float(support_bound)
        if bound <= 0:
            raise InvalidInput("l1 support bound must be positive")
        return cls("l1", kernels.REG_L1_BOUNDED, lam, bound, 0.0, bound)

    @classmethod
    def elastic_net(cls, lam1, lam2):
        if lam1 < 0 or lam2 <= 0:
            raise InvalidInput("elastic_net needs lam1 >= 0 and lam2 > 0")
        return cls("elastic_net", kernels.REG_ELASTIC_NET, lam1, lam2, lam2, np.inf)

    @classmethod
    def box_entropy_dual(cls):
        # second derivative 1/x + 1/(1-x) is minimized at x = 1/2
        return cls("box_entropy_dual", kernels.REG_BINARY_ENTROPY, 0.0, 0.0, 4.0, 1.0)


def g_eval(reg, x):
    """Regularizer value at a single coordinate (+inf outside the support)."""
    return float(kernels.g_value(reg.kind_code, reg.p1, reg.p2, float(x)))


def g_conj(reg, w):
    """Convex conjugate g*(w) at a single point."""
    return float(kernels.g_conjugate(reg.kind_code, reg.p1, reg.p2, float(w)))


def g_conj_subgrad(reg, w):
    """A point of the conjugate subdifferential, with a deterministic
    tie-break (the L1 kind returns 0 on the threshold |w| = lam)."""
    return float(kernels.g_conjugate_subgrad(reg.kind_code, reg.p1, reg.p2, float(w)))


def prox_g(reg, z, step):
    """argmin_x (x - z)^2 / (2 step) + g(x)."""
    if step <= 0:
        raise InvalidInput("prox step must be positive")
    return float(kernels.prox(reg.kind_code, reg.p1, reg.p2, float(z), float(step)))


def g_sum(reg, xs):
    """Sum of g over a coordinate vector."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    return float(kernels.g_sum(reg.kind_code, reg.p1, reg.p2, xs))


class ProblemSpec:
    """A loss plus a regularizer, with the constants the analysis needs."""

    __slots__ = ("loss", "reg")

    def __init__(self, loss, reg):
        self.loss = loss
        self.reg = reg

    @property
    def tau(self):
        return self.loss.tau

    @property
    def mu(self):
        return self.reg.mu

    @property
    def support_bound(self):
        return self.reg.support_bound


class ObjectiveValue:
    __slots__ = ("f_part", "g_part", "total")

    def __init__(self, f_part, g_part):
        self.f_part = f_part
        self.g_part = g_part
        self.total = f_part + g_part

    def __repr__(self):
        return f"ObjectiveValue(f={self.f_part!r}, g={self.g_part!r})"


def _vector_of(v):
    from .sparse import SharedVector
    return v.values if isinstance(v, SharedVector) else np.asarray(v, float)


def eval_objective(spec, matrix, alpha, v, debug=False):
    """O(alpha) = f(v) + sum_i g_i(alpha_i), with v = A @ alpha supplied.

    The caller guarantees v is consistent with alpha; with debug=True the
    product is recomputed and a drift beyond 1e-8 raises
    InconsistentSharedVector.
    """
    values = _vector_of(v)
    alpha = np.asarray(alpha, dtype=np.float64)
    if debug:
        exact = matrix.matvec(alpha)
        drift = np.linalg.norm(values - exact) / (1.0 + np.linalg.norm(exact))
        if drift > 1e-8:
            raise InconsistentSharedVector(f"relative drift {drift:.3e}")
    return ObjectiveValue(f_eval(spec.loss, values), g_sum(spec.reg, alpha))


def duality_gap(spec, matrix, alpha, v):
    """Duality-gap certificate at alpha.

    With w = grad f(A alpha) and s_i = A[:, i]^T w the gap is
    sum_i [ g*(-s_i) + g(alpha_i) + alpha_i s_i ]; every summand is
    non-negative by Fenchel-Young, and the total upper-bounds the
    suboptimality O(alpha) - O(alpha*).
    """
    values = _vector_of(v)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    w = f_grad(spec.loss, values)
    margins = matrix.rmatvec(w)
    reg = spec.reg
    total = float(kernels.gap_block(matrix.indptr, matrix.indices, matrix.data,
                                    margins, alpha, reg.kind_code, reg.p1, reg.p2))
    if not np.isfinite(total):
        raise InfiniteConjugate(
            "gap is infinite; the regularizer needs a finite support bound")
    return max(total, 0.0)
