"""The block-separable second-order surrogate and its per-worker subproblems.

One global model per round,

    M_sigma(delta; alpha) = f(v) + grad^T A delta
                            + (sigma/2) sum_k (A_k delta_k)^T D (A_k delta_k)
                            + sum_i g_i(alpha_i + delta_i),

splits into K local pieces, each anchored at (1/K) f(v).  A local piece sees
remote state only through the length-d snapshots v, grad = grad f(v) and the
Hessian diagonal D = f''(v); those are frozen at round start.  The quadratic
term always goes through the length-d image A_k delta_k, never an assembled
n_k x n_k block.
"""

import numpy as np

from . import kernels
from .errors import CoordinateOutsidePart, InconsistentSnapshots
from .objectives import g_sum


class LocalSubproblem:
    """Frozen view of one worker's share of the surrogate model.

    block holds the part's columns (a SparseColMatrix over the same rows),
    alpha_block the part's current coordinates aligned with members, and
    sigma_damp the optional extra (sigma'/2)||delta||^2 term, 0 by default.
    """

    __slots__ = ("part_id", "members", "block", "v", "grad", "hess_diag",
                 "f_value", "sigma", "sigma_damp", "alpha_block", "reg",
                 "k_parts")

    def __init__(self, part_id, members, block, v, grad, hess_diag, f_value,
                 sigma, alpha_block, reg, k_parts, sigma_damp=0.0):
        self.part_id = part_id
        self.members = np.asarray(members, dtype=np.int64)
        self.block = block
        self.v = v
        self.grad = np.asarray(grad, dtype=np.float64)
        self.hess_diag = np.asarray(hess_diag, dtype=np.float64)
        self.f_value = float(f_value)
        self.sigma = float(sigma)
        self.sigma_damp = float(sigma_damp)
        self.alpha_block = np.asarray(alpha_block, dtype=np.float64)
        self.reg = reg
        self.k_parts = int(k_parts)

    def _check_delta(self, delta_block):
        delta = np.ascontiguousarray(delta_block, dtype=np.float64)
        if delta.size != self.members.size:
            raise CoordinateOutsidePart(
                f"update has {delta.size} coordinates, part has {self.members.size}")
        return delta

    def image(self, delta_block):
        """A_k delta_k, the length-d image of a block update."""
        delta = self._check_delta(delta_block)
        return self.block.matvec(delta)

    def anchor_value(self):
        """Model value of the zero update: (1/K) f(v) + local g-sum."""
        return self.f_value / self.k_parts + g_sum(self.reg, self.alpha_block)


def build_subproblems(problem, matrix, partition, alpha, v, sigma,
                      sigma_damp=0.0, hess_diag=None):
    """Freeze one LocalSubproblem per part from the current state.

    hess_diag overrides the loss curvature (the scaled-identity baseline
    passes (1/tau) * ones here).
    """
    from .objectives import f_eval, f_grad, f_hess_diag
    from .sparse import extract_block

    v = np.asarray(v, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    grad = f_grad(problem.loss, v)
    diag = f_hess_diag(problem.loss, v) if hess_diag is None else hess_diag
    f_value = f_eval(problem.loss, v)
    return [
        LocalSubproblem(k, members, extract_block(matrix, members), v, grad,
                        diag, f_value, sigma, alpha[members], problem.reg,
                        partition.k_parts, sigma_damp=sigma_damp)
        for k, members in enumerate(partition.parts)
    ]


def model_quadratic_term(sub, delta_block, image=None):
    """delta_k^T Htilde delta_k = (A_k delta_k)^T D (A_k delta_k) >= 0."""
    if image is None:
        image = sub.image(delta_block)
    else:
        sub._check_delta(delta_block)
    return float(kernels.weighted_image_norm(sub.hess_diag, image))


def eval_local_model(sub, delta_block, image=None):
    """Value of the local model at a block update.

    Computed from the image w = A_k delta_k as
    (1/K) f(v) + grad^T w + (sigma/2) w^T D w + (sigma'/2) ||delta||^2
    + sum_{i in part} g(alpha_i + delta_i).
    """
    delta = sub._check_delta(delta_block)
    if image is None:
        image = sub.block.matvec(delta)
    quad = kernels.weighted_image_norm(sub.hess_diag, image)
    value = (sub.f_value / sub.k_parts
             + float(np.dot(sub.grad, image))
             + 0.5 * sub.sigma * quad
             + g_sum(sub.reg, sub.alpha_block + delta))
    if sub.sigma_damp != 0.0:
        value += 0.5 * sub.sigma_damp * float(np.dot(delta, delta))
    return value


def eval_global_model(subs, delta):
    """Sum of the K local model values at a full-length update.

    All subproblems must share the same sigma and shared-vector snapshot;
    anything else raises InconsistentSnapshots.
    """
    delta = np.asarray(delta, dtype=np.float64)
    first = subs[0]
    for sub in subs[1:]:
        if sub.sigma != first.sigma or sub.sigma_damp != first.sigma_damp:
            raise InconsistentSnapshots("sigma differs across subproblems")
        if sub.v is not first.v and not np.array_equal(sub.v, first.v):
            raise InconsistentSnapshots("shared-vector snapshot differs")
    return sum(eval_local_model(sub, delta[sub.members]) for sub in subs)
