"""Column-sparse matrix storage, column partitioning and shared-vector updates.

Everything downstream is column indexed: workers own column blocks, the local
solver touches one column at a time, and the d-dimensional product vector
v = A @ alpha is maintained incrementally from per-block images.
"""

import numpy as np

from . import kernels
from .errors import (CoordinateOutsidePart, DuplicateEntry, IndexOutOfRange,
                     InvalidK)


class SparseColMatrix:
    """Immutable sparse matrix in CSC layout (d rows, n columns).

    Row indices are strictly increasing within each column and no explicit
    zeros are stored.
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data")

    def __init__(self, n_rows, n_cols, indptr, indices, data):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        for a in (self.indptr, self.indices, self.data):
            a.setflags(write=False)

    @property
    def nnz(self):
        return self.indices.size

    def column(self, i):
        """Return (row_indices, values) views of column i."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def matvec(self, u):
        """Dense A @ u."""
        u = np.asarray(u, dtype=np.float64)
        return kernels.accumulate_columns(self.indptr, self.indices, self.data,
                                          u, self.n_rows)

    def rmatvec(self, y):
        """Dense A.T @ y."""
        y = np.asarray(y, dtype=np.float64)
        return kernels.column_dots(self.indptr, self.indices, self.data, y)

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_cols):
            rows, vals = self.column(i)
            out[rows, i] = vals
        return out


def load_columns(triplets, d, n):
    """Build a SparseColMatrix from (col, row, value) triplets.

    Triplets are grouped per column and sorted by row; duplicate (col, row)
    positions raise DuplicateEntry, out-of-range indices raise IndexOutOfRange.
    Zero values are dropped.
    """
    d = int(d)
    n = int(n)
    if d < 0 or n < 0:
        raise IndexOutOfRange(f"negative dimensions d={d}, n={n}")
    per_col = [[] for _ in range(n)]
    for col, row, val in triplets:
        col = int(col)
        row = int(row)
        if not 0 <= col < n:
            raise IndexOutOfRange(f"column {col} outside [0, {n})")
        if not 0 <= row < d:
            raise IndexOutOfRange(f"row {row} outside [0, {d})")
        per_col[col].append((row, float(val)))

    indptr = np.zeros(n + 1, dtype=np.int64)
    rows_out = []
    vals_out = []
    for col, entries in enumerate(per_col):
        entries.sort(key=lambda e: e[0])
        prev = -1
        for row, val in entries:
            if row == prev:
                raise DuplicateEntry(f"duplicate entry at (col={col}, row={row})")
            prev = row
            if val != 0.0:
                rows_out.append(row)
                vals_out.append(val)
        indptr[col + 1] = len(rows_out)
    return SparseColMatrix(d, n, indptr,
                           np.asarray(rows_out, dtype=np.int64),
                           np.asarray(vals_out, dtype=np.float64))


class Partition:
    """Disjoint split of the n coordinates into K non-empty parts."""

    __slots__ = ("k_parts", "assignment", "parts")

    def __init__(self, parts, n):
        self.k_parts = len(parts)
        self.parts = [np.ascontiguousarray(p, dtype=np.int64) for p in parts]
        assignment = np.full(n, -1, dtype=np.int64)
        for k, members in enumerate(self.parts):
            assignment[members] = k
            members.setflags(write=False)
        self.assignment = assignment
        self.assignment.setflags(write=False)

    def __len__(self):
        return self.k_parts


def partition_columns(n, k_parts, strategy="contiguous", seed=None):
    """Split columns 0..n-1 into k_parts parts.

    strategy is one of "contiguous" (blocks of size ceil(n/K) then floor(n/K)),
    "round_robin" (i goes to part i mod K) or "seeded_random" (seeded shuffle,
    then contiguous split; deterministic per seed).
    """
    n = int(n)
    k_parts = int(k_parts)
    if k_parts < 1 or k_parts > n:
        raise InvalidK(f"K={k_parts} not in [1, {n}]")
    if strategy == "contiguous":
        order = np.arange(n, dtype=np.int64)
    elif strategy == "round_robin":
        parts = [np.arange(k, n, k_parts, dtype=np.int64) for k in range(k_parts)]
        return Partition(parts, n)
    elif strategy == "seeded_random":
        if seed is None:
            raise InvalidK("seeded_random strategy requires a seed")
        order = np.random.default_rng(seed).permutation(n).astype(np.int64)
    else:
        raise InvalidK(f"unknown partition strategy {strategy!r}")
    base = n // k_parts
    extra = n % k_parts
    parts = []
    start = 0
    for k in range(k_parts):
        size = base + (1 if k < extra else 0)
        parts.append(np.sort(order[start:start + size]))
        start += size
    return Partition(parts, n)


def extract_block(matrix, members):
    """New SparseColMatrix holding the given columns (same row space)."""
    members = np.asarray(members, dtype=np.int64)
    indptr = np.zeros(members.size + 1, dtype=np.int64)
    chunks_idx = []
    chunks_val = []
    for j, col in enumerate(members):
        rows, vals = matrix.column(col)
        chunks_idx.append(rows)
        chunks_val.append(vals)
        indptr[j + 1] = indptr[j] + rows.size
    indices = np.concatenate(chunks_idx) if chunks_idx else np.empty(0, np.int64)
    data = np.concatenate(chunks_val) if chunks_val else np.empty(0, np.float64)
    return SparseColMatrix(matrix.n_rows, members.size, indptr, indices, data)


def block_matvec(matrix, members, u_block):
    """Sum of u_i * A[:, i] over the part's coordinates.

    u_block is either a dense array aligned with `members` or a mapping from
    global coordinate to value; coordinates outside the part raise
    CoordinateOutsidePart.
    """
    members = np.asarray(members, dtype=np.int64)
    if isinstance(u_block, dict):
        u = np.zeros(members.size)
        pos = {int(c): j for j, c in enumerate(members)}
        for coord, val in u_block.items():
            j = pos.get(int(coord))
            if j is None:
                raise CoordinateOutsidePart(f"coordinate {coord} not in part")
            u[j] = val
    else:
        u = np.asarray(u_block, dtype=np.float64)
        if u.size != members.size:
            raise CoordinateOutsidePart(
                f"expected {members.size} coefficients, got {u.size}")
    out = np.zeros(matrix.n_rows)
    for j, col in enumerate(members):
        if u[j] == 0.0:
            continue
        rows, vals = matrix.column(col)
        out[rows] += u[j] * vals
    return out


def column_norms(matrix):
    """Euclidean norm of every column plus the bound R = max_i ||A[:, i]||."""
    norms = np.empty(matrix.n_cols)
    for i in range(matrix.n_cols):
        _, vals = matrix.column(i)
        norms[i] = np.sqrt(np.dot(vals, vals))
    r_bound = float(norms.max()) if matrix.n_cols else 0.0
    return norms, r_bound


class BlockNormConstant:
    """max_k ||A_[k]||^2 estimated two ways.

    spectral is the power-iteration value of the largest block operator norm
    squared; frobenius is the cheap upper bound via squared Frobenius norms.
    """

    __slots__ = ("spectral", "frobenius", "per_block_spectral", "per_block_frobenius")

    def __init__(self, spectral, frobenius, per_block_spectral, per_block_frobenius):
        self.spectral = spectral
        self.frobenius = frobenius
        self.per_block_spectral = per_block_spectral
        self.per_block_frobenius = per_block_frobenius


def block_norm_constant(matrix, partition, tol=1e-6, max_iters=1000, seed=0):
    """Estimate c_A = max_k ||A_[k]||^2 over the partition's blocks.

    Power iteration runs on A_[k]^T A_[k] until the Rayleigh quotient is
    stable to relative tolerance `tol`; the Frobenius bound is reported
    alongside as a conservative alternative.
    """
    spec = np.zeros(partition.k_parts)
    frob = np.zeros(partition.k_parts)
    rng = np.random.default_rng(seed)
    for k, members in enumerate(partition.parts):
        block = extract_block(matrix, members)
        frob[k] = float(np.dot(block.data, block.data))
        if block.nnz == 0:
            continue
        u = rng.standard_normal(block.n_cols)
        u /= np.linalg.norm(u)
        lam = 0.0
        for _ in range(max_iters):
            y = block.rmatvec(block.matvec(u))
            lam_new = float(np.dot(u, y))
            norm_y = np.linalg.norm(y)
            if norm_y == 0.0:
                lam_new = 0.0
                break
            u = y / norm_y
            if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
                lam = lam_new
                break
            lam = lam_new
        spec[k] = lam
    return BlockNormConstant(float(spec.max()), float(frob.max()), spec, frob)


class SharedVector:
    """The master-owned dense product vector v = A @ alpha.

    Workers only ever see read-only snapshots; all mutation goes through
    apply_delta so the invariant v == A @ alpha is easy to audit.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = np.array(values, dtype=np.float64)

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros(d))

    @classmethod
    def from_product(cls, matrix, alpha):
        return cls(matrix.matvec(alpha))

    def apply_delta(self, delta):
        self.values += delta

    def snapshot(self):
        view = self.values.view()
        view.setflags(write=False)
        return view

    def drift_from(self, matrix, alpha):
        """Relative distance between the maintained values and A @ alpha."""
        exact = matrix.matvec(alpha)
        return float(np.linalg.norm(self.values - exact)
                     / (1.0 + np.linalg.norm(exact)))
