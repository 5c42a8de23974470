"""Data ingestion (LIBSVM text format) and seeded synthetic problems."""

import numpy as np

from .errors import EmptyDataset, InvalidSpec, ParseError
from .sparse import SparseColMatrix, load_columns

LAYOUTS = ("primal", "dual")


def parse_libsvm(path, layout="primal", normalize=True):
    """Read a LIBSVM text file into a column-sparse matrix plus labels.

    Lines look like `label idx:val idx:val ...` with 1-based feature
    indices.  layout "primal" puts features in columns (rows are examples);
    layout "dual" puts examples in columns (rows are features).  Labels map
    to {-1, +1}: anything non-positive becomes -1.  With normalize=True every
    non-empty column is scaled to unit Euclidean norm.
    """
    if layout not in LAYOUTS:
        raise InvalidSpec(f"unknown layout {layout!r}")
    examples = []
    max_feature = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise ParseError(lineno, f"bad label {tokens[0]!r}")
            pairs = []
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(lineno, f"expected idx:val, got {tok!r}")
                try:
                    idx = int(idx)
                    val = float(val)
                except ValueError:
                    raise ParseError(lineno, f"bad entry {tok!r}")
                if idx < 1:
                    raise ParseError(lineno, f"feature index {idx} < 1")
                max_feature = max(max_feature, idx)
                pairs.append((idx - 1, val))
            examples.append((label, pairs))
    if not examples:
        raise EmptyDataset(f"no examples in {path}")
    labels = np.array([1.0 if lab > 0 else -1.0 for lab, _ in examples])
    triplets = []
    if layout == "primal":
        d, n = len(examples), max_feature
        for row, (_, pairs) in enumerate(examples):
            for feat, val in pairs:
                triplets.append((feat, row, val))
    else:
        d, n = max_feature, len(examples)
        for col, (_, pairs) in enumerate(examples):
            for feat, val in pairs:
                triplets.append((col, feat, val))
    matrix = load_columns(triplets, d, n)
    if normalize:
        matrix = normalize_columns(matrix)
    return matrix, labels


def normalize_columns(matrix):
    """Rescale every non-empty column to unit Euclidean norm."""
    data = matrix.data.copy()
    for i in range(matrix.n_cols):
        lo, hi = matrix.indptr[i], matrix.indptr[i + 1]
        if hi > lo:
            norm = np.sqrt(np.dot(data[lo:hi], data[lo:hi]))
            if norm > 0:
                data[lo:hi] /= norm
    return SparseColMatrix(matrix.n_rows, matrix.n_cols, matrix.indptr,
                           matrix.indices, data)


class SyntheticSpec:
    """Seeded recipe for a synthetic instance.

    density is the expected fraction of non-zeros per column; coherence in
    [0, 1) mixes a shared direction into every column's support to induce
    cross-block correlation; sparsity is the fraction of non-zero planted
    coordinates; noise scales the additive Gaussian noise on regression
    targets.  task is "regression", "classification" (labels sampled from
    the planted model) or "dual_classification" (columns are label-scaled
    examples; the planted vector lives in row space).
    """

    __slots__ = ("d", "n", "density", "coherence", "sparsity", "noise",
                 "seed", "task")

    def __init__(self, d, n, density=1.0, coherence=0.0, sparsity=0.1,
                 noise=0.0, seed=0, task="regression"):
        if d < 1 or n < 1:
            raise InvalidSpec("d and n must be at least 1")
        if not 0.0 < density <= 1.0:
            raise InvalidSpec(f"density must be in (0, 1], got {density}")
        if not 0.0 <= coherence < 1.0:
            raise InvalidSpec("coherence must be in [0, 1)")
        if not 0.0 < sparsity <= 1.0:
            raise InvalidSpec("sparsity must be in (0, 1]")
        if noise < 0.0:
            raise InvalidSpec("noise must be non-negative")
        if task not in ("regression", "classification", "dual_classification"):
            raise InvalidSpec(f"unknown task {task!r}")
        self.d = int(d)
        self.n = int(n)
        self.density = float(density)
        self.coherence = float(coherence)
        self.sparsity = float(sparsity)
        self.noise = float(noise)
        self.seed = int(seed)
        self.task = task


def _random_columns(spec, rng):
    nnz_per_col = max(1, int(round(spec.density * spec.d)))
    shared = rng.standard_normal(spec.d)
    shared /= np.linalg.norm(shared)
    triplets = []
    for col in range(spec.n):
        if nnz_per_col == spec.d:
            rows = np.arange(spec.d)
        else:
            rows = np.sort(rng.choice(spec.d, size=nnz_per_col, replace=False))
        vals = rng.standard_normal(nnz_per_col)
        if spec.coherence > 0.0:
            vals = (np.sqrt(1.0 - spec.coherence) * vals
                    + np.sqrt(spec.coherence) * np.sqrt(spec.d / nnz_per_col)
                    * shared[rows])
        norm = np.linalg.norm(vals)
        if norm == 0.0:
            vals[0] = 1.0
            norm = 1.0
        vals /= norm
        triplets.extend((col, int(r), float(v)) for r, v in zip(rows, vals))
    return load_columns(triplets, spec.d, spec.n)


def generate_synthetic(spec):
    """Build (matrix, labels_or_targets, planted) for a SyntheticSpec.

    Columns are seeded sparse Gaussians normalized to unit norm.  Regression
    targets are A @ planted + noise; classification labels are sampled with
    probability sigmoid of the planted margin.  For "dual_classification"
    the returned matrix columns are y_i x_i and `planted` is the row-space
    vector that generated the labels.
    """
    rng = np.random.default_rng(spec.seed)
    matrix = _random_columns(spec, rng)
    if spec.task == "dual_classification":
        planted = rng.standard_normal(spec.d)
        planted *= 3.0 / np.linalg.norm(planted)
        margins = matrix.rmatvec(planted) * np.sqrt(spec.d)
        probs = 1.0 / (1.0 + np.exp(-margins))
        labels = np.where(rng.random(spec.n) < probs, 1.0, -1.0)
        data = matrix.data.copy()
        for col in range(spec.n):
            lo, hi = matrix.indptr[col], matrix.indptr[col + 1]
            data[lo:hi] *= labels[col]
        scaled = SparseColMatrix(spec.d, spec.n, matrix.indptr, matrix.indices,
                                 data)
        return scaled, labels, planted

    support_size = max(1, int(round(spec.sparsity * spec.n)))
    support = rng.choice(spec.n, size=support_size, replace=False)
    planted = np.zeros(spec.n)
    planted[support] = rng.standard_normal(support_size)
    margins = matrix.matvec(planted)
    if spec.task == "classification":
        scale = np.std(margins)
        if scale > 0:
            margins = margins * (3.0 / scale)
            planted = planted * (3.0 / scale)
        probs = 1.0 / (1.0 + np.exp(-margins))
        labels = np.where(rng.random(spec.d) < probs, 1.0, -1.0)
        return matrix, labels, planted
    targets = margins + spec.noise * rng.standard_normal(spec.d)
    return matrix, targets, planted
