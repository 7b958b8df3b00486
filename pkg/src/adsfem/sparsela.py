"""Sparse CSR matrices, block vectors, and the CG / MINRES iterative solvers.

Matrix-vector products go through the kernel backend chosen in
``adsfem._kernels``.  Every construction and reduction uses a fixed
summation order, so identical inputs reproduce identical bits across runs.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import csr_matvec


class NonConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, solver, iterations, residual, tol):
        self.solver = solver
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"{solver} did not converge within {iterations} iterations: "
            f"relative residual {residual:.3e}, target {tol:.3e}"
        )


class SparseMatrix:
    """Compressed sparse row matrix.

    Column indices are strictly increasing within each row.  ``indptr`` is
    int64, ``indices`` int32, ``data`` float64.
    """

    __slots__ = ("indptr", "indices", "data", "shape")

    def __init__(self, indptr, indices, data, shape):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.indptr.shape[0] != self.shape[0] + 1:
            raise ValueError("indptr length does not match the row count")
        if self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise ValueError("indptr does not span the index array")
        if self.indices.size != self.data.size:
            raise ValueError("indices and data differ in length")
        if self.indices.size and (
            self.indices.min() < 0 or self.indices.max() >= self.shape[1]
        ):
            raise ValueError("column index out of range")
        self._check_sorted()

    def _check_sorted(self):
        if self.indices.size < 2:
            return
        inc = np.diff(self.indices.astype(np.int64)) > 0
        starts = self.indptr[1:-1]
        starts = starts[(starts > 0) & (starts < self.indices.size)]
        inc[starts - 1] = True
        if not inc.all():
            raise ValueError("column indices must strictly increase within each row")

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from triplets.  Duplicates are summed in input order."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("triplet arrays differ in length")
        indptr, indices, data = _coalesce(rows, cols, vals, shape)
        return cls(indptr, indices, data, shape)

    @property
    def nnz(self):
        return self.data.size

    def to_coo(self):
        rows = np.repeat(
            np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr)
        )
        return rows, self.indices.astype(np.int64), self.data

    def to_dense(self):
        out = np.zeros(self.shape)
        rows, cols, vals = self.to_coo()
        out[rows, cols] = vals
        return out

    def matvec(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise ValueError(
                f"dimension mismatch: matrix {self.shape}, vector {x.shape}"
            )
        out = np.empty(self.shape[0])
        csr_matvec(self.indptr, self.indices, self.data, x, out)
        return out

    def __matmul__(self, x):
        return self.matvec(x)

    def matmat(self, other):
        """Sparse product self @ other as a new SparseMatrix."""
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"dimension mismatch: {self.shape} @ {other.shape}")
        rows, cols, vals = _expand_product(
            self.indptr, self.indices, self.data,
            other.indptr, other.indices, other.data,
        )
        shape = (self.shape[0], other.shape[1])
        indptr, indices, data = _coalesce(rows, cols, vals, shape)
        return SparseMatrix(indptr, indices, data, shape)

    def transpose(self):
        m, n = self.shape
        counts = np.bincount(self.indices, minlength=n)
        tptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=tptr[1:])
        rows = np.repeat(np.arange(m, dtype=np.int32), np.diff(self.indptr))
        order = np.argsort(self.indices, kind="stable")
        return SparseMatrix(tptr, rows[order], self.data[order], (n, m))

    @property
    def T(self):
        return self.transpose()

    def scaled(self, alpha):
        return SparseMatrix(self.indptr, self.indices, self.data * alpha, self.shape)

    def __add__(self, other):
        if self.shape != other.shape:
            raise ValueError("shape mismatch in sparse add")
        r1, c1, v1 = self.to_coo()
        r2, c2, v2 = other.to_coo()
        return SparseMatrix.from_coo(
            np.concatenate((r1, r2)),
            np.concatenate((c1, c2)),
            np.concatenate((v1, v2)),
            self.shape,
        )

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def diagonal(self):
        rows, cols, vals = self.to_coo()
        d = np.zeros(min(self.shape))
        hit = rows == cols
        d[rows[hit]] = vals[hit]
        return d

    def max_abs_asymmetry(self):
        """max |A - A^T| over the union sparsity pattern."""
        if self.shape[0] != self.shape[1]:
            raise ValueError("square matrix required")
        diff = self - self.transpose()
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0


def _coalesce(rows, cols, vals, shape):
    """Sort triplets into CSR and sum duplicates (stable, deterministic)."""
    order = np.lexsort((cols, rows))
    rows = rows[order]
    cols = cols[order]
    vals = vals[order]
    if rows.size:
        keep = np.empty(rows.size, dtype=bool)
        keep[0] = True
        np.logical_or(rows[1:] != rows[:-1], cols[1:] != cols[:-1], out=keep[1:])
        starts = np.flatnonzero(keep)
        vals = np.add.reduceat(vals, starts)
        rows = rows[starts]
        cols = cols[starts]
    counts = np.bincount(rows, minlength=shape[0])
    indptr = np.zeros(shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, cols.astype(np.int32), vals


def _expand_product(aptr, aind, adat, bptr, bind, bdat):
    """COO triplets of A @ B by expanding every a_ik against row k of B."""
    arows = np.repeat(np.arange(aptr.size - 1, dtype=np.int64), np.diff(aptr))
    blen = np.diff(bptr)
    out_len = blen[aind]
    total = int(out_len.sum())
    if total == 0:
        return (np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))
    rows = np.repeat(arows, out_len)
    starts = bptr[aind]
    ends = np.cumsum(out_len)
    pos = np.arange(total, dtype=np.int64) - np.repeat(ends - out_len, out_len)
    pos += np.repeat(starts, out_len)
    cols = bind[pos].astype(np.int64)
    vals = np.repeat(adat, out_len) * bdat[pos]
    return rows, cols, vals


def int_spgemm_max_abs(a_rows, a_cols, a_vals, b, n_rows):
    """max |entry| of (A @ B) computed in exact int64 arithmetic.

    A is given as integer triplets, B as an integer-valued CSR triple
    (indptr, indices, int64 data).
    """
    bptr, bind, bdat = b
    aptr = np.zeros(n_rows + 1, dtype=np.int64)
    order = np.argsort(a_rows, kind="stable")
    a_rows = a_rows[order]
    a_cols = a_cols[order]
    a_vals = a_vals[order]
    np.cumsum(np.bincount(a_rows, minlength=n_rows), out=aptr[1:])
    rows, cols, vals = _expand_product(
        aptr, a_cols, a_vals.astype(np.int64), bptr, bind, bdat.astype(np.int64)
    )
    if rows.size == 0:
        return 0
    key = rows * (int(cols.max()) + 1) + cols
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    keep = np.empty(key.size, dtype=bool)
    keep[0] = True
    keep[1:] = key[1:] != key[:-1]
    sums = np.add.reduceat(vals, np.flatnonzero(keep))
    return int(np.abs(sums).max())


def block_matrix(blocks, row_sizes, col_sizes):
    """Assemble a sparse block matrix.

    ``blocks`` maps (block_row, block_col) -> SparseMatrix.  Missing blocks
    are zero.  Iteration over sorted keys keeps the result deterministic.
    """
    row_off = np.concatenate(([0], np.cumsum(row_sizes)))
    col_off = np.concatenate(([0], np.cumsum(col_sizes)))
    rows, cols, vals = [], [], []
    for (bi, bj) in sorted(blocks):
        blk = blocks[(bi, bj)]
        if blk.shape != (row_sizes[bi], col_sizes[bj]):
            raise ValueError(f"block ({bi},{bj}) has shape {blk.shape}")
        r, c, v = blk.to_coo()
        rows.append(r + row_off[bi])
        cols.append(c + col_off[bj])
        vals.append(v)
    shape = (int(row_off[-1]), int(col_off[-1]))
    if not rows:
        return SparseMatrix.from_coo([], [], [], shape)
    return SparseMatrix.from_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), shape
    )


@dataclass
class BlockVector:
    """Contiguous unknown vector holding the (E, B, p) blocks."""

    data: np.ndarray
    n_edge: int
    n_face: int
    n_vertex: int

    def __post_init__(self):
        expected = self.n_edge + self.n_face + self.n_vertex
        if self.data.shape != (expected,):
            raise ValueError(
                f"block sizes {(self.n_edge, self.n_face, self.n_vertex)} "
                f"do not match data of length {self.data.shape}"
            )

    @classmethod
    def zeros(cls, n_edge, n_face, n_vertex):
        return cls(np.zeros(n_edge + n_face + n_vertex), n_edge, n_face, n_vertex)

    @classmethod
    def from_blocks(cls, e, b, p):
        return cls(np.concatenate((e, b, p)), e.size, b.size, p.size)

    @property
    def E(self):
        return self.data[: self.n_edge]

    @property
    def B(self):
        return self.data[self.n_edge : self.n_edge + self.n_face]

    @property
    def p(self):
        return self.data[self.n_edge + self.n_face :]

    def copy(self):
        return BlockVector(self.data.copy(), self.n_edge, self.n_face, self.n_vertex)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    residuals: list = field(default_factory=list)


def save_triplets(matrix, path):
    """Write "row col value" lines, %.17g values, for cross-implementation diffs."""
    rows, cols, vals = matrix.to_coo()
    with open(path, "w") as fh:
        for r, c, v in zip(rows, cols, vals):
            fh.write("%d %d %.17g\n" % (r, c, v))


def load_triplets(path, shape=None):
    """Read a triplet dump back into a SparseMatrix.

    Without an explicit shape the dimensions are inferred from the largest
    indices present.
    """
    raw = np.loadtxt(path, ndmin=2)
    if raw.size == 0:
        if shape is None:
            raise ValueError("cannot infer shape of an empty triplet file")
        return SparseMatrix.from_coo([], [], [], shape)
    rows = raw[:, 0].astype(np.int64)
    cols = raw[:, 1].astype(np.int64)
    vals = raw[:, 2]
    if shape is None:
        shape = (int(rows.max()) + 1, int(cols.max()) + 1)
    return SparseMatrix.from_coo(rows, cols, vals, shape)


def _jacobi_scale(A):
    d = np.abs(A.diagonal())
    d[d == 0.0] = 1.0
    return 1.0 / np.sqrt(d)


class BlockDiagonalPreconditioner:
    """SPD block-diagonal preconditioner applied by inner CG solves.

    Each block must be symmetric positive definite; applying the
    preconditioner solves every block to ``inner_tol`` relative residual,
    tight enough that MINRES sees an effectively fixed linear operator.
    """

    def __init__(self, blocks, inner_tol=1e-8):
        self.blocks = list(blocks)
        self.inner_tol = inner_tol
        self.offsets = np.concatenate(
            ([0], np.cumsum([b.shape[0] for b in self.blocks]))
        )

    @property
    def shape(self):
        n = int(self.offsets[-1])
        return (n, n)

    def __call__(self, r):
        out = np.empty_like(r)
        for blk, lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out[lo:hi], _ = cg_solve(
                blk, r[lo:hi], tol=self.inner_tol, jacobi=True
            )
        return out


def cg_solve(A, b, tol=1e-12, maxit=None, jacobi=False, x0=None,
             record_residuals=False):
    """Conjugate gradients for SPD systems.

    Stops when the true residual satisfies ||b - Ax|| <= tol * ||b||.
    Returns (x, SolveInfo).  Raises NonConvergenceError past ``maxit``
    (default 10n) iterations.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    if maxit is None:
        maxit = 10 * n
    bnorm = np.linalg.norm(b)
    info = SolveInfo(0, 0.0)
    if bnorm == 0.0:
        return np.zeros(n), info
    scale = _jacobi_scale(A) if jacobi else None

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A.matvec(x) if x0 is not None else b.copy()
    z = r * scale**2 if jacobi else r
    p = z.copy()
    rz = float(r @ z)
    rnorm = np.linalg.norm(r)
    it = 0
    while True:
        if rnorm <= tol * bnorm:
            r = b - A.matvec(x)  # guard against recurrence drift
            rnorm = np.linalg.norm(r)
            if rnorm <= tol * bnorm:
                break
            z = r * scale**2 if jacobi else r
            p = z.copy()
            rz = float(r @ z)
        if it >= maxit:
            raise NonConvergenceError("CG", it, rnorm / bnorm, tol)
        Ap = A.matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise ValueError("CG stalled: matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r * scale**2 if jacobi else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.linalg.norm(r)
        it += 1
        if record_residuals:
            info.residuals.append(rnorm / bnorm)
    info.iterations = it
    info.residual = rnorm / bnorm
    return x, info


def minres_solve(A, b, tol=1e-10, maxit=None, jacobi=False, x0=None,
                 preconditioner=None, record_residuals=False):
    """MINRES for symmetric (possibly indefinite) systems.

    Stops when the true residual satisfies ||b - Ax|| <= tol * ||b||; the
    Lanczos recurrence is restarted from the current iterate when its
    residual estimate converges before the true residual does.  Returns
    (x, SolveInfo).

    ``jacobi`` switches on diagonal scaling; ``preconditioner`` may supply
    any SPD operator as a callable r -> approx(P^{-1} r) instead.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    if maxit is None:
        maxit = 10 * n
    bnorm = np.linalg.norm(b)
    info = SolveInfo(0, 0.0)
    if bnorm == 0.0:
        return np.zeros(n), info

    if preconditioner is not None:
        psolve = preconditioner
    elif jacobi:
        inv_diag = _jacobi_scale(A) ** 2
        psolve = lambda r: r * inv_diag
    else:
        psolve = None
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    total_it = 0
    rnorm = np.linalg.norm(b - A.matvec(x))
    for _ in range(25):  # restart rounds; usually one suffices
        if rnorm <= tol * bnorm:
            break
        if total_it >= maxit:
            raise NonConvergenceError("MINRES", total_it, rnorm / bnorm, tol)
        r = b - A.matvec(x)
        # each cycle must shrink its own (preconditioned) residual by the
        # factor the true residual still needs, with a safety margin
        reduction = 0.25 * (tol * bnorm) / rnorm
        x, cycle_it = _minres_cycle(
            A, r, x, psolve, reduction, maxit - total_it, info,
            record_residuals, bnorm,
        )
        total_it += cycle_it
        new_rnorm = np.linalg.norm(b - A.matvec(x))
        if new_rnorm >= rnorm and new_rnorm > tol * bnorm:
            raise NonConvergenceError("MINRES", total_it, new_rnorm / bnorm, tol)
        rnorm = new_rnorm
    else:
        if rnorm > tol * bnorm:
            raise NonConvergenceError("MINRES", total_it, rnorm / bnorm, tol)
    info.iterations = total_it
    info.residual = rnorm / bnorm
    return x, info


def _minres_cycle(A, r0, x, psolve, reduction, maxit, info, record, bnorm):
    """One (preconditioned) MINRES sweep solving A dx = r0; returns x + dx.

    Stops once the recurrence residual estimate has dropped by ``reduction``
    relative to its start; the caller re-checks the true residual.
    """
    eps = np.finfo(float).eps
    y = psolve(r0) if psolve is not None else r0.copy()
    beta1 = float(r0 @ y)
    if beta1 <= 0.0:
        return x, 0
    beta1 = np.sqrt(beta1)
    target = reduction * beta1

    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    r1 = r0.copy()
    r2 = r0.copy()
    w = np.zeros_like(r0)
    w2 = np.zeros_like(r0)
    it = 0
    while it < maxit:
        it += 1
        s = 1.0 / beta
        v = s * y
        y = A.matvec(v)
        if it >= 2:
            y -= (beta / oldb) * r1
        alfa = float(v @ y)
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = psolve(r2) if psolve is not None else r2
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0.0:
            raise ValueError("MINRES breakdown: preconditioner is not positive definite")
        beta = np.sqrt(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.sqrt(gbar * gbar + beta * beta), eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) * (1.0 / gamma)
        x = x + phi * w
        if record:
            info.residuals.append(phibar / bnorm)
        if phibar <= target:
            break
    return x, it
