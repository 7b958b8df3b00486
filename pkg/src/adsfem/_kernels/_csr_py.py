"""Pure-numpy CSR matvec, the fallback when the compiled kernel is absent."""

import numpy as np


def csr_matvec(indptr, indices, data, x, out):
    """out <- A @ x for a CSR matrix given by (indptr, indices, data).

    Row sums run over contiguous segments, so repeated calls with the same
    inputs give identical bits.
    """
    prod = data * x[indices]
    out[:] = 0.0
    nz = np.flatnonzero(indptr[1:] > indptr[:-1])
    if nz.size:
        out[nz] = np.add.reduceat(prod, indptr[:-1][nz])
