"""Sparse complex linear algebra and the third-order overlap tensor.

Factorizations are delegated to SuperLU through scipy; the band structure
of the 1D problems keeps the fill-in linear.  The tensor type stores the
triple products <phi_k phi_j, phi_i> that drive the cubic term, keeping
only k <= j and applying the (k, j) symmetry during contraction.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(Exception):
    """Raised when a factorization meets a (numerically) singular matrix."""


PIVOT_RTOL = 1e-14


class LuFactorization:
    """LU factorization of a sparse complex matrix with reusable solves."""

    def __init__(self, matrix):
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = matrix.shape
        scale = max(np.max(np.abs(matrix.data)) if matrix.nnz else 0.0, 0.0)
        if scale == 0.0:
            raise SingularMatrixError("zero matrix")
        try:
            self._lu = spla.splu(matrix)
        except RuntimeError as exc:            # SuperLU reports exact singularity
            raise SingularMatrixError(str(exc)) from exc
        pivots = np.abs(self._lu.U.diagonal())
        if pivots.size and pivots.min() < PIVOT_RTOL * scale:
            raise SingularMatrixError(
                f"pivot {pivots.min():.3e} below {PIVOT_RTOL:.0e} * {scale:.3e}")

    def solve(self, rhs):
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.shape[0]:
            raise ValueError("right-hand side has wrong length")
        return self._lu.solve(rhs)


def lu_factor(matrix) -> LuFactorization:
    return LuFactorization(matrix)


def apply_real_lu(lu, rhs):
    """Apply a factorization of a real matrix to a possibly complex rhs.

    SuperLU solves in the dtype of the factorized matrix, so complex
    right-hand sides go through as separate real and imaginary solves.
    """
    rhs = np.asarray(rhs)
    if np.iscomplexobj(rhs):
        return lu.solve(rhs.real.copy()) + 1j * lu.solve(rhs.imag.copy())
    return lu.solve(rhs)


def hermitian_adjoint(matrix):
    """Conjugate transpose of a sparse matrix, returned in CSR layout."""
    return sp.csr_matrix(matrix).conjugate().transpose().tocsr()


class SparseTensor3:
    """Sparse symmetric-in-(k, j) order-3 tensor of real entries.

    Entries are quadruples (k, j, i, value) with the convention k <= j;
    logically the tensor also contains the mirrored (j, k, i) entry with
    the same value.  Construction canonicalizes indices, rejects duplicate
    triples and drops magnitudes at or below the tolerance (a tolerance of
    zero keeps everything).
    """

    def __init__(self, dim, k, j, i, values, tolerance=0.0):
        dim = int(dim)
        k = np.asarray(k, dtype=np.int64).ravel()
        j = np.asarray(j, dtype=np.int64).ravel()
        i = np.asarray(i, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (k.shape == j.shape == i.shape == values.shape):
            raise ValueError("index and value arrays must have equal length")
        if k.size and (min(k.min(), j.min(), i.min()) < 0
                       or max(k.max(), j.max(), i.max()) >= dim):
            raise ValueError("tensor index out of range")
        swap = k > j
        k, j = np.where(swap, j, k), np.where(swap, k, j)
        if tolerance > 0.0:
            keep = np.abs(values) > tolerance
            k, j, i, values = k[keep], j[keep], i[keep], values[keep]
        order = np.lexsort((j, k, i))
        k, j, i, values = k[order], j[order], i[order], values[order]
        flat = (i * dim + k) * dim + j
        if flat.size and np.any(np.diff(flat) == 0):
            raise ValueError("duplicate tensor entries")
        self.dim = dim
        self.k, self.j, self.i = k, j, i
        self.values = values
        self.tolerance = float(tolerance)
        self._pair_factor = np.where(k == j, 1.0, 2.0)
        self._off_diag = (k != j).astype(float)
        # Entries are sorted with i as the major key, so sums over i are
        # contiguous segment sums; precompute the segment starts once and
        # the (k, j)-symmetrized gather indices used by contract().
        self._seg_rows, self._seg_starts = np.unique(i, return_index=True)
        off = np.flatnonzero(k != j)
        kk = np.concatenate([k, j[off]])
        jj = np.concatenate([j, k[off]])
        ii = np.concatenate([i, i[off]])
        vv = np.concatenate([values, values[off]])
        order = np.argsort(ii, kind="stable")
        self._exp_k, self._exp_j = kk[order], jj[order]
        self._exp_values = vv[order]
        ii = ii[order]
        self._exp_rows, self._exp_starts = np.unique(ii, return_index=True)
        self._weighted = values * self._pair_factor

    @property
    def nnz(self):
        return self.values.size

    @classmethod
    def from_dense(cls, dense, tolerance=0.0):
        """Build from a dense (k, j, i) array that is symmetric in (k, j)."""
        dense = np.asarray(dense, dtype=float)
        if dense.ndim != 3 or len(set(dense.shape)) != 1:
            raise ValueError("expected a cubic third-order array")
        if not np.allclose(dense, dense.transpose(1, 0, 2)):
            raise ValueError("dense tensor must be symmetric in (k, j)")
        dim = dense.shape[0]
        k, j, i = np.nonzero(dense)
        keep = k <= j
        k, j, i = k[keep], j[keep], i[keep]
        return cls(dim, k, j, i, dense[k, j, i], tolerance=tolerance)

    def toarray(self):
        dense = np.zeros((self.dim,) * 3)
        dense[self.k, self.j, self.i] = self.values
        dense[self.j, self.k, self.i] = self.values
        return dense

    def contract(self, rho, u):
        """result_i = sum_{k,j} rho_k u_j T[k, j, i] over the logical tensor."""
        rho = np.asarray(rho)
        u = np.asarray(u)
        if rho.shape != (self.dim,) or u.shape != (self.dim,):
            raise ValueError("operand length does not match tensor dimension")
        out = np.zeros(self.dim, dtype=np.result_type(rho, u, float))
        if self.values.size:
            w = (self._exp_values * rho[self._exp_k]) * u[self._exp_j]
            out[self._exp_rows] = np.add.reduceat(w, self._exp_starts)
        return out

    def density_moments(self, u):
        """b_i = <|u|^2, phi_i> for u expanded in the same basis as the tensor.

        Uses the k <= j expansion of |u|^2 with the diagonal counted once:
        b_i = sum_{k<=j} Re(u_k conj(u_j)) (1 + delta_kj) T[k, j, i].
        """
        u = np.asarray(u)
        if u.shape != (self.dim,):
            raise ValueError("operand length does not match tensor dimension")
        out = np.zeros(self.dim)
        if self.values.size:
            if np.iscomplexobj(u):
                ur, ui = u.real, u.imag
                pair = ur[self.k] * ur[self.j] + ui[self.k] * ui[self.j]
            else:
                pair = u[self.k] * u[self.j]
            out[self._seg_rows] = np.add.reduceat(self._weighted * pair,
                                                  self._seg_starts)
        return out


def tensor_contract(tensor: SparseTensor3, rho, u):
    return tensor.contract(rho, u)
