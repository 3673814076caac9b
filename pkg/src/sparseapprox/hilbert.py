"""Coefficient blocks with values in a finite-dimensional Hilbert space.

A Hilbert-valued coefficient vector is stored as an N x K block whose rows
are coordinate vectors in a basis of V_h.  Inner products on V_h are given
by a Hermitian positive-definite Gram operator, which is only ever applied
to vectors: square roots of G are never formed.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DefinitenessError",
    "GramOperator",
    "v_norm",
    "row_norms",
    "block_frobenius_G",
    "block_21w_norm",
    "apply_A",
    "apply_A_adjoint",
    "save_block_csv",
    "load_block_csv",
    "save_block_npy",
    "load_block_npy",
]

_NEG_TOL = 1e-12


class DefinitenessError(ArithmeticError):
    """A quadratic form came out clearly negative."""


class GramOperator:
    """Inner-product operator on K coordinates.

    Parameters
    ----------
    matrix : ndarray, sparse matrix or None
        Hermitian positive-definite K x K matrix.  ``None`` means the
        identity of size ``dim``.
    dim : int, optional
        Required when ``matrix`` is None.
    """

    def __init__(self, matrix=None, dim: int | None = None):
        if matrix is None:
            if dim is None or dim < 1:
                raise ValueError("identity Gram operator needs a positive dim")
            self._mat = None
            self.dim = int(dim)
        else:
            if sp.issparse(matrix):
                mat = sp.csr_matrix(matrix)
            else:
                mat = np.array(matrix)
                if mat.ndim != 2:
                    raise ValueError("Gram matrix must be 2-D")
                mat.setflags(write=False)
            if mat.shape[0] != mat.shape[1]:
                raise ValueError("Gram matrix must be square")
            self._mat = mat
            self.dim = mat.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "GramOperator":
        return cls(None, dim)

    @property
    def is_identity(self) -> bool:
        return self._mat is None

    @property
    def is_sparse(self) -> bool:
        return self._mat is not None and sp.issparse(self._mat)

    @property
    def is_complex(self) -> bool:
        return self._mat is not None and np.iscomplexobj(self._mat.data if self.is_sparse else self._mat)

    @property
    def cost_hint(self) -> int:
        """Flops of one matvec."""
        if self._mat is None:
            return self.dim
        return self._mat.nnz if self.is_sparse else self.dim * self.dim

    def apply(self, x):
        """G x for a vector of length K."""
        x = np.asarray(x)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected length {self.dim}, got {x.shape[-1]}")
        if self._mat is None:
            return x.copy()
        return np.asarray(self._mat @ x)

    def apply_rows(self, X):
        """Apply G to every row of an (n, K) block."""
        X = np.asarray(X)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {X.shape[-1]}")
        if self._mat is None:
            return X.copy()
        # rows are x^T, so (G x)^T = x^T G^T
        return np.asarray((self._mat @ X.T).T)

    def dense(self) -> np.ndarray:
        if self._mat is None:
            return np.eye(self.dim)
        return self._mat.toarray() if self.is_sparse else np.array(self._mat)

    def __matmul__(self, x):
        return self.apply(x)


def _sqrt_checked(vals):
    vals = np.asarray(vals, dtype=np.float64)
    if np.any(vals < -_NEG_TOL):
        raise DefinitenessError(
            f"negative quadratic form {vals.min():.3e}; Gram operator is not positive definite")
    return np.sqrt(np.maximum(vals, 0.0))


def _row_qforms(X, G: GramOperator):
    X = np.atleast_2d(X)
    return np.real(np.einsum("ij,ij->i", np.conj(X), G.apply_rows(X)))


def v_norm(x, G: GramOperator) -> float:
    """sqrt(x^H G x)."""
    x = np.asarray(x)
    q = np.real(np.vdot(x, G.apply(x)))
    return float(_sqrt_checked(q))


def row_norms(C, G: GramOperator) -> np.ndarray:
    """V-norm of every row of a block."""
    return _sqrt_checked(_row_qforms(C, G))


def block_frobenius_G(C, G: GramOperator) -> float:
    """sqrt(sum_i c_i^H G c_i), the norm of C G^{1/2}."""
    return float(_sqrt_checked(np.sum(_row_qforms(C, G))))


def block_21w_norm(C, w, G: GramOperator) -> float:
    """Weighted sum of row V-norms."""
    w = np.asarray(w, dtype=np.float64)
    C = np.atleast_2d(C)
    if w.shape != (C.shape[0],):
        raise ValueError("one weight per row required")
    return float(np.dot(w, row_norms(C, G)))


def apply_A(A, C):
    A = np.asarray(A)
    C = np.asarray(C)
    if A.shape[1] != C.shape[0]:
        raise ValueError(f"shape mismatch: A is {A.shape}, block is {C.shape}")
    return A @ C


def apply_A_adjoint(A, Xi):
    A = np.asarray(A)
    Xi = np.asarray(Xi)
    if A.shape[0] != Xi.shape[0]:
        raise ValueError(f"shape mismatch: A is {A.shape}, block is {Xi.shape}")
    return np.conj(A.T) @ Xi


def _fmt(v) -> str:
    if np.iscomplexobj(v):
        return repr(complex(v))
    return repr(float(v))


def save_block_csv(path, C) -> None:
    """CSV with a ``N,K`` header, the sizes, then one row per line.

    Values are written with ``repr`` so floats round-trip exactly; complex
    entries use Python's ``(a+bj)`` notation.
    """
    C = np.atleast_2d(np.asarray(C))
    with open(path, "w") as fh:
        fh.write("N,K\n")
        fh.write(f"{C.shape[0]},{C.shape[1]}\n")
        for row in C:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_block_csv(path) -> np.ndarray:
    with open(path) as fh:
        if fh.readline().strip() != "N,K":
            raise ValueError("not a block CSV")
        N, K = (int(v) for v in fh.readline().strip().split(","))
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    cplx = any("j" in tok for row in rows for tok in row)
    conv = complex if cplx else float
    out = np.array([[conv(tok) for tok in row] for row in rows],
                   dtype=np.complex128 if cplx else np.float64)
    return out.reshape(N, K)


def save_block_npy(path, C) -> None:
    np.save(path, np.asarray(C), allow_pickle=False)


def load_block_npy(path) -> np.ndarray:
    return np.load(path, allow_pickle=False)
