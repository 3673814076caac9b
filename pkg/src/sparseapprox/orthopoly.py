"""Orthonormal Legendre/Chebyshev polynomials and the sampling matrix.

Both families are orthonormal with respect to a probability measure on
[-1, 1]: uniform for Legendre, arcsine (Chebyshev) for Chebyshev.  Tensor
products are taken over the support of a multi-index only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from .index_sets import MultiIndexSet

__all__ = [
    "BASES",
    "DomainError",
    "Weights",
    "MeasurementMatrix",
    "NormEstimate",
    "norm_exponent",
    "eval_1d",
    "eval_tensor",
    "intrinsic_weights",
    "evaluation_matrix",
    "build_measurement_matrix",
    "operator_norm_upper_bound",
    "operator_norm_estimate",
]

BASES = ("legendre", "chebyshev")
_BASIS_CODE = {"legendre": 0, "chebyshev": 1}
_SLACK = 1e-14


class DomainError(ValueError):
    """A point lies outside [-1, 1] beyond the rounding slack."""


def _check_basis(basis: str) -> int:
    try:
        return _BASIS_CODE[basis]
    except KeyError:
        raise ValueError(f"unknown basis {basis!r}; expected one of {BASES}") from None


def norm_exponent(basis: str) -> float:
    """Exponent alpha in the bound ||A|| <= Theta**alpha."""
    _check_basis(basis)
    return 1.0 if basis == "legendre" else math.log(3.0) / math.log(4.0)


def _clamp(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.size and (np.abs(z).max() > 1.0 + _SLACK or not np.isfinite(z).all()):
        raise DomainError("points must lie in [-1, 1]")
    return np.clip(z, -1.0, 1.0)


def eval_1d(basis: str, nmax: int, z, backend: str = "auto") -> np.ndarray:
    """Values Psi_0(z), ..., Psi_nmax(z).

    Returns shape ``(nmax + 1,)`` for scalar ``z`` and ``(len(z), nmax + 1)``
    for a 1-D array.
    """
    code = _check_basis(basis)
    if nmax < 0:
        raise ValueError("nmax must be nonnegative")
    scalar = np.ndim(z) == 0
    zz = np.ascontiguousarray(_clamp(np.atleast_1d(z)).ravel())
    out = _backend.get(backend).eval_1d(code, int(nmax), zz)
    out = np.asarray(out)
    return out[0] if scalar else out


def eval_tensor(basis: str, nu, y) -> float:
    """Psi_nu(y) as a product over the support of nu."""
    nu = np.asarray(nu, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    if nu.shape != y.shape:
        raise ValueError(f"dimension mismatch: index {nu.shape} vs point {y.shape}")
    val = 1.0
    for k in np.nonzero(nu)[0]:
        val *= eval_1d(basis, int(nu[k]), y[k])[-1]
    return float(val)


class Weights:
    """Positive weights aligned with the ordering of a :class:`MultiIndexSet`."""

    def __init__(self, index_set: MultiIndexSet, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(index_set),):
            raise ValueError("weights must align with the index set")
        values.setflags(write=False)
        self.index_set = index_set
        self.values = values

    def __getitem__(self, nu) -> float:
        return float(self.values[self.index_set.position(nu)])

    def __len__(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def intrinsic_weights(basis: str, index_set: MultiIndexSet) -> Weights:
    """Sup-norms of the tensor basis functions."""
    _check_basis(basis)
    idx = index_set.indices
    if basis == "legendre":
        vals = np.prod(np.sqrt(2.0 * idx + 1.0), axis=1)
    else:
        vals = 2.0 ** (np.count_nonzero(idx, axis=1) / 2.0)
    return Weights(index_set, vals)


def _support_csr(index_set: MultiIndexSet):
    idx = index_set.indices
    rows, cols = np.nonzero(idx)
    counts = np.bincount(rows, minlength=idx.shape[0])
    indptr = np.zeros(idx.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, cols.astype(np.int64), idx[rows, cols].astype(np.int64)


def evaluation_matrix(points, index_set: MultiIndexSet, basis: str,
                      backend: str = "auto") -> np.ndarray:
    """Unscaled matrix of Psi_{nu_j}(y_i), built from 1-D recurrence tables."""
    code = _check_basis(basis)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    active = index_set.active_dim
    if pts.shape[1] < active:
        raise ValueError(
            f"points have {pts.shape[1]} coordinates but the index set uses {active}")
    kern = _backend.get(backend)
    m, N = pts.shape[0], len(index_set)
    nmax = index_set.max_degree
    z = np.ascontiguousarray(_clamp(pts[:, :max(active, 1)]).ravel())
    tables = np.asarray(kern.eval_1d(code, nmax, z)).reshape(m, max(active, 1), nmax + 1)
    indptr, coords, degs = _support_csr(index_set)
    out = np.empty((m, N), dtype=np.float64)
    kern.assemble(np.ascontiguousarray(tables), indptr, coords, degs, out)
    return out


@dataclass(frozen=True)
class MeasurementMatrix:
    """Normalized sampling matrix with entries Psi_{nu_j}(y_i) / sqrt(m)."""

    entries: np.ndarray
    basis: str
    index_hash: str = ""
    points_id: str = ""

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("m,N,basis\n")
            fh.write(f"{self.m},{self.N},{self.basis}\n")
            for row in self.entries:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "MeasurementMatrix":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "m,N,basis":
                raise ValueError("not a measurement-matrix CSV")
            m, N, basis = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2).reshape(int(m), int(N))
        return cls(data, basis)


def build_measurement_matrix(points, index_set: MultiIndexSet, basis: str,
                             backend: str = "auto", points_id: str = "") -> MeasurementMatrix:
    """Assemble the normalized m x N sampling matrix."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 1:
        raise ValueError("need at least one sample point")
    vals = evaluation_matrix(pts, index_set, basis, backend=backend)
    vals /= math.sqrt(pts.shape[0])
    vals.setflags(write=False)
    return MeasurementMatrix(vals, basis, index_set.ordering_hash(), points_id)


def operator_norm_upper_bound(index_set: MultiIndexSet, basis: str) -> float:
    """Theta**alpha with Theta the size of the (lower) index set."""
    return float(len(index_set)) ** norm_exponent(basis)


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int


def operator_norm_estimate(A, tol: float = 1e-6, maxiter: int = 5000, seed: int = 0,
                           full_output: bool = False):
    """Largest singular value by power iteration on A^H A.

    The estimate is sqrt of the Rayleigh quotient ||A v||^2, which never
    exceeds the true norm.  Iteration stops once successive estimates
    agree to ``tol * 1e-3`` relative, which keeps the returned value within
    ``tol`` of the truth for any reasonable spectral gap.  If ``maxiter`` is hit the best
    estimate is returned with a warning (and ``converged=False`` when
    ``full_output`` is set).
    """
    A = np.asarray(A)
    if A.size == 0 or not np.any(A):
        raise ValueError("operator norm estimate needs a nonzero matrix")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    if np.iscomplexobj(A):
        v = v + 1j * rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        Av = A @ v
        # Rayleigh quotient of A^H A: error is quadratic in the vector error
        new = float(np.linalg.norm(Av))
        u = np.conj(A.T) @ Av
        nu = np.linalg.norm(u)
        if nu == 0.0:
            v = rng.standard_normal(A.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = u / nu
        if abs(new - est) <= 1e-3 * tol * new:
            est = new
            converged = True
            break
        est = new
    if not converged:
        warnings.warn(f"power iteration did not converge in {maxiter} steps; "
                      f"best estimate {est:.6g}", RuntimeWarning, stacklevel=2)
    if full_output:
        return NormEstimate(est, converged, it)
    return est
