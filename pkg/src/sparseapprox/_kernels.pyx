# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a numpy twin with the same signature and in-place
semantics in ``_pykernels``; ``_backend`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite
from scipy.linalg.cython_blas cimport dgemm, zgemm

cnp.import_array()

ctypedef fused scalar:
    double
    double complex


cdef inline scalar _conj(scalar x) noexcept nogil:
    if scalar is double:
        return x
    else:
        return x.conjugate()


cdef inline double _re(scalar x) noexcept nogil:
    if scalar is double:
        return x
    else:
        return x.real


cdef inline double _qform(const scalar* p, const scalar* G, Py_ssize_t K, bint use_gram) noexcept nogil:
    # Re(p^H G p) for one row of length K
    cdef Py_ssize_t k, l
    cdef double acc = 0.0
    cdef scalar t
    if not use_gram:
        for k in range(K):
            acc += _re(_conj(p[k]) * p[k])
        return acc
    for k in range(K):
        t = 0
        for l in range(K):
            t = t + G[k * K + l] * p[l]
        acc += _re(_conj(p[k]) * t)
    return acc


cdef inline double _safe_sqrt(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    return sqrt(v)


cdef inline void _gemm(char transb, int M, int Nn, int Kk, scalar alpha,
                       const scalar* a, int lda, const scalar* b, int ldb,
                       scalar beta, scalar* c, int ldc) noexcept nogil:
    # column-major c (M x Nn) = alpha * a (M x Kk) * op(b) + beta * c
    cdef char transa = c'N'
    if M == 0 or Nn == 0:
        return
    if scalar is double:
        if transb == c'C':
            transb = c'T'
        dgemm(&transa, &transb, &M, &Nn, &Kk, &alpha, <double*>a, &lda,
              <double*>b, &ldb, &beta, c, &ldc)
    else:
        zgemm(&transa, &transb, &M, &Nn, &Kk, &alpha, <double complex*>a, &lda,
              <double complex*>b, &ldb, &beta, c, &ldc)


def eval_1d(int basis_code, int nmax, const double[::1] z):
    """Table of Psi_0..Psi_nmax at each z (basis 0 = legendre, 1 = chebyshev)."""
    cdef Py_ssize_t n = z.shape[0], i, j
    out_arr = np.empty((n, nmax + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double x, jj
    with nogil:
        for i in range(n):
            x = z[i]
            out[i, 0] = 1.0
            if nmax == 0:
                continue
            if basis_code == 0:
                out[i, 1] = sqrt(3.0) * x
                for j in range(1, nmax):
                    jj = <double>j
                    out[i, j + 1] = sqrt(jj + 1.5) / (jj + 1.0) * (
                        (2.0 * jj + 1.0) / sqrt(jj + 0.5) * x * out[i, j]
                        - jj / sqrt(jj - 0.5) * out[i, j - 1])
            else:
                out[i, 1] = sqrt(2.0) * x
                if nmax >= 2:
                    out[i, 2] = 2.0 * x * out[i, 1] - sqrt(2.0) * out[i, 0]
                for j in range(2, nmax):
                    out[i, j + 1] = 2.0 * x * out[i, j] - out[i, j - 1]
    return out_arr


def assemble(const double[:, :, ::1] tables, const cnp.int64_t[::1] indptr,
             const cnp.int64_t[::1] coords, const cnp.int64_t[::1] degs,
             double[:, ::1] out):
    """out[i, j] = prod over the support of index j of tables[i, coord, deg]."""
    cdef Py_ssize_t m = out.shape[0], N = out.shape[1], i, j, p
    cdef double v
    with nogil:
        for i in range(m):
            for j in range(N):
                v = 1.0
                for p in range(indptr[j], indptr[j + 1]):
                    v = v * tables[i, coords[p], degs[p]]
                out[i, j] = v


cdef int _pd_loop(const scalar[:, ::1] A, const scalar[:, ::1] B, const double[::1] w,
                  const scalar[:, ::1] G, bint use_gram, double lam, double tau,
                  double sigma, Py_ssize_t T, scalar[:, ::1] C, scalar[:, ::1] Xi,
                  scalar[:, ::1] Cbar, double[::1] obj_out, bint record,
                  scalar[:, ::1] P, scalar[:, ::1] Dd, scalar[:, ::1] Q) noexcept nogil:
    cdef Py_ssize_t m = A.shape[0], N = A.shape[1], K = C.shape[1]
    cdef Py_ssize_t it, i, j, k
    cdef scalar a
    cdef double nrm, thr, scale, qn, fit, reg, dn
    cdef const scalar* Gp = &G[0, 0]
    for it in range(T):
        # P = C - tau A^H Xi; row-major blocks are column-major transposes,
        # so this is P^T = C^T - tau Xi^T conj(A)
        for j in range(N):
            for k in range(K):
                P[j, k] = C[j, k]
        _gemm(c'C', <int>K, <int>N, <int>m, -tau, &Xi[0, 0], <int>K, &A[0, 0], <int>N,
              1.0, &P[0, 0], <int>K)
        # row shrink; Dd = 2 C_new - C_old, C <- C_new
        for j in range(N):
            nrm = _safe_sqrt(_qform(&P[j, 0], Gp, K, use_gram))
            thr = tau * lam * w[j]
            if nrm > thr and nrm > 0.0:
                scale = (nrm - thr) / nrm
            else:
                scale = 0.0
            for k in range(K):
                a = scale * P[j, k]
                Dd[j, k] = 2.0 * a - C[j, k]
                C[j, k] = a
        # Q = Xi + sigma A Dd - sigma B
        for i in range(m):
            for k in range(K):
                Q[i, k] = Xi[i, k] - sigma * B[i, k]
        _gemm(c'N', <int>K, <int>m, <int>N, sigma, &Dd[0, 0], <int>K, &A[0, 0], <int>N,
              1.0, &Q[0, 0], <int>K)
        qn = 0.0
        for i in range(m):
            qn += _qform(&Q[i, 0], Gp, K, use_gram)
        qn = _safe_sqrt(qn)
        if not isfinite(qn):
            return 1
        scale = 1.0
        if qn > 1.0:
            scale = 1.0 / qn
        for i in range(m):
            for k in range(K):
                Xi[i, k] = scale * Q[i, k]
        # ergodic average
        dn = <double>it
        for j in range(N):
            for k in range(K):
                Cbar[j, k] = (dn * Cbar[j, k] + C[j, k]) / (dn + 1.0)
        if record:
            obj_out[it] = _objective(A, B, w, Gp, use_gram, lam, Cbar, Q)
    return 0


cdef double _objective(const scalar[:, ::1] A, const scalar[:, ::1] B, const double[::1] w,
                       const scalar* Gp, bint use_gram, double lam, const scalar[:, ::1] Z,
                       scalar[:, ::1] R) noexcept nogil:
    # R is scratch of shape (m, K)
    cdef Py_ssize_t m = A.shape[0], N = A.shape[1], K = Z.shape[1], i, j, k
    cdef double reg = 0.0, fit = 0.0
    cdef scalar a
    for j in range(N):
        reg += w[j] * _safe_sqrt(_qform(&Z[j, 0], Gp, K, use_gram))
    for i in range(m):
        for k in range(K):
            R[i, k] = -B[i, k]
    _gemm(c'N', <int>K, <int>m, <int>N, 1.0, &Z[0, 0], <int>K, &A[0, 0], <int>N,
          1.0, &R[0, 0], <int>K)
    for i in range(m):
        fit += _qform(&R[i, 0], Gp, K, use_gram)
    return lam * reg + _safe_sqrt(fit)


def pd_iterate(const scalar[:, ::1] A, const scalar[:, ::1] B, const double[::1] w,
               const scalar[:, ::1] G, bint use_gram, double lam, double tau,
               double sigma, Py_ssize_t T, scalar[:, ::1] C, scalar[:, ::1] Xi,
               scalar[:, ::1] Cbar, double[::1] obj_out):
    """Run T primal-dual steps in place; obj_out (len T or 0) gets ergodic objectives."""
    cdef Py_ssize_t m = A.shape[0], N = A.shape[1], K = C.shape[1]
    dt = np.asarray(C).dtype
    cdef scalar[:, ::1] P = np.empty((N, K), dtype=dt)
    cdef scalar[:, ::1] Dd = np.empty((N, K), dtype=dt)
    cdef scalar[:, ::1] Q = np.empty((m, K), dtype=dt)
    cdef bint record = obj_out.shape[0] >= T and T > 0
    cdef int status
    with nogil:
        status = _pd_loop(A, B, w, G, use_gram, lam, tau, sigma, T, C, Xi, Cbar,
                          obj_out, record, P, Dd, Q)
    return status


def objective(const scalar[:, ::1] A, const scalar[:, ::1] B, const double[::1] w,
              const scalar[:, ::1] G, bint use_gram, double lam, const scalar[:, ::1] Z):
    cdef scalar[:, ::1] R = np.empty((A.shape[0], Z.shape[1]), dtype=np.asarray(Z).dtype)
    cdef double val
    with nogil:
        val = _objective(A, B, w, &G[0, 0], use_gram, lam, Z, R)
    return val


def restart_loop(const scalar[:, ::1] A, const scalar[:, ::1] B, const double[::1] w,
                 const scalar[:, ::1] G, bint use_gram, double lam, double tau,
                 double sigma, Py_ssize_t T, Py_ssize_t R, double zeta, double r,
                 double s, double stop_factor, scalar[:, ::1] Ct, double eps0,
                 double[::1] eps_out, double[::1] a_out, double[::1] obj_out,
                 double[::1] diff_out):
    """Restarted scheme in place on Ct.

    Returns (restarts_done, status) with status 0 = ran all restarts,
    1 = non-finite iterate, 2 = early stop, 3 = zero scale.
    """
    cdef Py_ssize_t m = A.shape[0], N = A.shape[1], K = Ct.shape[1]
    cdef Py_ssize_t l, i, j, k
    dt = np.asarray(Ct).dtype
    cdef scalar[:, ::1] Bs = np.empty((m, K), dtype=dt)
    cdef scalar[:, ::1] C = np.empty((N, K), dtype=dt)
    cdef scalar[:, ::1] Xi = np.empty((m, K), dtype=dt)
    cdef scalar[:, ::1] Cbar = np.empty((N, K), dtype=dt)
    cdef scalar[:, ::1] P = np.empty((N, K), dtype=dt)
    cdef scalar[:, ::1] Dd = np.empty((N, K), dtype=dt)
    cdef scalar[:, ::1] Q = np.empty((m, K), dtype=dt)
    cdef double[::1] dummy = np.empty(0)
    cdef double eps = eps0, a, diff
    cdef const scalar* Gp = &G[0, 0]
    cdef int status = 0
    cdef Py_ssize_t done = 0
    eps_out[0] = eps0
    with nogil:
        for l in range(R):
            eps = r * (eps + zeta)
            a = s * eps
            eps_out[l + 1] = eps
            a_out[l] = a
            if a == 0.0:
                for j in range(N):
                    for k in range(K):
                        Ct[j, k] = 0
                obj_out[l] = _objective(A, B, w, Gp, use_gram, lam, Ct, Q)
                diff_out[l] = 0.0
                done = l + 1
                status = 3
                break
            for i in range(m):
                for k in range(K):
                    Bs[i, k] = B[i, k] / a
                    Xi[i, k] = 0
            for j in range(N):
                for k in range(K):
                    C[j, k] = Ct[j, k] / a
                    Cbar[j, k] = 0
            if _pd_loop(A, Bs, w, G, use_gram, lam, tau, sigma, T, C, Xi, Cbar,
                        dummy, False, P, Dd, Q) != 0:
                done = l
                status = 1
                break
            # P <- a * Cbar - Ct for the difference norm, then Ct <- a * Cbar
            diff = 0.0
            for j in range(N):
                for k in range(K):
                    P[j, k] = a * Cbar[j, k] - Ct[j, k]
                    Ct[j, k] = a * Cbar[j, k]
                diff += _qform(&P[j, 0], Gp, K, use_gram)
            diff_out[l] = _safe_sqrt(diff)
            obj_out[l] = _objective(A, B, w, Gp, use_gram, lam, Ct, Q)
            done = l + 1
            if stop_factor > 0.0 and zeta > 0.0 and diff_out[l] <= stop_factor * zeta:
                status = 2
                break
    return done, status
