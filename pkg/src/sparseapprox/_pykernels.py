"""Numpy implementations of the compiled kernels.

Signatures and in-place semantics mirror ``_kernels.pyx`` exactly.
"""
import numpy as np


def _row_qforms(X, G, use_gram):
    if use_gram:
        GX = X @ G.T
        return np.real(np.sum(np.conj(X) * GX, axis=1))
    return np.real(np.sum(np.conj(X) * X, axis=1))


def _sqrt0(v):
    return np.sqrt(np.maximum(v, 0.0))


def eval_1d(basis_code, nmax, z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty((z.shape[0], nmax + 1))
    out[:, 0] = 1.0
    if nmax == 0:
        return out
    if basis_code == 0:
        out[:, 1] = np.sqrt(3.0) * z
        for j in range(1, nmax):
            out[:, j + 1] = np.sqrt(j + 1.5) / (j + 1.0) * (
                (2.0 * j + 1.0) / np.sqrt(j + 0.5) * z * out[:, j]
                - j / np.sqrt(j - 0.5) * out[:, j - 1])
    else:
        out[:, 1] = np.sqrt(2.0) * z
        if nmax >= 2:
            out[:, 2] = 2.0 * z * out[:, 1] - np.sqrt(2.0) * out[:, 0]
        for j in range(2, nmax):
            out[:, j + 1] = 2.0 * z * out[:, j] - out[:, j - 1]
    return out


def assemble(tables, indptr, coords, degs, out):
    out[...] = 1.0
    N = out.shape[1]
    lengths = np.diff(indptr)
    cols = np.repeat(np.arange(N), lengths)
    # one pass per support position, vectorized over columns sharing it
    for p in range(int(lengths.max(initial=0))):
        sel = lengths > p
        pos = indptr[:-1][sel] + p
        out[:, cols[pos]] *= tables[:, coords[pos], degs[pos]]


def objective(A, B, w, G, use_gram, lam, Z):
    reg = np.dot(w, _sqrt0(_row_qforms(Z, G, use_gram)))
    R = A @ Z - B
    return float(lam * reg + np.sqrt(max(np.sum(_row_qforms(R, G, use_gram)), 0.0)))


def _pd_loop(A, B, w, G, use_gram, lam, tau, sigma, T, C, Xi, Cbar, obj_out, record,
             callback=None):
    AH = np.conj(A.T)
    thr = tau * lam * np.asarray(w)
    for it in range(T):
        P = C - tau * (AH @ Xi)
        nrm = _sqrt0(_row_qforms(P, G, use_gram))
        scale = np.zeros_like(nrm)
        keep = (nrm > thr) & (nrm > 0.0)
        scale[keep] = (nrm[keep] - thr[keep]) / nrm[keep]
        Cn = scale[:, None] * P
        Dd = 2.0 * Cn - C
        C[...] = Cn
        Q = Xi - sigma * B + sigma * (A @ Dd)
        qn = np.sqrt(max(np.sum(_row_qforms(Q, G, use_gram)), 0.0))
        if not np.isfinite(qn):
            return 1
        Xi[...] = Q / qn if qn > 1.0 else Q
        Cbar[...] = (it * Cbar + C) / (it + 1.0)
        if record:
            obj_out[it] = objective(A, B, w, G, use_gram, lam, Cbar)
        if callback is not None:
            callback(it + 1, C, Cbar)
    return 0


def pd_iterate(A, B, w, G, use_gram, lam, tau, sigma, T, C, Xi, Cbar, obj_out):
    record = obj_out.shape[0] >= T and T > 0
    return _pd_loop(A, B, w, G, use_gram, lam, tau, sigma, T, C, Xi, Cbar,
                    obj_out, record)


def restart_loop(A, B, w, G, use_gram, lam, tau, sigma, T, R, zeta, r, s,
                 stop_factor, Ct, eps0, eps_out, a_out, obj_out, diff_out,
                 callback=None, warm_dual=False):
    eps = eps0
    Xi = np.zeros(B.shape, dtype=Ct.dtype)
    eps_out[0] = eps0
    for l in range(R):
        eps = r * (eps + zeta)
        a = s * eps
        eps_out[l + 1] = eps
        a_out[l] = a
        if a == 0.0:
            Ct[...] = 0
            obj_out[l] = objective(A, B, w, G, use_gram, lam, Ct)
            diff_out[l] = 0.0
            return l + 1, 3
        C = Ct / a
        if not warm_dual:
            Xi[...] = 0
        Cbar = np.zeros_like(Ct)
        inner_cb = None
        if callback is not None:
            def inner_cb(n, Cn, Cb, _a=a, _t0=l * T):
                callback(_t0 + n, _a * Cn, _a * Cb)
        if _pd_loop(A, B / a, w, G, use_gram, lam, tau, sigma, T, C, Xi, Cbar,
                    None, False, inner_cb) != 0:
            return l, 1
        new = a * Cbar
        diff_out[l] = np.sqrt(max(np.sum(_row_qforms(new - Ct, G, use_gram)), 0.0))
        Ct[...] = new
        obj_out[l] = objective(A, B, w, G, use_gram, lam, Ct)
        if stop_factor > 0.0 and zeta > 0.0 and diff_out[l] <= stop_factor * zeta:
            return l + 1, 2
    return R, 0
