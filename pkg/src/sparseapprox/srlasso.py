"""Primal-dual solvers for the Hilbert-valued weighted square-root LASSO.

The problem is

    minimize_Z  lam * sum_j w_j ||z_j||_V  +  ||(A Z - B) G^{1/2}||_F

over N x K blocks Z.  :func:`primal_dual` runs the Chambolle-Pock iteration
and returns its ergodic average; :func:`restarted` wraps it in the
rescaling restart scheme, which converges linearly down to a floor set by
the tolerance ``zeta``.

Notes
-----
Small problems with a dense Gram matrix run inside the compiled kernel
(one call for the whole restart loop).  Everything else, including any run
with a callback, uses the numpy implementation.
"""
from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend, _pykernels
from .hilbert import GramOperator, block_frobenius_G, row_norms
from .index_sets import MultiIndexSet
from .orthopoly import norm_exponent, operator_norm_estimate

__all__ = [
    "DivergenceError",
    "StepSizeWarning",
    "SolverConfig",
    "SolveReport",
    "PDResult",
    "objective",
    "prox_shrink",
    "proj_dual_ball",
    "primal_dual",
    "restarted",
    "restarted_with_stop",
    "default_config",
    "theory_rate",
]

# m*N*K at or below which the compiled loop beats BLAS-backed numpy
COMPILED_SIZE_LIMIT = 50_000_000


class DivergenceError(ArithmeticError):
    """Non-finite iterate; ``report`` holds diagnostics up to the failure."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StepSizeWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the (restarted) primal-dual iteration.

    Parameters
    ----------
    lam : float
        Regularization weight.
    tau, sigma : float
        Primal and dual step sizes.
    T : int
        Inner iterations per restart (or total iterations when unrestarted).
    R : int
        Number of restarts.
    r : float
        Contraction factor of the tolerance schedule, in (0, 1).
    s : float
        Scale constant; restart l rescales by ``s * eps_{l+1}``.
    zeta : float
        Tolerance floor of the schedule.
    stop_factor : float
        Early stop when consecutive restart outputs differ by at most
        ``stop_factor * zeta``.
    warm_dual : bool
        Keep the dual variable across restarts instead of resetting to 0.
    norm_A : float or None
        Operator norm used to pick the steps, if known.
    mode : str
        Provenance tag (``"practical"``, ``"theoretical"`` or ``"custom"``).
    """

    lam: float
    tau: float
    sigma: float
    T: int
    R: int = 1
    r: float = math.exp(-1.0)
    s: float = 1.0
    zeta: float = 0.0
    stop_factor: float = 5.0
    warm_dual: bool = False
    norm_A: float | None = None
    mode: str = "custom"

    def __post_init__(self):
        if not (self.lam > 0 and self.tau > 0 and self.sigma > 0):
            raise ValueError("lam, tau and sigma must be positive")
        if self.T < 0 or self.R < 0:
            raise ValueError("T and R must be nonnegative")
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must lie in (0, 1)")
        if self.s <= 0:
            raise ValueError("s must be positive")
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if self.stop_factor <= 0:
            raise ValueError("stop_factor must be positive")

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class SolveReport:
    """Diagnostics of one solve.

    For restarted runs the lists are indexed by restart: entry ``l`` of
    ``epsilon`` is eps_l (so it has one more entry than ``a``), and
    ``objective``/``iterate_diff``/``inner_iters_cum`` describe the output
    of restart ``l + 1``.  Plain primal-dual runs fill ``inner_objective``.
    """

    objective: list = field(default_factory=list)
    iterate_diff: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    a: list = field(default_factory=list)
    inner_iters_cum: list = field(default_factory=list)
    inner_objective: np.ndarray | None = None
    initial_objective: float | None = None
    wall_clock: float = 0.0
    termination: str = ""
    backend: str = ""

    @property
    def total_iterations(self) -> int:
        return self.inner_iters_cum[-1] if self.inner_iters_cum else 0

    def rows(self):
        nan = float("nan")
        if self.epsilon:
            yield (0, 0, self.initial_objective if self.initial_objective is not None else nan,
                   nan, self.epsilon[0], nan)
            for l in range(len(self.objective)):
                yield (l + 1, self.inner_iters_cum[l], self.objective[l],
                       self.iterate_diff[l], self.epsilon[l + 1], self.a[l])
        elif self.inner_objective is not None:
            for n, val in enumerate(self.inner_objective, start=1):
                yield (n, n, float(val), nan, nan, nan)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["outer_iter", "inner_iters_cum", "objective", "iterate_diff",
                         "epsilon_l", "a_l"])
            for row in self.rows():
                wr.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])


@dataclass
class PDResult:
    ergodic: np.ndarray
    last: np.ndarray
    dual: np.ndarray
    report: SolveReport

    def __iter__(self):
        return iter((self.ergodic, self.last, self.dual, self.report))


def _as_gram(G, K) -> GramOperator:
    if G is None:
        return GramOperator.identity(K)
    if isinstance(G, GramOperator):
        if G.dim != K:
            raise ValueError(f"Gram operator has dim {G.dim}, blocks have {K} columns")
        return G
    return GramOperator(G)


def _prepare(A, B, w, G, *blocks):
    A = np.asarray(A)
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2 or A.ndim != 2:
        raise ValueError("A and B must be 2-D")
    m, N = A.shape
    if B.shape[0] != m:
        raise ValueError(f"B has {B.shape[0]} rows, A has {m}")
    K = B.shape[1]
    w = np.ascontiguousarray(np.asarray(w, dtype=np.float64))
    if w.shape != (N,):
        raise ValueError("one weight per column of A required")
    gram = _as_gram(G, K)
    parts = [A, B] + [b for b in blocks if b is not None]
    if gram.is_complex:
        parts.append(np.zeros(1, dtype=np.complex128))
    dt = np.result_type(*parts, np.float64)
    dt = np.complex128 if np.issubdtype(dt, np.complexfloating) else np.float64
    return A, B, w, gram, dt, m, N, K


def objective(C, A, B, w, G, lam) -> float:
    """lam * ||C||_{2,1,w} + ||(A C - B) G^{1/2}||_F."""
    A, B, w, gram, _, m, N, K = _prepare(A, B, w, G)
    C = np.atleast_2d(np.asarray(C))
    if C.shape != (N, K):
        raise ValueError(f"expected block of shape {(N, K)}, got {C.shape}")
    reg = float(np.dot(w, row_norms(C, gram)))
    return lam * reg + block_frobenius_G(A @ C - B, gram)


def prox_shrink(P, thresholds, G) -> np.ndarray:
    """Row-wise shrinkage in the V-norm: scale row i by max(n_i - t_i, 0) / n_i."""
    P = np.atleast_2d(np.asarray(P))
    gram = _as_gram(G, P.shape[1])
    t = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (P.shape[0],))
    if np.any(t < 0):
        raise ValueError("thresholds must be nonnegative")
    nrm = row_norms(P, gram)
    scale = np.zeros_like(nrm)
    keep = (nrm > t) & (nrm > 0)
    scale[keep] = (nrm[keep] - t[keep]) / nrm[keep]
    return scale[:, None] * P


def proj_dual_ball(Q, G) -> np.ndarray:
    """Radial projection onto the unit ball of ||. G^{1/2}||_F."""
    Q = np.atleast_2d(np.asarray(Q))
    nrm = block_frobenius_G(Q, _as_gram(G, Q.shape[1]))
    return Q / nrm if nrm > 1.0 else Q.copy()


def _kernel_gram(gram: GramOperator, dt):
    if gram.is_identity:
        return np.zeros((1, 1), dtype=dt), False
    if gram.is_sparse:
        return gram._mat.astype(dt), True
    return np.ascontiguousarray(gram.dense(), dtype=dt), True


def _pick_backend(backend, gram, m, N, K, callback):
    if backend == "python" or callback is not None or gram.is_sparse:
        if backend == "compiled" and (callback is not None or gram.is_sparse):
            raise ValueError("compiled backend needs a dense Gram matrix and no callback")
        return _pykernels, "python"
    if backend == "compiled":
        return _backend.get("compiled"), "compiled"
    if backend != "auto":
        raise ValueError(f"unknown backend {backend!r}")
    if _backend.COMPILED and m * N * K <= COMPILED_SIZE_LIMIT:
        return _backend.compiled_kernels, "compiled"
    return _pykernels, "python"


def _check_steps(A, tau, sigma, norm_A):
    if norm_A is None:
        norm_A = operator_norm_estimate(A)
    if tau * sigma * norm_A**2 > 1.0 + 1e-12:
        warnings.warn(f"tau*sigma*||A||^2 = {tau * sigma * norm_A**2:.6g} exceeds 1; "
                      "convergence is not guaranteed", StepSizeWarning, stacklevel=3)
    return norm_A


def primal_dual(A, B, w, G, lam, tau, sigma, T, C0=None, Xi0=None, *,
                record_objective=False, callback=None, backend="auto",
                norm_A=None, check_steps=True) -> PDResult:
    """Primal-dual iteration for the weighted square-root LASSO.

    Parameters
    ----------
    A : array, shape (m, N)
    B : array, shape (m, K)
    w : array, shape (N,)
        Positive weights.
    G : GramOperator, array or None
        Gram operator of V_h; None means the identity.
    lam, tau, sigma : float
    T : int
        Number of iterations.
    C0, Xi0 : arrays, optional
        Primal and dual starting points (zero by default).
    record_objective : bool
        Store the objective of every ergodic iterate in
        ``report.inner_objective``.
    callback : callable, optional
        ``callback(n, C, C_bar)`` after iteration n (1-based).
    backend : {"auto", "compiled", "python"}
    norm_A : float, optional
        Known ||A||_2 for the step-size check.
    check_steps : bool
        Warn when tau * sigma * ||A||^2 > 1.

    Returns
    -------
    PDResult
        ``(ergodic, last, dual, report)``.
    """
    A, B, w, gram, dt, m, N, K = _prepare(A, B, w, G, C0, Xi0)
    t0 = time.perf_counter()
    if check_steps and T > 0:
        _check_steps(A, tau, sigma, norm_A)
    Ak = np.ascontiguousarray(A, dtype=dt)
    Bk = np.ascontiguousarray(B, dtype=dt)
    C = np.zeros((N, K), dtype=dt) if C0 is None else np.array(C0, dtype=dt, order="C").reshape(N, K)
    Xi = np.zeros((m, K), dtype=dt) if Xi0 is None else np.array(Xi0, dtype=dt, order="C").reshape(m, K)
    Cbar = np.zeros((N, K), dtype=dt)
    obj = np.zeros(T if record_objective else 0)
    Gk, use_gram = _kernel_gram(gram, dt)
    kern, name = _pick_backend(backend, gram, m, N, K, callback)
    if kern is _pykernels:
        status = _pykernels._pd_loop(Ak, Bk, w, Gk, use_gram, lam, tau, sigma, T, C, Xi,
                                     Cbar, obj, record_objective and T > 0, callback=callback)
    else:
        status = kern.pd_iterate(Ak, Bk, w, Gk, use_gram, lam, tau, sigma, T, C, Xi, Cbar, obj)
    report = SolveReport(inner_objective=obj if record_objective else None,
                         inner_iters_cum=[T], backend=name)
    report.wall_clock = time.perf_counter() - t0
    if status != 0:
        report.termination = "diverged"
        raise DivergenceError("non-finite iterate in primal-dual iteration", report)
    report.termination = "completed"
    return PDResult(Cbar, C, Xi, report)


def _unpack_config(config: SolverConfig | None, kwargs) -> SolverConfig:
    if config is None:
        return SolverConfig(**kwargs)
    if kwargs:
        return config.replace(**kwargs)
    return config


def restarted(A, B, w, G, config: SolverConfig | None = None, C0=None, *,
              callback=None, backend="auto", stop=False, **params):
    """Restarted primal-dual iteration.

    Starting from eps_0 = ||B G^{1/2}||_F, restart l sets
    eps_{l+1} = r (eps_l + zeta) and a_l = s eps_{l+1}, then replaces the
    current approximation C by ``a_l`` times the ergodic output of
    :func:`primal_dual` run on ``B / a_l`` from ``C / a_l`` with a zero
    dual start.

    Parameters
    ----------
    config : SolverConfig, optional
        Hyperparameters; keyword arguments override or replace it.
    C0 : array, optional
        Initial approximation (zero by default).
    callback : callable, optional
        ``callback(t, C, C_bar)`` with the rescaled inner iterates and the
        total inner iteration count t.
    stop : bool
        Enable the early stop on small restart-to-restart change.

    Returns
    -------
    (C, SolveReport)
    """
    cfg = _unpack_config(config, params)
    A, B, w, gram, dt, m, N, K = _prepare(A, B, w, G, C0)
    t0 = time.perf_counter()
    if cfg.R > 0 and cfg.T > 0:
        _check_steps(A, cfg.tau, cfg.sigma, cfg.norm_A)
    Ak = np.ascontiguousarray(A, dtype=dt)
    Bk = np.ascontiguousarray(B, dtype=dt)
    Ct = np.zeros((N, K), dtype=dt) if C0 is None else np.array(C0, dtype=dt, order="C").reshape(N, K)
    Gk, use_gram = _kernel_gram(gram, dt)
    eps0 = block_frobenius_G(Bk, gram)
    R = cfg.R
    eps = np.zeros(R + 1)
    a = np.zeros(R)
    obj = np.zeros(R)
    diff = np.zeros(R)
    stop_factor = cfg.stop_factor if stop else 0.0
    report = SolveReport(initial_objective=objective(Ct, Ak, Bk, w, gram, cfg.lam))
    kern, name = _pick_backend(backend, gram, m, N, K, callback)
    if cfg.warm_dual:
        kern, name = _pykernels, "python"
    report.backend = name
    if kern is _pykernels:
        done, status = _pykernels.restart_loop(
            Ak, Bk, w, Gk, use_gram, cfg.lam, cfg.tau, cfg.sigma, cfg.T, R, cfg.zeta,
            cfg.r, cfg.s, stop_factor, Ct, eps0, eps, a, obj, diff,
            callback=callback, warm_dual=cfg.warm_dual)
    else:
        done, status = kern.restart_loop(
            Ak, Bk, w, Gk, use_gram, cfg.lam, cfg.tau, cfg.sigma, cfg.T, R, cfg.zeta,
            cfg.r, cfg.s, stop_factor, Ct, eps0, eps, a, obj, diff)
    n_out = done
    report.epsilon = eps[:done + 1].tolist() if status != 1 else eps[:done + 2].tolist()
    report.a = a[:n_out].tolist() if status != 1 else a[:done + 1].tolist()
    report.objective = obj[:n_out].tolist()
    report.iterate_diff = diff[:n_out].tolist()
    report.inner_iters_cum = [cfg.T * (l + 1) for l in range(n_out)]
    report.wall_clock = time.perf_counter() - t0
    report.termination = {0: "max_restarts", 1: "diverged", 2: "stopped", 3: "zero_scale"}[status]
    if status == 1:
        raise DivergenceError("non-finite iterate in restarted iteration", report)
    if status == 3:
        # the final restart hit a zero scale and ran no inner iterations
        report.inner_iters_cum = [cfg.T * (l + 1) for l in range(n_out - 1)] + [cfg.T * (n_out - 1)]
    return Ct, report


def restarted_with_stop(A, B, w, G, config: SolverConfig | None = None, C0=None, **kwargs):
    """:func:`restarted` with the early stop ||C_l - C_{l-1}||_{F,G} <= stop_factor * zeta."""
    return restarted(A, B, w, G, config, C0, stop=True, **kwargs)


def theory_rate(norm_A: float) -> float:
    """Per-iteration decay rate c = 1 / ceil(2 e ||A||) of the restart bound."""
    return 1.0 / math.ceil(2.0 * math.e * norm_A)


def default_config(mode: str, m: int, d: int | None, eps: float, basis: str,
                   index_set: MultiIndexSet, A, *, zeta: float = 1e-8,
                   R: int | None = None, total_iterations: int = 10_000,
                   c_star: float = 1.0, stop_factor: float = 5.0,
                   norm_A: float | None = None) -> SolverConfig:
    """Hyperparameters for the practical or theoretical regime.

    Practical: lam = 1/sqrt(25 m), tau = sigma = 1/||A||, r = 1/e,
    T = ceil(2 ||A|| / r), s = T / (2 ||A||).

    Theoretical: lam = 1/(4 sqrt(m / L)), tau = sigma = Theta^-alpha with
    Theta = |index_set|, T = ceil(Theta^alpha c_star), r = 1/e and
    s = sigma T / 2.

    The restart count defaults to ``ceil(total_iterations / T)``.
    """
    r = math.exp(-1.0)
    if mode == "practical":
        if m < 1:
            raise ValueError("m must be positive")
        nA = operator_norm_estimate(A) if norm_A is None else float(norm_A)
        lam = 1.0 / math.sqrt(25.0 * m)
        tau = sigma = 1.0 / nA
        T = math.ceil(2.0 * nA / r)
        s = T / (2.0 * nA)
    elif mode == "theoretical":
        from .pipeline import log_factor_L
        if m < 3:
            raise ValueError("theoretical mode requires m >= 3")
        L = log_factor_L(m, d, eps)
        lam = 1.0 / (4.0 * math.sqrt(m / L))
        theta_a = float(len(index_set)) ** norm_exponent(basis)
        tau = sigma = 1.0 / theta_a
        T = math.ceil(theta_a * c_star)
        s = sigma * T / 2.0
        nA = theta_a if norm_A is None else float(norm_A)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if R is None:
        R = max(1, math.ceil(total_iterations / T))
    return SolverConfig(lam=lam, tau=tau, sigma=sigma, T=T, R=R, r=r, s=s, zeta=zeta,
                        stop_factor=stop_factor, norm_A=nA, mode=mode)


def unrestarted_iterations(index_set: MultiIndexSet, basis: str, t: int) -> int:
    """Iteration count ceil(2 Theta^alpha t) of the unrestarted theoretical scheme."""
    return math.ceil(2.0 * float(len(index_set)) ** norm_exponent(basis) * t)
