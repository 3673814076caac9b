"""End-to-end sparse polynomial approximation from samples.

Given sample points, data and a problem description, :func:`approximate`
picks a hyperbolic-cross index set, builds the sampling matrix and weights,
solves the weighted square-root LASSO with the restarted primal-dual
iteration and wraps the coefficients in a :class:`PolynomialApproximant`.
:func:`relative_error` measures the result in the L2 norm of the sampling
measure, using V-norms from the Gram operator for Hilbert-valued data.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .hilbert import GramOperator, load_block_csv, save_block_csv
from .index_sets import MultiIndexSet, hyperbolic_cross, hyperbolic_cross_infinite
from .orthopoly import (
    build_measurement_matrix,
    evaluation_matrix,
    intrinsic_weights,
)
from .srlasso import SolverConfig, default_config, restarted

__all__ = [
    "ProblemSpec",
    "PolynomialApproximant",
    "Quadrature",
    "log_factor_L",
    "choose_order",
    "sample_points",
    "tensor_clenshaw_curtis",
    "monte_carlo",
    "approximate",
    "evaluate",
    "relative_error",
]


def log_factor_L(m: int, d, eps: float) -> float:
    """Polylogarithmic factor L(m, d, eps); ``d=None`` or ``inf`` is the infinite case."""
    if m < 3:
        raise ValueError("L(m, d, eps) needs m >= 3")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    lm = math.log(m)
    if d is None or d == math.inf:
        return lm * (lm**3 + math.log(1.0 / eps))
    if d < 1:
        raise ValueError("d must be positive")
    inner = min(lm + d, math.log(math.e * d) * lm)
    return lm * (lm * inner + math.log(1.0 / eps))


def choose_order(mode: str, m: int, d, eps: float, basis: str) -> int:
    """Hyperbolic-cross order for the algebraic or exponential regime."""
    ratio = m / log_factor_L(m, d, eps)
    if mode == "algebraic":
        n = math.ceil(ratio)
    elif mode == "exponential":
        if d is None or d == math.inf:
            raise ValueError("the exponential regime needs finite d")
        if basis == "legendre":
            n = math.ceil(math.sqrt(ratio))
        elif basis == "chebyshev":
            n = math.ceil(ratio / 2.0**d)
        else:
            raise ValueError(f"unknown basis {basis!r}")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return max(1, n)


@dataclass(frozen=True)
class ProblemSpec:
    """Inputs that fix the index set and hyperparameters.

    ``d=None`` selects the infinite-dimensional cross (samples must carry
    at least n coordinates).
    """

    d: int | None
    basis: str = "legendre"
    m: int = 0
    eps: float = 0.5
    mode: str = "algebraic"
    solver_mode: str = "practical"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.solver_mode == "theoretical" and self.m < 3:
            raise ValueError("theoretical mode requires m >= 3")


def sample_points(m: int, d: int, basis: str, rng) -> np.ndarray:
    """Draw m points from the orthogonality measure (uniform or arcsine)."""
    rng = np.random.default_rng(rng)
    u = rng.random((m, d))
    if basis == "legendre":
        return 2.0 * u - 1.0
    if basis == "chebyshev":
        return np.sin(np.pi * (u - 0.5))
    raise ValueError(f"unknown basis {basis!r}")


@dataclass
class PolynomialApproximant:
    """f(y) ~ sum_j c_j Psi_{nu_j}(y) with coefficient rows c_j in V_h."""

    index_set: MultiIndexSet
    basis: str
    coefficients: np.ndarray
    gram_info: str = "identity"

    @property
    def K(self) -> int:
        return self.coefficients.shape[1]

    def evaluate(self, y) -> np.ndarray:
        """Coordinates of f(y) in V_h, shape (K,)."""
        return self.evaluate_many(np.atleast_2d(y))[0]

    def evaluate_many(self, Y, chunk: int = 2048) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        out = np.empty((Y.shape[0], self.K), dtype=self.coefficients.dtype)
        for lo in range(0, Y.shape[0], chunk):
            V = evaluation_matrix(Y[lo:lo + chunk], self.index_set, self.basis)
            out[lo:lo + chunk] = V @ self.coefficients
        return out

    def save(self, path) -> None:
        """Write the coefficient CSV plus a ``.idx`` index-set sidecar."""
        iset = self.index_set
        header = (f"# basis={self.basis} d={iset.dim} n={iset.order if iset.order is not None else '-'} "
                  f"K={self.K} kind={iset.kind} hash={iset.ordering_hash()} gram={self.gram_info}\n")
        tmp = f"{path}.tmp"
        save_block_csv(tmp, self.coefficients)
        with open(tmp) as fh:
            body = fh.read()
        os.remove(tmp)
        with open(path, "w") as fh:
            fh.write(header)
            fh.write(body)
        iset.save(f"{path}.idx")

    @classmethod
    def load(cls, path) -> "PolynomialApproximant":
        with open(path) as fh:
            header = fh.readline()
            body = fh.read()
        meta = dict(tok.split("=", 1) for tok in header.lstrip("#").split())
        iset = MultiIndexSet.load(f"{path}.idx")
        if iset.ordering_hash() != meta["hash"]:
            raise ValueError("index-set ordering does not match the saved coefficients")
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write(body)
        try:
            coef = load_block_csv(tmp)
        finally:
            os.remove(tmp)
        if coef.shape[1] != int(meta["K"]):
            raise ValueError("coefficient block has the wrong width")
        return cls(iset, meta["basis"], coef, meta.get("gram", "identity"))


def evaluate(approximant: PolynomialApproximant, y) -> np.ndarray:
    return approximant.evaluate(y)


@dataclass(frozen=True)
class Quadrature:
    """Nodes and probability weights for the sampling measure."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _cc_1d(level: int, basis: str):
    if level == 0:
        return np.zeros(1), np.ones(1)
    n = 2**level
    theta = np.pi * np.arange(n + 1) / n
    x = np.cos(theta)
    if basis == "chebyshev":
        # Gauss-Chebyshev-Lobatto weights for the arcsine probability measure
        w = np.full(n + 1, 1.0 / n)
        w[0] = w[-1] = 0.5 / n
    elif basis == "legendre":
        w = np.empty(n + 1)
        ks = np.arange(1, n // 2 + 1)
        b = np.where(ks == n // 2, 1.0, 2.0)
        for j in range(n + 1):
            c = 1.0 if j in (0, n) else 2.0
            w[j] = c / n * (1.0 - np.sum(b / (4.0 * ks**2 - 1.0) * np.cos(2.0 * ks * theta[j])))
        w /= 2.0  # probability measure dy/2
    else:
        raise ValueError(f"unknown basis {basis!r}")
    return x[::-1].copy(), w[::-1].copy()


def tensor_clenshaw_curtis(d: int, level: int, basis: str) -> Quadrature:
    """Tensor product of the 2**level + 1 point Clenshaw-Curtis rule."""
    if d < 1 or level < 0:
        raise ValueError("need d >= 1 and level >= 0")
    x, w = _cc_1d(level, basis)
    if len(x) ** d > 5_000_000:
        raise ValueError("tensor grid too large; use monte_carlo")
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return Quadrature(nodes, weights, f"cc:{level}")


def monte_carlo(d: int, M: int = 100_000, seed: int = 0, basis: str = "legendre") -> Quadrature:
    """Equal-weight rule on M points drawn from the sampling measure."""
    nodes = sample_points(M, d, basis, np.random.default_rng(seed))
    return Quadrature(nodes, np.full(M, 1.0 / M), f"mc:{M}:{seed}")


def _reference_values(reference, nodes):
    if isinstance(reference, np.ndarray):
        vals = reference
    elif hasattr(reference, "batch"):
        vals = reference.batch(nodes)
    else:
        vals = np.array([np.atleast_1d(reference(y)) for y in nodes])
    vals = np.asarray(vals)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != nodes.shape[0]:
        raise ValueError("reference values do not match the quadrature nodes")
    return vals


def _sq_vnorms(X, gram: GramOperator):
    return np.real(np.einsum("ij,ij->i", np.conj(X), gram.apply_rows(X)))


def relative_error(approximant: PolynomialApproximant, reference, G=None,
                   quadrature: Quadrature | None = None, return_stats: bool = False,
                   chunk: int = 2048):
    """Relative L2 error ||f - f_hat|| / ||f|| in the discrete quadrature norm.

    Parameters
    ----------
    reference : callable, object with ``batch(nodes)``, or ndarray
        Exact values at the quadrature nodes (or a way to compute them).
    G : GramOperator, optional
        Inner product on V_h; identity by default.
    quadrature : Quadrature
        Defaults to a level-5 tensor Clenshaw-Curtis rule for d <= 4 and a
        seeded 10**5-point Monte Carlo rule otherwise.
    return_stats : bool
        Also return the estimated standard error of the ratio (zero for
        deterministic rules).
    """
    d = approximant.index_set.dim
    if quadrature is None:
        quadrature = (tensor_clenshaw_curtis(d, 5, approximant.basis) if d <= 4
                      else monte_carlo(d, 100_000, 0, approximant.basis))
    gram = G if isinstance(G, GramOperator) else (
        GramOperator.identity(approximant.K) if G is None else GramOperator(G))
    nodes, wts = quadrature.nodes, quadrature.weights
    fvals = _reference_values(reference, nodes)
    err_sq = np.empty(nodes.shape[0])
    ref_sq = _sq_vnorms(fvals, gram)
    for lo in range(0, nodes.shape[0], chunk):
        approx = approximant.evaluate_many(nodes[lo:lo + chunk], chunk=chunk)
        err_sq[lo:lo + chunk] = _sq_vnorms(fvals[lo:lo + chunk] - approx, gram)
    num = float(np.dot(wts, err_sq))
    den = float(np.dot(wts, ref_sq))
    if den <= 0.0:
        raise ZeroDivisionError("reference function has zero norm; relative error undefined")
    rel = math.sqrt(max(num, 0.0) / den)
    if not return_stats:
        return rel
    stderr = 0.0
    if quadrature.kind.startswith("mc"):
        M = nodes.shape[0]
        # delta method for sqrt(mean(e)/mean(f))
        ratio = num / den
        resid = err_sq - ratio * ref_sq
        var_ratio = np.var(resid, ddof=1) / M / den**2
        stderr = 0.5 * math.sqrt(var_ratio / max(ratio, 1e-300))
    return rel, stderr


def _index_set_for(spec: ProblemSpec, n: int) -> MultiIndexSet:
    if spec.d is None:
        return hyperbolic_cross_infinite(n)
    return hyperbolic_cross(n, spec.d)


def approximate(points, data, spec: ProblemSpec, G=None, *, n: int | None = None,
                index_set: MultiIndexSet | None = None, config: SolverConfig | None = None,
                zeta: float = 1e-8, R: int | None = None, total_iterations: int = 10_000,
                stop: bool = True, callback=None, backend: str = "auto"):
    """Approximate f from samples.

    Parameters
    ----------
    points : array, shape (m, d)
    data : array, shape (m,) or (m, K)
        Samples f(y_i), as V_h coordinates for Hilbert-valued f.
    spec : ProblemSpec
    G : GramOperator or array, optional
    n, index_set : optional
        Override the order or the whole index set.
    config : SolverConfig, optional
        Override all solver hyperparameters.
    zeta, R, total_iterations, stop :
        Restart settings used when ``config`` is not given.

    Returns
    -------
    (PolynomialApproximant, SolveReport)
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    D = np.asarray(data)
    if D.ndim == 1:
        D = D[:, None]
    m = pts.shape[0]
    if D.shape[0] != m:
        raise ValueError(f"{D.shape[0]} data rows for {m} points")
    K = D.shape[1]
    gram = G if isinstance(G, GramOperator) else (
        GramOperator.identity(K) if G is None else GramOperator(G))
    if gram.dim != K:
        raise ValueError(f"Gram operator has dim {gram.dim}, data has {K} columns")
    if index_set is None:
        if n is None:
            n = choose_order(spec.mode, m, spec.d, spec.eps, spec.basis)
        index_set = _index_set_for(spec, n)
    A = build_measurement_matrix(pts, index_set, spec.basis)
    w = intrinsic_weights(spec.basis, index_set).values
    B = D / math.sqrt(m)
    if config is None:
        config = default_config(spec.solver_mode, m, spec.d, spec.eps, spec.basis, index_set,
                                A.entries, zeta=zeta, R=R, total_iterations=total_iterations)
    C, report = restarted(A.entries, B, w, gram, config, stop=stop, callback=callback,
                          backend=backend)
    info = "identity" if gram.is_identity else f"K={K}"
    return PolynomialApproximant(index_set, spec.basis, C, info), report
