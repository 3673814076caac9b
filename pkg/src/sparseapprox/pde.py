"""Test functions, including a parametric diffusion problem solved with P1 elements.

The diffusion problem is -div(a(x, y) grad u) = g on the unit square with
homogeneous Dirichlet conditions.  Solutions are returned as coordinates
in the hat-function basis of the interior nodes; the matching Gram
operator is the stiffness matrix with a = 1.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import GramOperator, save_block_csv

__all__ = [
    "FEMError",
    "StructuredMesh",
    "FemSystem",
    "f1",
    "f2",
    "f4_constants",
    "diffusion_coefficient",
    "assemble",
    "solve_diffusion",
    "h1_gram",
    "ScalarFunction",
    "ParametricDiffusion",
    "SparsePolynomial",
    "get_function",
    "export_snapshots",
    "export_coefficient_field",
]


class FEMError(ArithmeticError):
    pass


def f1(y) -> np.ndarray | float:
    """exp(-sum(y) / (2 d)); accepts one point or an (M, d) array."""
    y = np.asarray(y, dtype=np.float64)
    d = y.shape[-1]
    out = np.exp(-np.sum(y, axis=-1) / (2.0 * d))
    return float(out) if out.ndim == 0 else out


def f2(y) -> np.ndarray | float:
    """exp(-(2/d) sum (y_k - w_k)^2) with w_k = (-1)^k / (k + 1), k = 1..d."""
    y = np.asarray(y, dtype=np.float64)
    d = y.shape[-1]
    k = np.arange(1, d + 1)
    wk = (-1.0) ** k / (k + 1.0)
    out = np.exp(-(2.0 / d) * np.sum((y - wk) ** 2, axis=-1))
    return float(out) if out.ndim == 0 else out


def f4_constants(d: int = 30, beta_c: float = 1.0 / 8.0):
    """Lead coefficient, decay factors zeta_i (i = 2..d) and beta_p, beta."""
    beta_p = max(1.0, 2.0 * beta_c)
    beta = beta_c / beta_p
    lead = math.sqrt(math.sqrt(math.pi) * beta / 2.0)
    i = np.arange(2, d + 1)
    zeta = math.sqrt(math.sqrt(math.pi) * beta) * np.exp(-((i // 2) * math.pi * beta) ** 2 / 8.0)
    return lead, zeta, beta_p, beta


def diffusion_coefficient(variant: str, x, y) -> np.ndarray:
    """a(x, y) at spatial points x (shape (P, 2) or (2,)) for one parameter y."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if variant == "f3":
        if y.shape[-1] < 2:
            raise ValueError("f3 needs a 2-dimensional parameter")
        return 5.0 + np.exp(x[:, 0] * y[0] + x[:, 1] * y[1])
    if variant == "f4":
        d = y.shape[-1]
        lead, zeta, beta_p, _ = f4_constants(d)
        expo = np.full(x.shape[0], 1.0 + y[0] * lead)
        for i in range(2, d + 1):
            arg = (i // 2) * math.pi * x[:, 0] / beta_p
            theta = np.sin(arg) if i % 2 == 0 else np.cos(arg)
            expo += zeta[i - 2] * theta * y[i - 1]
        return np.exp(expo)
    raise ValueError(f"unknown coefficient variant {variant!r}")


class StructuredMesh:
    """Uniform triangulation of [0, 1]^2 with q nodes per side.

    Each grid square is split along its lower-left to upper-right
    diagonal.  ``permutation`` relabels the interior unknowns (used to
    check that norms do not depend on the numbering).
    """

    def __init__(self, q: int = 33, permutation=None):
        if q < 3:
            raise ValueError("need at least 3 nodes per side")
        self.q = q
        t = np.linspace(0.0, 1.0, q)
        X, Y = np.meshgrid(t, t, indexing="xy")
        self.nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        ii, jj = np.meshgrid(np.arange(q - 1), np.arange(q - 1), indexing="xy")
        ii, jj = ii.ravel(), jj.ravel()
        n00 = jj * q + ii
        n10 = n00 + 1
        n01 = n00 + q
        n11 = n01 + 1
        lower = np.stack([n00, n10, n11], axis=1)
        upper = np.stack([n00, n11, n01], axis=1)
        self.elements = np.concatenate([lower, upper], axis=0)
        ix = np.arange(q * q) % q
        iy = np.arange(q * q) // q
        interior = (ix > 0) & (ix < q - 1) & (iy > 0) & (iy < q - 1)
        self.interior_nodes = np.nonzero(interior)[0]
        K = self.interior_nodes.size
        perm = np.arange(K) if permutation is None else np.asarray(permutation)
        if sorted(perm.tolist()) != list(range(K)):
            raise ValueError("permutation must be a permutation of the interior nodes")
        self.interior_nodes = self.interior_nodes[perm]
        self.dof = np.full(q * q, -1, dtype=np.int64)
        self.dof[self.interior_nodes] = np.arange(K)
        P = self.nodes[self.elements]
        self.centroids = P.mean(axis=1)
        e1 = P[:, 1] - P[:, 0]
        e2 = P[:, 2] - P[:, 0]
        self.areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def n_nodes(self) -> int:
        return self.q * self.q

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def K(self) -> int:
        return self.interior_nodes.size

    @property
    def h(self) -> float:
        return math.sqrt(2.0) / (self.q - 1)

    def interior_coordinates(self) -> np.ndarray:
        return self.nodes[self.interior_nodes]

    def center_dof(self) -> int:
        if self.q % 2 == 0:
            raise ValueError("the centre is a node only for odd q")
        c = (self.q // 2) * self.q + self.q // 2
        return int(self.dof[c])


class FemSystem:
    """Stiffness matrix and load on the interior nodes."""

    def __init__(self, mesh: StructuredMesh, stiffness: sp.csr_matrix, load_unit: np.ndarray):
        self.mesh = mesh
        self.stiffness = stiffness
        self.load_unit = load_unit

    def load(self, g: float = 10.0) -> np.ndarray:
        return g * self.load_unit


def _local_stiffness(mesh: StructuredMesh) -> np.ndarray:
    P = mesh.nodes[mesh.elements]
    # gradients of barycentric coordinates
    x, y = P[:, :, 0], P[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = mesh.areas[:, None, None]
    return (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area)


def _mesh_data(mesh: StructuredMesh):
    cached = getattr(mesh, "_fem_data", None)
    if cached is not None:
        return cached
    Kloc = _local_stiffness(mesh)
    dofs = mesh.dof[mesh.elements]
    rows = np.repeat(dofs, 3, axis=1).reshape(-1, 3, 3)
    cols = np.tile(dofs, (1, 3)).reshape(-1, 3, 3)
    keep = (rows >= 0) & (cols >= 0)
    load = np.zeros(mesh.K)
    vert = dofs.ravel()
    area3 = np.repeat(mesh.areas / 3.0, 3)
    np.add.at(load, vert[vert >= 0], area3[vert >= 0])
    data = (Kloc, rows[keep], cols[keep], keep, load)
    mesh._fem_data = data
    return data


def assemble(mesh: StructuredMesh, coefficient) -> FemSystem:
    """Assemble with the coefficient taken at element centroids.

    ``coefficient`` is either a callable on an (E, 2) array of centroids or
    an array of E centroid values.
    """
    Kloc, rows, cols, keep, load = _mesh_data(mesh)
    a = coefficient(mesh.centroids) if callable(coefficient) else coefficient
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (mesh.n_elements,))
    vals = (a[:, None, None] * Kloc)[keep]
    S = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.K, mesh.K))
    S.sum_duplicates()
    return FemSystem(mesh, S, load)


def solve_diffusion(system: FemSystem, g: float = 10.0, y=None) -> np.ndarray:
    """Interior nodal values of the discrete solution."""
    rhs = system.load(g)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            u = spla.spsolve(system.stiffness.tocsc(), rhs)
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        raise FEMError(f"singular stiffness matrix at y={y}") from exc
    if not np.all(np.isfinite(u)):
        raise FEMError(f"singular stiffness matrix at y={y}")
    return u


def h1_gram(mesh: StructuredMesh) -> GramOperator:
    """Gram operator of the H^1_0 inner product (grad u, grad v)."""
    return GramOperator(assemble(mesh, 1.0).stiffness)


class ScalarFunction:
    """A scalar test function with the reference-sampler interface."""

    K = 1

    def __init__(self, name: str, func, d: int):
        self.name = name
        self.func = func
        self.d = d
        self.gram = GramOperator.identity(1)

    def __call__(self, y) -> np.ndarray:
        return np.atleast_1d(self.func(np.asarray(y, dtype=np.float64)))

    def batch(self, Y) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(Y)))[:, None]


class ParametricDiffusion:
    """y -> interior coordinates of the P1 solution with coefficient ``variant``."""

    def __init__(self, variant: str = "f3", q: int = 33, d: int | None = None,
                 g: float = 10.0, a_min: float = 0.0):
        self.variant = variant
        self.name = variant
        self.d = d if d is not None else (2 if variant == "f3" else 30)
        self.mesh = StructuredMesh(q)
        self.g = g
        self.a_min = a_min
        self.gram = h1_gram(self.mesh)

    @property
    def K(self) -> int:
        return self.mesh.K

    def coefficient(self, y) -> np.ndarray:
        return diffusion_coefficient(self.variant, self.mesh.centroids, y)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        a = self.coefficient(y)
        if not np.all(a > self.a_min):
            raise FEMError(f"coefficient not positive at y={y.tolist()}")
        return solve_diffusion(assemble(self.mesh, a), self.g, y=y.tolist())

    def batch(self, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        out = np.empty((Y.shape[0], self.K))
        for i, y in enumerate(Y):
            out[i] = self(y)
        return out


def get_function(name: str, d: int | None = None, q: int = 33, seed: int = 0,
                 basis: str = "legendre"):
    """Look up a test function: f1, f2, sparse-synthetic (scalar) or f3, f4 (diffusion)."""
    if name == "sparse-synthetic":
        return SparsePolynomial(d or 2, 5, basis, seed)
    if name == "f1":
        return ScalarFunction("f1", f1, d or 2)
    if name == "f2":
        return ScalarFunction("f2", f2, d or 16)
    if name in ("f3", "f4"):
        return ParametricDiffusion(name, q=q, d=d)
    raise ValueError(f"unknown test function {name!r}")


def export_snapshots(path, D) -> None:
    save_block_csv(path, D)


def export_coefficient_field(path, variant: str, y, resolution: int = 65) -> None:
    """Write x1,x2,a rows of the coefficient on a uniform grid."""
    t = np.linspace(0.0, 1.0, resolution)
    X1, X2 = np.meshgrid(t, t, indexing="xy")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=1)
    a = diffusion_coefficient(variant, pts, y)
    with open(path, "w") as fh:
        fh.write("x1,x2,a\n")
        for (u, v), val in zip(pts, a):
            fh.write(f"{float(u)!r},{float(v)!r},{float(val)!r}\n")


class SparsePolynomial:
    """Random polynomial supported on a random lower set of size ``s``.

    The support grows from the zero index by adding admissible indices
    (those whose backward neighbours are all present) chosen at random.
    """

    K = 1

    def __init__(self, d: int = 2, s: int = 5, basis: str = "legendre", seed: int = 0):
        from .index_sets import MultiIndexSet

        rng = np.random.default_rng(seed)
        support = [(0,) * d]
        present = set(support)
        while len(support) < s:
            cands = set()
            for nu in support:
                for k in range(d):
                    c = nu[:k] + (nu[k] + 1,) + nu[k + 1:]
                    if c not in present and all(
                            c[:j] + (c[j] - 1,) + c[j + 1:] in present
                            for j in range(d) if c[j] > 0):
                        cands.add(c)
            cands = sorted(cands)
            pick = cands[rng.integers(len(cands))]
            support.append(pick)
            present.add(pick)
        self.name = "sparse-synthetic"
        self.d = d
        self.basis = basis
        self.support = MultiIndexSet.from_indices(support, dim=d)
        self.values = rng.standard_normal(s)
        self.gram = GramOperator.identity(1)

    def coefficients_on(self, index_set) -> np.ndarray:
        """Exact coefficient vector aligned with ``index_set``."""
        out = np.zeros(len(index_set))
        for nu, v in zip(self.support, self.values):
            out[index_set.position(nu)] = v
        return out

    def batch(self, Y) -> np.ndarray:
        from .orthopoly import evaluation_matrix

        V = evaluation_matrix(np.atleast_2d(Y), self.support, self.basis)
        return (V @ self.values)[:, None]

    def __call__(self, y) -> np.ndarray:
        return self.batch(np.atleast_2d(y))[0]
