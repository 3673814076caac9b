"""Multi-index sets: hyperbolic crosses, lower/anchored checks and weight budgets."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MultiIndexSet",
    "hyperbolic_cross",
    "hyperbolic_cross_infinite",
    "in_hyperbolic_cross",
    "is_lower",
    "is_anchored",
    "weighted_cardinality",
    "cardinality_bounds",
    "lower_set_weight_bound",
    "lower_set_weight_exact",
    "lower_set_weight_budget",
]

_INT64_MAX = 2**63 - 1


def _canonical_key(nu: Sequence[int]):
    # total degree first; within a degree, larger leading entries come first
    return (sum(nu), tuple(-v for v in nu))


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Ordered, immutable set of d-dimensional multi-indices.

    Parameters
    ----------
    dim : int
        Ambient dimension d.
    indices : array_like of int, shape (N, dim)
        The indices in the order used for every downstream matrix.
    kind : str
        ``"hyperbolic-cross"``, ``"hyperbolic-cross-infinite"`` or ``"custom"``.
    order : int or None
        The order n for hyperbolic crosses.
    """

    dim: int
    indices: np.ndarray
    kind: str = "custom"
    order: int | None = None
    _lookup: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.dim)
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if (arr < 0).any():
            raise ValueError("multi-index entries must be nonnegative")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        lookup = {tuple(int(v) for v in row): i for i, row in enumerate(arr)}
        if len(lookup) != arr.shape[0]:
            raise ValueError("duplicate multi-indices")
        object.__setattr__(self, "indices", arr)
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def from_indices(cls, indices: Iterable[Sequence[int]], dim: int | None = None,
                     kind: str = "custom", order: int | None = None,
                     sort: bool = True) -> "MultiIndexSet":
        items = [tuple(int(v) for v in nu) for nu in indices]
        if dim is None:
            if not items:
                raise ValueError("dimension required for an empty set")
            dim = len(items[0])
        if any(len(nu) != dim for nu in items):
            raise ValueError("inconsistent multi-index lengths")
        if sort:
            items.sort(key=_canonical_key)
        arr = np.array(items, dtype=np.int64).reshape(-1, dim)
        return cls(dim, arr, kind, order)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiIndexSet):
            return NotImplemented
        return (self.dim == other.dim and self.kind == other.kind
                and self.order == other.order
                and np.array_equal(self.indices, other.indices))

    __hash__ = object.__hash__

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __iter__(self):
        return iter(self._lookup)

    def __contains__(self, nu) -> bool:
        return tuple(int(v) for v in nu) in self._lookup

    def position(self, nu) -> int:
        """Row of ``nu`` in the ordering; raises KeyError if absent."""
        return self._lookup[tuple(int(v) for v in nu)]

    @property
    def max_degree(self) -> int:
        return int(self.indices.max()) if len(self) else 0

    @property
    def active_dim(self) -> int:
        """One plus the largest coordinate used by any index (0 if none)."""
        used = np.nonzero(self.indices.any(axis=0))[0]
        return int(used[-1]) + 1 if used.size else 0

    def ordering_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.dim}:".encode())
        h.update(self.indices.tobytes())
        return h.hexdigest()[:16]

    def to_text(self) -> str:
        lines = [f"d={self.dim} n={self.order if self.order is not None else '-'} kind={self.kind}"]
        lines.extend(" ".join(str(v) for v in row) for row in self.indices)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MultiIndexSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty index-set text")
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        dim = int(header["d"])
        order = None if header.get("n", "-") == "-" else int(header["n"])
        rows = [[int(v) for v in ln.split()] for ln in lines[1:]]
        arr = np.array(rows, dtype=np.int64).reshape(-1, dim)
        return cls(dim, arr, header.get("kind", "custom"), order)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "MultiIndexSet":
        with open(path) as fh:
            return cls.from_text(fh.read())


def _saturating_mul(a: int, b: int) -> int:
    if a != 0 and b > _INT64_MAX // a:
        return _INT64_MAX
    return a * b


def in_hyperbolic_cross(nu: Sequence[int], n: int) -> bool:
    """Test prod(nu_k + 1) <= n with 64-bit saturating products."""
    p = 1
    for v in nu:
        if v < 0:
            return False
        p = _saturating_mul(p, int(v) + 1)
        if p > n:
            return False
    return True


def hyperbolic_cross(n: int, d: int) -> MultiIndexSet:
    """All nu in N_0^d with prod(nu_k + 1) <= n, in canonical order."""
    if n < 1 or d < 1:
        raise ValueError("hyperbolic cross needs n >= 1 and d >= 1")
    out = []
    prefix = [0] * d

    def rec(k, prod):
        if k == d:
            out.append(tuple(prefix))
            return
        v = 0
        while True:
            p = _saturating_mul(prod, v + 1)
            if p > n:
                break
            prefix[k] = v
            rec(k + 1, p)
            v += 1
        prefix[k] = 0

    rec(0, 1)
    return MultiIndexSet.from_indices(out, dim=d, kind="hyperbolic-cross", order=n)


def hyperbolic_cross_infinite(n: int) -> MultiIndexSet:
    """Finite realization of the infinite-dimensional cross: the cross of order n in n dimensions."""
    hc = hyperbolic_cross(n, n)
    return MultiIndexSet(hc.dim, hc.indices, "hyperbolic-cross-infinite", n)


def is_lower(S: MultiIndexSet | Iterable[Sequence[int]]) -> bool:
    members = {tuple(int(v) for v in nu) for nu in S}
    for nu in members:
        for k, v in enumerate(nu):
            if v > 0:
                mu = nu[:k] + (v - 1,) + nu[k + 1:]
                if mu not in members:
                    return False
    return True


def is_anchored(S: MultiIndexSet | Iterable[Sequence[int]]) -> bool:
    members = {tuple(int(v) for v in nu) for nu in S}
    if not is_lower(members):
        return False
    if not members:
        return True
    d = len(next(iter(members)))
    unit = [tuple(1 if i == k else 0 for i in range(d)) in members for k in range(d)]
    for j in range(d):
        if unit[j] and not all(unit[:j]):
            return False
    return True


def weighted_cardinality(S: Iterable[Sequence[int]], weights) -> float:
    """Sum of squared weights over ``S``.

    ``weights`` is anything indexable by a multi-index tuple (a mapping or
    :class:`sparseapprox.orthopoly.Weights`); a missing index raises KeyError.
    """
    total = 0.0
    for nu in S:
        key = tuple(int(v) for v in nu)
        try:
            wv = weights[key]
        except KeyError:
            raise KeyError(f"no weight for index {key}") from None
        total += float(wv) ** 2
    return total


def cardinality_bounds(n: int, d: int) -> tuple[float, float, float]:
    """The three upper bounds on the size of the order-n cross in d dimensions."""
    b1 = 2.0 * n**3 * 4.0**d
    b2 = math.e * n ** (2.0 + math.log(d) / math.log(2.0))
    b3 = n * (math.log(n) + d * math.log(2.0)) ** (d - 1) / math.factorial(d - 1)
    return b1, b2, b3


def _intrinsic_weight_sq(nu, basis: str) -> float:
    if basis == "legendre":
        return float(np.prod([2 * v + 1 for v in nu]))
    if basis == "chebyshev":
        return float(2 ** sum(1 for v in nu if v))
    raise ValueError(f"unknown basis {basis!r}")


def lower_set_weight_bound(s: int, d: int, basis: str) -> float:
    """Upper bound on the largest intrinsic-weighted size of a lower set of size s."""
    if s < 1:
        raise ValueError("s must be positive")
    if basis == "legendre":
        return float(s * s)
    if basis == "chebyshev":
        return float(min(2.0**d * s, s ** (math.log(3) / math.log(2))))
    raise ValueError(f"unknown basis {basis!r}")


def lower_set_weight_exact(s: int, d: int, basis: str) -> float:
    """Exact max of the weighted size over lower sets with at most s elements.

    Exhaustive search, refused when s**d exceeds 10**6.
    """
    if s < 1:
        raise ValueError("s must be positive")
    if float(s) ** d > 1e6:
        raise ValueError(f"exact search infeasible for s={s}, d={d}")
    zero = (0,) * d
    best = 0.0
    seen = set()
    stack = [frozenset([zero])]
    while stack:
        S = stack.pop()
        if S in seen:
            continue
        seen.add(S)
        best = max(best, sum(_intrinsic_weight_sq(nu, basis) for nu in S))
        if len(S) == s:
            continue
        for nu in S:
            for k in range(d):
                cand = nu[:k] + (nu[k] + 1,) + nu[k + 1:]
                if cand in S:
                    continue
                ok = all(cand[:j] + (cand[j] - 1,) + cand[j + 1:] in S
                         for j in range(d) if cand[j] > 0)
                if ok:
                    stack.append(S | {cand})
    return best


def lower_set_weight_budget(s: int, d: int, basis: str, exact: bool = False):
    """Bound k(s); with ``exact=True`` returns ``(bound, exact_value)``."""
    bound = lower_set_weight_bound(s, d, basis)
    if exact:
        return bound, lower_set_weight_exact(s, d, basis)
    return bound
