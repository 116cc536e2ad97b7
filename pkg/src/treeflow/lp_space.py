"""Grid-sampled functions on a metric tree and their weighted Lp norms.

Every edge is identified with [0, 1) and sampled at the left endpoints
``s_k = k/N``.  The value at ``s = 1`` is never stored: the translation
operator reads it from the children at ``s = 0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError, InvalidExponent, TruncationExceeded

QUADRATURES = ("rectangle", "trapezoid")


@dataclass(frozen=True)
class LpConfig:
    """Exponent, grid resolution, quadrature rule and relative tolerance."""

    p: float = 2.0
    N: int = 64
    quadrature: str = "rectangle"
    tol: float = 1e-9

    def __post_init__(self):
        p = float(self.p)
        if not math.isfinite(p) or p < 1:
            raise InvalidExponent(f"p must lie in [1, inf), got {self.p!r}")
        object.__setattr__(self, "p", p)
        N = self.N
        if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 2 or N & (N - 1):
            raise InputError(f"N must be a power of two >= 2, got {N!r}")
        object.__setattr__(self, "N", int(N))
        if self.quadrature not in QUADRATURES:
            raise InputError(f"quadrature must be one of {QUADRATURES}")
        if not self.tol >= 0:
            raise InputError("tol must be non-negative")

    @property
    def conjugate(self) -> float | None:
        """Hölder conjugate p/(p-1); None for p = 1."""
        return None if self.p == 1 else self.p / (self.p - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    @property
    def closed_grid(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    def replace(self, **changes) -> "LpConfig":
        fields = dict(p=self.p, N=self.N, quadrature=self.quadrature, tol=self.tol)
        fields.update(changes)
        return LpConfig(**fields)


class GridFunction:
    """Finitely supported family ``(f_i)`` sampled on a half-open grid.

    Values are stored per supported edge as read-only arrays of length N.
    Arithmetic returns new objects; instances are never mutated.
    """

    __slots__ = ("N", "_values")
    # keep numpy scalars from treating instances as sequences: c * f uses __rmul__
    __array_ufunc__ = None

    def __init__(self, values: Mapping[int, Iterable[float]] | None = None, N: int | None = None):
        vals: dict[int, np.ndarray] = {}
        for i, v in (values or {}).items():
            arr = np.array(v, dtype=float)
            if arr.ndim != 1:
                raise InputError(f"samples for edge {i} must be one-dimensional")
            if N is None:
                N = arr.shape[0]
            if arr.shape[0] != N:
                raise InputError(f"edge {i} has {arr.shape[0]} samples, expected {N}")
            if not np.all(np.isfinite(arr)):
                raise InputError(f"edge {i} has non-finite samples")
            arr.setflags(write=False)
            vals[int(i)] = arr
        if N is None:
            raise InputError("an empty GridFunction needs an explicit N")
        self.N = int(N)
        self._values = dict(sorted(vals.items()))

    @classmethod
    def zero(cls, N: int) -> "GridFunction":
        return cls({}, N)

    @classmethod
    def indicator(cls, edges: Iterable[int], N: int) -> "GridFunction":
        return cls({i: np.ones(N) for i in edges}, N)

    @classmethod
    def from_callables(cls, funcs: Mapping[int, callable], N: int) -> "GridFunction":
        """Sample ``funcs[i](s)`` on the grid of each listed edge."""
        s = np.arange(N) / N
        return cls({i: np.broadcast_to(fn(s), (N,)) for i, fn in funcs.items()}, N)

    @classmethod
    def from_dense(cls, dense: np.ndarray, drop_zeros: bool = True) -> "GridFunction":
        dense = np.asarray(dense, dtype=float)
        rows = np.flatnonzero(np.any(dense != 0, axis=1)) if drop_zeros else range(dense.shape[0])
        return cls({int(i): dense[i] for i in rows}, dense.shape[1])

    # -- access --------------------------------------------------------
    @property
    def support(self) -> tuple[int, ...]:
        return tuple(self._values)

    def items(self):
        return self._values.items()

    def __getitem__(self, i: int) -> np.ndarray:
        v = self._values.get(int(i))
        return v if v is not None else np.zeros(self.N)

    def __contains__(self, i) -> bool:
        return int(i) in self._values

    def __len__(self) -> int:
        return len(self._values)

    def __iter__(self):
        return iter(self._values)

    def is_zero(self) -> bool:
        return all(not np.any(v) for v in self._values.values())

    def to_dense(self, n_edges: int) -> np.ndarray:
        out = np.zeros((n_edges, self.N))
        for i, v in self._values.items():
            if i >= n_edges:
                raise TruncationExceeded(f"edge {i} is outside a tree with {n_edges} edges")
            out[i] = v
        return out

    def restrict(self, edges: Iterable[int]) -> "GridFunction":
        keep = set(int(e) for e in edges)
        return GridFunction({i: v for i, v in self._values.items() if i in keep}, self.N)

    # -- arithmetic ----------------------------------------------------
    def _combine(self, other: "GridFunction", sign: float) -> "GridFunction":
        if not isinstance(other, GridFunction):
            return NotImplemented
        if other.N != self.N:
            raise InputError(f"grid mismatch: N={self.N} vs N={other.N}")
        out = {i: v.copy() for i, v in self._values.items()}
        for i, v in other._values.items():
            if i in out:
                out[i] = out[i] + sign * v
            else:
                out[i] = sign * v
        return GridFunction(out, self.N)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return GridFunction({i: c * v for i, v in self._values.items()}, self.N)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def max_abs_diff(self, other: "GridFunction") -> float:
        diff = self - other
        return max((float(np.max(np.abs(v))) for _, v in diff.items()), default=0.0)

    def __repr__(self):
        return f"GridFunction(N={self.N}, support={list(self.support)})"

    # -- serialization -------------------------------------------------
    def to_record(self) -> dict:
        return {str(i): [float(x) for x in v] for i, v in self._values.items()}

    @classmethod
    def from_record(cls, record: Mapping, N: int | None = None) -> "GridFunction":
        if not isinstance(record, Mapping):
            raise InputError("a GridFunction record maps edge ids to sample lists")
        try:
            values = {int(k): v for k, v in record.items()}
        except (TypeError, ValueError):
            raise InputError("GridFunction keys must be integer edge ids") from None
        return cls(values, N)

    def csv_rows(self):
        for i, v in self._values.items():
            for k, x in enumerate(v):
                yield i, k, k / self.N, float(x)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["edge_id", "k", "s", "value"])
        for i, k, s, x in self.csv_rows():
            w.writerow([i, k, repr(s), f"{x:.17g}"])
        return buf.getvalue()


def _edge_integrals(f: GridFunction, W, cfg: LpConfig) -> dict[int, float]:
    """``∫ |f_i|^p rho_i`` per supported edge, by the configured quadrature."""
    if f.N != cfg.N:
        raise InputError(f"function sampled with N={f.N}, config has N={cfg.N}")
    table = W.table(cfg.N)
    h = 1.0 / cfg.N
    out = {}
    for i, v in f.items():
        if i >= table.shape[0]:
            raise TruncationExceeded(f"edge {i} is not materialized")
        if cfg.quadrature == "rectangle":
            out[i] = h * float(np.sum(np.abs(v) ** cfg.p * table[i, :-1]))
        else:
            # right endpoint by linear extrapolation of the last two samples
            ext = np.append(v, 2 * v[-1] - v[-2])
            integrand = np.abs(ext) ** cfg.p * table[i]
            out[i] = h * float(np.sum(integrand) - 0.5 * (integrand[0] + integrand[-1]))
    return out


def norm_p(f: GridFunction, W, cfg: LpConfig) -> float:
    """``||f||^p``, the p-th power of the weighted norm."""
    return math.fsum(_edge_integrals(f, W, cfg).values())


def norm(f: GridFunction, W, cfg: LpConfig) -> float:
    """Weighted Lp norm ``(sum_i ∫ |f_i|^p rho_i)^(1/p)``."""
    # factor out sup |f| so that |f|^p neither underflows nor overflows
    scale = max((float(np.max(np.abs(v))) for _, v in f.items()), default=0.0)
    if scale == 0.0:
        return 0.0
    if 1e-100 < scale < 1e100:
        return norm_p(f, W, cfg) ** (1.0 / cfg.p)
    unit = GridFunction({i: v / scale for i, v in f.items()}, f.N)
    return scale * norm_p(unit, W, cfg) ** (1.0 / cfg.p)


def disnorm_sides(f: GridFunction, tree, W, n: int, cfg: LpConfig) -> tuple[float, float]:
    """Both sides of ``||f||^p >= sum_i sum_{j in M_n(i)} ||f_j||^p``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > tree.max_level - tree.min_level:
        raise TruncationExceeded(f"no edge has {n} materialized descendant levels")
    per_edge = np.zeros(tree.n_edges)
    for i, val in _edge_integrals(f, W, cfg).items():
        per_edge[i] = val
    ids = np.flatnonzero(tree.forward_room(np.arange(tree.n_edges)) >= n)
    lo, hi = tree.descendant_ranges(ids, n)
    csum = np.concatenate([[0.0], np.cumsum(per_edge)])
    rhs = float(np.sum(csum[hi] - csum[lo]))
    return float(per_edge.sum()), rhs


def check_disnorm(f: GridFunction, tree, W, n: int, cfg: LpConfig) -> bool:
    lhs, rhs = disnorm_sides(f, tree, W, n, cfg)
    return lhs >= rhs - cfg.tol * max(1.0, abs(lhs))


def random_test_function(tree, seed: int, max_support: int, cfg: LpConfig,
                         edges: Iterable[int] | None = None) -> GridFunction:
    """Deterministic pseudo-random finitely supported function.

    The support size is drawn uniformly from ``1..max_support`` and the
    samples are standard normal.  ``edges`` restricts the candidate pool.
    """
    pool = np.arange(tree.n_edges) if edges is None else np.unique(np.asarray(list(edges), dtype=int))
    if max_support < 1 or max_support > pool.size:
        raise InputError(f"max_support must lie in 1..{pool.size}")
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, max_support + 1))
    support = np.sort(rng.choice(pool, size=k, replace=False))
    samples = rng.standard_normal((k, cfg.N))
    return GridFunction({int(i): samples[r] for r, i in enumerate(support)}, cfg.N)
