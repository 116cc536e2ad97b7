"""Left translation semigroup on a directed metric tree.

For a grid-aligned time ``t = tau/N`` the operator is an exact re-indexing
of samples::

    (T_t f)_i[k] = sum_{j in M_n(i)} f_j[(k + tau) mod N],   n = (k + tau) // N

so the semigroup law holds up to the order of floating point additions.
Non-aligned times go through :func:`translate_interp`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, NotGridAligned, TruncationExceeded, ZeroFunction
from .lp_space import GridFunction, LpConfig, norm

SNAP = 1e-12


def step_index(t: float, s: float) -> int:
    """``n(t, s) = floor(s + t)``, snapping values within 1e-12 of an integer."""
    if t < 0:
        raise InputError("t must be non-negative")
    x = s + t
    r = round(x)
    if abs(x - r) <= SNAP:
        return int(r)
    return int(math.floor(x))


def step_indices(t: float, s: np.ndarray) -> np.ndarray:
    x = np.asarray(s, dtype=float) + t
    r = np.round(x)
    return np.where(np.abs(x - r) <= SNAP, r, np.floor(x)).astype(np.int64)


def grid_steps(t: float, N: int) -> int | None:
    """``t * N`` as an integer when ``t`` is grid-aligned, else None."""
    tau = t * N
    r = round(tau)
    return int(r) if abs(tau - r) <= SNAP else None


@dataclass(frozen=True)
class TimePoint:
    t: float
    N: int

    def __post_init__(self):
        if not self.t >= 0:
            raise InputError(f"time must be non-negative, got {self.t!r}")

    @property
    def grid_aligned(self) -> bool:
        return grid_steps(self.t, self.N) is not None

    @property
    def steps(self) -> int:
        tau = grid_steps(self.t, self.N)
        if tau is None:
            raise NotGridAligned(f"t={self.t!r} is not a multiple of 1/{self.N}")
        return tau


def _as_time(t) -> float:
    return float(t.t) if isinstance(t, TimePoint) else float(t)


def _accumulate(tree, out: dict, j: int, n: int, cells: slice, vals: np.ndarray, N: int):
    """Add ``vals`` into the cells of ``K_n(j)``; mass above a root is dropped."""
    a = int(tree.ancestors([j], n)[0])
    if a < 0:
        if not tree.rooted and np.any(vals):
            raise TruncationExceeded(
                f"T_t moves mass from edge {j} above the {int(tree.depth[j] - tree.min_level)} "
                f"materialized ancestor levels")
        return
    buf = out.get(a)
    if buf is None:
        buf = out[a] = np.zeros(N)
    buf[cells] += vals


def translate(tree, f: GridFunction, t, cfg: LpConfig | None = None) -> GridFunction:
    """``T_t f`` for grid-aligned ``t`` by exact sample re-indexing."""
    N = f.N if cfg is None else cfg.N
    if f.N != N:
        raise InputError(f"function sampled with N={f.N}, config has N={N}")
    t = _as_time(t)
    if t < 0:
        raise InputError("t must be non-negative")
    tau = grid_steps(t, N)
    if tau is None:
        raise NotGridAligned(f"t={t!r} is not a multiple of 1/{N}; use translate_interp")
    n0, r = divmod(tau, N)
    out: dict[int, np.ndarray] = {}
    for j, v in f.items():
        # cells k < N - r read u = k + r on edge j (n = n0) ...
        _accumulate(tree, out, j, n0, slice(0, N - r), v[r:], N)
        # ... cells k >= N - r wrap to u = k + r - N one level further (n = n0 + 1)
        if r:
            _accumulate(tree, out, j, n0 + 1, slice(N - r, N), v[:r], N)
    return GridFunction(out, N)


def _extend(v: np.ndarray) -> np.ndarray:
    # node N (s = 1) by linear extrapolation of the last cell
    return np.append(v, 2 * v[-1] - v[-2])


def translate_interp(tree, f: GridFunction, t, cfg: LpConfig | None = None) -> GridFunction:
    """``T_t f`` for arbitrary ``t >= 0`` with ``f_j`` linearly interpolated.

    Exact for grid-aligned ``t`` and for affine samples; for smooth ``f`` the
    error is O(1/N^2).
    """
    N = f.N if cfg is None else cfg.N
    t = _as_time(t)
    if grid_steps(t, N) is not None:
        return translate(tree, f, t, cfg)
    if t < 0:
        raise InputError("t must be non-negative")
    s = np.arange(N) / N
    n = step_indices(t, s)
    u = np.clip(s + t - n, 0.0, 1.0)
    pos = u * N
    idx = np.minimum(np.floor(pos).astype(np.int64), N - 1)
    frac = pos - idx
    n0 = int(n.min())
    out: dict[int, np.ndarray] = {}
    for j, v in f.items():
        ext = _extend(v)
        vals = (1 - frac) * ext[idx] + frac * ext[idx + 1]
        for nv in (n0, n0 + 1):
            mask = n == nv
            if not mask.any():
                continue
            a = int(tree.ancestors([j], nv)[0])
            if a < 0:
                if not tree.rooted and np.any(vals[mask]):
                    raise TruncationExceeded(f"T_t moves mass from edge {j} above the materialized levels")
                continue
            buf = out.setdefault(a, np.zeros(N))
            buf[mask] += vals[mask]
    return GridFunction(out, N)


def orbit(tree, f: GridFunction, times: Iterable[float], cfg: LpConfig | None = None) -> list[GridFunction]:
    return [translate(tree, f, t, cfg) for t in times]


def check_semigroup_law(tree, f: GridFunction, t1, t2, cfg: LpConfig | None = None) -> float:
    """``max |T_t1 T_t2 f - T_{t1+t2} f|`` over all edges and samples."""
    t1, t2 = _as_time(t1), _as_time(t2)
    lhs = translate(tree, translate(tree, f, t2, cfg), t1, cfg)
    rhs = translate(tree, f, t1 + t2, cfg)
    return lhs.max_abs_diff(rhs)


def check_norm_bound(tree, W, f: GridFunction, t_grid: Sequence[float], M: float, w: float,
                     cfg: LpConfig) -> float:
    """Largest ``||T_t f|| / (M e^{wt} ||f||)`` over ``t_grid``."""
    base = norm(f, W, cfg)
    if base == 0:
        raise ZeroFunction("the norm bound is undefined for f = 0")
    worst = -math.inf
    for t in t_grid:
        t = _as_time(t)
        ratio = norm(translate(tree, f, t, cfg), W, cfg) / (M * math.exp(w * t) * base)
        worst = max(worst, ratio)
    return worst


def norm_trace(tree, W, f: GridFunction, times: Iterable[float], cfg: LpConfig) -> list[tuple[float, float]]:
    return [(float(t), norm(translate(tree, f, t, cfg), W, cfg)) for t in times]


def strong_continuity_trend(tree, W, g: GridFunction, cfg: LpConfig,
                            t_max: float = 1.0) -> list[tuple[float, float]]:
    """``||T_t g - g||`` at ``t = 1/N, 2/N, 4/N, ...`` up to ``t_max``."""
    out = []
    k = 1
    while k / cfg.N <= t_max + SNAP:
        t = k / cfg.N
        out.append((t, norm(translate(tree, g, t, cfg) - g, W, cfg)))
        k *= 2
    return out


# ---------------------------------------------------------------------------
# batched evaluation: many functions at once as stacked (key, samples) rows

@dataclass(frozen=True)
class StackedFunctions:
    """Rows ``(member, edge)`` encoded as ``key = member * n_edges + edge``."""

    keys: np.ndarray
    values: np.ndarray
    n_edges: int
    size: int

    @classmethod
    def from_functions(cls, fs: Sequence[GridFunction], n_edges: int) -> "StackedFunctions":
        keys, rows = [], []
        for b, f in enumerate(fs):
            for e, v in f.items():
                if e >= n_edges:
                    raise TruncationExceeded(f"edge {e} is not materialized")
                keys.append(b * n_edges + e)
                rows.append(v)
        N = fs[0].N if fs else 1
        vals = np.array(rows, dtype=float).reshape(len(rows), N)
        return cls(np.asarray(keys, dtype=np.int64), vals, n_edges, len(fs))

    def member(self, b: int) -> GridFunction:
        sel = (self.keys // self.n_edges) == b
        return GridFunction({int(k % self.n_edges): v for k, v in zip(self.keys[sel], self.values[sel])},
                            self.values.shape[1])

    def combine(self, other: "StackedFunctions", sign: float = 1.0) -> "StackedFunctions":
        keys = np.concatenate([self.keys, other.keys])
        vals = np.concatenate([self.values, sign * other.values])
        uk, inv = np.unique(keys, return_inverse=True)
        out = np.zeros((uk.size, vals.shape[1]))
        np.add.at(out, inv, vals)
        return StackedFunctions(uk, out, self.n_edges, max(self.size, other.size))


class _AncestorTable:
    def __init__(self, tree):
        self.tree = tree
        self.levels = [np.arange(tree.n_edges, dtype=np.int64)]

    def __getitem__(self, n: int) -> np.ndarray:
        while len(self.levels) <= n:
            prev = self.levels[-1]
            nxt = np.full_like(prev, -1)
            ok = prev >= 0
            nxt[ok] = self.tree.parent[prev[ok]]
            self.levels.append(nxt)
        return self.levels[n]


def translate_stacked(tree, F: StackedFunctions, t: float, N: int,
                      table: _AncestorTable | None = None) -> StackedFunctions:
    """:func:`translate` applied to every member of ``F`` at once."""
    tau = grid_steps(t, N)
    if tau is None or t < 0:
        raise NotGridAligned(f"t={t!r} is not a non-negative multiple of 1/{N}")
    table = table or _AncestorTable(tree)
    n0, r = divmod(tau, N)
    E = F.n_edges
    member, edge = F.keys // E, F.keys % E
    parts_k, parts_v = [], []
    for n, src, dst in ((n0, slice(r, N), slice(0, N - r)), (n0 + 1, slice(0, r), slice(N - r, N))):
        if dst.start == dst.stop:
            continue
        a = table[n][edge]
        lost = a < 0
        if lost.any():
            if not tree.rooted and np.any(F.values[lost][:, src]):
                raise TruncationExceeded("T_t moves mass above the materialized ancestor levels")
        keep = ~lost
        block = np.zeros((int(keep.sum()), N))
        block[:, dst] = F.values[keep][:, src]
        parts_k.append(member[keep] * E + a[keep])
        parts_v.append(block)
    if not parts_k:
        return StackedFunctions(np.zeros(0, dtype=np.int64), np.zeros((0, N)), E, F.size)
    keys = np.concatenate(parts_k)
    vals = np.concatenate(parts_v)
    uk, inv = np.unique(keys, return_inverse=True)
    out = np.zeros((uk.size, N))
    np.add.at(out, inv, vals)
    return StackedFunctions(uk, out, E, F.size)


def check_semigroup_law_batch(tree, fs: Sequence[GridFunction], pairs: Sequence[tuple[float, float]],
                              cfg: LpConfig) -> float:
    """Largest ``|T_t1 T_t2 f - T_{t1+t2} f|`` over all ``f`` in ``fs`` and all pairs."""
    if not fs:
        return 0.0
    table = _AncestorTable(tree)
    F = StackedFunctions.from_functions(fs, tree.n_edges)
    cache: dict[float, StackedFunctions] = {}

    def T(t, G=None):
        if G is None:
            if t not in cache:
                cache[t] = translate_stacked(tree, F, t, cfg.N, table)
            return cache[t]
        return translate_stacked(tree, G, t, cfg.N, table)

    worst = 0.0
    for t1, t2 in pairs:
        diff = T(t1, T(t2)).combine(T(t1 + t2), -1.0)
        if diff.values.size:
            worst = max(worst, float(np.max(np.abs(diff.values))))
    return worst


def stacked_norms(F: StackedFunctions, W, cfg: LpConfig) -> np.ndarray:
    """Weighted norm of every member of ``F``, same quadrature as :func:`norm`."""
    table = W.table(cfg.N)
    edge = F.keys % F.n_edges
    h = 1.0 / cfg.N
    if cfg.quadrature == "rectangle":
        per_row = h * np.sum(np.abs(F.values) ** cfg.p * table[edge, :-1], axis=1)
    else:
        v = F.values
        ext = np.concatenate([v, 2 * v[:, -1:] - v[:, -2:-1]], axis=1)
        integrand = np.abs(ext) ** cfg.p * table[edge]
        per_row = h * (integrand.sum(axis=1) - 0.5 * (integrand[:, 0] + integrand[:, -1]))
    out = np.zeros(F.size)
    np.add.at(out, F.keys // F.n_edges, per_row)
    return out ** (1.0 / cfg.p)


def check_norm_bound_batch(tree, W, fs: Sequence[GridFunction], t_grid: Sequence[float], M: float,
                           w: float, cfg: LpConfig) -> float:
    """:func:`check_norm_bound` maximized over every ``f`` in ``fs``."""
    table = _AncestorTable(tree)
    F = StackedFunctions.from_functions(fs, tree.n_edges)
    base = stacked_norms(F, W, cfg)
    if np.any(base == 0):
        raise ZeroFunction("the norm bound is undefined for f = 0")
    worst = -math.inf
    for t in t_grid:
        t = _as_time(t)
        ratio = stacked_norms(translate_stacked(tree, F, t, cfg.N, table), W, cfg) / (M * math.exp(w * t) * base)
        worst = max(worst, float(ratio.max()))
    return worst
