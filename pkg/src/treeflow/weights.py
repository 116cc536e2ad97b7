"""Edge weights, Hölder level sums and the admissibility inequalities.

Rules evaluate ``log rho`` rather than ``rho`` so that steep families such as
``exp(-(i+s)^2)`` stay representable deep in the tree.  All extrema over
``s in [0, 1]`` are taken over the closed grid ``k/N, k = 0..N``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import (
    InputError,
    InvalidExponent,
    NonPositiveWeight,
    NoViolation,
    NotGridAligned,
    TruncationExceeded,
)
from .lp_space import GridFunction, LpConfig
from .semigroup import SNAP, grid_steps, step_index, step_indices
from .tree import DirectedTree, reachable_set


# ---------------------------------------------------------------------------
# rules

class WeightRule:
    """A closed-form or tabulated weight; subclasses implement ``log_eval``."""

    name = "rule"

    def log_eval(self, edges: np.ndarray, depths: np.ndarray, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_mapping(self) -> dict:
        raise InputError(f"{type(self).__name__} weights cannot be serialized")


@dataclass(frozen=True)
class Constant(WeightRule):
    value: float = 1.0
    name = "constant"

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise NonPositiveWeight(f"constant weight must be positive and finite, got {self.value!r}")

    def log_eval(self, edges, depths, s):
        return np.full((len(edges), len(s)), math.log(self.value))

    def to_mapping(self):
        return {"rule": "constant", "value": self.value}


@dataclass(frozen=True)
class Exponential(WeightRule):
    """``exp(a * x**power + b)`` with ``x = depth + s`` (or ``|depth + s|``)."""

    a: float = -1.0
    b: float = 0.0
    power: float = 1.0
    symmetric: bool = False
    name = "exponential"

    def log_eval(self, edges, depths, s):
        x = depths[:, None] + s[None, :]
        if self.symmetric or float(self.power) != int(self.power):
            x = np.abs(x)
        return self.a * x ** self.power + self.b

    def to_mapping(self):
        return {"rule": "exponential", "a": self.a, "b": self.b, "power": self.power,
                "symmetric": self.symmetric}


@dataclass(frozen=True)
class Geometric(WeightRule):
    """Constant along each edge: ``value * ratio**depth`` (``|depth|`` if symmetric)."""

    value: float = 1.0
    ratio: float = 1.0
    symmetric: bool = False
    name = "geometric"

    def __post_init__(self):
        if not (self.value > 0 and self.ratio > 0):
            raise NonPositiveWeight("geometric weights need value > 0 and ratio > 0")

    def log_eval(self, edges, depths, s):
        d = np.abs(depths) if self.symmetric else depths
        col = math.log(self.value) + d * math.log(self.ratio)
        return np.repeat(col.astype(float)[:, None], len(s), axis=1)

    def to_mapping(self):
        return {"rule": "geometric", "value": self.value, "ratio": self.ratio,
                "symmetric": self.symmetric}


@dataclass(frozen=True)
class Tabulated(WeightRule):
    """Samples at coordinates ``xs`` in [0, 1], linearly interpolated."""

    xs: tuple
    ys: tuple
    name = "tabulated"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 1:
            raise InputError("tabulated weight needs matching 1-d sample lists")
        if xs.size > 1 and np.any(np.diff(xs) <= 0):
            raise InputError("tabulated coordinates must be strictly increasing")
        if xs[0] > 0 or xs[-1] < 1:
            raise InputError("tabulated coordinates must cover [0, 1]")
        if not np.all(np.isfinite(ys)) or np.any(ys <= 0):
            raise NonPositiveWeight("tabulated weight values must be positive and finite")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "Tabulated":
        """Equispaced samples on [0, 1] including both endpoints."""
        values = tuple(float(v) for v in values)
        if len(values) < 2:
            raise InputError("need at least two equispaced samples")
        return cls(tuple(np.linspace(0, 1, len(values))), values)

    def log_eval(self, edges, depths, s):
        row = np.log(np.interp(s, self.xs, self.ys))
        return np.repeat(row[None, :], len(edges), axis=0)

    def to_mapping(self):
        return {"rule": "tabulated", "points": [[x, y] for x, y in zip(self.xs, self.ys)]}


class FromFunction(WeightRule):
    """Wrap ``fn(edges, depths, s) -> rho`` (broadcast to ``(len(edges), len(s))``)."""

    name = "function"

    def __init__(self, fn: Callable):
        self.fn = fn

    def log_eval(self, edges, depths, s):
        vals = np.broadcast_to(
            np.asarray(self.fn(edges[:, None], depths[:, None], s[None, :]), dtype=float),
            (len(edges), len(s)))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(vals > 0, np.log(np.where(vals > 0, vals, 1.0)), np.nan)


def rule_from_mapping(data: Mapping[str, Any]) -> WeightRule:
    if not isinstance(data, Mapping) or "rule" not in data:
        raise InputError("each weight rule needs a 'rule' key")
    kind = data["rule"]
    params = {k: v for k, v in data.items() if k != "rule"}
    allowed = {
        "constant": {"value"},
        "exponential": {"a", "b", "power", "symmetric"},
        "geometric": {"value", "ratio", "symmetric"},
        "tabulated": {"points", "values"},
    }
    if kind not in allowed:
        raise InputError(f"unknown weight rule {kind!r}")
    extra = set(params) - allowed[kind]
    if extra:
        raise InputError(f"unknown keys for rule {kind!r}: {sorted(extra)}")
    try:
        if kind == "tabulated":
            if "points" in params:
                pts = params["points"]
                if isinstance(pts, Mapping):
                    pts = sorted((float(k), float(v)) for k, v in pts.items())
                xs, ys = zip(*[(float(x), float(y)) for x, y in pts])
                return Tabulated(tuple(xs), tuple(ys))
            if "values" in params:
                return Tabulated.from_values(params["values"])
            raise InputError("tabulated rule needs 'points' or 'values'")
        return {"constant": Constant, "exponential": Exponential, "geometric": Geometric}[kind](**params)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad parameters for rule {kind!r}: {exc}") from None


# ---------------------------------------------------------------------------
# families

class WeightFamily:
    """Per-edge weights on a materialized tree.

    ``rule`` applies everywhere unless overridden per depth or per edge (edge
    overrides win).  ``scale`` multiplies every weight.
    """

    def __init__(self, tree: DirectedTree, rule: WeightRule,
                 depth_overrides: Mapping[int, WeightRule] | None = None,
                 edge_overrides: Mapping[int, WeightRule] | None = None,
                 scale: float = 1.0, validate_N: int | None = 64):
        if not scale > 0:
            raise NonPositiveWeight("scale must be positive")
        self.tree = tree
        self.rule = rule
        self.depth_overrides = dict(depth_overrides or {})
        self.edge_overrides = dict(edge_overrides or {})
        self.scale = float(scale)
        rules = [rule] + list(self.depth_overrides.values()) + list(self.edge_overrides.values())
        assign = np.zeros(tree.n_edges, dtype=np.int64)
        for r, (d, _) in enumerate(self.depth_overrides.items(), start=1):
            assign[tree.depth == d] = r
        off = 1 + len(self.depth_overrides)
        for r, (e, _) in enumerate(self.edge_overrides.items(), start=off):
            e = int(e)
            if not 0 <= e < tree.n_edges:
                raise InputError(f"override for edge {e}, which is not materialized")
            assign[e] = r
        self._rules = rules
        self._assign = assign
        self._groups = [(r, np.flatnonzero(assign == r)) for r in range(len(rules))]
        self._groups = [(r, ids) for r, ids in self._groups if ids.size]
        self._tables: dict[int, np.ndarray] = {}
        self._log_tables: dict[int, np.ndarray] = {}
        if validate_N:
            self.validate(validate_N)

    @classmethod
    def constant(cls, tree, value: float = 1.0, **kw) -> "WeightFamily":
        return cls(tree, Constant(value), **kw)

    @classmethod
    def exponential(cls, tree, a: float, b: float = 0.0, power: float = 1.0,
                    symmetric: bool = False, **kw) -> "WeightFamily":
        return cls(tree, Exponential(a, b, power, symmetric), **kw)

    @classmethod
    def from_function(cls, tree, fn: Callable, **kw) -> "WeightFamily":
        return cls(tree, FromFunction(fn), **kw)

    @classmethod
    def from_mapping(cls, tree, data: Mapping[str, Any]) -> "WeightFamily":
        if not isinstance(data, Mapping):
            raise InputError("weight spec must be a mapping")
        extra = set(data) - {"rule", "value", "a", "b", "power", "symmetric", "ratio", "points",
                             "values", "depth_overrides", "edge_overrides", "scale"}
        if extra:
            raise InputError(f"unknown weight-spec keys: {sorted(extra)}")
        base = {k: v for k, v in data.items() if k not in ("depth_overrides", "edge_overrides", "scale")}
        rule = rule_from_mapping(base)

        def _overrides(key):
            raw = data.get(key) or {}
            if not isinstance(raw, Mapping):
                raise InputError(f"{key} must map integers to rules")
            try:
                return {int(k): rule_from_mapping(v) for k, v in raw.items()}
            except ValueError:
                raise InputError(f"{key} keys must be integers") from None

        return cls(tree, rule, _overrides("depth_overrides"), _overrides("edge_overrides"),
                   scale=float(data.get("scale", 1.0)))

    def to_mapping(self) -> dict:
        out = self.rule.to_mapping()
        if self.depth_overrides:
            out["depth_overrides"] = {str(k): v.to_mapping() for k, v in self.depth_overrides.items()}
        if self.edge_overrides:
            out["edge_overrides"] = {str(k): v.to_mapping() for k, v in self.edge_overrides.items()}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out

    def scaled(self, c: float) -> "WeightFamily":
        return WeightFamily(self.tree, self.rule, self.depth_overrides, self.edge_overrides,
                            scale=self.scale * c)

    # -- evaluation ----------------------------------------------------
    def log_evaluate(self, s, edges=None) -> np.ndarray:
        """``log rho_i(s)`` as an array of shape ``(edges, len(s))``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if edges is None:
            out = np.empty((self.tree.n_edges, s.size))
            for r, ids in self._groups:
                out[ids] = self._rules[r].log_eval(ids, self.tree.depth[ids], s)
        else:
            edges = np.atleast_1d(np.asarray(edges, dtype=np.int64))
            out = np.empty((edges.size, s.size))
            a = self._assign[edges]
            for r in np.unique(a):
                rows = np.flatnonzero(a == r)
                ids = edges[rows]
                out[rows] = self._rules[r].log_eval(ids, self.tree.depth[ids], s)
        return out + math.log(self.scale)

    def evaluate(self, s, edges=None) -> np.ndarray:
        return np.exp(self.log_evaluate(s, edges))

    def log_table(self, N: int) -> np.ndarray:
        """``log rho`` at ``k/N, k = 0..N`` for every edge (cached)."""
        tab = self._log_tables.get(N)
        if tab is None:
            tab = self.log_evaluate(np.arange(N + 1) / N)
            tab.setflags(write=False)
            self._log_tables[N] = tab
        return tab

    def table(self, N: int) -> np.ndarray:
        tab = self._tables.get(N)
        if tab is None:
            tab = np.exp(self.log_table(N))
            tab.setflags(write=False)
            self._tables[N] = tab
        return tab

    def __call__(self, i: int, s: float) -> float:
        return eval_weight(self, i, s)

    def validate(self, N: int = 64):
        """Positivity, finiteness and boundedness on the closed grid."""
        with np.errstate(over="ignore"):
            L = self.log_table(N)
            T = self.table(N)
        bad = ~np.isfinite(L) | ~np.isfinite(T) | (T <= 0)
        if bad.any():
            i, k = np.argwhere(bad)[0]
            raise NonPositiveWeight(
                f"weight on edge {i} at s={k}/{N} is not positive and finite "
                f"(log value {L[i, k]!r})")

    def bounds(self, N: int = 64) -> tuple[np.ndarray, np.ndarray]:
        T = self.table(N)
        return T.min(axis=1), T.max(axis=1)


def eval_weight(W: WeightFamily, i: int, s: float) -> float:
    W.tree._check_edge(i)
    if not 0 <= s <= 1:
        raise InputError(f"s must lie in [0, 1], got {s!r}")
    val = float(W.evaluate([s], [i])[0, 0])
    if not (val > 0 and math.isfinite(val)):
        raise NonPositiveWeight(f"weight on edge {i} at s={s} is {val!r}")
    return val


# ---------------------------------------------------------------------------
# Hölder level infimum

def _lse_family(log_rho: np.ndarray, p: float):
    """Normalized family ``v ∝ rho^{-1/(p-1)}`` and ``log sum rho^{-1/(p-1)}``."""
    y = -np.asarray(log_rho, dtype=float) / (p - 1)
    m = y.max()
    x = np.exp(y - m)
    tot = x.sum()
    return x / tot, m + math.log(tot)


def holder_infimum(weights: Sequence[float], p: float) -> tuple[float, np.ndarray]:
    """Minimum of ``sum v_j^p rho_j`` over ``v >= 0, sum v_j = 1`` and its minimizer.

    The value is ``(sum_j rho_j^{-1/(p-1)})^{1-p}``.
    """
    if not p > 1:
        raise InvalidExponent("holder_infimum needs p > 1; for p = 1 take the minimum weight")
    rho = np.asarray(weights, dtype=float)
    if rho.ndim != 1 or rho.size < 1:
        raise InputError("need at least one weight")
    if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise NonPositiveWeight("weights must be positive and finite")
    v, lse = _lse_family(np.log(rho), p)
    return math.exp((1 - p) * lse), v


def min_weight(tree: DirectedTree, W: WeightFamily, i: int, n: int, s: float) -> float:
    """``min_{j in M_n(i)} rho_j(s)``."""
    reach = reachable_set(tree, i, n)
    if len(reach) == 0:
        raise TruncationExceeded(f"M_{n}({i}) is empty")
    return float(W.evaluate([s], np.arange(reach.start, reach.stop)).min())


# ---------------------------------------------------------------------------
# segment reductions over the contiguous ranges M_n(i)

def _reduce_segments(ufunc, Y: np.ndarray, lo, hi, empty: float) -> np.ndarray:
    """``ufunc.reduce`` over row ranges ``[lo_k, hi_k)`` (sorted, disjoint)."""
    out = np.full((lo.size, Y.shape[1]), empty)
    nz = hi > lo
    if nz.any():
        # interleave starts and stops; the even slots are the wanted segments
        idx = np.empty(2 * int(nz.sum()), dtype=np.int64)
        idx[0::2] = lo[nz]
        idx[1::2] = hi[nz]
        padded = np.vstack([Y, np.full((1, Y.shape[1]), empty)])
        out[nz] = ufunc.reduceat(padded, idx, axis=0)[0::2]
    return out


def segment_min(Y: np.ndarray, lo, hi) -> np.ndarray:
    """Row-segment minima; ``+inf`` for empty segments."""
    return _reduce_segments(np.minimum, Y, lo, hi, np.inf)


def segment_max(Y, lo, hi):
    return _reduce_segments(np.maximum, Y, lo, hi, -np.inf)


def segment_logsumexp(Y: np.ndarray, lo, hi) -> np.ndarray:
    """``log sum_{j in [lo, hi)} exp(Y_j)`` per segment; ``-inf`` when empty."""
    m = segment_max(Y, lo, hi)
    out = np.full_like(m, -np.inf)
    nz = hi > lo
    if not nz.any():
        return out
    lo_nz, hi_nz, m_nz = lo[nz], hi[nz], m[nz]
    rows = _concat_ranges(lo_nz, hi_nz)
    seg = np.repeat(np.arange(lo_nz.size), hi_nz - lo_nz)
    shifted = np.exp(Y[rows] - m_nz[seg])
    starts = np.concatenate([[0], np.cumsum(hi_nz - lo_nz)[:-1]])
    sums = np.add.reduceat(shifted, starts, axis=0)
    out[nz] = m_nz + np.log(sums)
    return out


def _concat_ranges(lo, hi):
    lengths = hi - lo
    offsets = np.repeat(lo - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return np.arange(lengths.sum()) + offsets


# ---------------------------------------------------------------------------
# admissibility

@dataclass
class AdmissibilityReport:
    p: float
    M: float
    w: float
    status: str
    worst_ratio: float
    violation: tuple | None = None
    log_worst_ratio: float = -math.inf
    n_tested: int = 0

    def to_record(self) -> dict:
        v = None
        if self.violation is not None:
            i, t, s = self.violation
            v = {"edge": int(i), "t": float(t), "s": float(s)}
        return {"p": self.p, "M": self.M, "w": self.w, "status": self.status,
                "worst_ratio": self.worst_ratio, "violation": v}


def _log_level_quantity(tree: DirectedTree, W: WeightFamily, cfg: LpConfig, n: int,
                        ids: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per edge in ``ids`` and per coordinate ``u``, the log of the level quantity.

    p = 1: ``min_{j in M_n(i)} log rho_j(u)``.  p > 1: ``log sum_j rho_j(u)^{-1/(p-1)}``.
    """
    lo, hi = tree.descendant_ranges(ids, n)
    if cfg.p == 1:
        L = W.log_evaluate(u)
        return segment_min(L, lo, hi)
    Y = -W.log_evaluate(u) / (cfg.p - 1)
    return segment_logsumexp(Y, lo, hi)


def log_ratio_profile(tree: DirectedTree, W: WeightFamily, t: float, cfg: LpConfig,
                      ids: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Log of the admissibility ratio at ``M = 1, w = 0`` on the closed grid.

    Returns ``(ids, R)`` with ``R[r, k]`` for edge ``ids[r]`` and ``s = k/N``;
    ``R`` is NaN where ``M_n(i)`` is beyond the truncation.  p = 1 uses
    ``log rho_i(s) - min_j log rho_j(u)``; p > 1 uses
    ``log rho_i(s) + (p-1) log sum_j rho_j(u)^{-1/(p-1)}``.

    Where ``s + t`` is an integer the flow sits on a vertex, and the ratio is
    the larger of its two one-sided limits (``u -> 0+`` one level down,
    ``u -> 1-`` one level up); ``s = 1`` only has the left limit.  A jump of
    the weight across a vertex then never counts as a violation by itself.
    """
    N = cfg.N
    s = np.arange(N + 1) / N
    n = step_indices(t, s)
    u = np.clip(s + t - n, 0.0, 1.0)
    on_vertex = np.abs(s + t - np.round(s + t)) <= SNAP
    # one row per (column, branch): right limits for s < 1, left limits at vertices
    right = np.arange(N)
    left = np.flatnonzero(on_vertex & (s > 0))
    cols = np.concatenate([right, left])
    nn = np.concatenate([n[right], n[left] - 1])
    uu = np.concatenate([u[right], np.ones(left.size)])
    if ids is None:
        ids = np.arange(tree.n_edges)
    ids = np.asarray(ids, dtype=np.int64)
    Li = W.log_table(N)[ids]
    R = np.full((ids.size, N + 1), np.nan)
    room = tree.forward_room(ids)
    for nv in np.unique(nn):
        sel = np.flatnonzero(nn == nv)
        ok = np.flatnonzero(room >= nv)
        if ok.size == 0:
            continue
        Q = _log_level_quantity(tree, W, cfg, int(nv), ids[ok], uu[sel])
        c = cols[sel]
        if cfg.p == 1:
            vals = Li[np.ix_(ok, c)] - Q
        else:
            vals = Li[np.ix_(ok, c)] + (cfg.p - 1) * Q
        block = R[np.ix_(ok, c)]
        R[np.ix_(ok, c)] = np.fmax(block, vals)
    return ids, R


def _horizon_steps(t_grid) -> int:
    return max(step_index(float(t), 1.0) for t in t_grid)


def check_admissibility(tree: DirectedTree, W: WeightFamily, M: float, w: float,
                        t_grid: Sequence[float], cfg: LpConfig,
                        workers: int | None = None) -> AdmissibilityReport:
    """Test the p-admissibility inequality for every edge, time and grid coordinate.

    Edges whose ``M_n(i)`` would cross the truncation frontier are skipped for
    that ``n``; a ``t_grid`` no edge can support raises TruncationExceeded.
    """
    if not M >= 1:
        raise InputError("M must be >= 1")
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise InputError("t_grid is empty")
    if any(t < 0 for t in t_grid):
        raise InputError("times must be non-negative")
    need = _horizon_steps(t_grid)
    if need > tree.max_level - tree.min_level:
        raise TruncationExceeded(
            f"t_grid reaches n={need} but the tree has {tree.max_level - tree.min_level} levels below its top")
    p = cfg.p
    log_pass = math.log1p(cfg.tol)

    def scan(t):
        ids, R = log_ratio_profile(tree, W, t, cfg)
        R = R - p * (math.log(M) + w * t)
        finite = ~np.isnan(R)
        if not finite.any():
            return -math.inf, None, 0
        worst = float(np.max(R[finite]))
        bad = np.argwhere(finite & (R > log_pass))
        first = None
        if bad.size:
            r, k = bad[0]
            first = (int(ids[r]), t, k / cfg.N)
        return worst, first, int(finite.sum())

    if workers and workers > 1 and len(t_grid) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(scan, t_grid))
    else:
        results = [scan(t) for t in t_grid]
    log_worst = max(r[0] for r in results)
    violation = next((r[1] for r in results if r[1] is not None), None)
    n_tested = sum(r[2] for r in results)
    # ratio of the p-th powers; reported as the ratio of the inequality itself
    log_worst_ratio = log_worst
    with np.errstate(over="ignore"):
        worst_ratio = float(np.exp(log_worst_ratio)) if log_worst_ratio > -math.inf else 0.0
    status = "pass" if violation is None else "fail"
    return AdmissibilityReport(p, float(M), float(w), status, worst_ratio, violation,
                               log_worst_ratio, n_tested)


def _log_amplitude(tree, W, horizon, cfg, t_grid=None):
    """``log A(t)``: the largest ``(ratio at M=1, w=0)^(1/p)`` over a fixed edge set."""
    if t_grid is None:
        t_grid = np.arange(1, int(round(horizon * cfg.N)) + 1) / cfg.N
    t_grid = np.asarray(t_grid, dtype=float)
    need = _horizon_steps(t_grid)
    ids = np.flatnonzero(tree.forward_room(np.arange(tree.n_edges)) >= need)
    if ids.size == 0:
        raise TruncationExceeded(f"horizon {horizon} needs {need} levels below some edge")
    logA = np.empty(t_grid.size)
    for r, t in enumerate(t_grid):
        _, R = log_ratio_profile(tree, W, float(t), cfg, ids)
        logA[r] = np.nanmax(R) / cfg.p
    return t_grid, logA


def _log_amplitude_at_zero(tree, W, cfg) -> float:
    """``log lim_{t -> 0+} A(t)``: cells just below a vertex read the children at ``u = 0``."""
    ids = np.flatnonzero(tree.forward_room(np.arange(tree.n_edges)) >= 1)
    if ids.size == 0:
        return 0.0
    L = W.log_table(cfg.N)
    Q = _log_level_quantity(tree, W, cfg, 1, ids, np.zeros(1))[:, 0]
    R0 = L[ids, -1] - Q if cfg.p == 1 else L[ids, -1] + (cfg.p - 1) * Q
    return max(0.0, float(R0.max())) / cfg.p


def _feasible(t, logA, w, T):
    """Growth of ``A(t) e^{-wt}`` on ``(T/2, T]`` does not exceed that on ``[0, T/2]``."""
    g = logA - w * t
    late = t > T / 2
    early_max = max(0.0, float(np.max(g[~late]))) if (~late).any() else 0.0
    return float(np.max(g[late])) <= early_max + 1e-12


def _required_rate(t, logA, T, w_max):
    """Smallest feasible w on horizon T (log grid, then bisection); None if > w_max."""
    sel = t <= T + 1e-12
    t, logA = t[sel], logA[sel]
    grid = np.concatenate([-np.geomspace(w_max, 1e-3, 24), [0.0], np.geomspace(1e-3, w_max, 24)])
    feas = [w for w in grid if _feasible(t, logA, w, T)]
    if not feas:
        return None
    hi = feas[0]
    below = grid[grid < hi]
    if below.size == 0:
        return hi
    lo = below[-1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _feasible(t, logA, mid, T):
            hi = mid
        else:
            lo = mid
    # bisection stops a hair away from an exact rate of zero
    return 0.0 if abs(hi) < 1e-9 and _feasible(t, logA, 0.0, T) else hi


def fit_admissibility(tree: DirectedTree, W: WeightFamily, horizon: float, cfg: LpConfig,
                      t_grid: Sequence[float] | None = None, w_max: float = 50.0,
                      rate_tol: float = 1e-2) -> tuple[float, float] | None:
    """Smallest exponential rate ``w`` and the derived ``M`` over ``[0, horizon]``.

    ``w`` is the least value (log grid then bisection) for which
    ``A(t) e^{-wt}`` stops growing over the second half of the horizon.  If the
    rate needed on the full horizon exceeds the rate needed on its first half
    by more than ``rate_tol`` the growth is super-exponential and None is
    returned.
    """
    t, logA = _log_amplitude(tree, W, horizon, cfg, t_grid)
    T = float(t.max())
    w_full = _required_rate(t, logA, T, w_max)
    if w_full is None:
        return None
    w_half = _required_rate(t, logA, T / 2, w_max) if (t <= T / 2).sum() >= 2 else w_full
    if w_half is None or w_full - w_half > rate_tol * max(1.0, abs(w_full)):
        return None
    # M e^{wt} must also dominate the jump of A at t = 0+
    logM = max(0.0, float(np.max(logA - w_full * t)), _log_amplitude_at_zero(tree, W, cfg))
    return float(np.exp(logM)), float(w_full)


# ---------------------------------------------------------------------------
# norm violator

def build_norm_violator(tree: DirectedTree, W: WeightFamily, M: float, w: float, i0: int,
                        t0: float, cfg: LpConfig) -> GridFunction:
    """A function with ``||T_t0 f|| > M e^{w t0} ||f||`` built at edge ``i0``.

    The violating cells are the grid cells ``s_k = k/N, k < N``, where the
    inequality fails at ``i0``.  For p = 1 the mass sits on the single
    descendant violating most often, with ``f = 1/rho``; for p > 1 each cell
    carries the optimal Hölder family of its level.
    """
    from .lp_space import norm
    from .semigroup import translate

    tree._check_edge(i0)
    N, p = cfg.N, cfg.p
    tau = grid_steps(t0, N)
    if tau is None:
        raise NotGridAligned(f"t0={t0!r} must be a multiple of 1/{N}")
    n0, r = divmod(tau, N)
    need = n0 + (1 if r else 0)
    if need > tree.forward_room(i0):
        raise TruncationExceeded(f"M_{need}({i0}) is beyond the truncation")
    k = np.arange(N)
    n = n0 + (k + r) // N
    uidx = (k + r) % N
    logMe = math.log(M) + w * t0
    Li = W.log_table(N)[i0]
    LT = W.log_table(N)
    margin = 1e-12
    values: dict[int, np.ndarray] = {}

    if p == 1:
        counts: dict[int, list] = {}
        for kk in k:
            lo, hi = tree.descendant_ranges([i0], int(n[kk]))
            js = np.arange(lo[0], hi[0])
            viol = Li[kk] - logMe - LT[js, uidx[kk]] > margin
            for j in js[viol]:
                counts.setdefault(int(j), []).append(int(kk))
        if not counts:
            raise NoViolation(f"the p=1 inequality holds at edge {i0} for t={t0}")
        j0 = min(counts, key=lambda j: (-len(counts[j]), j))
        f = np.zeros(N)
        for kk in counts[j0]:
            f[uidx[kk]] = math.exp(-LT[j0, uidx[kk]])
        values[j0] = f
    else:
        hit = False
        for kk in k:
            nv = int(n[kk])
            lo, hi = tree.descendant_ranges([i0], nv)
            js = np.arange(lo[0], hi[0])
            v, lse = _lse_family(LT[js, uidx[kk]], p)
            if Li[kk] + (p - 1) * lse - p * logMe <= margin:
                continue
            hit = True
            for j, vj in zip(js, v):
                buf = values.setdefault(int(j), np.zeros(N))
                buf[uidx[kk]] = vj
        if not hit:
            raise NoViolation(f"the p={p} inequality holds at edge {i0} for t={t0}")
    f = GridFunction(values, N)
    lhs = norm(translate(tree, f, t0, cfg), W, cfg)
    rhs = M * math.exp(w * t0) * norm(f, W, cfg)
    if not lhs > rhs:
        raise NoViolation(f"violation at edge {i0} is below quadrature resolution")
    return f
