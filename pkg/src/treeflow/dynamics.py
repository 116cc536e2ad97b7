"""Hypercyclicity and mixing criteria, transitivity witnesses, negative certificates.

Criterion sequences are finite-horizon stand-ins for limits.  A sequence is
said to "dip below" when its scale-free normalization (the value at level n
divided by the value at level 0) is below ``tol_dyn``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CriterionMet,
    CriterionNotMet,
    InputError,
    LeafPresent,
    NotRooted,
    NotUnrooted,
    SupportNormalizationFailed,
    TruncationExceeded,
)
from .lp_space import GridFunction, LpConfig, norm, norm_p
from .semigroup import translate
from .tree import ROOTED, DirectedTree, find_leaf, same_component
from .weights import (
    WeightFamily,
    _lse_family,
    fit_admissibility,
    segment_logsumexp,
    segment_min,
)

SUBSEQUENCE = "satisfied-on-subsequence"
MIXING = "satisfied-on-full-sequence"
NOT_SATISFIED = "not-satisfied-within-horizon"
NOT_HYPERCYCLIC = "not-hypercyclic"
TOL_DYN = 1e-3


def leaf_obstruction(tree: DirectedTree) -> int | None:
    """An interior edge without children; ``(T_t f)`` vanishes there for ``t > 1``."""
    return find_leaf(tree)


# ---------------------------------------------------------------------------
# criterion reports

@dataclass
class CriterionReport:
    p: float
    kind: str
    horizon: int
    verdict: str
    edges: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sequences: dict = field(default_factory=dict)      # name -> (edges, horizon) raw values
    normalized: dict = field(default_factory=dict)     # name -> (edges, horizon) scale-free decay
    subsequence: list = field(default_factory=list)
    minima: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    tol_dyn: float = TOL_DYN
    leaf: int | None = None

    @property
    def c(self) -> np.ndarray:
        """Forward criterion sequence, rows per tested edge, columns n = 1..horizon."""
        return self.sequences.get("forward", np.zeros((0, self.horizon)))

    def to_record(self) -> dict:
        return {
            "p": self.p, "kind": self.kind, "horizon": self.horizon, "verdict": self.verdict,
            "tol_dyn": self.tol_dyn, "leaf": self.leaf,
            "edges": [int(e) for e in self.edges],
            "subsequence": [int(n) for n in self.subsequence],
            "minima": {k: float(v) for k, v in self.minima.items()},
            "slopes": {k: float(v) for k, v in self.slopes.items()},
            "sequences": {k: [[float(x) for x in row] for row in v] for k, v in self.sequences.items()},
        }

    def csv_rows(self, name: str = "forward"):
        seq = self.sequences[name]
        for r, e in enumerate(self.edges):
            for n in range(1, self.horizon + 1):
                yield int(e), n, float(seq[r, n - 1])


def _verdict(decay: np.ndarray, tol_dyn: float) -> tuple[str, list]:
    """``decay``: (edges, horizon) normalized values; small means the criterion holds."""
    worst = decay.max(axis=0)
    below = np.flatnonzero(worst < tol_dyn)
    if below.size == 0:
        return NOT_SATISFIED, []
    n = [int(k) + 1 for k in below]
    tail = below[0]
    full_tail = below.size == decay.shape[1] - tail
    monotone = bool(np.all(np.diff(worst[tail:]) <= 0))
    return (MIXING if full_tail and monotone else SUBSEQUENCE), n


def _slope(values: np.ndarray) -> float:
    """Least-squares slope of ``log values`` against ``n``."""
    y = np.log(values)
    ok = np.isfinite(y)
    if ok.sum() < 2:
        return 0.0
    n = np.arange(1, values.size + 1)[ok]
    return float(np.polyfit(n, y[ok], 1)[0])


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _forward_log(tree, W, cfg, ids, n):
    """p > 1: ``log sup_s sum_{M_n(i)} rho^{-1/(p-1)}``.  p = 1: ``log inf_s min_{M_n(i)} rho``."""
    L = W.log_table(cfg.N)
    lo, hi = tree.descendant_ranges(ids, n)
    if cfg.p == 1:
        return segment_min(L, lo, hi).min(axis=1)
    return segment_logsumexp(-L / (cfg.p - 1), lo, hi).max(axis=1)


def _backward_log(tree, W, cfg, ids, n):
    """Ancestor-side quantity through ``K_n(i)`` (same conventions as forward)."""
    L = W.log_table(cfg.N)
    K = tree.ancestors(ids, n)
    if np.any(K < 0):
        raise TruncationExceeded(f"K_{n} is not materialized for some tested edge")
    uk, inv = np.unique(K, return_inverse=True)
    lo, hi = tree.descendant_ranges(uk, n)
    if cfg.p == 1:
        per_s = np.minimum(L[uk], segment_min(L, lo, hi))
        return per_s.min(axis=1)[inv]
    Y = -L / (cfg.p - 1)
    per_s = np.logaddexp(Y[uk], segment_logsumexp(Y, lo, hi))
    return per_s.max(axis=1)[inv]


def _level0_log(W, cfg, ids):
    """Reference value at n = 0: ``log inf_s rho_i`` (p = 1) or ``log sup_s rho_i^{-1/(p-1)}``."""
    L = W.log_table(cfg.N)[ids]
    if cfg.p == 1:
        return L.min(axis=1)
    return (-L / (cfg.p - 1)).max(axis=1)


def _check_horizon(horizon):
    if isinstance(horizon, bool) or not isinstance(horizon, (int, np.integer)) or horizon < 1:
        raise InputError("horizon must be an integer >= 1")


def rooted_criterion(tree: DirectedTree, W: WeightFamily, horizon: int, cfg: LpConfig,
                     tol_dyn: float = TOL_DYN, edges: Sequence[int] | None = None,
                     workers: int | None = None) -> CriterionReport:
    """Level sequence ``c_n(i)`` on a rooted tree for ``n = 1..horizon``.

    p > 1: ``c_n(i) = inf_s (sum_{j in M_n(i)} rho_j(s)^{-1/(p-1)})^{-1}``;
    p = 1: ``c_n(i) = inf_j inf_s rho_j(s)``.  Tested edges are those whose
    ``M_horizon(i)`` is materialized, unless ``edges`` is given.
    """
    if not tree.rooted:
        raise NotRooted("rooted_criterion needs a rooted tree")
    leaf = find_leaf(tree)
    if leaf is not None:
        raise LeafPresent(f"edge {leaf} is an interior leaf")
    _check_horizon(horizon)
    ids = _tested_edges(tree, horizon, edges, backward=False)
    p = cfg.p
    cols = _map(lambda n: _forward_log(tree, W, cfg, ids, n), list(range(1, horizon + 1)), workers)
    logF = np.stack(cols, axis=1)
    log0 = _level0_log(W, cfg, ids)
    if p == 1:
        log_c, log_c0 = logF, log0
    else:
        log_c, log_c0 = -logF, -log0
    c = np.exp(log_c)
    decay = np.exp(log_c - log_c0[:, None])
    verdict, sub = _verdict(decay, tol_dyn)
    worst = c.max(axis=0)
    return CriterionReport(
        p, ROOTED, horizon, verdict, ids, {"forward": c}, {"forward": decay}, sub,
        minima={"forward": float(c.min()), "forward_decay": float(decay.min())},
        slopes={"forward": _slope(worst)}, tol_dyn=tol_dyn)


def unrooted_criterion(tree: DirectedTree, W: WeightFamily, horizon: int, cfg: LpConfig,
                       tol_dyn: float = TOL_DYN, edges: Sequence[int] | None = None,
                       workers: int | None = None) -> CriterionReport:
    """Forward and ancestor-side sequences on an unrooted tree.

    p > 1 reports the sums ``sup_s sum_{M_n(i)} rho^{-1/(p-1)}`` and
    ``sup_s (rho_{K_n(i)}^{-1/(p-1)} + sum_{M_n(K_n(i))} rho^{-1/(p-1)})``,
    which must diverge.  p = 1 reports the matching infima, which must vanish.
    By default the tested edges are the levels ``>= 0`` whose forward and
    ancestor windows both fit.
    """
    if tree.rooted:
        raise NotUnrooted("unrooted_criterion needs an unrooted tree")
    leaf = find_leaf(tree)
    if leaf is not None:
        raise LeafPresent(f"edge {leaf} is an interior leaf")
    _check_horizon(horizon)
    ids = _tested_edges(tree, horizon, edges, backward=True)
    ns = list(range(1, horizon + 1))
    logF = np.stack(_map(lambda n: _forward_log(tree, W, cfg, ids, n), ns, workers), axis=1)
    logB = np.stack(_map(lambda n: _backward_log(tree, W, cfg, ids, n), ns, workers), axis=1)
    log0 = _level0_log(W, cfg, ids)[:, None]
    if cfg.p == 1:
        dF, dB = np.exp(logF - log0), np.exp(logB - log0)
    else:
        dF, dB = np.exp(log0 - logF), np.exp(log0 - logB)
    decay = np.maximum(dF, dB)
    verdict, sub = _verdict(decay, tol_dyn)
    F, B = np.exp(logF), np.exp(logB)
    if cfg.p == 1:
        minima = {"forward": float(F.min()), "backward": float(B.min())}
    else:
        minima = {"forward": float(F.min(axis=0).max()), "backward": float(B.min(axis=0).max())}
    minima["decay"] = float(decay.max(axis=0).min())
    slopes = {"forward": _slope(F.min(axis=0) if cfg.p > 1 else F.max(axis=0)),
              "backward": _slope(B.min(axis=0) if cfg.p > 1 else B.max(axis=0))}
    return CriterionReport(
        cfg.p, "unrooted", horizon, verdict, ids, {"forward": F, "backward": B},
        {"forward": dF, "backward": dB}, sub, minima, slopes, tol_dyn)


def _tested_edges(tree, horizon, edges, backward):
    all_ids = np.arange(tree.n_edges)
    fits = tree.depth + horizon <= tree.max_level
    if backward:
        fits &= tree.depth - horizon >= tree.min_level
    if edges is not None:
        ids = np.unique(np.asarray(list(edges), dtype=np.int64))
        if ids.size == 0:
            raise InputError("no edges to test")
        bad = ids[~fits[ids]]
        if bad.size:
            raise TruncationExceeded(f"horizon {horizon} exceeds the truncation around edge {int(bad[0])}")
        return ids
    if backward:
        fits &= tree.depth >= 0
    ids = all_ids[fits]
    if ids.size == 0:
        raise TruncationExceeded(
            f"no edge has {horizon} materialized levels "
            f"{'on both sides' if backward else 'below it'} (levels {tree.min_level}..{tree.max_level})")
    return ids


def criterion(tree: DirectedTree, W: WeightFamily, horizon: int, cfg: LpConfig,
              tol_dyn: float = TOL_DYN, edges=None, workers=None) -> CriterionReport:
    """Dispatch on the tree kind; an interior leaf forces ``not-hypercyclic``."""
    leaf = leaf_obstruction(tree)
    if leaf is not None:
        return CriterionReport(cfg.p, tree.kind, horizon, NOT_HYPERCYCLIC, tol_dyn=tol_dyn, leaf=leaf)
    fn = rooted_criterion if tree.rooted else unrooted_criterion
    return fn(tree, W, horizon, cfg, tol_dyn, edges, workers)


def is_satisfied(report: CriterionReport) -> bool:
    return report.verdict in (SUBSEQUENCE, MIXING)


# ---------------------------------------------------------------------------
# witnesses

@dataclass
class Witness:
    g: GridFunction
    n: int
    steps: int                    # the witness satisfies T_steps g ≈ f2
    kind: str
    achieved_closeness: float
    achieved_target_error: float
    target_max_abs: float = 0.0
    constants: dict = field(default_factory=dict)
    nu: dict = field(default_factory=dict)           # l -> {j: samples}
    u: dict = field(default_factory=dict)            # l -> {j: value}
    J1: list = field(default_factory=list)
    J2: list = field(default_factory=list)
    I1: list = field(default_factory=list)
    I2: list = field(default_factory=list)
    pieces: int = 1

    def to_record(self) -> dict:
        return {
            "kind": self.kind, "n": self.n, "steps": self.steps,
            "achieved_closeness": self.achieved_closeness,
            "achieved_target_error": self.achieved_target_error,
            "target_max_abs": self.target_max_abs,
            "constants": {k: float(v) for k, v in self.constants.items()},
            "I1": [int(i) for i in self.I1], "I2": [int(i) for i in self.I2],
            "J1": [int(i) for i in self.J1], "J2": [int(i) for i in self.J2],
            "u": {str(l): {str(j): float(x) for j, x in fam.items()} for l, fam in self.u.items()},
            "pieces": self.pieces,
            "g": self.g.to_record(),
        }


def _nonzero_support(f: GridFunction) -> list[int]:
    return [i for i, v in f.items() if np.any(v)]


def _min_rho(W, cfg, edges) -> float:
    return float(W.table(cfg.N)[list(edges)].min())


def _max_rho(W, cfg, edges) -> float:
    return float(W.table(cfg.N)[list(edges)].max())


def _level_family(tree, W, cfg, l: int, n: int, cols) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Optimal families on ``M_n(l)`` at grid columns ``cols``.

    Returns ``(js, V, value)`` with ``V[:, c]`` summing to one and
    ``value[c] = sum_j V[j, c]^p rho_j`` (the Hölder level infimum, or the
    minimum weight for p = 1 with all mass on the first arg-min).
    """
    lo, hi = tree.descendant_ranges([l], n)
    js = np.arange(lo[0], hi[0])
    L = W.log_table(cfg.N)[js][:, cols]
    V = np.zeros_like(L)
    if cfg.p == 1:
        am = np.argmin(L, axis=0)
        V[am, np.arange(L.shape[1])] = 1.0
        value = np.exp(L[am, np.arange(L.shape[1])])
    else:
        value = np.empty(L.shape[1])
        for c in range(L.shape[1]):
            V[:, c], lse = _lse_family(L[:, c], cfg.p)
            value[c] = math.exp((1 - cfg.p) * lse)
    return js, V, value


def _rooted_threshold_ok(tree, W, cfg, I2, n, delta):
    cols = np.arange(cfg.N + 1)
    for l in I2:
        _, _, value = _level_family(tree, W, cfg, l, n - 1, cols)
        if not value.max() < delta:
            return False
    return True


def build_witness_rooted(tree: DirectedTree, W: WeightFamily, f1: GridFunction, f2: GridFunction,
                         eps: float, cfg: LpConfig, horizon: int | None = None) -> Witness:
    """``g`` with ``||f1 - g|| < eps`` and ``T_{n-1} g = f2`` on a rooted tree.

    ``n`` is the first index with ``n - 1 > N0`` (``T_{N0} f1 = 0``) for which
    the Hölder level infimum over ``M_{n-1}(l)`` stays below
    ``delta = eps^p C / ||f2||^p`` for every ``l`` in the support of ``f2``.
    """
    if not tree.rooted:
        raise NotRooted("build_witness_rooted needs a rooted tree")
    if not eps > 0:
        raise InputError("eps must be positive")
    N, p = cfg.N, cfg.p
    I1, I2 = _nonzero_support(f1), _nonzero_support(f2)
    N0 = (max(int(tree.depth[i]) for i in I1) + 1) if I1 else 0
    n_min = N0 + 2
    if not I2:
        g = f1
        return Witness(g, n_min, n_min - 1, "rooted", 0.0, 0.0, 0.0, {"N0": N0}, I1=I1, I2=[])
    room = min(int(tree.forward_room(l)) for l in I2)
    n_max = room + 1 if horizon is None else min(room + 1, horizon)
    if n_max < n_min:
        raise TruncationExceeded(f"need n >= {n_min} but the support of f2 allows n <= {n_max}")
    C = _min_rho(W, cfg, I2)
    f2p = norm_p(f2, W, cfg)
    delta = eps ** p * C / f2p
    consts = {"N0": N0, "C": C, "delta": delta}
    cols = np.arange(N)
    for n in range(n_min, n_max + 1):
        if not _rooted_threshold_ok(tree, W, cfg, I2, n, delta):
            continue
        vals = {i: v.copy() for i, v in f1.items()}
        nu = {}
        for l in I2:
            js, V, _ = _level_family(tree, W, cfg, l, n - 1, cols)
            nu[l] = {int(j): V[r] for r, j in enumerate(js)}
            for r, j in enumerate(js):
                piece = f2[l] * V[r]
                vals[int(j)] = vals[int(j)] + piece if int(j) in vals else piece
        g = GridFunction(vals, N)
        Tg = translate(tree, g, float(n - 1), cfg)
        err = norm(Tg - f2, W, cfg)
        close = norm(f1 - g, W, cfg)
        if close < eps:
            return Witness(g, n, n - 1, "rooted", close, err, Tg.max_abs_diff(f2), consts,
                           nu=nu, I1=I1, I2=I2)
    raise CriterionNotMet(f"no n in {n_min}..{n_max} brings the level infimum below delta={delta:.3g}")


# -- unrooted ---------------------------------------------------------------

def _split_by_class(tree, support: list[int]) -> list[list[int]]:
    """Pieces holding at most one edge of each equivalence class."""
    classes: list[list[int]] = []
    for e in support:
        for cls in classes:
            rep = cls[0]
            try:
                related = same_component(tree, rep, e, int(tree.depth[rep] - tree.min_level))
            except TruncationExceeded as exc:
                raise SupportNormalizationFailed(str(exc)) from None
            if related:
                cls.append(e)
                break
        else:
            classes.append([e])
    depth = max((len(c) for c in classes), default=0)
    return [[c[k] for c in classes if k < len(c)] for k in range(depth)]


def _unrooted_max_steps(tree, I1, I2):
    caps = []
    if I1:
        caps.append(min(int(tree.depth[i] - tree.min_level) for i in I1))
    if I2:
        caps.append(min(int(tree.forward_room(i)) for i in I2) - 1)
    return min(caps) if caps else 0


def _eqq(tree, I1, I2, m) -> bool:
    S1, S2 = set(I1), set(I2)
    for l in I2:
        lo, hi = tree.descendant_ranges([l], m)
        if any(j in S1 for j in range(int(lo[0]), int(hi[0]))):
            return False
    K = tree.ancestors(np.asarray(I1, dtype=np.int64), m) if I1 else []
    return not any(int(k) in S2 for k in K)


def _piece_plan(tree, W, cfg, I1, I2, m, d1, d2):
    """J1/J2 split and the coordinates ``s_i``; None when ``m`` does not clear the thresholds."""
    N, p = cfg.N, cfg.p
    L = W.log_table(N)
    J1, J2, s_idx = [], [], {}
    for i in I1:
        k1 = int(tree.ancestors([i], m - 1)[0])
        lo, hi = tree.descendant_ranges([k1], m - 1)
        if p == 1:
            q = np.minimum(L[k1], L[lo[0]:hi[0]].min(axis=0))
            k = int(np.argmin(q))
        else:
            y = -L[lo[0]:hi[0]] / (p - 1)
            q = np.logaddexp(-L[k1], np.logaddexp.reduce(y, axis=0))
            k = int(np.argmax(q))
        s_idx[i] = k
        km = int(tree.ancestors([i], m)[0])
        lo, hi = tree.descendant_ranges([km], m)
        if p == 1:
            in1 = L[k1, k] < math.log(2 * d1)
            in2 = L[lo[0]:hi[0], k].min() < math.log(2 * d1)
        else:
            in1 = -L[k1, k] > -math.log(2 * d1)
            in2 = np.logaddexp.reduce(-L[lo[0]:hi[0], k] / (p - 1)) > -math.log(2 * d1)
        if in1:
            J1.append(i)
        if in2:
            J2.append(i)
        if not (in1 or in2):
            return None
    for i in I2:
        ki = int(tree.child_ptr[i])                  # smallest child
        lo, hi = tree.descendant_ranges([ki], m)
        Lk = L[lo[0]:hi[0], :N]
        if p == 1:
            ok = Lk.min(axis=0).min() < math.log(d2)
        else:
            ok = np.logaddexp.reduce(-Lk / (p - 1), axis=0).max() > -math.log(d2)
        if not ok:
            return None
    return J1, J2, s_idx


def _unrooted_piece(tree, W, cfg, f1, f2, eps, M, w, m):
    """Witness pieces at step count ``m`` for data normalized per class; None if ``m`` fails."""
    N, p = cfg.N, cfg.p
    I1, I2 = _nonzero_support(f1), _nonzero_support(f2)
    if not I1 and not I2:
        return GridFunction.zero(N), {}, {}, [], [], {}
    if not _eqq(tree, I1, I2, m):
        return None
    C1 = _min_rho(W, cfg, I1 + I2)
    C2 = _max_rho(W, cfg, I1 + I2)
    amp = M * math.exp(2 * abs(w))
    n1, n2 = norm_p(f1, W, cfg), norm_p(f2, W, cfg)
    ep = eps ** p
    if n1 > 0:
        if p == 1:
            d1 = min(ep * C1 / (2 * amp * n1), ep * C1 ** 2 / (4 * C2 * n1))
        else:
            d1 = min(ep * C1 / (2 * amp * n1), 0.5 * (ep * C1 ** 2 / (2 * C2 * n1)) ** (1 / (p - 1)))
    else:
        d1 = math.inf
    if n2 > 0:
        base = ep * C1 / (2 * amp * n2)
        d2 = base if p == 1 else base ** (1 / (p - 1))
    else:
        d2 = math.inf
    consts = {"C1": C1, "C2": C2, "delta1": d1, "delta2": d2, "M": M, "w": w}
    plan = _piece_plan(tree, W, cfg, I1, I2, m, d1, d2)
    if plan is None:
        return None
    J1, J2, s_idx = plan
    L = W.log_table(N)
    vals: dict[int, np.ndarray] = {}

    def add(j, arr):
        vals[j] = vals[j] + arr if j in vals else arr.copy()

    u = {}
    for i in I1:
        if i in J1:
            add(i, f1[i])
            continue
        km = int(tree.ancestors([i], m)[0])
        lo, hi = tree.descendant_ranges([km], m)
        js = np.arange(lo[0], hi[0])
        col = L[js, s_idx[i]]
        if p == 1:
            fam = np.zeros(js.size)
            fam[int(np.argmin(col))] = 1.0
        else:
            fam, _ = _lse_family(col, p)
        u[i] = {int(j): float(x) for j, x in zip(js, fam)}
        for j, x in zip(js, fam):
            j = int(j)
            add(j, f1[i] * (1 - x) if j == i else -f1[i] * x)
    nu = {}
    cols = np.arange(N)
    for l in I2:
        js, V, _ = _level_family(tree, W, cfg, l, m, cols)
        nu[l] = {int(j): V[r] for r, j in enumerate(js)}
        for r, j in enumerate(js):
            add(int(j), f2[l] * V[r])
    return GridFunction(vals, N), nu, u, J1, J2, consts


def build_witness_unrooted(tree: DirectedTree, W: WeightFamily, f1: GridFunction, f2: GridFunction,
                           eps: float, cfg: LpConfig, M: float | None = None, w: float | None = None,
                           horizon: int | None = None) -> Witness:
    """``g`` with ``||f1 - g|| < eps`` and ``||T_m g - f2|| < eps`` on an unrooted tree.

    Supports are split into pieces with at most one edge per class; each piece
    gets ``eps / pieces`` and all pieces share the step count ``m``, the first
    one for which every piece clears its thresholds and measures below its
    share.  ``M, w`` default to :func:`fit_admissibility`.
    """
    if tree.rooted:
        raise NotUnrooted("build_witness_unrooted needs an unrooted tree")
    if not eps > 0:
        raise InputError("eps must be positive")
    N = cfg.N
    I1, I2 = _nonzero_support(f1), _nonzero_support(f2)
    if not I1 and not I2:
        return Witness(GridFunction.zero(N), 1, 1, "unrooted", 0.0, 0.0, 0.0, {}, pieces=0)
    m_max = _unrooted_max_steps(tree, I1, I2)
    if horizon is not None:
        m_max = min(m_max, horizon)
    if m_max < 2:
        raise TruncationExceeded("the supports leave fewer than 2 materialized steps")
    if M is None or w is None:
        fit = fit_admissibility(tree, W, min(4, m_max), cfg)
        if fit is None:
            raise CriterionNotMet("no exponential bound found for the weight; pass M and w")
        M = fit[0] if M is None else M
        w = fit[1] if w is None else w
    P1, P2 = _split_by_class(tree, I1), _split_by_class(tree, I2)
    K = max(len(P1), len(P2))
    pieces = [(f1.restrict(P1[k]) if k < len(P1) else GridFunction.zero(N),
               f2.restrict(P2[k]) if k < len(P2) else GridFunction.zero(N)) for k in range(K)]
    share = eps / K
    for m in range(2, m_max + 1):
        built = []
        for a, b in pieces:
            res = _unrooted_piece(tree, W, cfg, a, b, share, M, w, m)
            if res is None:
                break
            gk = res[0]
            if norm(a - gk, W, cfg) >= share or norm(translate(tree, gk, float(m), cfg) - b, W, cfg) >= share:
                break
            built.append(res)
        else:
            g = GridFunction.zero(N)
            nu, u, J1, J2, consts = {}, {}, [], [], {}
            for gk, nk, uk, j1, j2, ck in built:
                g = g + gk
                nu.update(nk)
                u.update(uk)
                J1 += j1
                J2 += j2
                for key, val in ck.items():
                    consts[key] = min(consts.get(key, math.inf), val) if key.startswith("delta") else val
            Tg = translate(tree, g, float(m), cfg)
            return Witness(g, m, m, "unrooted", norm(f1 - g, W, cfg), norm(Tg - f2, W, cfg),
                           Tg.max_abs_diff(f2), consts, nu, u, sorted(J1), sorted(J2), I1, I2, K)
    raise CriterionNotMet(f"no step count in 2..{m_max} clears the witness thresholds")


# ---------------------------------------------------------------------------
# negative certificate

@dataclass
class Certificate:
    g: GridFunction
    gap: float
    K: float
    subsequence: list
    n_tested: int
    holds: bool

    def __iter__(self):
        yield self.g
        yield self.gap

    def to_record(self) -> dict:
        return {"gap": self.gap, "K": self.K, "subsequence": [int(n) for n in self.subsequence],
                "n_tested": self.n_tested, "holds": self.holds, "g": self.g.to_record()}


def negative_certificate(tree: DirectedTree, W: WeightFamily, i0: int, subsequence: Sequence[int],
                         cfg: LpConfig, n_random: int = 100, seed: int = 0,
                         tol_dyn: float = TOL_DYN, tests: Sequence[GridFunction] | None = None) -> Certificate:
    """Far-away target ``g`` at ``i0`` that no small ``f`` reaches along ``subsequence``.

    ``g_{i0} = 2^{1-1/p} / rho_{i0}^{1/p}`` and ``K`` bounds
    ``rho_{i0} (sum_{M_n(i0)} rho^{-1/(p-1)})^{p-1}`` over the subsequence.
    Every tested ``f`` with ``||f||^p < 1/(2K)`` satisfies
    ``||T_n f - g||^p >= 1/2``; the smallest measured value is the gap.
    """
    tree._check_edge(i0)
    subsequence = sorted(int(n) for n in subsequence)
    if not subsequence or subsequence[0] < 1:
        raise InputError("subsequence must list integers >= 1")
    if subsequence[-1] > tree.forward_room(i0):
        raise TruncationExceeded(f"M_{subsequence[-1]}({i0}) is beyond the truncation")
    N, p = cfg.N, cfg.p
    L = W.log_table(N)
    ids = np.array([i0])
    logK = -math.inf
    decay = []
    log0 = _level0_log(W, cfg, ids)[0]
    for n in subsequence:
        lo, hi = tree.descendant_ranges(ids, n)
        if p == 1:
            q = segment_min(L, lo, hi)[0]
            logK = max(logK, float(np.max(L[i0] - q)))
            decay.append(math.exp(q.min() - log0))
        else:
            q = segment_logsumexp(-L / (p - 1), lo, hi)[0]
            logK = max(logK, float(np.max(L[i0] + (p - 1) * q)))
            decay.append(math.exp(log0 - q.max()))
    if min(decay) < tol_dyn:
        n_bad = subsequence[int(np.argmin(decay))]
        raise CriterionMet(f"the level quantity at edge {i0} dips below {tol_dyn} at n={n_bad}")
    K = math.exp(logK)
    g = GridFunction({i0: 2 ** (1 - 1 / p) * np.exp(-L[i0, :N] / p)}, N)
    budget = 1 / (2 * K)
    rng = np.random.default_rng(seed)
    if tests is None:
        tests = _certificate_probes(tree, W, cfg, i0, subsequence, n_random, rng)
    gap = math.inf
    n_tested = 0
    for f in tests:
        fp = norm_p(f, W, cfg)
        if fp == 0:
            continue
        if fp >= budget:
            f = f * ((budget * rng.uniform(0.05, 0.999)) / fp) ** (1 / p)
        n_tested += 1
        for n in subsequence:
            gap = min(gap, norm_p(translate(tree, f, float(n), cfg) - g, W, cfg))
    return Certificate(g, gap, K, subsequence, n_tested, gap >= 0.5 - 1e-6)


def _certificate_probes(tree, W, cfg, i0, subsequence, n_random, rng):
    """Random functions on the reachable levels plus Hölder-aligned adversaries."""
    N, p = cfg.N, cfg.p
    L = W.log_table(N)
    probes = []
    ranges = [tree.descendant_ranges([i0], n) for n in subsequence]
    pool = np.concatenate([np.arange(lo[0], hi[0]) for lo, hi in ranges])
    pool = np.unique(np.concatenate([pool, [i0]]))
    for _ in range(n_random):
        k = int(rng.integers(1, min(8, pool.size) + 1))
        sup = np.sort(rng.choice(pool, size=k, replace=False))
        probes.append(GridFunction({int(j): rng.standard_normal(N) for j in sup}, N))
    for n in subsequence:
        lo, hi = tree.descendant_ranges([i0], n)
        js = np.arange(lo[0], hi[0])
        vals = {}
        for c in range(N):
            if p == 1:
                fam = np.zeros(js.size)
                fam[int(np.argmin(L[js, c]))] = 1.0
            else:
                fam, _ = _lse_family(L[js, c], p)
            for r, j in enumerate(js):
                vals.setdefault(int(j), np.zeros(N))[c] = fam[r] * math.exp(-L[i0, c] / p)
        probes.append(GridFunction(vals, N))
    return probes


# ---------------------------------------------------------------------------
# orbit probe

def _witness(tree, W, f1, f2, eps, cfg, horizon):
    if tree.rooted:
        return build_witness_rooted(tree, W, f1, f2, eps, cfg, horizon=horizon + 1)
    return build_witness_unrooted(tree, W, f1, f2, eps, cfg, horizon=horizon)


def orbit_density_probe(tree: DirectedTree, W: WeightFamily, seed: int,
                        targets: Sequence[GridFunction] | None, horizon: int, cfg: LpConfig,
                        eps0: float = 0.5, n_targets: int = 3, tol_dyn: float = TOL_DYN) -> dict:
    """Best distance ``min_{t <= horizon} ||T_t g - target||`` for a witness-built ``g``.

    ``g`` is assembled target by target: the k-th witness starts from the
    previous ``g`` with tolerance ``eps0 / 2^k``.  Without explicit targets,
    ``n_targets`` random ones are drawn from ``seed``.
    """
    _check_horizon(horizon)
    report = criterion(tree, W, horizon, cfg, tol_dyn)
    if not is_satisfied(report):
        raise CriterionNotMet(f"criterion verdict is {report.verdict!r}")
    if targets is None:
        rng = np.random.default_rng(seed)
        pool = np.flatnonzero(tree.depth == max(0, tree.min_level))
        base = np.flatnonzero(tree.depth == 0) if (tree.depth == 0).any() else pool
        targets = []
        for _ in range(n_targets):
            k = int(rng.integers(1, min(3, base.size) + 1))
            sup = np.sort(rng.choice(base, size=k, replace=False))
            targets.append(GridFunction({int(j): rng.standard_normal(cfg.N) for j in sup}, cfg.N))
    g = GridFunction.zero(cfg.N)
    steps = []
    for k, target in enumerate(targets):
        wit = _witness(tree, W, g, target, eps0 / 2 ** k, cfg, horizon)
        g = wit.g
        steps.append(wit.steps)
    rows = []
    for k, target in enumerate(targets):
        best, best_t = math.inf, None
        for t in range(0, horizon + 1):
            try:
                d = norm(translate(tree, g, float(t), cfg) - target, W, cfg)
            except TruncationExceeded:
                break
            if d < best:
                best, best_t = d, t
        rows.append({"target": k, "distance": best, "t": best_t, "witness_steps": steps[k]})
    return {"verdict": report.verdict, "horizon": horizon, "rows": rows, "g": g}
