"""Directed trees (rooted or unrooted) truncated to a finite number of levels.

Edges carry dense integer ids assigned breadth-first, level by level, with
children kept in generator order.  Two consequences are used throughout the
package:

* the children of edge ``k`` are exactly ``range(child_ptr[k], child_ptr[k+1])``;
* the ``n``-step descendants of consecutive edges form adjacent ranges, so
  ``M_n(i)`` is always a contiguous id range and per-edge sums over ``M_n(i)``
  become segment reductions on arrays indexed by edge id.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    MultipleParents,
    NoAncestor,
    TreeSpecError,
    TruncationExceeded,
    UnrootedWithoutAncestors,
)

ROOTED = "rooted"
UNROOTED = "unrooted"
GENERATORS = ("chain", "regular", "explicit")

_SPEC_KEYS = {"kind", "generator", "forward_depth", "ancestor_depth"}
_GENERATOR_KEYS = {"type", "branching", "edges"}


@dataclass(frozen=True)
class TreeSpec:
    """Recipe for a truncated tree.

    ``forward_depth`` counts materialized levels from the base level down
    (levels ``0 .. forward_depth-1``); ``ancestor_depth`` counts levels above
    the base edge and must be positive exactly for unrooted trees.
    """

    kind: str
    generator: str
    forward_depth: int
    ancestor_depth: int = 0
    branching: int = 1
    edges: tuple[tuple[int, int | None], ...] = ()

    def __post_init__(self):
        if self.kind not in (ROOTED, UNROOTED):
            raise TreeSpecError(f"kind must be 'rooted' or 'unrooted', got {self.kind!r}")
        if self.generator not in GENERATORS:
            raise TreeSpecError(f"unknown generator type {self.generator!r}")
        if not _is_int(self.forward_depth) or self.forward_depth < 1:
            raise TreeSpecError("forward_depth must be an integer >= 1")
        if not _is_int(self.ancestor_depth) or self.ancestor_depth < 0:
            raise TreeSpecError("ancestor_depth must be an integer >= 0")
        if self.kind == ROOTED and self.ancestor_depth != 0:
            raise TreeSpecError("rooted trees take ancestor_depth = 0")
        if self.kind == UNROOTED and self.ancestor_depth == 0:
            raise UnrootedWithoutAncestors("unrooted trees need ancestor_depth >= 1")
        if self.generator == "regular" and (not _is_int(self.branching) or self.branching < 1):
            raise TreeSpecError("regular generator needs an integer branching >= 1")
        if self.generator == "explicit" and not self.edges:
            raise TreeSpecError("explicit generator needs a non-empty edge list")

    @classmethod
    def chain(cls, forward_depth: int, kind: str = ROOTED, ancestor_depth: int = 0) -> "TreeSpec":
        return cls(kind, "chain", forward_depth, ancestor_depth)

    @classmethod
    def regular(cls, branching: int, forward_depth: int, kind: str = ROOTED,
                ancestor_depth: int = 0) -> "TreeSpec":
        return cls(kind, "regular", forward_depth, ancestor_depth, branching=branching)

    @classmethod
    def explicit(cls, edges: Iterable[Sequence], forward_depth: int | None = None,
                 kind: str = ROOTED, ancestor_depth: int = 0) -> "TreeSpec":
        pairs = tuple((e[0], e[1]) for e in edges)
        if forward_depth is None:
            forward_depth = _explicit_height(pairs) + 1 - ancestor_depth
        return cls(kind, "explicit", forward_depth, ancestor_depth, edges=pairs)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "TreeSpec":
        if not isinstance(data, Mapping):
            raise TreeSpecError("tree spec must be a mapping")
        unknown = set(data) - _SPEC_KEYS
        if unknown:
            raise TreeSpecError(f"unknown tree-spec keys: {sorted(unknown)}")
        for key in ("kind", "generator", "forward_depth"):
            if key not in data:
                raise TreeSpecError(f"missing tree-spec key {key!r}")
        gen = data["generator"]
        if not isinstance(gen, Mapping):
            raise TreeSpecError("generator must be a mapping with a 'type' key")
        unknown = set(gen) - _GENERATOR_KEYS
        if unknown:
            raise TreeSpecError(f"unknown generator keys: {sorted(unknown)}")
        if "type" not in gen:
            raise TreeSpecError("generator needs a 'type'")
        edges = ()
        if gen["type"] == "explicit":
            raw = gen.get("edges")
            if not isinstance(raw, list):
                raise TreeSpecError("explicit generator needs an 'edges' list")
            try:
                edges = tuple((e[0], e[1]) for e in raw)
            except (TypeError, IndexError, KeyError):
                raise TreeSpecError("each explicit edge must be a pair [edge_id, parent_id|null]")
        return cls(
            kind=data["kind"],
            generator=gen["type"],
            forward_depth=data["forward_depth"],
            ancestor_depth=data.get("ancestor_depth", 0),
            branching=gen.get("branching", 1),
            edges=edges,
        )

    def to_mapping(self) -> dict:
        gen: dict[str, Any] = {"type": self.generator}
        if self.generator == "regular":
            gen["branching"] = self.branching
        if self.generator == "explicit":
            gen["edges"] = [[e, p] for e, p in self.edges]
        return {"kind": self.kind, "generator": gen, "forward_depth": self.forward_depth,
                "ancestor_depth": self.ancestor_depth}


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _explicit_height(pairs) -> int:
    parent = {e: p for e, p in pairs}
    best = 0
    for e in parent:
        d, cur, seen = 0, e, set()
        while parent.get(cur) is not None and cur not in seen:
            seen.add(cur)
            cur = parent[cur]
            d += 1
        best = max(best, d)
    return best


@dataclass(frozen=True, eq=False)
class DirectedTree:
    """Immutable materialized tree.  Build it with :func:`build_tree`."""

    kind: str
    parent: np.ndarray            # -1 where no materialized parent
    depth: np.ndarray             # level relative to the base edge
    child_ptr: np.ndarray         # CSR pointer, length n_edges + 1
    labels: tuple                 # user-facing ids (explicit trees), else range
    base: int
    frontier: int                 # deepest materialized level (truncation frontier)
    spec: TreeSpec | None = None
    _label_index: dict = field(default_factory=dict, repr=False)

    # -- basic shape ---------------------------------------------------
    @property
    def n_edges(self) -> int:
        return int(self.parent.shape[0])

    def __len__(self) -> int:
        return self.n_edges

    @property
    def rooted(self) -> bool:
        return self.kind == ROOTED

    @property
    def max_level(self) -> int:
        return self.frontier

    @property
    def min_level(self) -> int:
        return int(self.depth.min())

    @property
    def n_children(self) -> np.ndarray:
        return np.diff(self.child_ptr)

    @property
    def boundary(self) -> np.ndarray:
        """Edges on the forward truncation frontier (children not built)."""
        return self.depth == self.max_level

    @property
    def upper_boundary(self) -> np.ndarray:
        """Edges whose parent exists in the infinite tree but was not built."""
        if self.rooted:
            return np.zeros(self.n_edges, dtype=bool)
        return self.parent < 0

    def children(self, i: int) -> range:
        self._check_edge(i)
        return range(int(self.child_ptr[i]), int(self.child_ptr[i + 1]))

    def parent_of(self, i: int) -> int | None:
        self._check_edge(i)
        p = int(self.parent[i])
        return None if p < 0 else p

    def level(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.depth == d)

    def index_of(self, label) -> int:
        """Dense id of an edge given its user label (explicit trees)."""
        try:
            return self._label_index[label]
        except KeyError:
            raise KeyError(f"no edge labelled {label!r}") from None

    @property
    def is_chain(self) -> bool:
        return bool(np.all(np.bincount(self.depth - self.min_level) == 1))

    # -- reachability --------------------------------------------------
    def forward_room(self, i) -> np.ndarray | int:
        """Number of further levels materialized below edge(s) ``i``."""
        return self.max_level - self.depth[i]

    def descendant_ranges(self, ids, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``M_n(i)`` as half-open id ranges ``[lo, hi)``.

        No truncation check; callers mask entries with ``forward_room < n``.
        """
        ids = np.asarray(ids, dtype=np.int64)
        lo = ids.copy()
        hi = ids + 1
        for _ in range(n):
            lo = self.child_ptr[lo]
            hi = self.child_ptr[hi]
        return lo, hi

    def ancestors(self, ids, n: int) -> np.ndarray:
        """Vectorized ``K_n(j)``; -1 where the ancestor is not materialized."""
        out = np.asarray(ids, dtype=np.int64).copy()
        for _ in range(n):
            ok = out >= 0
            out[ok] = self.parent[out[ok]]
        return out

    def _check_edge(self, i):
        if not (0 <= int(i) < self.n_edges):
            raise IndexError(f"edge {i} is not materialized (tree has {self.n_edges} edges)")


def reachable_set(tree: DirectedTree, i: int, n: int) -> range:
    """``M_n(i)``: ids of edges reached from ``i`` in exactly ``n`` steps."""
    tree._check_edge(i)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > tree.forward_room(i):
        raise TruncationExceeded(
            f"M_{n}({i}) needs level {int(tree.depth[i]) + n}; deepest built level is {tree.max_level}")
    lo, hi = tree.descendant_ranges([i], n)
    return range(int(lo[0]), int(hi[0]))


def ancestor(tree: DirectedTree, j: int, n: int) -> int:
    """``K_n(j)``: the unique edge with ``j`` in ``M_n(K_n(j))``."""
    tree._check_edge(j)
    if n < 1:
        raise ValueError("n must be >= 1")
    cur = int(j)
    for step in range(n):
        p = int(tree.parent[cur])
        if p < 0:
            if tree.rooted:
                raise NoAncestor(f"edge {j} has only {step} ancestors in the rooted tree")
            raise TruncationExceeded(
                f"K_{n}({j}) lies above the {tree.depth[j] - tree.min_level} built ancestor levels")
        cur = p
    return cur


def same_component(tree: DirectedTree, j1: int, j2: int, horizon: int) -> bool:
    """Whether ``j2`` lies in ``M_n(K_n(j1))`` for some ``1 <= n <= horizon``.

    Edges on different levels are never related; ``j1 == j2`` always is.
    """
    tree._check_edge(j1)
    tree._check_edge(j2)
    if j1 == j2:
        return True
    if tree.depth[j1] != tree.depth[j2]:
        return False
    a, b = int(j1), int(j2)
    for _ in range(horizon):
        a, b = int(tree.parent[a]), int(tree.parent[b])
        if a < 0 or b < 0:
            if tree.rooted:
                return False
            raise TruncationExceeded(
                f"common ancestor of {j1} and {j2} lies above the materialized levels")
        if a == b:
            return True
    return False


def find_leaf(tree: DirectedTree) -> int | None:
    """Smallest non-frontier edge whose head has no children, if any."""
    cand = np.flatnonzero((tree.n_children == 0) & ~tree.boundary)
    return int(cand[0]) if cand.size else None


# ---------------------------------------------------------------------------
# construction

def build_tree(spec: TreeSpec) -> DirectedTree:
    if spec.generator == "explicit":
        return _build_explicit(spec)
    b = 1 if spec.generator == "chain" else spec.branching
    top_level = -spec.ancestor_depth
    last_level = spec.forward_depth - 1
    n_levels = last_level - top_level + 1
    counts = [b ** k for k in range(n_levels)]
    total = sum(counts)
    if total > 50_000_000:
        raise TreeSpecError(f"tree would have {total} edges; reduce the depths")
    parent = np.full(total, -1, dtype=np.int64)
    depth = np.empty(total, dtype=np.int64)
    start = 0
    for k, c in enumerate(counts):
        depth[start:start + c] = top_level + k
        if k > 0:
            prev = start - counts[k - 1]
            parent[start:start + c] = prev + np.arange(c) // b
        start += c
    child_ptr = _child_ptr(parent, total, n_roots=1)
    base = sum(counts[:spec.ancestor_depth])
    return DirectedTree(spec.kind, parent, depth, child_ptr, tuple(range(total)), base,
                        last_level, spec, {i: i for i in range(total)})


def _build_explicit(spec: TreeSpec) -> DirectedTree:
    parent_of: dict = {}
    order: list = []
    for e, p in spec.edges:
        if isinstance(e, bool) or e is None:
            raise TreeSpecError(f"invalid edge id {e!r}")
        if e in parent_of:
            if parent_of[e] != p:
                raise MultipleParents(f"edge {e!r} listed with parents {parent_of[e]!r} and {p!r}")
            raise TreeSpecError(f"duplicate edge id {e!r}")
        parent_of[e] = p
        order.append(e)
    for e, p in parent_of.items():
        if p is not None and p not in parent_of:
            raise TreeSpecError(f"edge {e!r} has unknown parent {p!r}")
        if p == e:
            raise CycleDetected(f"edge {e!r} is its own parent")
    # every edge must climb to a parentless edge
    for e in order:
        seen = {e}
        cur = parent_of[e]
        while cur is not None:
            if cur in seen:
                raise CycleDetected(f"cycle through edge {cur!r}")
            seen.add(cur)
            cur = parent_of[cur]
    roots = [e for e in order if parent_of[e] is None]
    if not roots:
        raise CycleDetected("no parentless edge: the edge list is cyclic")
    if spec.kind == "unrooted" and len(roots) != 1:
        raise TreeSpecError("an unrooted explicit tree needs exactly one parentless (top) edge")
    kids: dict = {e: [] for e in order}
    for e in order:
        if parent_of[e] is not None:
            kids[parent_of[e]].append(e)

    top_level = -spec.ancestor_depth
    labels: list = []
    lvl: list[int] = []
    par: list[int] = []
    queue = deque((r, -1, top_level) for r in roots)
    while queue:
        e, p, d = queue.popleft()
        idx = len(labels)
        labels.append(e)
        lvl.append(d)
        par.append(p)
        for c in kids[e]:
            queue.append((c, idx, d + 1))
    if max(lvl) > spec.forward_depth - 1:
        raise TreeSpecError(
            f"explicit edges reach level {max(lvl)} but forward_depth={spec.forward_depth} "
            f"allows levels up to {spec.forward_depth - 1}")
    total = len(labels)
    parent = np.asarray(par, dtype=np.int64)
    depth = np.asarray(lvl, dtype=np.int64)
    child_ptr = _child_ptr(parent, total, n_roots=len(roots))
    base_candidates = np.flatnonzero(depth == 0)
    base = int(base_candidates[0]) if base_candidates.size else 0
    return DirectedTree(spec.kind, parent, depth, child_ptr, tuple(labels), base,
                        spec.forward_depth - 1, spec, {lab: i for i, lab in enumerate(labels)})


def _child_ptr(parent: np.ndarray, total: int, n_roots: int) -> np.ndarray:
    counts = np.bincount(parent[parent >= 0], minlength=total)
    ptr = np.empty(total + 1, dtype=np.int64)
    ptr[0] = n_roots
    np.cumsum(counts, out=ptr[1:])
    ptr[1:] += n_roots
    return ptr
