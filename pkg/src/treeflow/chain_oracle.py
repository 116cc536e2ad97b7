"""Independent cross-check on chains via the classical weighted half-line / line.

A chain ``e_0 -> e_1 -> ...`` is the half-line with edge ``i`` covering
``[i, i+1)``; an unrooted chain with ``A`` ancestor levels covers ``[-A, D)``.
Functions concatenate, the weight becomes ``rho~(u) = rho_{floor u}(u - floor u)``
and the tree translation becomes ``F(u) -> F(u + t)``.  Nothing here calls
into :mod:`treeflow.semigroup`, so agreement between the two is evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NotAChain, NotGridAligned, TruncationExceeded


@dataclass(frozen=True)
class HalfLineFunction:
    """Samples of ``F`` at ``u = origin + k/N`` and of ``rho~`` at the same points.

    ``weight_right`` holds ``rho~`` at the right end of each unit cell, used by
    the trapezoid rule only.
    """

    samples: np.ndarray
    weight: np.ndarray
    N: int
    origin: int = 0
    weight_right: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.samples.size // self.N

    @property
    def coords(self) -> np.ndarray:
        return self.origin + np.arange(self.samples.size) / self.N

    def norm(self, p: float, quadrature: str = "rectangle") -> float:
        h = 1.0 / self.N
        if quadrature == "rectangle":
            return (h * math.fsum(np.abs(self.samples) ** p * self.weight)) ** (1 / p)
        # cellwise trapezoid with the last sample of each unit cell extrapolated
        F = self.samples.reshape(-1, self.N)
        R = self.weight.reshape(-1, self.N)
        total = 0.0
        for c in range(F.shape[0]):
            f_end = 2 * F[c, -1] - F[c, -2]
            vals = np.append(np.abs(F[c]) ** p * R[c], abs(f_end) ** p * self.weight_right[c])
            total += h * (vals.sum() - 0.5 * (vals[0] + vals[-1]))
        return total ** (1 / p)


def _chain_order(tree) -> list[int]:
    """Edges from the top of the chain downward; NotAChain otherwise."""
    tops = np.flatnonzero(tree.parent < 0)
    if tops.size != 1:
        raise NotAChain("a chain has exactly one top edge")
    order = [int(tops[0])]
    while True:
        kids = tree.children(order[-1])
        if len(kids) == 0:
            break
        if len(kids) != 1:
            raise NotAChain(f"edge {order[-1]} has {len(kids)} children")
        order.append(kids[0])
    if len(order) != tree.n_edges:
        raise NotAChain("tree is not a single path")
    return order


def _rho_tilde(tree, W, N, order):
    s = np.arange(N + 1) / N
    vals = W.evaluate(s, np.asarray(order))
    return vals[:, :N].ravel(), vals[:, N].copy()


def phi(tree, f, W) -> HalfLineFunction:
    """Concatenate the edge samples of ``f`` along a rooted chain."""
    if not tree.rooted:
        raise NotAChain("phi is for rooted chains; use line_phi on unrooted ones")
    return _phi(tree, f, W)


def line_phi(tree, f, W) -> HalfLineFunction:
    """Line variant: the top materialized edge sits at ``u = min_level``."""
    if tree.rooted:
        raise NotAChain("line_phi is for unrooted chains")
    return _phi(tree, f, W)


def _phi(tree, f, W):
    order = _chain_order(tree)
    N = f.N
    pos = {e: k for k, e in enumerate(order)}
    F = np.zeros(len(order) * N)
    for e, v in f.items():
        if e not in pos:
            raise TruncationExceeded(f"edge {e} is not on the chain")
        k = pos[e]
        F[k * N:(k + 1) * N] = v
    rho, rho_right = _rho_tilde(tree, W, N, order)
    origin = int(tree.depth[order[0]])
    return HalfLineFunction(F, rho, N, origin, rho_right)


def phi_inverse(tree, F: HalfLineFunction) -> dict:
    order = _chain_order(tree)
    N = F.N
    out = {}
    for k, e in enumerate(order):
        block = F.samples[k * N:(k + 1) * N]
        if np.any(block):
            out[e] = block.copy()
    return out


def classical_translate(F: HalfLineFunction, t: float) -> HalfLineFunction:
    """``F(u) -> F(u + t)`` as a shift of samples; zero fill past the right end.

    Raises TruncationExceeded if nonzero samples would need data beyond the
    materialized interval on the left (line variant only moves mass left).
    """
    tau = t * F.N
    k = round(tau)
    if t < 0 or abs(tau - k) > 1e-12:
        raise NotGridAligned(f"t={t!r} is not a non-negative multiple of 1/{F.N}")
    k = int(k)
    out = np.zeros_like(F.samples)
    if k < F.samples.size:
        out[:F.samples.size - k] = F.samples[k:]
    if F.origin < 0 and np.any(F.samples[:min(k, F.samples.size)]):
        raise TruncationExceeded("translation moves mass past the left end of the materialized line")
    return HalfLineFunction(out, F.weight, F.N, F.origin, F.weight_right)


def classical_criterion(tree, W, p: float, horizon: int, N: int, tol_dyn: float = 1e-3,
                        start: int = 0) -> str:
    """Classical hypercyclicity test for the weighted half-line translation.

    Uses ``w_n = inf_{[start+n, start+n+1]} rho~ / inf_{[start, start+1]} rho~``
    raised to ``1/(p-1)`` for p > 1 (the half-line condition is
    ``liminf rho~(u) = 0``).  Returns ``"satisfied"`` when some ``n <= horizon``
    dips below ``tol_dyn``, else ``"not-satisfied"``.
    """
    order = _chain_order(tree)
    if start + horizon >= len(order):
        raise TruncationExceeded("horizon exceeds the chain length")
    s = np.arange(N + 1) / N
    rho = W.evaluate(s, np.asarray(order))
    ref = rho[start].min()
    ratios = rho[start + 1:start + horizon + 1].min(axis=1) / ref
    if p > 1:
        ratios = ratios ** (1 / (p - 1))
    return "satisfied" if np.any(ratios < tol_dyn) else "not-satisfied"
