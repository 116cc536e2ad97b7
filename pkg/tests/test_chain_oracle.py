import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeflow import (
    LpConfig, NotAChain, NotGridAligned, TreeSpec, TruncationExceeded, WeightFamily, build_tree,
    norm, random_test_function, translate,
)
from treeflow.chain_oracle import classical_criterion, classical_translate, line_phi, phi, phi_inverse

CHAIN = build_tree(TreeSpec.chain(10))
LINE = build_tree(TreeSpec.chain(6, kind="unrooted", ancestor_depth=4))


def test_rejects_branching():
    t = build_tree(TreeSpec.regular(2, 3))
    with pytest.raises(NotAChain):
        phi(t, random_test_function(t, 0, 2, LpConfig(N=8)), WeightFamily.constant(t))


def test_round_trip_and_alignment():
    cfg = LpConfig(N=8)
    W = WeightFamily.constant(CHAIN)
    f = random_test_function(CHAIN, 5, 4, cfg)
    F = phi(CHAIN, f, W)
    back = phi_inverse(CHAIN, F)
    assert set(back) == set(f.support)
    with pytest.raises(NotGridAligned):
        classical_translate(F, 0.3)


def test_line_truncation():
    cfg = LpConfig(N=8)
    f = random_test_function(LINE, 2, 1, cfg, edges=[0])
    F = line_phi(LINE, f, WeightFamily.constant(LINE))
    assert F.origin == -4
    with pytest.raises(TruncationExceeded):
        classical_translate(F, 0.5)


def test_classical_criterion():
    assert classical_criterion(CHAIN, WeightFamily.exponential(CHAIN, a=-1.0), 2, 8, 16) == "satisfied"
    assert classical_criterion(CHAIN, WeightFamily.constant(CHAIN), 2, 8, 16) == "not-satisfied"


weights = st.sampled_from([("c", 0.0), ("e", -0.5), ("e", 0.7)])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), weights, st.sampled_from(["rectangle", "trapezoid"]), st.sampled_from([1, 1.5, 2, 3]))
def test_isometry(seed, wspec, quad, p):
    cfg = LpConfig(p=p, N=16, quadrature=quad)
    W = WeightFamily.constant(CHAIN) if wspec[0] == "c" else WeightFamily.exponential(CHAIN, a=wspec[1])
    f = random_test_function(CHAIN, seed, 6, cfg)
    ref = norm(f, W, cfg)
    assert phi(CHAIN, f, W).norm(p, quad) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 12 * 16))
def test_intertwining(seed, k):
    cfg = LpConfig(N=16)
    W = WeightFamily.constant(CHAIN)
    f = random_test_function(CHAIN, seed, 6, cfg)
    t = k / 16
    assert np.array_equal(phi(CHAIN, translate(CHAIN, f, t, cfg), W).samples,
                          classical_translate(phi(CHAIN, f, W), t).samples)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4 * 16))
def test_line_intertwining(seed, k):
    cfg = LpConfig(N=16)
    W = WeightFamily.exponential(LINE, a=-1.0, symmetric=True)
    f = random_test_function(LINE, seed, 3, cfg, edges=np.flatnonzero(LINE.depth >= 0))
    t = k / 16
    assert np.array_equal(line_phi(LINE, translate(LINE, f, t, cfg), W).samples,
                          classical_translate(line_phi(LINE, f, W), t).samples)
