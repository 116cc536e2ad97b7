import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeflow import (
    CriterionMet, CriterionNotMet, GridFunction, LeafPresent, LpConfig, NotRooted, TreeSpec,
    WeightFamily, build_tree, build_witness_rooted, build_witness_unrooted, criterion,
    negative_certificate, norm, orbit_density_probe, random_test_function, rooted_criterion,
    translate, unrooted_criterion,
)
from treeflow.dynamics import MIXING, NOT_SATISFIED, SUBSEQUENCE
from treeflow.weights import Geometric

CFG = LpConfig(p=2, N=16)
BINARY = build_tree(TreeSpec.regular(2, 11))
CHAIN = build_tree(TreeSpec.chain(16))
UCHAIN = build_tree(TreeSpec.chain(12, kind="unrooted", ancestor_depth=12))
UBINARY = build_tree(TreeSpec.regular(2, 9, kind="unrooted", ancestor_depth=8))


def test_rooted_decaying_chain():
    W = WeightFamily.exponential(CHAIN, a=-1.0)
    rep = rooted_criterion(CHAIN, W, 10, CFG)
    n = np.arange(1, 11)
    assert np.allclose(rep.c, np.exp(-(n + 1))[None, :] * np.exp(CHAIN.depth[rep.edges])[:, None] ** -1,
                       rtol=1e-12)
    assert rep.verdict == MIXING and rep.slopes["forward"] == pytest.approx(-1.0)


def test_rooted_p1_binary():
    rep = rooted_criterion(BINARY, WeightFamily.constant(BINARY), 5, LpConfig(p=1, N=16))
    assert rep.verdict == NOT_SATISFIED and np.allclose(rep.c, 1.0)


def test_subsequence_verdict():
    # weights dip at even depths only, so the criterion holds along even n
    W = WeightFamily.from_function(CHAIN, lambda i, d, s: np.where(d % 2 == 0, 1e-4 ** (d > 0), 1.0) + 0 * s)
    rep = rooted_criterion(CHAIN, W, 8, CFG, edges=[0])
    assert rep.verdict == SUBSEQUENCE and rep.subsequence == [2, 4, 6, 8]


def test_kind_checks():
    with pytest.raises(NotRooted):
        rooted_criterion(UCHAIN, WeightFamily.constant(UCHAIN), 3, CFG)
    leafy = build_tree(TreeSpec.explicit([(0, None), (1, 0), (2, 0), (3, 1)], forward_depth=4))
    with pytest.raises(LeafPresent):
        rooted_criterion(leafy, WeightFamily.constant(leafy), 1, CFG)
    assert criterion(leafy, WeightFamily.constant(leafy), 1, CFG).leaf == 2


def test_unrooted_verdicts():
    sym = WeightFamily.exponential(UCHAIN, a=-1.0, symmetric=True)
    assert unrooted_criterion(UCHAIN, sym, 10, CFG).verdict in (MIXING, SUBSEQUENCE)
    assert unrooted_criterion(UCHAIN, WeightFamily.constant(UCHAIN), 10, CFG).verdict == NOT_SATISFIED
    assert unrooted_criterion(UBINARY, WeightFamily.constant(UBINARY), 8, CFG, tol_dyn=0.01).verdict == MIXING


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100.0), st.sampled_from([1, 1.5, 2, 3]))
def test_scale_covariance(c, p):
    cfg = LpConfig(p=p, N=16)
    W = WeightFamily.exponential(BINARY, a=-0.4)
    a = rooted_criterion(BINARY, W, 6, cfg)
    b = rooted_criterion(BINARY, W.scaled(c), 6, cfg)
    factor = c if p == 1 else c ** (-1 / (p - 1))
    if p == 1:
        assert np.allclose(b.c, a.c * factor, rtol=1e-12)
    else:
        # the Hölder sum scales by c^{-1/(p-1)}, the reported c_n by its inverse
        assert np.allclose(1 / b.c, factor / a.c, rtol=1e-12)
    assert a.verdict == b.verdict
    assert np.allclose(a.normalized["forward"], b.normalized["forward"], rtol=1e-12)


def test_mixing_covers_tail():
    rep = rooted_criterion(BINARY, WeightFamily.constant(BINARY), 10, CFG, tol_dyn=0.05)
    assert rep.verdict == MIXING
    assert rep.subsequence == list(range(rep.subsequence[0], 11))


def _shallow(tree, seed, levels=3):
    pool = np.flatnonzero((tree.depth >= 0) & (tree.depth < levels))
    return random_test_function(tree, seed, 4, CFG, edges=pool)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000), st.floats(0.1, 1.0))
def test_rooted_witness_property(s1, s2, eps):
    # unit-norm target keeps delta = eps^p C / ||f2||^p within reach of the truncation
    W = WeightFamily.constant(BINARY)
    f1, f2 = _shallow(BINARY, s1), _shallow(BINARY, s2)
    f2 = (1 / norm(f2, W, CFG)) * f2
    wit = build_witness_rooted(BINARY, W, f1, f2, eps, CFG)
    assert wit.achieved_closeness < eps
    assert wit.achieved_target_error <= 1e-10
    assert norm(f1 - wit.g, W, CFG) == pytest.approx(wit.achieved_closeness, rel=1e-12)
    assert translate(BINARY, wit.g, float(wit.steps), CFG).max_abs_diff(f2) <= 1e-10


def test_rooted_witness_p1():
    W = WeightFamily.exponential(CHAIN, a=-1.0)
    cfg = LpConfig(p=1, N=16)
    f2 = GridFunction.indicator([0], 16)
    wit = build_witness_rooted(CHAIN, W, GridFunction.zero(16), f2, 0.1, cfg)
    assert wit.achieved_closeness < 0.1 and wit.achieved_target_error <= 1e-10


def test_rooted_witness_requires_criterion():
    with pytest.raises(CriterionNotMet):
        build_witness_rooted(CHAIN, WeightFamily.constant(CHAIN), GridFunction.zero(16),
                             GridFunction.indicator([0], 16), 0.5, CFG)


@pytest.mark.parametrize("tree,W,eps", [
    (UCHAIN, WeightFamily.exponential(UCHAIN, a=-1.0, symmetric=True), 0.3),
    (UBINARY, WeightFamily.constant(UBINARY), 0.5),
])
def test_unrooted_witness(tree, W, eps):
    f1 = GridFunction.indicator([tree.base], 16)
    f2 = 0.5 * GridFunction.indicator([tree.base], 16)
    wit = build_witness_unrooted(tree, W, f1, f2, eps, CFG)
    assert wit.achieved_closeness < eps and wit.achieved_target_error < eps
    assert set(wit.J1) | set(wit.J2) and not set(wit.J1) & set(wit.J2)
    measured = norm(translate(tree, wit.g, float(wit.steps), CFG) - f2, W, CFG)
    assert measured == pytest.approx(wit.achieved_target_error, rel=1e-9, abs=1e-14)


def test_certificates():
    W = WeightFamily.constant(CHAIN)
    g, gap = negative_certificate(CHAIN, W, 0, range(1, 11), CFG, n_random=50, seed=3)
    assert gap >= 0.5 - 1e-6 and norm(g, W, CFG) > 0
    geo = WeightFamily(BINARY, Geometric(1.0, 2.0))
    cert = negative_certificate(BINARY, geo, 0, range(1, 8), CFG, n_random=30)
    assert cert.holds and cert.gap >= 0.5 - 1e-6
    with pytest.raises(CriterionMet):
        negative_certificate(BINARY, WeightFamily.constant(BINARY), 0, range(1, 11), CFG)


def test_orbit_probe():
    W = WeightFamily.constant(BINARY)
    out = orbit_density_probe(BINARY, W, seed=1, targets=None, horizon=10, cfg=CFG, n_targets=2)
    assert out["verdict"] == MIXING and len(out["rows"]) == 2
    with pytest.raises(CriterionNotMet):
        orbit_density_probe(CHAIN, WeightFamily.constant(CHAIN), 0, None, 10, CFG)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 3 * 16))
def test_leaf_edge_vanishes(seed, k):
    tree = build_tree(TreeSpec.explicit([(0, None), (1, 0), (2, 0), (3, 1), (4, 3), (5, 3)]))
    f = random_test_function(tree, seed, tree.n_edges, CFG)
    out = translate(tree, f, (16 + k) / 16 if k <= 32 else k / 16, CFG)
    assert not np.any(out[tree.index_of(2)])


def test_zero_data_witnesses():
    W = WeightFamily.constant(BINARY)
    f1 = GridFunction.indicator([1], 16)
    wit = build_witness_rooted(BINARY, W, f1, GridFunction.zero(16), 0.5, CFG)
    assert wit.g.max_abs_diff(f1) == 0 and wit.achieved_closeness == 0 and wit.achieved_target_error == 0
    zero = GridFunction.zero(16)
    wit = build_witness_unrooted(UBINARY, WeightFamily.constant(UBINARY), zero, zero, 0.5, CFG)
    assert wit.g.is_zero() and wit.achieved_closeness == 0 and wit.achieved_target_error == 0


def test_geometric_certificate_constant():
    # level weights 2^{n(p-1)} cancel the branching, so every Hölder level sum is 1
    cert = negative_certificate(BINARY, WeightFamily(BINARY, Geometric(1.0, 2.0)), 0, range(1, 8), CFG,
                                n_random=20)
    assert cert.K == pytest.approx(1.0, rel=1e-12)
