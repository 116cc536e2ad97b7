import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeflow import (
    GridFunction, LpConfig, NotGridAligned, StackedFunctions, TreeSpec, TruncationExceeded,
    WeightFamily, ZeroFunction, build_tree, check_norm_bound, check_semigroup_law,
    random_test_function, reachable_set, step_index, strong_continuity_trend, translate,
    translate_interp, translate_stacked,
)

CFG = LpConfig(p=2, N=16)
TREE = build_tree(TreeSpec.regular(2, 7))
functions = st.builds(lambda seed, k: random_test_function(TREE, seed, k, CFG),
                      st.integers(0, 10_000), st.integers(1, 10))
times = st.integers(0, 6 * CFG.N).map(lambda k: k / CFG.N)


def test_step_index_snaps():
    assert step_index(0.7, 0.3) == 1
    assert step_index(1 - 1e-13, 0.0) == 1
    assert step_index(0.5, 0.25) == 0


def test_identity_and_alignment():
    f = random_test_function(TREE, 1, 4, CFG)
    assert translate(TREE, f, 0.0, CFG).max_abs_diff(f) == 0
    with pytest.raises(NotGridAligned):
        translate(TREE, f, 0.01, CFG)


def test_unrooted_truncation():
    t = build_tree(TreeSpec.chain(3, kind="unrooted", ancestor_depth=1))
    f = GridFunction.indicator([t.base], CFG.N)
    translate(t, f, 1.0, CFG)
    with pytest.raises(TruncationExceeded):
        translate(t, f, 1.5, CFG)


def test_interp_matches_on_grid_and_affine():
    f = GridFunction.from_callables({3: lambda s: 2 - s}, CFG.N)
    assert translate_interp(TREE, f, 0.25, CFG).max_abs_diff(translate(TREE, f, 0.25, CFG)) == 0
    # within one edge an affine profile is shifted exactly
    g = translate_interp(TREE, f, 0.1, CFG)
    s = np.arange(CFG.N) / CFG.N
    inside = s + 0.1 < 1
    assert np.allclose(g[3][inside], 2 - (s[inside] + 0.1), atol=1e-14)


def test_norm_bound_zero_function():
    W = WeightFamily.constant(TREE)
    with pytest.raises(ZeroFunction):
        check_norm_bound(TREE, W, GridFunction.zero(CFG.N), [0.0], 1, 0, CFG)


def test_continuity_zero():
    W = WeightFamily.constant(TREE)
    assert all(v == 0 for _, v in strong_continuity_trend(TREE, W, GridFunction.zero(CFG.N), CFG))


@settings(max_examples=80, deadline=None)
@given(functions, times, times)
def test_semigroup_law(f, t1, t2):
    assert check_semigroup_law(TREE, f, t1, t2, CFG) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(functions, functions, st.floats(-5, 5), st.floats(-5, 5), times)
def test_linearity(f, g, a, b, t):
    lhs = translate(TREE, a * f + b * g, t, CFG)
    rhs = a * translate(TREE, f, t, CFG) + b * translate(TREE, g, t, CFG)
    assert lhs.max_abs_diff(rhs) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(functions, st.integers(0, 6))
def test_integer_time_formula(f, n):
    out = translate(TREE, f, float(n), CFG)
    for i in np.flatnonzero(TREE.forward_room(np.arange(TREE.n_edges)) >= n):
        expect = sum((f[j] for j in reachable_set(TREE, int(i), n)), np.zeros(CFG.N))
        assert np.array_equal(out[int(i)], expect)


@settings(max_examples=30, deadline=None)
@given(st.lists(functions, min_size=1, max_size=6), times)
def test_stacked_matches_translate(fs, t):
    G = translate_stacked(TREE, StackedFunctions.from_functions(fs, TREE.n_edges), t, CFG.N)
    for b, f in enumerate(fs):
        assert G.member(b).max_abs_diff(translate(TREE, f, t, CFG)) == 0


def test_hand_examples():
    chain = build_tree(TreeSpec.chain(4))
    out = translate(chain, GridFunction.indicator([1], CFG.N), 1.0, CFG)
    assert out.support == (0,) and np.all(out[0] == 1)
    out = translate(TREE, GridFunction.indicator([1, 2], CFG.N), 1.0, CFG)
    assert np.all(out[0] == 2)
    s = np.arange(CFG.N) / CFG.N
    out = translate(chain, GridFunction.from_callables({1: lambda u: u}, CFG.N), 0.5, CFG)
    assert np.allclose(out[0], np.where(s < 0.5, 0.0, s - 0.5), atol=0)


def test_interp_quadratic_error():
    N = 64
    cfg = LpConfig(N=N)
    f = GridFunction.from_callables({2: lambda u: u ** 2}, N)
    g = translate_interp(TREE, f, 1 / (2 * N), cfg)
    s = np.arange(N - 1) / N
    assert np.max(np.abs(g[2][:-1] - (s + 1 / (2 * N)) ** 2)) <= 1 / (4 * N ** 2)
