import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeflow import (
    GridFunction, InvalidExponent, LpConfig, TreeSpec, WeightFamily, build_tree, check_disnorm,
    norm, random_test_function,
)
from treeflow.lp_space import disnorm_sides

TREE = build_tree(TreeSpec.regular(2, 6))
W = WeightFamily.exponential(TREE, a=-0.7)


def test_config_validation():
    with pytest.raises(InvalidExponent):
        LpConfig(p=0.5)
    with pytest.raises(ValueError):
        LpConfig(N=12)
    assert LpConfig(p=3).conjugate == pytest.approx(1.5)
    assert LpConfig(p=1).conjugate is None


def test_indicator_norm():
    cfg = LpConfig(p=2, N=32)
    one = WeightFamily.constant(TREE)
    assert norm(GridFunction.indicator([0, 5], cfg.N), one, cfg) == pytest.approx(np.sqrt(2), rel=1e-15)


def test_trapezoid_exact_on_affine():
    cfg = LpConfig(p=1, N=16, quadrature="trapezoid")
    f = GridFunction.from_callables({0: lambda s: 1 + s}, cfg.N)
    assert norm(f, WeightFamily.constant(TREE), cfg) == pytest.approx(1.5, rel=1e-14)


def test_random_function_contract():
    cfg = LpConfig(N=16)
    a, b = random_test_function(TREE, 0, 5, cfg), random_test_function(TREE, 0, 5, cfg)
    assert a.max_abs_diff(b) == 0
    assert len(random_test_function(TREE, 3, 1, cfg).support) == 1
    assert all(norm(random_test_function(TREE, s, 4, cfg), W, cfg) > 0 for s in range(100))


def test_record_and_csv():
    cfg = LpConfig(N=4)
    f = random_test_function(TREE, 7, 3, cfg)
    rec = json.loads(json.dumps(f.to_record()))
    assert GridFunction.from_record(rec).max_abs_diff(f) == 0
    assert f.to_csv().splitlines()[0] == "edge_id,k,s,value"


functions = st.builds(lambda seed, k: random_test_function(TREE, seed, k, LpConfig(N=16)),
                      st.integers(0, 10_000), st.integers(1, 8))
configs = st.sampled_from([LpConfig(p=p, N=16) for p in (1, 1.5, 2, 3)])


@settings(max_examples=60, deadline=None)
@given(functions, st.floats(-50, 50, allow_nan=False), configs)
def test_homogeneity(f, c, cfg):
    assert norm(c * f, W, cfg) == pytest.approx(abs(c) * norm(f, W, cfg), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(functions, functions, configs)
def test_triangle(f, g, cfg):
    assert norm(f + g, W, cfg) <= norm(f, W, cfg) + norm(g, W, cfg) + 1e-10


@settings(max_examples=40, deadline=None)
@given(functions, st.integers(0, 5), configs)
def test_disnorm(f, n, cfg):
    assert check_disnorm(f, TREE, W, n, cfg)
    lhs, rhs = disnorm_sides(f, TREE, W, 0, cfg)
    assert lhs == pytest.approx(rhs, rel=1e-12)
