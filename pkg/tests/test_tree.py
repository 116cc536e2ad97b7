import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeflow import (
    CycleDetected, MultipleParents, NoAncestor, TreeSpec, TreeSpecError, TruncationExceeded,
    UnrootedWithoutAncestors, ancestor, build_tree, find_leaf, reachable_set, same_component,
)

regular_specs = st.builds(
    lambda b, d: TreeSpec.regular(b, d), st.integers(1, 3), st.integers(1, 6))


def test_chain_shape():
    t = build_tree(TreeSpec.chain(3))
    assert t.n_edges == 3 and t.is_chain and t.rooted
    assert list(reachable_set(t, 0, 2)) == [2]
    assert ancestor(t, 2, 2) == 0


def test_regular_counts():
    t = build_tree(TreeSpec.regular(2, 3))
    assert t.n_edges == 7
    assert list(t.children(0)) == [1, 2]
    assert list(reachable_set(t, 1, 1)) == [3, 4]


def test_truncation_and_root():
    t = build_tree(TreeSpec.regular(2, 3))
    with pytest.raises(TruncationExceeded):
        reachable_set(t, 1, 2)
    with pytest.raises(NoAncestor):
        ancestor(t, 1, 2)
    assert find_leaf(t) is None


def test_unrooted_layout():
    t = build_tree(TreeSpec.chain(3, kind="unrooted", ancestor_depth=2))
    assert t.n_edges == 5 and t.min_level == -2 and t.depth[t.base] == 0
    assert ancestor(t, t.base, 2) == 0
    with pytest.raises(TruncationExceeded):
        ancestor(t, t.base, 3)


def test_spec_errors():
    with pytest.raises(CycleDetected):
        build_tree(TreeSpec.explicit([("a", "b"), ("b", "a")], forward_depth=3))
    with pytest.raises(MultipleParents):
        build_tree(TreeSpec.explicit([("a", None), ("b", None), ("c", "a"), ("c", "b")]))
    with pytest.raises(UnrootedWithoutAncestors):
        TreeSpec.chain(3, kind="unrooted")
    with pytest.raises(TreeSpecError):
        TreeSpec.from_mapping({"kind": "rooted", "generator": {"type": "chain"}, "forward_depth": 2, "x": 1})


def test_explicit_leaf_and_labels():
    t = build_tree(TreeSpec.explicit([("r", None), ("a", "r"), ("b", "r"), ("c", "a")], forward_depth=4))
    # "b" and "c" are childless; "c" sits above the frontier too, "b" is found first
    assert t.labels == ("r", "a", "b", "c")
    assert find_leaf(t) == t.index_of("b")


def test_mapping_round_trip():
    spec = TreeSpec.regular(3, 4, kind="unrooted", ancestor_depth=2)
    assert TreeSpec.from_mapping(spec.to_mapping()) == spec


def test_same_component_levels():
    t = build_tree(TreeSpec.regular(2, 4))
    assert same_component(t, 3, 6, horizon=2)
    assert not same_component(t, 3, 6, horizon=1)
    assert not same_component(t, 1, 3, horizon=3)


@settings(max_examples=30, deadline=None)
@given(regular_specs)
def test_reachable_sets_disjoint_and_sized(spec):
    t = build_tree(spec)
    b = spec.branching
    for n in range(t.max_level + 1):
        ids = np.flatnonzero(t.forward_room(np.arange(t.n_edges)) >= n)
        seen = np.zeros(t.n_edges, dtype=int)
        for i in ids:
            r = reachable_set(t, int(i), n)
            assert len(r) == b ** n
            seen[list(r)] += 1
        assert seen.max() <= 1


@settings(max_examples=30, deadline=None)
@given(regular_specs, st.data())
def test_ancestor_inverts_reachable(spec, data):
    t = build_tree(spec)
    j = data.draw(st.integers(0, t.n_edges - 1))
    n = data.draw(st.integers(1, max(1, int(t.depth[j]))))
    if t.depth[j] < n:
        return
    assert j in reachable_set(t, ancestor(t, j, n), n)


@settings(max_examples=20, deadline=None)
@given(regular_specs)
def test_build_is_deterministic(spec):
    a, b = build_tree(spec), build_tree(spec)
    assert np.array_equal(a.parent, b.parent) and np.array_equal(a.child_ptr, b.child_ptr)
