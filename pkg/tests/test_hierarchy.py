import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapecomplex.exceptions import (
    CycleDetected,
    DegenerateHierarchy,
    DisconnectedLabel,
    InvalidHierarchy,
    MultipleParents,
    UnknownLabel,
)
from shapecomplex.hierarchy import (
    SOURCE,
    LabelHierarchy,
    bottom_up_order,
    build_hierarchy,
    descendant_leaves,
    flat_hierarchy,
    top_down_order,
)

S, W, BG, I, WALL = 0, 1, 2, 3, 4
VESSEL = [(S, W), (S, BG), (W, I), (W, WALL)]


def test_two_leaf_hierarchy():
    h = build_hierarchy([(0, 1), (0, 2)])
    assert h.leaves == (1, 2)
    assert h.branches == ()
    assert top_down_order(h) == [0, 1, 2]
    assert bottom_up_order(h) == [2, 1, 0]


def test_vessel_hierarchy():
    h = build_hierarchy(VESSEL)
    assert set(h.leaves) == {BG, I, WALL}
    assert h.branches == (W,)
    assert h.parent(I) == W and h.parent(W) == S
    assert top_down_order(h) == [S, W, BG, I, WALL]
    assert bottom_up_order(h) == list(reversed(top_down_order(h)))
    assert h.depth() == 2


def test_descendant_leaves():
    h = build_hierarchy(VESSEL)
    assert descendant_leaves(h, W) == {I, WALL}
    assert descendant_leaves(h, I) == {I}
    assert descendant_leaves(h, S) == set(h.leaves)
    with pytest.raises(UnknownLabel):
        descendant_leaves(h, 9)


@pytest.mark.parametrize("edges, error", [
    ([(0, 1), (1, 0)], CycleDetected),
    ([(0, 1), (1, 1)], CycleDetected),
    ([(0, 1), (0, 2), (3, 4), (4, 3)], CycleDetected),
    ([(0, 1), (0, 2), (1, 3), (2, 3)], MultipleParents),
    ([(0, 1), (0, 2), (3, 4)], DisconnectedLabel),
    ([(0, 1), (0, 3)], DisconnectedLabel),
    ([(0, 1)], DegenerateHierarchy),
    ([], DegenerateHierarchy),
])
def test_invalid_edges(edges, error):
    with pytest.raises(error):
        build_hierarchy(edges)


def test_single_branch_under_source_is_allowed():
    h = build_hierarchy([(0, 1), (1, 2), (1, 3)])
    assert h.leaves == (2, 3)


def test_source_has_no_parent():
    h = flat_hierarchy(2)
    with pytest.raises(UnknownLabel):
        h.parent(SOURCE)


def test_records_round_trip():
    records = [
        {"name": "vessel", "parent": "source"},
        {"name": "background", "parent": "source"},
        {"name": "interior", "parent": "vessel"},
        {"name": "wall", "parent": "vessel"},
    ]
    h = LabelHierarchy.from_records(records)
    assert h.to_records() == records
    assert LabelHierarchy.from_records(h.to_records()) == h
    assert h.label_id("wall") == 4
    with pytest.raises(UnknownLabel):
        h.label_id("nope")


@pytest.mark.parametrize("records", [
    [{"name": "source", "parent": "source"}],
    [{"name": "a", "parent": "source"}, {"name": "a", "parent": "source"}],
    [{"name": "a", "parent": "nowhere"}, {"name": "b", "parent": "source"}],
    [{"name": "a"}],
])
def test_bad_records(records):
    with pytest.raises(InvalidHierarchy):
        LabelHierarchy.from_records(records)


def test_rebuild_from_edges_is_idempotent():
    h = build_hierarchy(VESSEL)
    assert build_hierarchy(h.edges(), names=h.names) == h


def _trees(max_nodes):
    """Every labelled rooted tree on up to ``max_nodes`` nodes (parent id < child id)."""
    for n in range(3, max_nodes + 1):
        for parents in itertools.product(*[range(k) for k in range(1, n)]):
            edges = [(p, c) for c, p in zip(range(1, n), parents)]
            try:
                yield build_hierarchy(edges)
            except DegenerateHierarchy:
                continue


def test_traversal_orders_exhaustive_small_trees():
    count = 0
    for h in _trees(6):
        count += 1
        down = top_down_order(h)
        up = bottom_up_order(h)
        assert sorted(down) == list(range(h.n_labels))
        assert up == down[::-1]
        pos = {L: i for i, L in enumerate(up)}
        for L in range(1, h.n_labels):
            assert pos[L] < pos[h.parent(L)]
        parts = [descendant_leaves(h, c) for c in h.children(SOURCE)]
        assert set().union(*parts) == set(h.leaves)
        assert sum(len(p) for p in parts) == len(h.leaves)
    assert count > 100


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=10), min_size=2, max_size=8))
def test_random_trees_leaves_have_no_children(raw):
    edges = [(raw[i] % (i + 1), i + 1) for i in range(len(raw))]
    try:
        h = build_hierarchy(edges)
    except DegenerateHierarchy:
        return
    for L in range(1, h.n_labels):
        assert h.is_leaf(L) == (len(h.children(L)) == 0)
    assert all(h.is_branch(b) for b in h.branches)
