from collections import deque

import pytest

from treemeasure import DepthLimitError, TreeGeometry


def bfs_oracle(k, n):
    """Rebuild the layered tree with an explicit queue.

    Returns (levels, parents, children) where levels[v] is the depth of
    vertex v, parents[v] is its parent index (None for the root), and
    children[v] lists child indices in order of assignment.
    """
    levels = [0]
    parents = [None]
    children = {0: []}
    queue = deque([0])
    next_index = 1
    while queue:
        v = queue.popleft()
        if levels[v] >= n:
            continue
        degree = k + 1 if v == 0 else k
        for _ in range(degree):
            c = next_index
            next_index += 1
            levels.append(levels[v] + 1)
            parents.append(v)
            children[v].append(c)
            children[c] = []
            queue.append(c)
    return levels, parents, children


def test_indexing_matches_bfs_oracle():
    for k in (1, 2, 3):
        tree = TreeGeometry(k, max_depth=6)
        levels, parents, children = bfs_oracle(k, 5)
        assert tree.ball_size(5) == len(levels)
        for v in range(len(levels)):
            assert tree.level(v) == levels[v]
            assert tree.parent(v) == parents[v]
            if levels[v] < 5:
                assert list(tree.children(v)) == children[v]
        assert tree.parents_list(5) == parents


def test_sphere_and_ball_closed_forms():
    for k in (1, 2, 3):
        tree = TreeGeometry(k, max_depth=9)
        count = 1
        total = 1
        assert tree.sphere_size(0) == 1
        assert tree.ball_size(0) == 1
        for n in range(1, 9):
            count = (k + 1) * k ** (n - 1)
            total += count
            assert tree.sphere_size(n) == count
            assert tree.ball_size(n) == total


def test_k2_frozen_layout():
    tree = TreeGeometry(2)
    assert [tree.ball_size(n) for n in range(4)] == [1, 4, 10, 22]
    assert list(tree.children(0)) == [1, 2, 3]
    assert list(tree.children(1)) == [4, 5]
    assert list(tree.children(3)) == [8, 9]
    assert tree.parent(9) == 3
    assert tree.path_to_root(9) == [9, 3, 0]
    # 4 sits under 1, 3 is a sibling branch: up 2 edges, down 1
    assert tree.distance(4, 3) == 3
    assert tree.distance(4, 5) == 2
    assert tree.distance(0, 9) == 2


def test_sphere_vertices_partition_ball():
    tree = TreeGeometry(3, max_depth=4)
    seen = []
    for n in range(4):
        seen.extend(tree.sphere_vertices(n))
    assert seen == list(tree.ball_vertices(3))


def test_ancestor_and_level_position():
    tree = TreeGeometry(2)
    for v in range(tree.ball_size(3)):
        lvl, pos = tree.level_and_position(v)
        assert tree.index_of(lvl, pos) == v
        assert tree.ancestor_at_level(v, lvl) == v
        assert tree.ancestor_at_level(v, 0) == 0


def test_depth_guards():
    tree = TreeGeometry(2, max_depth=3)
    with pytest.raises(DepthLimitError):
        tree.ball_size(4)
    with pytest.raises(DepthLimitError):
        tree.sphere_vertices(9)
    with pytest.raises(ValueError):
        TreeGeometry(0)
    with pytest.raises(ValueError):
        tree.check_vertex(-1)


def test_edges_within_count():
    # a ball is a tree: edge count is vertex count minus one
    for k in (1, 2, 3):
        tree = TreeGeometry(k, max_depth=5)
        for n in range(5):
            edges = list(tree.edges_within(n))
            assert len(edges) == tree.ball_size(n) - 1
            for parent, child in edges:
                assert tree.parent(child) == parent
