"""Geometry of the order-k regular tree with a fixed breadth-first indexing.

The tree is rooted at index 0.  The root has ``order + 1`` children and every
other vertex has ``order`` children, so every vertex has exactly ``order + 1``
neighbours.  Indices are assigned breadth-first: all vertices at distance n
from the root come before all vertices at distance n + 1, and the children of
vertex i occupy a consecutive index block that precedes the block of vertex
i + 1 on the same level.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DepthLimitError

DEFAULT_MAX_DEPTH = 16


@dataclass(frozen=True)
class TreeGeometry:
    order: int
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"tree order must be >= 1, got {self.order}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")

    # -- sphere and ball combinatorics ------------------------------------

    def sphere_size(self, n: int) -> int:
        """Number of vertices at distance exactly n from the root."""
        self.check_depth(n)
        if n == 0:
            return 1
        return (self.order + 1) * self.order ** (n - 1)

    def ball_size(self, n: int) -> int:
        """Number of vertices at distance at most n from the root."""
        self.check_depth(n)
        k = self.order
        if k == 1:
            return 2 * n + 1
        return 1 + (k + 1) * (k**n - 1) // (k - 1)

    def ball_vertices(self, n: int) -> range:
        return range(self.ball_size(n))

    def sphere_vertices(self, n: int) -> range:
        self.check_depth(n)
        if n == 0:
            return range(0, 1)
        return range(self.ball_size(n - 1), self.ball_size(n))

    # -- vertex arithmetic -------------------------------------------------

    def level(self, v: int) -> int:
        """Distance from the root, derived from the index alone."""
        self.check_vertex(v)
        n = 0
        while v >= self.ball_size(n):
            n += 1
        return n

    def level_and_position(self, v: int) -> tuple[int, int]:
        """(level, position within that level), the inverse of index_of."""
        n = self.level(v)
        base = 0 if n == 0 else self.ball_size(n - 1)
        return n, v - base

    def index_of(self, level: int, position: int) -> int:
        self.check_depth(level)
        if not 0 <= position < self.sphere_size(level):
            raise ValueError(f"position {position} out of range at level {level}")
        base = 0 if level == 0 else self.ball_size(level - 1)
        return base + position

    def parent(self, v: int) -> int | None:
        lvl, pos = self.level_and_position(v)
        if lvl == 0:
            return None
        if lvl == 1:
            return 0
        return self.ball_size(lvl - 2) + pos // self.order

    def children(self, v: int) -> range:
        lvl = self.level(v)
        if lvl + 1 > self.max_depth:
            raise DepthLimitError(
                f"children of vertex {v} lie at depth {lvl + 1} > max_depth {self.max_depth}"
            )
        if v == 0:
            return range(1, self.order + 2)
        pos = v - self.ball_size(lvl - 1)
        first = self.ball_size(lvl) + pos * self.order
        return range(first, first + self.order)

    def path_to_root(self, v: int) -> list[int]:
        """Vertices from v up to and including the root."""
        path = [v]
        while path[-1] != 0:
            path.append(self.parent(path[-1]))
        return path

    def ancestor_at_level(self, v: int, lvl: int) -> int:
        cur = v
        cur_lvl = self.level(v)
        if lvl > cur_lvl:
            raise ValueError(f"vertex {v} sits at level {cur_lvl} < {lvl}")
        while cur_lvl > lvl:
            cur = self.parent(cur)
            cur_lvl -= 1
        return cur

    def distance(self, u: int, v: int) -> int:
        """Graph distance, via the lowest common ancestor."""
        lu, lv = self.level(u), self.level(v)
        d = 0
        while lu > lv:
            u = self.parent(u)
            lu -= 1
            d += 1
        while lv > lu:
            v = self.parent(v)
            lv -= 1
            d += 1
        while u != v:
            u = self.parent(u)
            v = self.parent(v)
            d += 2
        return d

    def parents_list(self, n: int) -> list[int | None]:
        """parents_list(n)[v] is the parent of v, for every v in the depth-n ball."""
        self.check_depth(n)
        out: list[int | None] = [None] * self.ball_size(n)
        if n > 0:
            for v in range(self.ball_size(n - 1)):
                for c in self.children(v):
                    out[c] = v
        return out

    def edges_within(self, n: int):
        """Yield (parent, child) for every edge of the depth-n ball."""
        parents = self.parents_list(n)
        for child in range(1, self.ball_size(n)):
            yield parents[child], child

    # -- guards ------------------------------------------------------------

    def check_depth(self, n: int) -> None:
        if n < 0:
            raise ValueError(f"depth must be non-negative, got {n}")
        if n > self.max_depth:
            raise DepthLimitError(f"depth {n} exceeds max_depth {self.max_depth}")

    def check_vertex(self, v: int) -> None:
        if v < 0:
            raise ValueError(f"vertex index must be non-negative, got {v}")
        if v >= self.ball_size(self.max_depth):
            raise DepthLimitError(
                f"vertex {v} lies beyond depth max_depth {self.max_depth}"
            )
