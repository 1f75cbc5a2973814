"""Cylinder sets over tree-indexed configuration spaces.

A configuration assigns one spin to every vertex of the tree.  A cylinder set
constrains finitely many vertices and leaves the rest free; we represent it as
a finite union of rectangles, where a rectangle carries one constraint per
constrained vertex.  Constraints are finite In-sets, or (over the denumerable
spin set) finite NotIn-sets; for a finite spin set every NotIn normalizes to
the complementary In-set, which makes emptiness, inclusion and equality of
cylinder sets decidable by rectangle algebra alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    BudgetError,
    ContextMismatchError,
    SpinRangeError,
)
from .tree import TreeGeometry

DEFAULT_ATOM_BUDGET = 2**24
DEFAULT_RECTANGLE_BUDGET = 50_000

IN = "in"
NOT_IN = "notin"


@dataclass(frozen=True)
class SpinSet:
    """Spin alphabet: either {0, ..., size-1} or all non-negative integers."""

    size: int | None = None

    def __post_init__(self):
        if self.size is not None and self.size < 1:
            raise ValueError(f"finite spin set needs size >= 1, got {self.size}")

    @classmethod
    def finite(cls, size: int) -> "SpinSet":
        return cls(size)

    @classmethod
    def naturals(cls) -> "SpinSet":
        return cls(None)

    @property
    def is_finite(self) -> bool:
        return self.size is not None

    def contains(self, q: int) -> bool:
        return q >= 0 and (self.size is None or q < self.size)

    def values(self) -> range:
        if self.size is None:
            raise SpinRangeError("cannot enumerate the denumerable spin set")
        return range(self.size)

    def check(self, q: int) -> None:
        if not self.contains(q):
            raise SpinRangeError(f"spin {q} out of range for {self}")

    def __str__(self):
        return "nat" if self.size is None else f"finite({self.size})"


@dataclass(frozen=True)
class Context:
    """A tree geometry together with the spin alphabet placed on its vertices."""

    tree: TreeGeometry
    spins: SpinSet


def _require_same_ctx(a: "CylinderSet", b: "CylinderSet") -> None:
    if a.ctx != b.ctx:
        raise ContextMismatchError("operands live over different contexts")


# ---------------------------------------------------------------------------
# per-site constraints


@dataclass(frozen=True)
class SiteConstraint:
    """Allowed spin values at one site.

    mode "in": exactly the listed values are allowed (the list is finite and,
    once normalized, non-empty except for the transient empty marker).
    mode "notin": everything except the listed values is allowed; this form
    survives normalization only over the denumerable spin set.
    """

    mode: str
    values: frozenset[int]

    def key(self):
        return (self.mode, tuple(sorted(self.values)))


ANY = SiteConstraint(NOT_IN, frozenset())


def constraint_in(values) -> SiteConstraint:
    return SiteConstraint(IN, frozenset(values))


def constraint_not_in(values) -> SiteConstraint:
    return SiteConstraint(NOT_IN, frozenset(values))


def c_normalize(c: SiteConstraint, spins: SpinSet) -> SiteConstraint | None:
    """Canonical form; None means the constraint allows every spin."""
    if spins.is_finite:
        full = frozenset(spins.values())
        allowed = (c.values & full) if c.mode == IN else (full - c.values)
        if allowed == full:
            return None
        return SiteConstraint(IN, allowed)
    if c.mode == NOT_IN and not c.values:
        return None
    return c


def c_is_empty(c: SiteConstraint) -> bool:
    return c.mode == IN and not c.values


def c_contains(c: SiteConstraint, q: int) -> bool:
    if c.mode == IN:
        return q in c.values
    return q not in c.values


def c_intersect(a: SiteConstraint, b: SiteConstraint, spins: SpinSet) -> SiteConstraint | None:
    """Intersection in canonical form; None means unconstrained."""
    if a.mode == IN and b.mode == IN:
        out = SiteConstraint(IN, a.values & b.values)
    elif a.mode == IN:
        out = SiteConstraint(IN, a.values - b.values)
    elif b.mode == IN:
        out = SiteConstraint(IN, b.values - a.values)
    else:
        out = SiteConstraint(NOT_IN, a.values | b.values)
    return c_normalize(out, spins)


def c_complement(c: SiteConstraint, spins: SpinSet) -> SiteConstraint | None:
    if spins.is_finite:
        full = frozenset(spins.values())
        allowed = full - c.values if c.mode == IN else c.values & full
        if allowed == full:
            return None
        return SiteConstraint(IN, allowed)
    swapped = SiteConstraint(NOT_IN if c.mode == IN else IN, c.values)
    return c_normalize(swapped, spins)


def c_allowed_values(c: SiteConstraint | None, spins: SpinSet):
    """Iterable of allowed values; requires a finite answer."""
    if c is None:
        return spins.values()
    if c.mode == IN:
        return sorted(c.values)
    if spins.is_finite:
        return sorted(set(spins.values()) - c.values)
    raise SpinRangeError("cofinite constraint over the denumerable spin set")


def c_render(c: SiteConstraint, site: int) -> str:
    vals = ",".join(str(v) for v in sorted(c.values))
    if c.mode == IN:
        if len(c.values) == 1:
            return f"x{site}={next(iter(c.values))}"
        return f"x{site} in {{{vals}}}"
    return f"x{site} notin {{{vals}}}"


# ---------------------------------------------------------------------------
# rectangles


@dataclass(frozen=True)
class Rectangle:
    """Conjunction of per-site constraints, one per constrained vertex.

    items is sorted by site; every constraint is normalized, satisfiable and
    actually constraining (never equivalent to "any value").
    """

    items: tuple[tuple[int, SiteConstraint], ...]

    def sites(self) -> tuple[int, ...]:
        cached = getattr(self, "_sites", None)
        if cached is None:
            cached = tuple(site for site, _ in self.items)
            object.__setattr__(self, "_sites", cached)
        return cached

    def constraint_at(self, site: int) -> SiteConstraint | None:
        for s, c in self.items:
            if s == site:
                return c
        return None

    def as_dict(self) -> dict[int, SiteConstraint]:
        return dict(self.items)

    def key(self):
        # memoized: keys are hot in measure-value caches
        cached = getattr(self, "_key", None)
        if cached is None:
            cached = tuple((s, c.key()) for s, c in self.items)
            object.__setattr__(self, "_key", cached)
        return cached

    def is_unconstrained(self) -> bool:
        return not self.items

    def all_singletons(self) -> bool:
        cached = getattr(self, "_single", None)
        if cached is None:
            cached = all(c.mode == IN and len(c.values) == 1 for _, c in self.items)
            object.__setattr__(self, "_single", cached)
        return cached

    def matches(self, values) -> bool:
        """values: indexable by vertex (an atom on a ball containing all sites)."""
        return all(c_contains(c, values[s]) for s, c in self.items)

    def render(self) -> str:
        if not self.items:
            return "omega"
        return " & ".join(c_render(c, s) for s, c in self.items)


def make_rectangle(ctx: Context, mapping) -> Rectangle | None:
    """Build a rectangle from {site: SiteConstraint}; None when empty."""
    items = []
    for site in sorted(mapping):
        ctx.tree.check_vertex(site)
        c = c_normalize(mapping[site], ctx.spins)
        if c is None:
            continue
        if c_is_empty(c):
            return None
        items.append((site, c))
    return Rectangle(tuple(items))


def rect_intersect(a: Rectangle, b: Rectangle, spins: SpinSet) -> Rectangle | None:
    merged = dict(a.items)
    for site, c in b.items:
        if site in merged:
            c2 = c_intersect(merged[site], c, spins)
            if c2 is None:
                del merged[site]
                continue
            if c_is_empty(c2):
                return None
            merged[site] = c2
        else:
            merged[site] = c
    return Rectangle(tuple(sorted(merged.items())))


def rect_subtract(p: Rectangle, d: Rectangle, spins: SpinSet) -> list[Rectangle]:
    """Disjoint rectangles covering p minus d."""
    if rect_intersect(p, d, spins) is None:
        return [p]
    out: list[Rectangle] = []
    fixed = dict(p.items)
    for site, dc in d.items:
        pc = fixed.get(site)
        neg = c_complement(dc, spins)
        if neg is not None:
            piece_c = neg if pc is None else c_intersect(pc, neg, spins)
            if piece_c is not None and not c_is_empty(piece_c):
                piece = dict(fixed)
                piece[site] = piece_c
                out.append(Rectangle(tuple(sorted(piece.items()))))
        cap = dc if pc is None else c_intersect(pc, dc, spins)
        if cap is None:
            fixed.pop(site, None)
        else:
            fixed[site] = cap
    return out


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class Configuration:
    """Finite partial assignment of spins, sites listed in increasing order."""

    sites: tuple[int, ...]
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.sites) != len(self.values):
            raise ValueError("sites and values must have equal length")

    @classmethod
    def on_ball(cls, ctx: Context, n: int, values) -> "Configuration":
        values = tuple(values)
        size = ctx.tree.ball_size(n)
        if len(values) != size:
            raise ValueError(f"need {size} values for the depth-{n} ball, got {len(values)}")
        for q in values:
            ctx.spins.check(q)
        return cls(tuple(range(size)), values)

    @classmethod
    def from_mapping(cls, ctx: Context, mapping) -> "Configuration":
        sites = tuple(sorted(mapping))
        for s in sites:
            ctx.tree.check_vertex(s)
            ctx.spins.check(mapping[s])
        return cls(sites, tuple(mapping[s] for s in sites))

    def value_at(self, site: int) -> int:
        try:
            return self.values[self.sites.index(site)]
        except ValueError:
            raise KeyError(f"site {site} not assigned") from None

    def as_mapping(self) -> dict[int, int]:
        return dict(zip(self.sites, self.values))

    def restrict(self, sites) -> "Configuration":
        keep = tuple(s for s in self.sites if s in set(sites))
        m = self.as_mapping()
        return Configuration(keep, tuple(m[s] for s in keep))

    def render(self) -> str:
        return ",".join(f"x{s}={v}" for s, v in zip(self.sites, self.values))


# ---------------------------------------------------------------------------
# cylinder sets


@dataclass(frozen=True)
class CylinderSet:
    """Finite union of rectangles over a fixed context.

    rectangles is canonical: no duplicates, sorted by rectangle key.  The
    empty union is the empty set; a union containing the unconstrained
    rectangle is the whole configuration space.  floor_depth only lifts the
    reported base depth; it never changes the set.
    """

    ctx: Context
    rectangles: tuple[Rectangle, ...]
    base_depth: int = 0

    # -- constructors ------------------------------------------------------

    @staticmethod
    def build(ctx: Context, rects, floor_depth: int = 0) -> "CylinderSet":
        seen = {}
        for r in rects:
            if r is None:
                continue
            if r.is_unconstrained():
                seen = {Rectangle(()).key(): Rectangle(())}
                break
            seen.setdefault(r.key(), r)
        ordered = tuple(seen[k] for k in sorted(seen))
        depth = floor_depth
        tree = ctx.tree
        for r in ordered:
            for site, _ in r.items:
                lvl = tree.level(site)
                if lvl > depth:
                    depth = lvl
        tree.check_depth(depth)
        return CylinderSet(ctx, ordered, depth)

    # -- predicates ---------------------------------------------------------

    def is_empty(self) -> bool:
        return not self.rectangles

    def is_omega(self) -> bool:
        if any(r.is_unconstrained() for r in self.rectangles):
            return True
        if not self.rectangles:
            return False
        # the union may cover everything without any single rectangle doing so
        return self.complement().is_empty()

    def contains(self, values) -> bool:
        """values: indexable by vertex covering every constrained site."""
        return any(r.matches(values) for r in self.rectangles)

    # -- algebra ------------------------------------------------------------

    def intersect(self, other: "CylinderSet", budget: int = DEFAULT_RECTANGLE_BUDGET) -> "CylinderSet":
        _require_same_ctx(self, other)
        out = []
        for p in self.rectangles:
            for q in other.rectangles:
                r = rect_intersect(p, q, self.ctx.spins)
                if r is not None:
                    out.append(r)
                    if len(out) > budget:
                        raise BudgetError("rectangle budget exceeded during intersection")
        return CylinderSet.build(self.ctx, out)

    def union(self, other: "CylinderSet") -> "CylinderSet":
        _require_same_ctx(self, other)
        return CylinderSet.build(self.ctx, self.rectangles + other.rectangles)

    def subtract(self, other: "CylinderSet", budget: int = DEFAULT_RECTANGLE_BUDGET) -> "CylinderSet":
        _require_same_ctx(self, other)
        pieces = list(self.rectangles)
        for d in other.rectangles:
            nxt = []
            for p in pieces:
                nxt.extend(rect_subtract(p, d, self.ctx.spins))
                if len(nxt) > budget:
                    raise BudgetError("rectangle budget exceeded during subtraction")
            pieces = nxt
            if not pieces:
                break
        return CylinderSet.build(self.ctx, pieces)

    def complement(self, budget: int = DEFAULT_RECTANGLE_BUDGET) -> "CylinderSet":
        return omega(self.ctx).subtract(self, budget)

    def subset_of(self, other: "CylinderSet", budget: int = DEFAULT_RECTANGLE_BUDGET) -> bool:
        return self.subtract(other, budget).is_empty()

    def semantic_equal(self, other: "CylinderSet", budget: int = DEFAULT_RECTANGLE_BUDGET) -> bool:
        return self.subset_of(other, budget) and other.subset_of(self, budget)

    def disjoint_rectangles(self, budget: int = DEFAULT_RECTANGLE_BUDGET) -> tuple[Rectangle, ...]:
        """Rectangles with the same union but pairwise disjoint."""
        rects = self.rectangles
        if len(rects) <= 1:
            return rects
        # distinct fully-singleton rectangles over one site tuple are disjoint
        sites0 = rects[0].sites()
        if all(r.sites() == sites0 and r.all_singletons() for r in rects):
            return rects
        out: list[Rectangle] = []
        spins = self.ctx.spins
        for r in rects:
            pieces = [r]
            for d in out:
                pieces = [q for p in pieces for q in rect_subtract(p, d, spins)]
                if len(pieces) > budget:
                    raise BudgetError("rectangle budget exceeded while disjoining")
                if not pieces:
                    break
            out.extend(pieces)
            if len(out) > budget:
                raise BudgetError("rectangle budget exceeded while disjoining")
        return tuple(out)

    def lift_to_base(self, n: int) -> "CylinderSet":
        """Same set, re-registered at base depth n (n may only grow it)."""
        if n < self.base_depth:
            raise ValueError(
                f"cannot lower base depth {self.base_depth} to {n}; constraints reach deeper"
            )
        self.ctx.tree.check_depth(n)
        return CylinderSet(self.ctx, self.rectangles, n)

    # -- enumeration ---------------------------------------------------------

    def atom_count(self, n: int | None = None) -> int:
        """Number of depth-n base configurations in the set (finite spins)."""
        n = self.base_depth if n is None else n
        if n < self.base_depth:
            raise ValueError("enumeration depth below base depth")
        if not self.ctx.spins.is_finite:
            raise SpinRangeError("cannot count atoms over the denumerable spin set")
        size = self.ctx.tree.ball_size(n)
        s = self.ctx.spins.size
        total = 0
        for r in self.disjoint_rectangles():
            count = 1
            for site in range(size):
                c = r.constraint_at(site)
                count *= s if c is None else len(list(c_allowed_values(c, self.ctx.spins)))
            total += count
        return total

    def atoms(self, n: int | None = None, budget: int = DEFAULT_ATOM_BUDGET) -> list[Configuration]:
        """All depth-n base configurations in the set, lexicographic order."""
        n = self.base_depth if n is None else n
        if n < self.base_depth:
            raise ValueError("enumeration depth below base depth")
        if not self.ctx.spins.is_finite:
            raise SpinRangeError("cannot enumerate atoms over the denumerable spin set")
        size = self.ctx.tree.ball_size(n)
        if self.ctx.spins.size**size > budget and not self.is_empty():
            if self.atom_count(n) > budget:
                raise BudgetError(f"atom budget {budget} exceeded at depth {n}")
        tuples: set[tuple[int, ...]] = set()
        for r in self.disjoint_rectangles():
            choices = []
            for site in range(size):
                c = r.constraint_at(site)
                choices.append(list(c_allowed_values(c, self.ctx.spins)))
            for combo in itertools.product(*choices):
                tuples.add(combo)
                if len(tuples) > budget:
                    raise BudgetError(f"atom budget {budget} exceeded at depth {n}")
        return [Configuration.on_ball(self.ctx, n, t) for t in sorted(tuples)]

    def canonical_key(self):
        return tuple(r.key() for r in self.rectangles)

    def render(self) -> str:
        if self.is_empty():
            return "empty"
        if self.is_omega():
            return "omega"
        return " | ".join(r.render() for r in self.rectangles)


# ---------------------------------------------------------------------------
# basic constructors


def empty_set(ctx: Context) -> CylinderSet:
    return CylinderSet.build(ctx, [])


def omega(ctx: Context) -> CylinderSet:
    return CylinderSet.build(ctx, [Rectangle(())])


def single_site(ctx: Context, site: int, q: int) -> CylinderSet:
    """All configurations taking the value q at one vertex."""
    ctx.spins.check(q)
    r = make_rectangle(ctx, {site: constraint_in([q])})
    return CylinderSet.build(ctx, [r])


def from_constraints(ctx: Context, mapping) -> CylinderSet:
    """One rectangle from {site: SiteConstraint}."""
    return CylinderSet.build(ctx, [make_rectangle(ctx, mapping)])


def from_configuration(ctx: Context, config: Configuration) -> CylinderSet:
    mapping = {s: constraint_in([v]) for s, v in zip(config.sites, config.values)}
    return from_constraints(ctx, mapping)


# ---------------------------------------------------------------------------
# the metric on configurations


def rho(ctx: Context, a: Configuration, b: Configuration, depth: int,
        eventually_equal: bool = False) -> tuple[Fraction, Fraction]:
    """Truncated configuration distance.

    Sums 2**(-i) over the indices i of the depth-`depth` ball where a and b
    disagree, and returns (partial sum, bound on the ignored tail).  Both
    configurations must assign every index of that ball.  When the caller
    declares the configurations eventually equal (they agree at every index
    not assigned by both), the remaining assigned sites are folded in and the
    tail bound is exactly zero.
    """
    m = ctx.tree.ball_size(depth)
    map_a, map_b = a.as_mapping(), b.as_mapping()
    for i in range(m):
        if i not in map_a or i not in map_b:
            raise ValueError(f"both configurations must assign every index below {m}")
    partial = Fraction(0)
    for i in range(m):
        if map_a[i] != map_b[i]:
            partial += Fraction(1, 2**i)
    if not eventually_equal:
        return partial, Fraction(2, 2**m)
    for i in sorted(set(map_a) & set(map_b)):
        if i >= m and map_a[i] != map_b[i]:
            partial += Fraction(1, 2**i)
    return partial, Fraction(0)


# ---------------------------------------------------------------------------
# generator decomposition

# A single-site cylinder is recovered from fully-specified depth-n bases in
# two steps.  Literally intersecting two distinct fully-specified bases gives
# the empty set (they force different values somewhere), so the working
# reading is the agreement reading: a pair of bases that coincide exactly at
# one vertex pins down that vertex's value and nothing else.  The union of
# all fully-specified bases taking the value q at the vertex equals the
# single-site cylinder; a canonical witness pair generates it through
# `agreement_cylinder`.


def generator_decomposition(ctx: Context, site: int, q: int, n: int) -> tuple[Rectangle, Rectangle]:
    """Canonical pair of fully-specified depth-n bases coinciding only at `site`.

    Both bases take the value q at `site`.  Away from `site` the two bases
    disagree everywhere, so their agreement set is exactly {site: q} and
    `agreement_cylinder` of the pair is the single-site cylinder.  With a
    one-letter spin alphabet no disagreement is possible and the degenerate
    identical pair is returned (the whole space is a single configuration).
    """
    ctx.spins.check(q)
    ctx.tree.check_depth(n)
    if ctx.tree.level(site) > n:
        raise ValueError(f"vertex {site} lies outside the depth-{n} ball")
    size = ctx.tree.ball_size(n)
    if ctx.spins.is_finite and ctx.spins.size == 1:
        fill = {s: constraint_in([0]) for s in range(size)}
        r = make_rectangle(ctx, fill)
        return r, r
    a = q
    b = q + 1 if ctx.spins.contains(q + 1) else (q + 1) % ctx.spins.size
    first = {s: constraint_in([a if s != site else q]) for s in range(size)}
    second = {s: constraint_in([b if s != site else q]) for s in range(size)}
    return make_rectangle(ctx, first), make_rectangle(ctx, second)


def agreement_cylinder(ctx: Context, first: Rectangle, second: Rectangle) -> CylinderSet:
    """Cylinder pinned by the constraints the two rectangles share.

    Keeps exactly the sites where both rectangles carry identical
    constraints; every other site is released.
    """
    shared = {}
    d2 = second.as_dict()
    for s, c in first.items:
        if d2.get(s) == c:
            shared[s] = c
    return from_constraints(ctx, shared)


# ---------------------------------------------------------------------------
# randomized probes


def random_cylinder(ctx: Context, rng, max_depth: int = 2, max_rectangles: int = 3) -> CylinderSet:
    """Seeded random cylinder set for crosschecks; deterministic in rng state."""
    size = ctx.tree.ball_size(max_depth)
    rects = []
    for _ in range(rng.randint(1, max_rectangles)):
        mapping = {}
        for site in rng.sample(range(size), rng.randint(1, min(4, size))):
            if ctx.spins.is_finite:
                s = ctx.spins.size
                count = rng.randint(1, s)
                mapping[site] = constraint_in(rng.sample(range(s), count))
            else:
                vals = rng.sample(range(8), rng.randint(1, 3))
                if rng.random() < 0.3:
                    mapping[site] = constraint_not_in(vals)
                else:
                    mapping[site] = constraint_in(vals)
        rects.append(make_rectangle(ctx, mapping))
    return CylinderSet.build(ctx, rects)
