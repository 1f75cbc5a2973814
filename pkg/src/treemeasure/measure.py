"""Finite-volume measures on tree balls and depth-indexed families of them.

A depth-n volume measure assigns a non-negative rational to every base
configuration on the depth-n ball.  Three forms are supported: an explicit
dense table, a product over sites, and a root-to-leaf chain (root weights
plus a one-step transition kernel).  Over the denumerable spin set the chain
and product forms carry closed-form tail descriptors, so cylinder values,
marginals and masses stay exact.

Values are Fraction, the float infinity for a diverging mass, or
Inconclusive when a computation stopped at a work budget with only a
certified lower bound.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction

from .cylinder import (
    DEFAULT_ATOM_BUDGET,
    Context,
    CylinderSet,
    Rectangle,
    SiteConstraint,
    SpinSet,
    c_allowed_values,
    constraint_in,
    from_constraints,
    omega,
)
from .errors import (
    BudgetError,
    ContextMismatchError,
    FamilyDepthError,
    MassError,
    SpinRangeError,
)

INFINITE = math.inf


@dataclass(frozen=True)
class Inconclusive:
    """A computation cut short: the true value is at least `lower`, and is
    within `tail` of it when a tail bound could be certified."""

    lower: Fraction
    tail: Fraction | None = None


def is_finite_value(v) -> bool:
    return isinstance(v, Fraction)


def value_add(a, b):
    if isinstance(a, Inconclusive) or isinstance(b, Inconclusive):
        raise TypeError("cannot add inconclusive values")
    if a == INFINITE or b == INFINITE:
        return INFINITE
    return a + b


def value_mul(a, b):
    if isinstance(a, Inconclusive) or isinstance(b, Inconclusive):
        raise TypeError("cannot multiply inconclusive values")
    if a == 0 or b == 0:
        return Fraction(0)
    if a == INFINITE or b == INFINITE:
        return INFINITE
    return a * b


def value_pow(v, e: int):
    if e == 0:
        return Fraction(1)
    if v == INFINITE:
        return INFINITE
    return v**e


def value_sub(a, b):
    """a - b for a >= b >= 0; infinity minus a finite amount stays infinite."""
    if b == INFINITE:
        raise ValueError("cannot subtract an infinite value")
    if a == INFINITE:
        return INFINITE
    return a - b


def render_value(v) -> str:
    if isinstance(v, Inconclusive):
        tail = "?" if v.tail is None else render_value(v.tail)
        return f"Inconclusive(lower={render_value(v.lower)}, tail={tail})"
    if v == INFINITE:
        return "inf"
    f = Fraction(v)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


# ---------------------------------------------------------------------------
# sequences over the naturals with closed-form tails


@dataclass(frozen=True)
class NatSeq:
    """Non-negative sequence on {0,1,2,...}: explicit prefix, then either a
    constant tail or a geometric tail a*r^d (d counted from the prefix end)."""

    prefix: tuple[Fraction, ...] = ()
    tail_kind: str = "const"
    tail_a: Fraction = Fraction(0)
    tail_r: Fraction = Fraction(0)

    def __post_init__(self):
        for x in self.prefix:
            if x < 0:
                raise ValueError("sequence entries must be non-negative")
        if self.tail_a < 0:
            raise ValueError("tail coefficient must be non-negative")
        if self.tail_kind not in ("const", "geometric"):
            raise ValueError(f"unknown tail kind {self.tail_kind!r}")
        if self.tail_kind == "geometric" and not 0 <= self.tail_r < 1:
            raise ValueError("geometric ratio must satisfy 0 <= r < 1")

    @classmethod
    def constant(cls, c) -> "NatSeq":
        return cls((), "const", Fraction(c), Fraction(0))

    @classmethod
    def geometric(cls, a, r) -> "NatSeq":
        return cls((), "geometric", Fraction(a), Fraction(r))

    @classmethod
    def finite(cls, values) -> "NatSeq":
        return cls(tuple(Fraction(v) for v in values), "const", Fraction(0), Fraction(0))

    def value_at(self, q: int) -> Fraction:
        if q < len(self.prefix):
            return self.prefix[q]
        d = q - len(self.prefix)
        if self.tail_kind == "const":
            return self.tail_a
        return self.tail_a * self.tail_r**d

    def _tail_sum(self, d: int):
        """Sum of the tail from tail offset d on."""
        if self.tail_a == 0:
            return Fraction(0)
        if self.tail_kind == "const":
            return INFINITE
        return self.tail_a * self.tail_r**d / (1 - self.tail_r)

    def sum_from(self, q0: int):
        if q0 <= len(self.prefix):
            head = sum(self.prefix[q0:], Fraction(0))
            return value_add(head, self._tail_sum(0))
        return self._tail_sum(q0 - len(self.prefix))

    def sum_all(self):
        return self.sum_from(0)

    def sum_in(self, values) -> Fraction:
        return sum((self.value_at(q) for q in values), Fraction(0))

    def sum_not_in(self, values):
        return value_sub(self.sum_all(), self.sum_in(values))

    def scaled(self, c) -> "NatSeq":
        c = Fraction(c)
        if c < 0:
            raise ValueError("scale factor must be non-negative")
        return NatSeq(
            tuple(x * c for x in self.prefix), self.tail_kind, self.tail_a * c, self.tail_r
        )


# weights are either a tuple of Fractions (finite spins) or a NatSeq


def as_weights(spins: SpinSet, values):
    if isinstance(values, NatSeq):
        if spins.is_finite:
            raise SpinRangeError("tail-described weights need the denumerable spin set")
        return values
    out = tuple(Fraction(v) for v in values)
    if spins.is_finite:
        if len(out) != spins.size:
            raise ValueError(f"need {spins.size} weights, got {len(out)}")
    else:
        return NatSeq.finite(out)
    for x in out:
        if x < 0:
            raise ValueError("weights must be non-negative")
    return out


def weight_value(w, q: int) -> Fraction:
    if isinstance(w, NatSeq):
        return w.value_at(q)
    return w[q]


def weight_sum_all(w):
    if isinstance(w, NatSeq):
        return w.sum_all()
    return sum(w, Fraction(0))


def weight_sum_in(w, values) -> Fraction:
    return sum((weight_value(w, q) for q in values), Fraction(0))


def weight_sum_not_in(w, values):
    if isinstance(w, NatSeq):
        return w.sum_not_in(values)
    return sum((x for q, x in enumerate(w) if q not in values), Fraction(0))


def weight_scaled(w, c):
    if isinstance(w, NatSeq):
        return w.scaled(c)
    c = Fraction(c)
    return tuple(x * c for x in w)


# ---------------------------------------------------------------------------
# transition kernels


@dataclass(frozen=True)
class TransitionKernel:
    """One-step transition weights P(q, r) from a parent spin to a child spin.

    Finite spin sets use a dense matrix.  Over the denumerable spin set each
    row is a NatSeq; rows beyond the explicit list all equal `nat_default`,
    which keeps every row sum and weighted row sum in closed form.
    """

    spins: SpinSet
    matrix: tuple[tuple[Fraction, ...], ...] | None = None
    nat_rows: tuple[NatSeq, ...] = ()
    nat_default: NatSeq | None = None

    @classmethod
    def from_matrix(cls, spins: SpinSet, rows) -> "TransitionKernel":
        if not spins.is_finite:
            raise SpinRangeError("matrix kernels need a finite spin set")
        s = spins.size
        mat = tuple(tuple(Fraction(x) for x in row) for row in rows)
        if len(mat) != s or any(len(row) != s for row in mat):
            raise ValueError(f"kernel matrix must be {s}x{s}")
        for row in mat:
            for x in row:
                if x < 0:
                    raise ValueError("kernel entries must be non-negative")
        return cls(spins, matrix=mat)

    @classmethod
    def for_naturals(cls, default: NatSeq, rows=()) -> "TransitionKernel":
        """rows: leading explicit rows, as a sequence or a {row index: NatSeq} map."""
        if isinstance(rows, dict):
            filled = [default] * (max(rows) + 1 if rows else 0)
            for q, row in rows.items():
                if q < 0:
                    raise ValueError(f"row index must be non-negative, got {q}")
                filled[q] = row
            rows = filled
        return cls(SpinSet.naturals(), nat_rows=tuple(rows), nat_default=default)

    @property
    def uniform_from(self) -> int:
        """Row index beyond which all rows are identical."""
        if self.matrix is not None:
            return self.spins.size
        return len(self.nat_rows)

    def row_seq(self, q: int) -> NatSeq:
        if q < len(self.nat_rows):
            return self.nat_rows[q]
        return self.nat_default

    def entry(self, q: int, r: int) -> Fraction:
        if self.matrix is not None:
            return self.matrix[q][r]
        return self.row_seq(q).value_at(r)

    def row_sum(self, q: int):
        if self.matrix is not None:
            return sum(self.matrix[q], Fraction(0))
        return self.row_seq(q).sum_all()

    def is_stochastic(self) -> bool:
        if self.matrix is not None:
            return all(sum(row, Fraction(0)) == 1 for row in self.matrix)
        rows = list(self.nat_rows) + [self.nat_default]
        return all(r.sum_all() == 1 for r in rows)


# ---------------------------------------------------------------------------
# measure forms


class DenseTableForm:
    """Explicit atom table on the depth-n ball; missing atoms weigh zero."""

    def __init__(self, table):
        self.table = dict(table)

    kind = "table"


class ProductForm:
    """Independent per-site weights: default weight plus per-vertex overrides."""

    def __init__(self, default, overrides=None):
        self.default = default
        self.overrides = dict(overrides or {})

    kind = "product"

    def weight_at(self, v: int):
        return self.overrides.get(v, self.default)


class MarkovForm:
    """Root weights plus a one-step kernel along every parent-child edge."""

    def __init__(self, lam, kernel: TransitionKernel):
        self.lam = lam
        self.kernel = kernel

    kind = "chain"


@dataclass(frozen=True)
class _EvFn:
    """Function of a parent spin that is eventually constant: explicit values
    below `len(prefix)`, the constant `const` from there on."""

    prefix: tuple
    const: object

    def at(self, q: int):
        if q < len(self.prefix):
            return self.prefix[q]
        return self.const


def _evfn_product(fns: list[_EvFn]) -> _EvFn:
    width = max((len(f.prefix) for f in fns), default=0)
    prefix = []
    for q in range(width):
        acc = Fraction(1)
        for f in fns:
            acc = value_mul(acc, f.at(q))
        prefix.append(acc)
    const = Fraction(1)
    for f in fns:
        const = value_mul(const, f.const)
    return _EvFn(tuple(prefix), const)


class VolumeMeasure:
    """A measure on base configurations of the depth-`depth` ball.

    Instances are immutable in intent; internal dictionaries are caches only.
    """

    def __init__(self, ctx: Context, depth: int, form):
        ctx.tree.check_depth(depth)
        self.ctx = ctx
        self.depth = depth
        self.form = form
        self._rect_cache: dict = {}
        self._free_cache: dict = {}
        self._parents = None

    # -- plumbing -----------------------------------------------------------

    def parents(self):
        if self._parents is None:
            self._parents = self.ctx.tree.parents_list(self.depth)
        return self._parents

    def _ball(self) -> int:
        return self.ctx.tree.ball_size(self.depth)

    # -- atom-level access ----------------------------------------------------

    def atom_weight(self, values) -> Fraction:
        """Weight of one fully specified base configuration (a value tuple)."""
        values = tuple(values)
        if len(values) != self._ball():
            raise ValueError(f"need {self._ball()} values, got {len(values)}")
        form = self.form
        if isinstance(form, DenseTableForm):
            return form.table.get(values, Fraction(0))
        if isinstance(form, ProductForm):
            acc = Fraction(1)
            for v, q in enumerate(values):
                acc *= weight_value(form.weight_at(v), q)
            return acc
        acc = weight_value(form.lam, values[0])
        parents = self.parents()
        for child in range(1, len(values)):
            acc *= form.kernel.entry(values[parents[child]], values[child])
        return acc

    # -- cylinder values -------------------------------------------------------

    def measure_of(self, cyl: CylinderSet):
        """Exact value of a cylinder set whose constraints live in this ball."""
        if cyl.ctx != self.ctx:
            raise ContextMismatchError("cylinder built over a different context")
        if cyl.base_depth > self.depth:
            raise ValueError(
                f"cylinder base depth {cyl.base_depth} exceeds measure depth {self.depth}"
            )
        total = Fraction(0)
        for rect in cyl.disjoint_rectangles():
            key = rect.key()
            if key not in self._rect_cache:
                self._rect_cache[key] = self._rect_value(rect)
            total = value_add(total, self._rect_cache[key])
        return total

    def mass(self):
        return self.measure_of(omega(self.ctx))

    def _rect_value(self, rect: Rectangle):
        form = self.form
        if isinstance(form, DenseTableForm):
            return sum(
                (w for key, w in form.table.items() if rect.matches(key)), Fraction(0)
            )
        if isinstance(form, ProductForm):
            return self._rect_value_product(rect)
        if self.ctx.spins.is_finite:
            return self._rect_value_chain_finite(rect)
        return self._rect_value_chain_nat(rect)

    def _site_weight_sum(self, w, constraint: SiteConstraint | None):
        if constraint is None:
            return weight_sum_all(w)
        if constraint.mode == "in":
            return weight_sum_in(w, sorted(constraint.values))
        return weight_sum_not_in(w, constraint.values)

    def _rect_value_product(self, rect: Rectangle):
        form = self.form
        acc = Fraction(1)
        for v in range(self._ball()):
            acc = value_mul(acc, self._site_weight_sum(form.weight_at(v), rect.constraint_at(v)))
            if acc == 0:
                return Fraction(0)
        return acc

    # chain evaluation, finite spins: bottom-up sums over the constrained
    # skeleton, with fully free subtrees collapsed to memoized factors

    def _free_factor_finite(self, height: int):
        """Tuple over parent spins: total kernel weight of one free child
        subtree with `height` levels below the parent."""
        kernel = self.form.kernel
        s = self.ctx.spins.size
        if height == 0:
            return (Fraction(1),) * s
        if height in self._free_cache:
            return self._free_cache[height]
        if kernel.is_stochastic():
            out = (Fraction(1),) * s
        else:
            below = self._free_factor_finite(height - 1)
            k = self.ctx.tree.order
            out = tuple(
                sum(
                    (kernel.matrix[q][r] * below[r] ** k for r in range(s)),
                    Fraction(0),
                )
                for q in range(s)
            )
        self._free_cache[height] = out
        return out

    def _rect_value_chain_finite(self, rect: Rectangle):
        form = self.form
        tree = self.ctx.tree
        spins = self.ctx.spins
        s = spins.size
        n = self.depth
        mat = form.kernel.matrix
        anc = {
            site: {lvl: tree.ancestor_at_level(site, lvl) for lvl in range(tree.level(site) + 1)}
            for site in rect.sites()
        }

        def child_factor(c, lvl, sites_here):
            if not sites_here and rect.constraint_at(c) is None:
                return self._free_factor_finite(n - lvl + 1)
            return sub(c, lvl, sites_here)

        def sub(v, lvl, sites_here):
            allowed = list(c_allowed_values(rect.constraint_at(v), spins))
            kids = tree.children(v) if lvl < n else ()
            fns = [
                child_factor(
                    c,
                    lvl + 1,
                    [t for t in sites_here if t != v and anc[t].get(lvl + 1) == c],
                )
                for c in kids
            ]
            out = []
            for q in range(s):
                row = mat[q]
                tot = Fraction(0)
                for r in allowed:
                    w = row[r]
                    if w == 0:
                        continue
                    for f in fns:
                        w *= f[r]
                    tot += w
                out.append(tot)
            return tuple(out)

        sites = [t for t in rect.sites() if t != 0]
        kids = tree.children(0) if n > 0 else ()
        fns = [
            child_factor(c, 1, [t for t in sites if anc[t].get(1) == c]) for c in kids
        ]
        allowed0 = list(c_allowed_values(rect.constraint_at(0), spins))
        total = Fraction(0)
        for q in allowed0:
            w = weight_value(form.lam, q)
            if w == 0:
                continue
            for f in fns:
                w *= f[q]
            total += w
        return total

    # chain evaluation over the denumerable spin set: the same bottom-up
    # sums, with functions of the parent spin kept in eventually-constant
    # form so that cofinite site constraints reduce to closed-form tails

    def _row_weighted_sum(self, row: NatSeq, constraint: SiteConstraint | None, g: _EvFn):
        if constraint is not None and constraint.mode == "in":
            return sum(
                (value_mul(row.value_at(r), g.at(r)) for r in sorted(constraint.values)),
                Fraction(0),
            )
        excluded = frozenset() if constraint is None else constraint.values
        start = max(len(g.prefix), max(excluded) + 1 if excluded else 0)
        head = Fraction(0)
        for r in range(start):
            if r not in excluded:
                head = value_add(head, value_mul(row.value_at(r), g.at(r)))
        return value_add(head, value_mul(g.const, row.sum_from(start)))

    def _free_factor_nat(self, height: int) -> _EvFn:
        kernel = self.form.kernel
        if height == 0:
            return _EvFn((), Fraction(1))
        if height in self._free_cache:
            return self._free_cache[height]
        if kernel.is_stochastic():
            out = _EvFn((), Fraction(1))
        else:
            below = self._free_factor_nat(height - 1)
            k = self.ctx.tree.order
            powered = _EvFn(
                tuple(value_pow(x, k) for x in below.prefix), value_pow(below.const, k)
            )
            width = kernel.uniform_from
            prefix = tuple(
                self._row_weighted_sum(kernel.row_seq(q), None, powered) for q in range(width)
            )
            const = self._row_weighted_sum(kernel.row_seq(width), None, powered)
            out = _EvFn(prefix, const)
        self._free_cache[height] = out
        return out

    def _rect_value_chain_nat(self, rect: Rectangle):
        form = self.form
        tree = self.ctx.tree
        kernel = form.kernel
        n = self.depth
        anc = {
            site: {lvl: tree.ancestor_at_level(site, lvl) for lvl in range(tree.level(site) + 1)}
            for site in rect.sites()
        }

        def child_factor(c, lvl, sites_here) -> _EvFn:
            if not sites_here and rect.constraint_at(c) is None:
                return self._free_factor_nat(n - lvl + 1)
            return sub(c, lvl, sites_here)

        def sub(v, lvl, sites_here) -> _EvFn:
            constraint = rect.constraint_at(v)
            kids = tree.children(v) if lvl < n else ()
            fns = [
                child_factor(
                    c,
                    lvl + 1,
                    [t for t in sites_here if t != v and anc[t].get(lvl + 1) == c],
                )
                for c in kids
            ]
            g = _evfn_product(fns)
            width = kernel.uniform_from
            prefix = tuple(
                self._row_weighted_sum(kernel.row_seq(q), constraint, g) for q in range(width)
            )
            const = self._row_weighted_sum(kernel.row_seq(width), constraint, g)
            return _EvFn(prefix, const)

        sites = [t for t in rect.sites() if t != 0]
        kids = tree.children(0) if n > 0 else ()
        fns = [
            child_factor(c, 1, [t for t in sites if anc[t].get(1) == c]) for c in kids
        ]
        g = _evfn_product(fns)
        lam: NatSeq = form.lam
        constraint = rect.constraint_at(0)
        if constraint is not None and constraint.mode == "in":
            return sum(
                (value_mul(lam.value_at(q), g.at(q)) for q in sorted(constraint.values)),
                Fraction(0),
            )
        excluded = frozenset() if constraint is None else constraint.values
        start = max(len(g.prefix), max(excluded) + 1 if excluded else 0)
        head = Fraction(0)
        for q in range(start):
            if q not in excluded:
                head = value_add(head, value_mul(lam.value_at(q), g.at(q)))
        return value_add(head, value_mul(g.const, lam.sum_from(start)))

    # -- whole-table operations -------------------------------------------------

    def dense_table(self, budget: int = DEFAULT_ATOM_BUDGET) -> dict:
        """Materialize {value tuple: weight}, zero atoms omitted (finite spins)."""
        if not self.ctx.spins.is_finite:
            raise SpinRangeError("cannot materialize a table over the denumerable spin set")
        if isinstance(self.form, DenseTableForm):
            return dict(self.form.table)
        size = self._ball()
        s = self.ctx.spins.size
        if s**size > budget:
            raise BudgetError(f"dense table of {s}**{size} atoms exceeds budget {budget}")
        return _enumerate_marginal(self, self.depth)

    def scaled(self, c) -> "VolumeMeasure":
        c = Fraction(c)
        if c < 0:
            raise ValueError("scale factor must be non-negative")
        form = self.form
        if isinstance(form, DenseTableForm):
            new = DenseTableForm({k: v * c for k, v in form.table.items()})
        elif isinstance(form, ProductForm):
            over = dict(form.overrides)
            over[0] = weight_scaled(form.weight_at(0), c)
            new = ProductForm(form.default, over)
        else:
            new = MarkovForm(weight_scaled(form.lam, c), form.kernel)
        return VolumeMeasure(self.ctx, self.depth, new)

    def project(self, i: int, method: str = "auto", budget: int = DEFAULT_ATOM_BUDGET) -> "VolumeMeasure":
        """Marginal onto the depth-i ball.

        method "auto" uses the closed form when one exists and falls back to
        enumeration; "enumerate" forces the enumeration route (finite spins);
        "closed" insists on the closed form and raises otherwise.
        """
        if not 0 <= i <= self.depth:
            raise ValueError(f"projection depth {i} outside 0..{self.depth}")
        if i == self.depth:
            return self
        form = self.form
        if method == "enumerate":
            return VolumeMeasure(self.ctx, i, DenseTableForm(_enumerate_marginal(self, i, budget)))
        if isinstance(form, DenseTableForm):
            cut = self.ctx.tree.ball_size(i)
            out: dict = {}
            for key, w in form.table.items():
                head = key[:cut]
                out[head] = out.get(head, Fraction(0)) + w
            return VolumeMeasure(self.ctx, i, DenseTableForm(out))
        if isinstance(form, ProductForm):
            cut = self.ctx.tree.ball_size(i)
            scalar = Fraction(1)
            for v in range(cut, self._ball()):
                scalar = value_mul(scalar, weight_sum_all(form.weight_at(v)))
            if scalar == INFINITE:
                raise MassError("marginal diverges: dropped site weights are not summable")
            over = {v: w for v, w in form.overrides.items() if v < cut}
            if scalar != 1:
                over[0] = weight_scaled(form.weight_at(0), scalar)
            return VolumeMeasure(self.ctx, i, ProductForm(form.default, over))
        if form.kernel.is_stochastic():
            return VolumeMeasure(self.ctx, i, MarkovForm(form.lam, form.kernel))
        if method == "closed":
            raise ValueError("no closed-form marginal for a non-stochastic kernel")
        if not self.ctx.spins.is_finite:
            raise MassError(
                "no closed-form marginal for a non-stochastic kernel over the denumerable spin set"
            )
        return VolumeMeasure(self.ctx, i, DenseTableForm(_enumerate_marginal(self, i, budget)))


# ---------------------------------------------------------------------------
# enumeration marginals (the brute-force route)


def _enumerate_marginal(mu: VolumeMeasure, i: int, budget: int = DEFAULT_ATOM_BUDGET) -> dict:
    """Marginal of mu onto the depth-i ball by summing over every base atom.

    Integer-scaled arithmetic: every atom weight is a product of the same
    number of table entries, so with all entries scaled by a common
    denominator the leaf sums are exact integer arithmetic.
    """
    ctx = mu.ctx
    if not ctx.spins.is_finite:
        raise SpinRangeError("enumeration requires a finite spin set")
    s = ctx.spins.size
    full = ctx.tree.ball_size(mu.depth)
    t = ctx.tree.ball_size(i)
    if s**full > budget:
        raise BudgetError(f"enumeration of {s}**{full} atoms exceeds budget {budget}")
    form = mu.form
    if isinstance(form, DenseTableForm):
        out: dict = {}
        for key, w in form.table.items():
            head = key[:t]
            out[head] = out.get(head, Fraction(0)) + w
        return {k: v for k, v in out.items() if v != 0}

    if isinstance(form, ProductForm):
        denoms = set()
        for v in range(full):
            w = form.weight_at(v)
            denoms.update(weight_value(w, q).denominator for q in range(s))
        scale_d = math.lcm(*denoms)
        wI = [
            [int(weight_value(form.weight_at(v), q) * scale_d) for q in range(s)]
            for v in range(full)
        ]
        buckets = [0] * (s**t)

        def rec_prod(v, acc, idx):
            row = wI[v]
            if v == full - 1:
                if v < t:
                    base = idx * s
                    for val in range(s):
                        buckets[base + val] += acc * row[val]
                else:
                    for val in range(s):
                        buckets[idx] += acc * row[val]
                return
            if v < t:
                for val in range(s):
                    rec_prod(v + 1, acc * row[val], idx * s + val)
            else:
                for val in range(s):
                    rec_prod(v + 1, acc * row[val], idx)

        if full == 1:
            for val in range(s):
                buckets[val] += wI[0][val]
        else:
            for val in range(s):
                rec_prod(1, wI[0][val], val)
        den = scale_d**full
        return {
            _decode(idx, s, t): Fraction(b, den) for idx, b in enumerate(buckets) if b
        }

    kernel = form.kernel
    denoms = {weight_value(form.lam, q).denominator for q in range(s)}
    for q in range(s):
        for r in range(s):
            denoms.add(kernel.matrix[q][r].denominator)
    scale_d = math.lcm(*denoms)
    lamI = [int(weight_value(form.lam, q) * scale_d) for q in range(s)]
    PI = [[int(kernel.matrix[q][r] * scale_d) for r in range(s)] for q in range(s)]
    parents = mu.parents()
    buckets = [0] * (s**t)
    cur = [0] * full

    def rec(v, acc, idx):
        row = PI[cur[parents[v]]]
        if v == full - 1:
            if v < t:
                base = idx * s
                for val in range(s):
                    buckets[base + val] += acc * row[val]
            else:
                for val in range(s):
                    buckets[idx] += acc * row[val]
            return
        if v < t:
            for val in range(s):
                cur[v] = val
                rec(v + 1, acc * row[val], idx * s + val)
        else:
            for val in range(s):
                cur[v] = val
                rec(v + 1, acc * row[val], idx)

    if full == 1:
        for val in range(s):
            buckets[val] += lamI[val]
    else:
        for val in range(s):
            cur[0] = val
            rec(1, lamI[val], val)
    den = scale_d**full
    return {_decode(idx, s, t): Fraction(b, den) for idx, b in enumerate(buckets) if b}


def _decode(idx: int, s: int, t: int) -> tuple[int, ...]:
    digits = [0] * t
    for pos in range(t - 1, -1, -1):
        idx, digits[pos] = divmod(idx, s)
    return tuple(digits)


# ---------------------------------------------------------------------------
# families and consistency


@dataclass(frozen=True)
class Violation:
    """Witness of a failed marginal identity between depths i < j."""

    i: int
    j: int
    witness: CylinderSet
    lhs: object
    rhs: object

    def render(self) -> str:
        return (
            f"project(depth {self.j} -> {self.i}) on {self.witness.render()}: "
            f"{render_value(self.lhs)} != {render_value(self.rhs)}"
        )


@dataclass(frozen=True)
class ConsistencyReport:
    requested_depth: int
    verified_depth: int
    violation: Violation | None
    method: str
    budget_limited: bool = False
    exhaustive: bool = True

    @property
    def ok(self) -> bool:
        return self.violation is None


class MeasureFamily:
    """Depth-indexed volume measures, one per ball, produced deterministically."""

    def __init__(self, ctx: Context, generator, kind: str, label: str = "",
                 declared_consistent_to: int | None = None,
                 max_defined_depth: int | None = None):
        if kind not in ("probability", "finite", "sigma-finite"):
            raise ValueError(f"unknown family kind {kind!r}")
        self.ctx = ctx
        self.kind = kind
        self.label = label
        self.declared_consistent_to = declared_consistent_to
        self.max_defined_depth = max_defined_depth
        self._generator = generator
        self._cache: dict[int, VolumeMeasure] = {}

    def measure(self, n: int) -> VolumeMeasure:
        self.ctx.tree.check_depth(n)
        if self.max_defined_depth is not None and n > self.max_defined_depth:
            raise FamilyDepthError(
                f"family {self.label or '<anonymous>'} is defined up to depth "
                f"{self.max_defined_depth}, requested {n}"
            )
        if n not in self._cache:
            mu = self._generator(n)
            if mu.depth != n or mu.ctx != self.ctx:
                raise ValueError("family generator returned a mismatched measure")
            self._cache[n] = mu
        return self._cache[n]

    def mass(self, n: int):
        return self.measure(n).mass()


def markov_family(ctx: Context, lam, kernel, kind: str | None = None,
                  label: str = "") -> MeasureFamily:
    """Family of chain measures: root weights lam, one-step kernel along edges."""
    lam = as_weights(ctx.spins, lam)
    if not isinstance(kernel, TransitionKernel):
        kernel = TransitionKernel.from_matrix(ctx.spins, kernel)
    if kernel.spins != ctx.spins:
        raise ContextMismatchError("kernel spin set differs from the context")
    if kind is None:
        total = weight_sum_all(lam)
        if total == 1 and kernel.is_stochastic():
            kind = "probability"
        elif total != INFINITE:
            kind = "finite"
        else:
            kind = "sigma-finite"
    return MeasureFamily(
        ctx,
        lambda n: VolumeMeasure(ctx, n, MarkovForm(lam, kernel)),
        kind,
        label=label or "chain",
    )


def product_family(ctx: Context, weight, overrides=None, kind: str | None = None,
                   label: str = "") -> MeasureFamily:
    """Family of product measures with a default site weight and overrides."""
    weight = as_weights(ctx.spins, weight)
    overrides = {v: as_weights(ctx.spins, w) for v, w in (overrides or {}).items()}
    form_of = lambda n: ProductForm(weight, overrides)  # noqa: E731
    if kind is None:
        sums = [weight_sum_all(weight)] + [weight_sum_all(w) for w in overrides.values()]
        root_sum = weight_sum_all(overrides.get(0, weight))
        if all(x == 1 for x in sums):
            kind = "probability"
        elif root_sum != INFINITE:
            kind = "finite"
        else:
            kind = "sigma-finite"
    return MeasureFamily(
        ctx, lambda n: VolumeMeasure(ctx, n, form_of(n)), kind, label=label or "product"
    )


def table_family(ctx: Context, depth: int, table, label: str = "") -> MeasureFamily:
    """Family determined by one dense table at `depth`; lower depths are its
    marginals, so the family is consistent by construction.  Depths beyond
    `depth` are not defined."""
    if not ctx.spins.is_finite:
        raise SpinRangeError("dense tables need a finite spin set")
    size = ctx.tree.ball_size(depth)
    clean: dict = {}
    for key, w in dict(table).items():
        key = tuple(key)
        if len(key) != size:
            raise ValueError(f"atom {key} does not cover the depth-{depth} ball")
        for q in key:
            ctx.spins.check(q)
        w = Fraction(w)
        if w < 0:
            raise ValueError("atom weights must be non-negative")
        if w:
            clean[key] = clean.get(key, Fraction(0)) + w
    tables = {depth: clean}
    for i in range(depth - 1, -1, -1):
        cut = ctx.tree.ball_size(i)
        out: dict = {}
        for key, w in tables[i + 1].items():
            head = key[:cut]
            out[head] = out.get(head, Fraction(0)) + w
        tables[i] = out
    mass = sum(clean.values(), Fraction(0))
    kind = "probability" if mass == 1 else "finite"
    return MeasureFamily(
        ctx,
        lambda n: VolumeMeasure(ctx, n, DenseTableForm(tables[n])),
        kind,
        label=label or "table",
        declared_consistent_to=depth,
        max_defined_depth=depth,
    )


def random_consistent_family(ctx: Context, seed: int, depth: int,
                             budget: int = DEFAULT_ATOM_BUDGET) -> MeasureFamily:
    """Seeded random dense family at `depth`, consistent by construction."""
    if not ctx.spins.is_finite:
        raise SpinRangeError("random dense families need a finite spin set")
    s = ctx.spins.size
    size = ctx.tree.ball_size(depth)
    if s**size > budget:
        raise BudgetError(f"random family of {s}**{size} atoms exceeds budget {budget}")
    rng = random.Random(seed)
    table = {
        key: Fraction(rng.randint(1, 96), 96)
        for key in itertools.product(range(s), repeat=size)
    }
    return table_family(ctx, depth, table, label=f"random(seed={seed})")


def scale(fam: MeasureFamily, c, kind: str | None = None) -> MeasureFamily:
    """Family with every depth scaled by the same non-negative rational."""
    c = Fraction(c)
    if c < 0:
        raise ValueError("scale factor must be non-negative")
    if kind is None:
        kind = fam.kind if c == 1 else ("sigma-finite" if fam.kind == "sigma-finite" else "finite")
    return MeasureFamily(
        fam.ctx,
        lambda n: fam.measure(n).scaled(c),
        kind,
        label=f"{fam.label}*{c}",
        declared_consistent_to=fam.declared_consistent_to,
        max_defined_depth=fam.max_defined_depth,
    )


def marginal_table(fam: MeasureFamily, sites, budget: int = DEFAULT_ATOM_BUDGET) -> dict:
    """Joint weights on an arbitrary finite vertex set, via the covering ball."""
    sites = tuple(sorted(set(sites)))
    tree = fam.ctx.tree
    n = max((tree.level(v) for v in sites), default=0)
    dense = fam.measure(n).dense_table(budget)
    out: dict = {}
    for key, w in dense.items():
        head = tuple(key[v] for v in sites)
        out[head] = out.get(head, Fraction(0)) + w
    return {k: v for k, v in out.items() if v != 0}


def check_consistency(fam: MeasureFamily, depth: int,
                      budget: int = DEFAULT_ATOM_BUDGET) -> ConsistencyReport:
    """Verify that deeper measures marginalize onto shallower ones.

    Finite spin sets are checked exhaustively by enumeration: for each j <=
    depth the depth-j measure is summed atom-by-atom onto every shallower
    ball and compared against the family's own measure there.  Over the
    denumerable spin set, stochastic closed forms are checked exactly via
    row sums; otherwise a finite probe battery is compared (reported as
    non-exhaustive).
    """
    requested = depth
    if fam.max_defined_depth is not None:
        depth = min(depth, fam.max_defined_depth)
    if fam.ctx.spins.is_finite:
        return _check_consistency_finite(fam, requested, depth, budget)
    return _check_consistency_nat(fam, requested, depth)


def _check_consistency_finite(fam, requested, depth, budget) -> ConsistencyReport:
    ctx = fam.ctx
    s = ctx.spins.size
    achieved = 0
    for j in range(1, depth + 1):
        if s ** ctx.tree.ball_size(j) > budget:
            return ConsistencyReport(
                requested, achieved, None, "enumeration", budget_limited=True
            )
        projected = _enumerate_marginal(fam.measure(j), j - 1, budget)
        for i in range(j - 1, -1, -1):
            reference = fam.measure(i).dense_table(budget)
            keys = sorted(set(projected) | set(reference))
            for key in keys:
                lhs = projected.get(key, Fraction(0))
                rhs = reference.get(key, Fraction(0))
                if lhs != rhs:
                    witness = from_constraints(
                        ctx, {v: constraint_in([key[v]]) for v in range(len(key))}
                    )
                    return ConsistencyReport(
                        requested, achieved, Violation(i, j, witness, lhs, rhs),
                        "enumeration",
                    )
            if i > 0:
                cut = ctx.tree.ball_size(i - 1)
                regrouped: dict = {}
                for key, w in projected.items():
                    head = key[:cut]
                    regrouped[head] = regrouped.get(head, Fraction(0)) + w
                projected = {k: v for k, v in regrouped.items() if v != 0}
        achieved = j
    return ConsistencyReport(requested, achieved, None, "enumeration")


def _probe_bases(ctx: Context, i: int, width: int = 6) -> list[CylinderSet]:
    """Small battery of depth-i bases with spins below `width`."""
    probes = []
    for q in range(width):
        probes.append(from_constraints(ctx, {0: constraint_in([q])}).lift_to_base(i))
    if i >= 1:
        first_child = ctx.tree.children(0)[0]
        for q in range(3):
            for r in range(3):
                probes.append(
                    from_constraints(
                        ctx, {0: constraint_in([q]), first_child: constraint_in([r])}
                    ).lift_to_base(i)
                )
    return probes


def _check_consistency_nat(fam, requested, depth) -> ConsistencyReport:
    mu0 = fam.measure(0)
    form = mu0.form
    if isinstance(form, MarkovForm) and form.kernel.is_stochastic():
        return ConsistencyReport(requested, depth, None, "closed-row")
    if isinstance(form, ProductForm):
        sums_ok = weight_sum_all(form.default) == 1 and all(
            weight_sum_all(w) == 1 for v, w in form.overrides.items() if v != 0
        )
        if sums_ok:
            return ConsistencyReport(requested, depth, None, "closed-row")
    for j in range(1, depth + 1):
        mu_j = fam.measure(j)
        for i in range(j):
            mu_i = fam.measure(i)
            for base in _probe_bases(fam.ctx, i):
                lhs = mu_j.measure_of(base)
                rhs = mu_i.measure_of(base)
                if lhs != rhs:
                    return ConsistencyReport(
                        requested, j - 1, Violation(i, j, base, lhs, rhs), "probes",
                        exhaustive=False,
                    )
    return ConsistencyReport(requested, depth, None, "probes", exhaustive=False)
