"""Conditional restrictions, countable covers, and sigma-finite evaluation.

A family whose total mass is infinite still determines exact values on
cylinder sets, and a countable disjoint cover of the configuration space by
finite-mass cylinders turns those values into convergent (or certifiably
divergent) sums.  This module provides the restriction-to-an-event view,
cover descriptions with structural support bounds, the summation engine
with its verdict vocabulary, and the checks that make a cover trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .cylinder import (
    IN,
    Context,
    CylinderSet,
    constraint_in,
    from_constraints,
    omega,
    single_site,
)
from .errors import (
    ContextMismatchError,
    CoverError,
    MassError,
    SpinRangeError,
)
from .extension import ExtensionHandle
from .measure import (
    DEFAULT_ATOM_BUDGET,
    INFINITE,
    MarkovForm,
    MeasureFamily,
    NatSeq,
    markov_family,
    render_value,
    scale,
    table_family,
    value_add,
    value_mul,
    value_sub,
)

DEFAULT_TOLERANCE = Fraction(1, 2**40)
DEFAULT_TERM_BUDGET = 10**6
DEFAULT_DIVERGENCE_BOUND = Fraction(1000)
PARTIAL_TRACE_LIMIT = 16


# ---------------------------------------------------------------------------
# restriction to a finite-mass event


class ConditionalExtension:
    """The set function E -> mu(E intersect A) for a fixed finite-mass A.

    Restriction keeps the family's consistency, so the value may be computed
    at any depth containing both bases; `value(..., verify=True)` recomputes
    one level deeper and lets the handle's write-once cache certify the
    agreement.
    """

    def __init__(self, handle: ExtensionHandle, event: CylinderSet):
        if event.ctx != handle.ctx:
            raise ContextMismatchError("conditioning event built over a different context")
        total = handle.mu(event)
        if total == INFINITE:
            raise MassError(
                f"conditioning event has infinite value: {event.render()}"
            )
        self.handle = handle
        self.event = event
        self._mass = total

    def mass(self) -> Fraction:
        return self._mass

    def value(self, other: CylinderSet, verify: bool = False):
        joint = other.intersect(self.event)
        depth = max(other.base_depth, self.event.base_depth, joint.base_depth)
        out = self.handle.mu(joint, at_depth=depth)
        if verify:
            self.handle.mu(joint, at_depth=depth + 1)
        return out

    def as_family(self, depth: int | None = None,
                  budget: int = DEFAULT_ATOM_BUDGET) -> MeasureFamily:
        """The restriction as a family in its own right.

        Finite spin sets materialize a table at `depth` (default: the
        conditioning event's base depth).  Over the denumerable spin set the
        restriction stays in closed form when the family is a chain and the
        event constrains only the root.
        """
        ctx = self.handle.ctx
        if ctx.spins.is_finite:
            d = self.event.base_depth if depth is None else depth
            if d < self.event.base_depth:
                raise ValueError("materialization depth below the event's base depth")
            dense = self.handle.family.measure(d).dense_table(budget)
            kept = {key: w for key, w in dense.items() if self.event.contains(key)}
            return table_family(ctx, d, kept, label=f"restricted({self.event.render()})")
        form = self.handle.family.measure(0).form
        if not isinstance(form, MarkovForm):
            raise SpinRangeError(
                "closed-form restriction needs a chain family over the denumerable spins"
            )
        if len(self.event.rectangles) != 1 or self.event.rectangles[0].sites() != (0,):
            raise SpinRangeError(
                "closed-form restriction needs a single root-site constraint"
            )
        constraint = self.event.rectangles[0].constraint_at(0)
        lam: NatSeq = form.lam
        if constraint.mode == IN:
            width = max(constraint.values) + 1
            prefix = tuple(
                lam.value_at(q) if q in constraint.values else Fraction(0)
                for q in range(width)
            )
            lam2 = NatSeq(prefix, "const", Fraction(0), Fraction(0))
        else:
            width = max(
                len(lam.prefix),
                max(constraint.values) + 1 if constraint.values else 0,
            )
            prefix = tuple(
                Fraction(0) if q in constraint.values else lam.value_at(q)
                for q in range(width)
            )
            shift = width - len(lam.prefix)
            tail_a = lam.tail_a
            if lam.tail_kind == "geometric":
                tail_a = tail_a * lam.tail_r**shift
            lam2 = NatSeq(prefix, lam.tail_kind, tail_a, lam.tail_r)
        kind = "finite" if lam2.sum_all() != INFINITE else "sigma-finite"
        return markov_family(
            ctx, lam2, form.kernel, kind=kind,
            label=f"restricted({self.event.render()})",
        )


def conditional_family(handle: ExtensionHandle, event: CylinderSet) -> ConditionalExtension:
    return ConditionalExtension(handle, event)


@dataclass(frozen=True)
class RestrictionRecord:
    event: CylinderSet
    values: tuple
    ok: bool


@dataclass(frozen=True)
class RestrictionReport:
    records: tuple[RestrictionRecord, ...]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.records)


def restriction_identity_check(cond: ConditionalExtension, events,
                               extra_depths: int = 2) -> RestrictionReport:
    """Recompute each restricted value at several depths; all must agree."""
    fam = cond.handle.family
    records = []
    for event in events:
        joint = event.intersect(cond.event)
        start = max(event.base_depth, cond.event.base_depth, joint.base_depth)
        values = tuple(
            fam.measure(d).measure_of(joint)
            for d in range(start, start + extra_depths + 1)
        )
        records.append(RestrictionRecord(event, values, len(set(values)) == 1))
    return RestrictionReport(tuple(records))


# ---------------------------------------------------------------------------
# covers


@dataclass(frozen=True)
class CoverReport:
    covers_all: bool
    disjoint: bool
    method: str  # "semantic" | "structural"
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.covers_all and self.disjoint


class Cover:
    """Countable disjoint cover of the configuration space by cylinder sets.

    Finite covers carry their parts outright and are verified semantically.
    Slice covers partition the denumerable spin set at one site into
    consecutive blocks; they have denumerably many parts, are a partition by
    construction, and expose a structural support bound: an event whose
    rectangles all pin the slice site to finite value sets meets only
    finitely many parts, and the bound says how many.
    """

    def __init__(self, ctx: Context, kind: str, parts=(), site: int = 0,
                 block: int = 1, label: str = ""):
        self.ctx = ctx
        self.kind = kind
        self.label = label
        self._parts = tuple(parts)
        self.site = site
        self.block = block

    @property
    def count(self) -> int | None:
        """Number of parts; None means denumerably many."""
        return len(self._parts) if self.kind == "finite" else None

    def part(self, i: int) -> CylinderSet:
        if i < 0:
            raise IndexError("part index must be non-negative")
        if self.kind == "finite":
            return self._parts[i]
        lo = i * self.block
        return from_constraints(
            self.ctx, {self.site: constraint_in(range(lo, lo + self.block))}
        )

    def support_bound(self, event: CylinderSet) -> int | None:
        """Largest part index the event can meet, -1 for the empty event,
        None when no finite bound is available structurally."""
        if event.is_empty():
            return -1
        if self.kind == "finite":
            return len(self._parts) - 1
        top = -1
        for rect in event.rectangles:
            constraint = rect.constraint_at(self.site)
            if constraint is None or constraint.mode != IN:
                return None
            top = max(top, max(constraint.values))
        return top // self.block

    def verify(self) -> CoverReport:
        if self.kind == "slice":
            return CoverReport(
                True, True, "structural",
                f"blocks of {self.block} at site {self.site} partition the spin set",
            )
        whole = None
        for p in self._parts:
            whole = p if whole is None else whole.union(p)
        covers = whole is not None and whole.is_omega() or (
            whole is not None and whole.semantic_equal(omega(self.ctx))
        )
        disjoint = True
        detail = ""
        for a in range(len(self._parts)):
            for b in range(a + 1, len(self._parts)):
                if not self._parts[a].intersect(self._parts[b]).is_empty():
                    disjoint = False
                    detail = f"parts {a} and {b} overlap"
                    break
            if not disjoint:
                break
        if not covers and not detail:
            detail = "union of parts misses part of the space"
        return CoverReport(covers, disjoint, "semantic", detail)


def finite_cover(parts, label: str = "") -> Cover:
    parts = tuple(parts)
    if not parts:
        raise CoverError("a cover needs at least one part")
    ctx = parts[0].ctx
    for p in parts:
        if p.ctx != ctx:
            raise ContextMismatchError("cover parts built over different contexts")
    return Cover(ctx, "finite", parts=parts, label=label or "finite cover")


def slice_cover(ctx: Context, site: int = 0, block: int = 1, label: str = "") -> Cover:
    if ctx.spins.is_finite:
        raise SpinRangeError("slice covers partition the denumerable spin set")
    if block < 1:
        raise ValueError("block size must be at least 1")
    ctx.tree.check_vertex(site)
    return Cover(
        ctx, "slice", site=site, block=block,
        label=label or f"slices of {block} at x{site}",
    )


# ---------------------------------------------------------------------------
# sigma-finite evaluation


@dataclass(frozen=True)
class SigmaValue:
    """Outcome of a cover sum.

    exact: `total` is the value (possibly the float infinity).
    bounded: the value lies in [total, total + tail_bound].
    diverges: the value is certified greater than `bound`.
    inconclusive: the partial sum reached the term budget; `total` is a
    lower bound with no tail certificate.
    """

    kind: str
    total: object
    tail_bound: Fraction | None = None
    terms_used: int = 0
    bound: Fraction | None = None
    partials: tuple = ()

    def render(self) -> str:
        if self.kind == "exact":
            return render_value(self.total)
        if self.kind == "bounded":
            return (
                f"{render_value(self.total)} (+ tail <= "
                f"{render_value(self.tail_bound)})"
            )
        if self.kind == "diverges":
            return f"DivergesBeyond({render_value(self.bound)})"
        return f"Inconclusive(lower={render_value(self.total)}, terms={self.terms_used})"


class SigmaFiniteExtension:
    """Values of cylinder sets as sums over a disjoint cover.

    Each term mu(E intersect A_i) is exact; the verdict states how the sum
    itself terminated.  Structural support bounds make root-constrained
    events exact; otherwise the finite total mass (when there is one) bounds
    the tail, a partial sum crossing the divergence bound certifies
    divergence, and the term budget is the last resort.
    """

    def __init__(self, handle: ExtensionHandle, cover: Cover,
                 tolerance: Fraction = DEFAULT_TOLERANCE,
                 term_budget: int = DEFAULT_TERM_BUDGET,
                 bound: Fraction = DEFAULT_DIVERGENCE_BOUND,
                 cover_report: CoverReport | None = None):
        if cover.ctx != handle.ctx:
            raise ContextMismatchError("cover built over a different context")
        self.handle = handle
        self.cover = cover
        self.tolerance = Fraction(tolerance)
        self.term_budget = term_budget
        self.bound = Fraction(bound)
        self.cover_report = cover_report

    def _term(self, event: CylinderSet, i: int):
        piece = event.intersect(self.cover.part(i))
        if piece.is_empty():
            return Fraction(0)
        return self.handle.mu(piece)

    def value(self, event: CylinderSet) -> SigmaValue:
        if event.ctx != self.handle.ctx:
            raise ContextMismatchError("event built over a different context")
        top = self.cover.support_bound(event)
        partials = []
        total = Fraction(0)
        if top is not None:
            for i in range(top + 1):
                total = value_add(total, self._term(event, i))
                if len(partials) < PARTIAL_TRACE_LIMIT:
                    partials.append(total)
            return SigmaValue(
                "exact", total, terms_used=top + 1, partials=tuple(partials)
            )
        mass = self.handle.family.mass(0)
        cover_partial = Fraction(0)
        i = 0
        while i < self.term_budget:
            total = value_add(total, self._term(event, i))
            if len(partials) < PARTIAL_TRACE_LIMIT:
                partials.append(total)
            if total == INFINITE:
                return SigmaValue(
                    "exact", INFINITE, terms_used=i + 1, partials=tuple(partials)
                )
            if total > self.bound:
                return SigmaValue(
                    "diverges", total, terms_used=i + 1, bound=self.bound,
                    partials=tuple(partials),
                )
            if mass != INFINITE:
                cover_partial = value_add(
                    cover_partial, self.handle.mu(self.cover.part(i))
                )
                remaining = value_sub(mass, cover_partial)
                if remaining == 0:
                    return SigmaValue(
                        "exact", total, terms_used=i + 1, partials=tuple(partials)
                    )
                if remaining < self.tolerance:
                    return SigmaValue(
                        "bounded", total, tail_bound=remaining, terms_used=i + 1,
                        partials=tuple(partials),
                    )
            i += 1
        return SigmaValue(
            "inconclusive", total, terms_used=i, partials=tuple(partials)
        )

    def mass(self) -> SigmaValue:
        return self.value(omega(self.handle.ctx))


def sigma_extension(handle: ExtensionHandle, cover: Cover,
                    tolerance: Fraction = DEFAULT_TOLERANCE,
                    term_budget: int = DEFAULT_TERM_BUDGET,
                    bound: Fraction = DEFAULT_DIVERGENCE_BOUND,
                    verify_cover: bool = True) -> SigmaFiniteExtension:
    report = None
    if verify_cover:
        report = cover.verify()
        if not report.ok:
            raise CoverError(f"cover {cover.label!r} rejected: {report.detail}")
    return SigmaFiniteExtension(handle, cover, tolerance, term_budget, bound, report)


# ---------------------------------------------------------------------------
# cover-level checks


@dataclass(frozen=True)
class IndependenceRecord:
    event: CylinderSet
    first: SigmaValue
    second: SigmaValue
    agree: bool | None


@dataclass(frozen=True)
class IndependenceReport:
    records: tuple[IndependenceRecord, ...]

    @property
    def ok(self) -> bool:
        return all(r.agree is not False for r in self.records)


def _values_agree(a: SigmaValue, b: SigmaValue) -> bool | None:
    if a.kind == "inconclusive" or b.kind == "inconclusive":
        return None
    if a.kind == "diverges" or b.kind == "diverges":
        other = b if a.kind == "diverges" else a
        if other.kind == "diverges":
            return True
        return other.kind == "exact" and other.total == INFINITE
    if a.kind == "exact" and b.kind == "exact":
        return a.total == b.total
    lo_a = a.total
    hi_a = a.total if a.kind == "exact" else a.total + a.tail_bound
    lo_b = b.total
    hi_b = b.total if b.kind == "exact" else b.total + b.tail_bound
    if lo_a == INFINITE or lo_b == INFINITE:
        return lo_a == lo_b
    return not (hi_a < lo_b or hi_b < lo_a)


def cover_independence(handle: ExtensionHandle, first: Cover, second: Cover,
                       events, **kwargs) -> IndependenceReport:
    """Cover sums over two covers must agree wherever both are determinate."""
    ext_a = sigma_extension(handle, first, **kwargs)
    ext_b = sigma_extension(handle, second, **kwargs)
    records = []
    for event in events:
        va = ext_a.value(event)
        vb = ext_b.value(event)
        records.append(IndependenceRecord(event, va, vb, _values_agree(va, vb)))
    return IndependenceReport(tuple(records))


@dataclass(frozen=True)
class CoverSumRecord:
    event: CylinderSet
    direct: object
    summed: SigmaValue
    verdict: str  # "PASS" | "FAIL" | "INCONCLUSIVE"


@dataclass(frozen=True)
class CoverSumReport:
    records: tuple[CoverSumRecord, ...]

    @property
    def verdict(self) -> str:
        if any(r.verdict == "FAIL" for r in self.records):
            return "FAIL"
        if any(r.verdict == "INCONCLUSIVE" for r in self.records):
            return "INCONCLUSIVE"
        return "PASS"


def _cover_sum_verdict(direct, summed: SigmaValue) -> str:
    if summed.kind == "exact":
        return "PASS" if direct == summed.total else "FAIL"
    if summed.kind == "bounded":
        if direct == INFINITE:
            return "FAIL"
        return (
            "PASS"
            if summed.total <= direct <= summed.total + summed.tail_bound
            else "FAIL"
        )
    if summed.kind == "diverges":
        if direct == INFINITE:
            return "PASS"
        return "FAIL" if direct < summed.total else "INCONCLUSIVE"
    if direct != INFINITE and summed.total > direct:
        return "FAIL"
    return "INCONCLUSIVE"


def cover_sum_check(handle: ExtensionHandle, cover: Cover, events,
                    **kwargs) -> CoverSumReport:
    """For each event, the cover sum must reproduce the direct value.

    Exact sums must match exactly; bounded sums must bracket the direct
    value; a certified-divergent sum is only compatible with an infinite
    direct value.
    """
    ext = sigma_extension(handle, cover, **kwargs)
    records = []
    for event in events:
        direct = handle.mu(event)
        summed = ext.value(event)
        records.append(
            CoverSumRecord(event, direct, summed, _cover_sum_verdict(direct, summed))
        )
    return CoverSumReport(tuple(records))


def fixed_level_cover(handle: ExtensionHandle, cover: Cover,
                      level: int | None = None, probes=None,
                      probe_count: int = 8, **kwargs) -> SigmaFiniteExtension:
    """Accept a cover only if it is a disjoint partition by finite-mass
    cylinder sets based within one fixed level, with cover sums that
    reproduce direct values on probe events; return the summation engine.
    """
    report = cover.verify()
    if not report.ok:
        raise CoverError(f"cover {cover.label!r} rejected: {report.detail}")
    if level is None:
        if cover.kind == "finite":
            level = max(p.base_depth for p in cover._parts)
        else:
            level = handle.ctx.tree.level(cover.site)
    if cover.kind == "finite":
        for idx, p in enumerate(cover._parts):
            if p.base_depth > level:
                raise CoverError(
                    f"part {idx} is based at depth {p.base_depth}, beyond level {level}"
                )
    elif handle.ctx.tree.level(cover.site) > level:
        raise CoverError(
            f"slice site x{cover.site} lies beyond level {level}"
        )
    check_count = cover.count if cover.count is not None else probe_count
    for i in range(check_count):
        part_mass = handle.mu(cover.part(i))
        if part_mass == INFINITE:
            raise CoverError(f"part {i} has infinite value")
    if probes is None:
        width = probe_count
        if handle.ctx.spins.is_finite:
            width = min(probe_count, handle.ctx.spins.size)
        probes = [single_site(handle.ctx, 0, q) for q in range(width)]
    sums = cover_sum_check(handle, cover, probes, **kwargs)
    if sums.verdict == "FAIL":
        bad = next(r for r in sums.records if r.verdict == "FAIL")
        raise CoverError(
            f"cover sum mismatch on {bad.event.render()}: direct "
            f"{render_value(bad.direct)} vs {bad.summed.render()}"
        )
    return SigmaFiniteExtension(handle, cover, cover_report=report, **kwargs)


# ---------------------------------------------------------------------------
# normalization


class NormalizedExtension:
    """A finite-total family split into total mass times a probability handle.

    `total` is the common mass c of the family's measures; `base` is the
    handle of the family rescaled by 1/c (None when c is zero, in which case
    every value is zero).  `mu` reproduces the original values as c times
    the probability values.
    """

    def __init__(self, total: Fraction, base: ExtensionHandle | None,
                 source: ExtensionHandle):
        self.total = total
        self.base = base
        self.source = source

    def mu(self, event: CylinderSet, at_depth: int | None = None):
        if self.base is None:
            return Fraction(0)
        return value_mul(self.total, self.base.mu(event, at_depth=at_depth))


def normalized_extension(handle: ExtensionHandle,
                         check_depths=(0, 1, 2)) -> NormalizedExtension:
    """Split a finite-total handle into mass times a probability handle.

    The family's mass is recomputed at each depth in `check_depths`; the
    masses must be finite and all equal (anything else means the family is
    not the finite-total object it claims to be).
    """
    fam = handle.family
    depths = list(check_depths)
    if fam.max_defined_depth is not None:
        depths = [d for d in depths if d <= fam.max_defined_depth] or [0]
    masses = [fam.mass(d) for d in depths]
    for m in masses:
        if m == INFINITE:
            raise MassError("family has infinite total mass; nothing to normalize")
    if len(set(masses)) != 1:
        rendered = ", ".join(render_value(m) for m in masses)
        raise MassError(f"family masses disagree across depths: {rendered}")
    total = masses[0]
    if total == 0:
        return NormalizedExtension(Fraction(0), None, handle)
    prob = scale(fam, Fraction(1) / total, kind="probability")
    base = ExtensionHandle.issue(
        prob, trusted=True,
        trust_reason="rescaling a verified family by a positive constant",
    )
    return NormalizedExtension(total, base, handle)
