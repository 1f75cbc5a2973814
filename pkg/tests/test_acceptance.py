"""Acceptance suite: one test per advertised guarantee.

Each test prints a single [PASS]/[FAIL] line naming the criterion, then
asserts it.  Numbers quoted in assertions are exact rationals; the two
long-running criteria also enforce their wall-clock budgets.
"""

import glob
import itertools
import json
import os
import random
import time
from collections import deque
from fractions import Fraction

from treemeasure import (
    Configuration,
    Context,
    CylinderSet,
    ExtensionHandle,
    SpinSet,
    TreeGeometry,
    additivity_check,
    check_consistency,
    conditional_family,
    constraint_in,
    continuity_probe,
    cover_independence,
    cover_sum_check,
    from_constraints,
    inner_compact_approx,
    lower_event,
    make_rectangle,
    markov_family,
    normalized_extension,
    omega,
    parse_document,
    product_family,
    random_consistent_family,
    random_cylinder,
    render_document,
    restriction_identity_check,
    rho,
    scale,
    sigma_extension,
    single_site,
    slice_cover,
    uniqueness_crosscheck,
)
from treemeasure.cli import main as cli_main

F = Fraction

DATA = os.path.join(os.path.dirname(__file__), "data")


def conclude(num: int, desc: str, ok: bool) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}"
    print(line)
    assert ok, line


def chain_family(ctx):
    return markov_family(
        ctx, [F(1, 2), F(1, 2)], [[F(2, 3), F(1, 3)], [F(1, 3), F(2, 3)]]
    )


def counting_family(ctx):
    from treemeasure import NatSeq, TransitionKernel

    return markov_family(
        ctx, NatSeq.constant(1),
        TransitionKernel.for_naturals(NatSeq.geometric(F(1, 2), F(1, 2))),
    )


def test_criterion_01_exhaustive_consistency_depth3(ctx_k2s2):
    start = time.monotonic()
    report = check_consistency(chain_family(ctx_k2s2), 3)
    elapsed = time.monotonic() - start
    ok = (
        report.ok
        and report.method == "enumeration"
        and report.exhaustive
        and report.verified_depth == 3
        and elapsed < 60.0
    )
    conclude(
        1,
        f"depth-3 exhaustive marginal check over 2**22 atoms in {elapsed:.1f}s "
        "(budget 60s)",
        ok,
    )


def test_criterion_02_base_depth_independence(ctx_k2s2):
    ctx = ctx_k2s2
    fam = chain_family(ctx)
    measures = [fam.measure(n) for n in (1, 2, 3)]
    atoms = list(itertools.product(range(2), repeat=4))
    rects = [
        make_rectangle(ctx, {v: constraint_in([q]) for v, q in enumerate(key)})
        for key in atoms
    ]
    start = time.monotonic()
    mismatches = 0
    for mask in range(1 << 16):
        chosen = [rects[i] for i in range(16) if mask >> i & 1]
        event = CylinderSet.build(ctx, chosen)
        v1 = measures[0].measure_of(event)
        if measures[1].measure_of(event) != v1 or measures[2].measure_of(event) != v1:
            mismatches += 1
    elapsed = time.monotonic() - start
    ok = mismatches == 0 and elapsed < 60.0
    conclude(
        2,
        f"all 65536 depth-1 cylinder values identical at base depths 1..3 "
        f"in {elapsed:.1f}s (budget 60s)",
        ok,
    )


def test_criterion_03_partition_mass_and_additivity(ctx_k2s2):
    ctx = ctx_k2s2
    ok = True
    atoms = list(itertools.product(range(2), repeat=10))
    for fam in (chain_family(ctx), product_family(ctx, [F(1, 2), F(1, 2)])):
        table = fam.measure(2).dense_table()
        ok = ok and len(table) == 1024 and sum(table.values()) == 1
        handle = ExtensionHandle.issue(fam)
        rng = random.Random(515)
        for _ in range(50):
            picked = rng.sample(range(1024), 40)
            half_a = [
                make_rectangle(ctx, {v: constraint_in([q]) for v, q in enumerate(atoms[i])})
                for i in picked[:20]
            ]
            half_b = [
                make_rectangle(ctx, {v: constraint_in([q]) for v, q in enumerate(atoms[i])})
                for i in picked[20:]
            ]
            ea = CylinderSet.build(ctx, half_a)
            eb = CylinderSet.build(ctx, half_b)
            report = additivity_check(handle, [ea, eb])
            ok = ok and report.ok
    conclude(
        3,
        "depth-2 atom partitions carry unit mass and 100 random disjoint "
        "unions are exactly additive",
        ok,
    )


def test_criterion_04_decreasing_chain_values(ctx_k2s2):
    ctx = ctx_k2s2
    chain = [
        from_constraints(ctx, {v: constraint_in([0]) for v in ctx.tree.ball_vertices(n)})
        for n in (1, 2, 3)
    ]
    markov_handle = ExtensionHandle.issue(chain_family(ctx))
    product_handle = ExtensionHandle.issue(product_family(ctx, [F(1, 2), F(1, 2)]))
    rm = continuity_probe(markov_handle, chain)
    rp = continuity_probe(product_handle, chain)
    sizes = [ctx.tree.ball_size(n) for n in (1, 2, 3)]
    ok = (
        rm.verdict == "decayed"
        and rp.verdict == "decayed"
        and rm.values == tuple(F(1, 2) * F(2, 3) ** (m - 1) for m in sizes)
        and rp.values == tuple(F(1, 2) ** m for m in sizes)
    )
    conclude(
        4,
        "all-zero chains decay with the advertised closed-form values for "
        "chain and product families",
        ok,
    )


def test_criterion_05_normalization_factor(ctx_k2s2):
    ctx = ctx_k2s2
    scaled = scale(chain_family(ctx), F(7, 3))
    handle = ExtensionHandle.issue(scaled, verify_depth=2)
    norm = normalized_extension(handle)
    ok = norm.total == F(7, 3) and norm.base.mass() == 1
    rng = random.Random(77)
    for _ in range(100):
        event = random_cylinder(ctx, rng, max_depth=2)
        lhs = handle.mu(event)
        rhs = norm.total * norm.base.mu(event)
        ok = ok and lhs == rhs and norm.mu(event) == lhs
    conclude(
        5,
        "7/3-scaled family splits into total mass times a probability "
        "handle, agreeing on 100 random cylinders",
        ok,
    )


def test_criterion_06_sigma_finite_root_cover():
    start = time.monotonic()
    ctx = Context(TreeGeometry(2), SpinSet.naturals())
    fam = counting_family(ctx)
    handle = ExtensionHandle.issue(fam, verify_depth=2)
    cover = slice_cover(ctx, site=0)

    ok = True
    # (a) each root value carries unit conditional mass, stable in depth
    for q in range(5):
        cond = conditional_family(handle, single_site(ctx, 0, q))
        ok = ok and cond.mass() == 1
        ok = ok and restriction_identity_check(
            cond, [omega(ctx), single_site(ctx, 1, 0)], extra_depths=2
        ).ok
        restricted = cond.as_family()
        ok = ok and all(restricted.mass(d) == 1 for d in (0, 1, 2))

    # (b) cover sums reproduce direct values on 20 root-constrained events
    rng = random.Random(606)
    events = []
    for _ in range(20):
        lo = rng.randint(0, 8)
        hi = rng.randint(lo, lo + 4)
        mapping = {0: constraint_in(range(lo, hi + 1))}
        if rng.random() < 0.5:
            mapping[1] = constraint_in([rng.randint(0, 3)])
        events.append(from_constraints(ctx, mapping))
    report = cover_sum_check(handle, cover, events)
    ok = ok and report.verdict == "PASS" and len(report.records) == 20

    # (c) an event with no root constraint certifies divergence at the bound
    sv = sigma_extension(handle, cover).value(single_site(ctx, 1, 0))
    ok = ok and sv.kind == "diverges" and sv.terms_used == 2001
    ok = ok and sv.total == F(2001, 2) and sv.render() == "DivergesBeyond(1000)"

    elapsed = time.monotonic() - start
    ok = ok and elapsed < 30.0
    conclude(
        6,
        f"root-slice cover: unit conditional masses, 20 exact cover sums, "
        f"and DivergesBeyond(1000) after 2001 terms in {elapsed:.1f}s "
        "(budget 30s)",
        ok,
    )


def test_criterion_07_cover_independence():
    ctx = Context(TreeGeometry(2), SpinSet.naturals())
    handle = ExtensionHandle.issue(counting_family(ctx), verify_depth=2)
    rng = random.Random(707)
    events = []
    for _ in range(20):
        values = rng.sample(range(9), rng.randint(1, 4))
        mapping = {0: constraint_in(values)}
        if rng.random() < 0.4:
            mapping[rng.choice([1, 2, 3])] = constraint_in([rng.randint(0, 2)])
        events.append(from_constraints(ctx, mapping))
    report = cover_independence(
        handle, slice_cover(ctx, site=0), slice_cover(ctx, site=0, block=2), events
    )
    ok = report.ok and all(
        r.first.kind == "exact"
        and r.second.kind == "exact"
        and r.first.total == r.second.total
        for r in report.records
    )
    conclude(
        7,
        "block-1 and block-2 root covers give identical exact sums on 20 "
        "finite-mass events",
        ok,
    )


def test_criterion_08_random_family_extension_agrees():
    ctx = Context(TreeGeometry(1), SpinSet.finite(2))
    ok = True
    for seed in range(10):
        fam = random_consistent_family(ctx, seed, 3)
        handle = ExtensionHandle.issue(fam, verify_depth=3)
        table = fam.measure(3).dense_table()
        rng = random.Random(9000 + seed)
        for _ in range(200):
            event = random_cylinder(ctx, rng, max_depth=3)
            direct = sum((w for k, w in table.items() if event.contains(k)), F(0))
            ok = ok and handle.mu(event) == direct
            ok = ok and handle.mu(event, at_depth=3) == direct
    conclude(
        8,
        "random dense families: extension values equal direct atom sums on "
        "200 cylinders for each of 10 seeds",
        ok,
    )


def test_criterion_09_inner_regularity(ctx_k2s2):
    finite_handle = ExtensionHandle.issue(chain_family(ctx_k2s2))
    fin = inner_compact_approx(finite_handle, single_site(ctx_k2s2, 0, 0), F(1, 10**6))
    ok = fin.gap == 0 and fin.subset.semantic_equal(single_site(ctx_k2s2, 0, 0))

    ctx = Context(TreeGeometry(2), SpinSet.naturals())
    handle = ExtensionHandle.issue(counting_family(ctx), verify_depth=2)
    approx = inner_compact_approx(handle, single_site(ctx, 0, 3), F(1, 2**20), at_depth=1)
    expected_gap = 1 - (1 - F(1, 2**33)) ** 3
    ok = ok and approx.cutoff == 32
    ok = ok and approx.gap == expected_gap
    ok = ok and approx.gap < F(1, 2**20)
    conclude(
        9,
        "inner approximation: zero gap over finite spins, certified gap "
        "1-(1-2**-33)**3 < 2**-20 over the naturals",
        ok,
    )


def test_criterion_10_dsl_and_cli_surface(ctx_k2s2, capsys):
    paths = sorted(glob.glob(os.path.join(DATA, "*.spec")))
    ok = len(paths) >= 20
    for path in paths:
        with open(path) as fh:
            doc = parse_document(fh.read())
        ok = ok and parse_document(render_document(doc)) == doc

    # lowering agrees with direct truth-table evaluation
    from test_specdsl import eval_event, random_event

    rng = random.Random(1010)
    atoms = list(itertools.product(range(2), repeat=10))
    for _ in range(10):
        ast = random_event(rng)
        cyl = lower_event(ctx_k2s2, ast)
        ok = ok and all(cyl.contains(a) == eval_event(ast, a) for a in atoms)

    chain_spec = os.path.join(DATA, "chain_k2_prob.spec")
    nat_spec = os.path.join(DATA, "nat_counting.spec")
    subprob_spec = os.path.join(DATA, "chain_k3_finite.spec")
    codes = {
        cli_main(["validate", "--spec", chain_spec, "--json"]): 0,
        cli_main(["consistency", "--spec", subprob_spec, "--json"]): 1,
        cli_main(["sigma-eval", "--spec", nat_spec, "--cover", "missing",
                  "--event", "x0=0", "--json"]): 2,
        cli_main(["sigma-eval", "--spec", nat_spec, "--cover", "roots",
                  "--event", "x1=0", "--term-budget", "5", "--json"]): 3,
    }
    capsys.readouterr()
    ok = ok and all(got == want for got, want in codes.items())
    conclude(
        10,
        "20-file corpus round-trips, lowering matches truth tables, and CLI "
        "exit codes 0/1/2/3 are all exercised",
        ok,
    )


def test_criterion_11_metric_and_counting_laws(ctx_k2s2):
    ctx = ctx_k2s2
    rng = random.Random(1111)
    size = ctx.tree.ball_size(4)
    ok = True
    for _ in range(1000):
        a, b, c = (
            Configuration.on_ball(ctx, 4, tuple(rng.randint(0, 1) for _ in range(size)))
            for _ in range(3)
        )
        ab, _ = rho(ctx, a, b, 4)
        bc, _ = rho(ctx, b, c, 4)
        ac, _ = rho(ctx, a, c, 4)
        ok = ok and ac <= ab + bc

    for k in (1, 2, 3):
        tree = TreeGeometry(k, max_depth=9)
        # iterative recount with an explicit frontier queue
        frontier = deque([0])
        level_count = {0: 1}
        total = 1
        counts = [(1, 1)]
        for n in range(1, 9):
            width = sum((k + 1) if v == 0 else k for v in frontier)
            frontier = deque(range(total, total + width))
            total += width
            counts.append((width, total))
        for n in range(9):
            width, total_n = counts[n]
            ok = ok and tree.sphere_size(n) == width
            ok = ok and tree.ball_size(n) == total_n
    conclude(
        11,
        "triangle inequality on 1000 truncated triples and closed-form "
        "sphere/ball counts for k in {1,2,3} up to depth 8",
        ok,
    )
