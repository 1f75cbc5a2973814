from fractions import Fraction

import pytest

from treemeasure import (
    ContextMismatchError,
    CoverError,
    ExtensionHandle,
    INFINITE,
    MassError,
    NatSeq,
    SpinRangeError,
    TransitionKernel,
    conditional_family,
    constraint_in,
    constraint_not_in,
    cover_independence,
    cover_sum_check,
    finite_cover,
    fixed_level_cover,
    from_constraints,
    markov_family,
    normalized_extension,
    omega,
    restriction_identity_check,
    scale,
    sigma_extension,
    single_site,
    slice_cover,
)

F = Fraction


def counting_handle(counting_fam):
    return ExtensionHandle.issue(counting_fam, verify_depth=2)


def test_conditional_mass_and_values(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    cond = conditional_family(handle, single_site(nat_ctx, 0, 3))
    assert cond.mass() == 1
    assert cond.value(single_site(nat_ctx, 1, 0), verify=True) == F(1, 2)
    assert cond.value(single_site(nat_ctx, 1, 2), verify=True) == F(1, 8)
    assert cond.value(omega(nat_ctx)) == 1
    # conditioning on an infinite-value event is refused
    with pytest.raises(MassError):
        conditional_family(handle, single_site(nat_ctx, 1, 0))


def test_conditional_as_family_finite(chain_fam, ctx_k2s2):
    ctx = ctx_k2s2
    handle = ExtensionHandle.issue(chain_fam)
    cond = conditional_family(handle, single_site(ctx, 0, 0))
    fam = cond.as_family(depth=1)
    assert fam.mass(1) == F(1, 2)
    probe = single_site(ctx, 1, 1)
    assert fam.measure(1).measure_of(probe) == cond.value(probe)
    with pytest.raises(ValueError):
        cond.as_family(depth=-1)


def test_conditional_as_family_nat_in_mode(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    cond = conditional_family(handle, single_site(nat_ctx, 0, 2))
    fam = cond.as_family()
    assert fam.kind == "finite"
    assert fam.mass(0) == 1
    assert fam.mass(2) == 1
    probe = single_site(nat_ctx, 1, 5)
    assert fam.measure(1).measure_of(probe) == cond.value(probe) == F(1, 64)


def test_conditional_as_family_nat_cofinite(nat_ctx):
    # geometric root weights keep a closed-form tail after dropping a prefix
    lam = NatSeq.geometric(F(1, 2), F(1, 2))
    kernel = TransitionKernel.for_naturals(NatSeq.geometric(F(1, 2), F(1, 2)))
    fam = markov_family(nat_ctx, lam, kernel)
    handle = ExtensionHandle.issue(fam, verify_depth=2)
    event = from_constraints(nat_ctx, {0: constraint_not_in([0])})
    cond = conditional_family(handle, event)
    assert cond.mass() == F(1, 2)
    restricted = cond.as_family()
    assert restricted.mass(0) == F(1, 2)
    assert restricted.mass(1) == F(1, 2)
    probe = single_site(nat_ctx, 0, 1)
    assert restricted.measure(0).measure_of(probe) == F(1, 4)
    assert restricted.measure(0).measure_of(single_site(nat_ctx, 0, 0)) == 0


def test_conditional_as_family_nat_needs_root_rectangle(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    cond = conditional_family(handle, single_site(nat_ctx, 1, 0).intersect(
        single_site(nat_ctx, 0, 2)
    ))
    with pytest.raises(SpinRangeError):
        cond.as_family()


def test_restriction_identity(chain_fam, ctx_k2s2):
    ctx = ctx_k2s2
    handle = ExtensionHandle.issue(chain_fam)
    cond = conditional_family(handle, single_site(ctx, 0, 0))
    report = restriction_identity_check(
        cond, [single_site(ctx, 1, 1), omega(ctx)], extra_depths=2
    )
    assert report.ok
    assert all(len(set(r.values)) == 1 for r in report.records)


def test_cover_parts_and_support_bound(nat_ctx):
    cover = slice_cover(nat_ctx, site=0, block=2)
    assert cover.count is None
    p1 = cover.part(1)
    assert p1.contains((2, 0, 0, 0))
    assert p1.contains((3, 0, 0, 0))
    assert not p1.contains((4, 0, 0, 0))
    event = from_constraints(nat_ctx, {0: constraint_in(range(5))})
    assert cover.support_bound(event) == 2
    unpinned = single_site(nat_ctx, 1, 0)
    assert cover.support_bound(unpinned) is None
    cofinite = from_constraints(nat_ctx, {0: constraint_not_in([0])})
    assert cover.support_bound(cofinite) is None
    empty = single_site(nat_ctx, 0, 0).intersect(single_site(nat_ctx, 0, 1))
    assert cover.support_bound(empty) == -1


def test_slice_cover_guards(nat_ctx, ctx_k2s2):
    with pytest.raises(SpinRangeError):
        slice_cover(ctx_k2s2, site=0)
    with pytest.raises(ValueError):
        slice_cover(nat_ctx, site=0, block=0)
    report = slice_cover(nat_ctx, site=0).verify()
    assert report.ok
    assert report.method == "structural"


def test_finite_cover_verify(ctx_k2s2):
    ctx = ctx_k2s2
    good = finite_cover([single_site(ctx, 0, 0), single_site(ctx, 0, 1)])
    report = good.verify()
    assert report.ok
    assert report.method == "semantic"
    assert good.count == 2
    assert good.support_bound(single_site(ctx, 0, 0)) == 1

    overlapping = finite_cover(
        [single_site(ctx, 0, 0), from_constraints(ctx, {0: constraint_in([0, 1])})]
    )
    rep = overlapping.verify()
    assert not rep.disjoint
    gappy = finite_cover([single_site(ctx, 0, 0)])
    rep2 = gappy.verify()
    assert not rep2.covers_all
    with pytest.raises(CoverError):
        finite_cover([])
    with pytest.raises(CoverError):
        sigma_extension(ExtensionHandle.issue(
            markov_family(ctx, [F(1, 2), F(1, 2)],
                          [[F(1, 2), F(1, 2)], [F(1, 2), F(1, 2)]]),
        ), gappy)


def test_finite_cover_context_mismatch(ctx_k2s2, nat_ctx):
    with pytest.raises(ContextMismatchError):
        finite_cover([single_site(ctx_k2s2, 0, 0), single_site(nat_ctx, 0, 1)])


def test_sigma_exact_via_support_bound(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    ext = sigma_extension(handle, slice_cover(nat_ctx, site=0))
    v = ext.value(single_site(nat_ctx, 0, 3))
    assert v.kind == "exact"
    assert v.total == 1
    assert v.terms_used == 4
    joint = from_constraints(
        nat_ctx, {0: constraint_in([2]), 1: constraint_in([0])}
    )
    assert ext.value(joint).total == F(1, 2)
    assert ext.value(single_site(nat_ctx, 0, 0).intersect(
        single_site(nat_ctx, 0, 5)
    )).total == 0


def test_sigma_diverges_at_bound(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    ext = sigma_extension(handle, slice_cover(nat_ctx, site=0))
    v = ext.value(single_site(nat_ctx, 1, 0))
    assert v.kind == "diverges"
    assert v.terms_used == 2001
    assert v.total == F(2001, 2)
    assert v.bound == 1000
    assert v.render() == "DivergesBeyond(1000)"


def test_sigma_exact_infinity_from_single_term(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    ext = sigma_extension(handle, slice_cover(nat_ctx, site=1))
    v = ext.value(omega(nat_ctx))
    assert v.kind == "exact"
    assert v.total == INFINITE
    assert v.terms_used == 1


def test_sigma_bounded_by_finite_mass(nat_ctx):
    lam = NatSeq.geometric(F(1, 2), F(1, 2))
    kernel = TransitionKernel.for_naturals(NatSeq.geometric(F(1, 2), F(1, 2)))
    fam = markov_family(nat_ctx, lam, kernel)
    handle = ExtensionHandle.issue(fam, verify_depth=2)
    ext = sigma_extension(handle, slice_cover(nat_ctx, site=0))
    v = ext.value(single_site(nat_ctx, 1, 0))
    assert v.kind == "bounded"
    assert v.terms_used == 41
    assert v.tail_bound == F(1, 2**41)
    # the partial sum of lam(i) * P(i, 0) = 2**-(i+2) over i = 0..40
    assert v.total == F(1, 2) * (1 - F(1, 2**41))
    assert "tail" in v.render()


def test_sigma_inconclusive_on_term_budget(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    ext = sigma_extension(handle, slice_cover(nat_ctx, site=0), term_budget=5)
    v = ext.value(single_site(nat_ctx, 1, 0))
    assert v.kind == "inconclusive"
    assert v.terms_used == 5
    assert v.total == F(5, 2)
    assert "Inconclusive" in v.render()


def test_sigma_mass_of_counting_family(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    ext = sigma_extension(handle, slice_cover(nat_ctx, site=0))
    v = ext.mass()
    assert v.kind == "diverges"


def test_cover_independence_blocks(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    events = [
        single_site(nat_ctx, 0, q) for q in range(4)
    ] + [
        from_constraints(nat_ctx, {0: constraint_in([1, 3]), 1: constraint_in([0])}),
    ]
    report = cover_independence(
        handle, slice_cover(nat_ctx, site=0), slice_cover(nat_ctx, site=0, block=2),
        events,
    )
    assert report.ok
    for rec in report.records:
        assert rec.first.kind == "exact"
        assert rec.second.kind == "exact"
        assert rec.first.total == rec.second.total


def test_cover_sum_check_pass(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    events = [single_site(nat_ctx, 0, q) for q in range(6)]
    events.append(from_constraints(nat_ctx, {0: constraint_in(range(4))}))
    report = cover_sum_check(handle, slice_cover(nat_ctx, site=0), events)
    assert report.verdict == "PASS"
    assert all(r.verdict == "PASS" for r in report.records)


def test_cover_sum_check_fail_on_non_cover(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    # one part that misses most of the space, smuggled past verification
    partial = finite_cover([from_constraints(nat_ctx, {0: constraint_in([0, 1])})])
    event = from_constraints(nat_ctx, {0: constraint_in([0, 1, 2])})
    report = cover_sum_check(handle, partial, [event], verify_cover=False)
    assert report.verdict == "FAIL"
    rec = report.records[0]
    assert rec.direct == 3
    assert rec.summed.total == 2


def test_cover_sum_check_inconclusive(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    report = cover_sum_check(
        handle, slice_cover(nat_ctx, site=0), [single_site(nat_ctx, 1, 0)],
        term_budget=5,
    )
    assert report.verdict == "INCONCLUSIVE"


def test_fixed_level_cover_accepts_root_slice(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    ext = fixed_level_cover(handle, slice_cover(nat_ctx, site=0))
    assert ext.cover_report is not None and ext.cover_report.ok
    assert ext.value(single_site(nat_ctx, 0, 2)).total == 1


def test_fixed_level_cover_rejects_overlap(chain_fam, ctx_k2s2):
    ctx = ctx_k2s2
    handle = ExtensionHandle.issue(chain_fam)
    overlapping = finite_cover([
        from_constraints(ctx, {0: constraint_in([0, 1])}),
        from_constraints(ctx, {0: constraint_not_in([1])}),
    ])
    with pytest.raises(CoverError):
        fixed_level_cover(handle, overlapping)


def test_fixed_level_cover_rejects_infinite_part(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    whole = finite_cover([omega(nat_ctx)])
    with pytest.raises(CoverError):
        fixed_level_cover(handle, whole)


def test_fixed_level_cover_rejects_deep_site(counting_fam, nat_ctx):
    handle = counting_handle(counting_fam)
    with pytest.raises(CoverError):
        fixed_level_cover(handle, slice_cover(nat_ctx, site=1), level=0)


def test_normalized_extension_scaled(chain_fam, ctx_k2s2):
    ctx = ctx_k2s2
    scaled = scale(chain_fam, F(7, 3))
    handle = ExtensionHandle.issue(scaled, verify_depth=2)
    norm = normalized_extension(handle)
    assert norm.total == F(7, 3)
    assert norm.base.mass() == 1
    for event in (single_site(ctx, 0, 0), single_site(ctx, 2, 1), omega(ctx)):
        assert norm.mu(event) == handle.mu(event)
        assert norm.mu(event) == F(7, 3) * norm.base.mu(event)


def test_normalized_extension_zero_family(chain_fam, ctx_k2s2):
    zero = scale(chain_fam, 0)
    handle = ExtensionHandle.issue(zero, verify_depth=1)
    norm = normalized_extension(handle)
    assert norm.total == 0
    assert norm.base is None
    assert norm.mu(omega(ctx_k2s2)) == 0


def test_normalized_extension_refuses_infinite(counting_fam):
    handle = counting_handle(counting_fam)
    with pytest.raises(MassError):
        normalized_extension(handle)


def test_normalized_extension_refuses_drifting_mass(ctx_k2s2):
    drifting = markov_family(
        ctx_k2s2, [F(1, 2), F(1, 2)], [[F(2, 3), F(1, 2)], [F(1, 3), F(2, 3)]]
    )
    handle = ExtensionHandle.issue(drifting, trusted=True, trust_reason="adversarial probe")
    with pytest.raises(MassError):
        normalized_extension(handle)
