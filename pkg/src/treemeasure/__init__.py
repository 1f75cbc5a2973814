"""Exact-arithmetic cylinder-set measures and extension checks on regular trees."""

from .cylinder import (
    Configuration,
    Context,
    CylinderSet,
    Rectangle,
    SiteConstraint,
    SpinSet,
    agreement_cylinder,
    constraint_in,
    constraint_not_in,
    empty_set,
    from_configuration,
    from_constraints,
    generator_decomposition,
    make_rectangle,
    omega,
    random_cylinder,
    rho,
    single_site,
)
from .errors import (
    BudgetError,
    ContextMismatchError,
    CoverError,
    DepthLimitError,
    DisjointnessError,
    FamilyDepthError,
    MassError,
    NestingError,
    SpecError,
    SpecSemanticError,
    SpecSyntaxError,
    SpinRangeError,
    TreeMeasureError,
    VerificationError,
)
from .extension import (
    ExtensionHandle,
    additivity_check,
    continuity_probe,
    inner_compact_approx,
    uniqueness_crosscheck,
)
from .measure import (
    INFINITE,
    ConsistencyReport,
    Inconclusive,
    MeasureFamily,
    NatSeq,
    TransitionKernel,
    Violation,
    VolumeMeasure,
    check_consistency,
    marginal_table,
    markov_family,
    product_family,
    random_consistent_family,
    render_value,
    scale,
    table_family,
    value_add,
    value_mul,
    value_pow,
    value_sub,
)
from .sigma_finite import (
    ConditionalExtension,
    Cover,
    NormalizedExtension,
    SigmaFiniteExtension,
    SigmaValue,
    conditional_family,
    cover_independence,
    cover_sum_check,
    finite_cover,
    fixed_level_cover,
    normalized_extension,
    restriction_identity_check,
    sigma_extension,
    slice_cover,
)
from .specdsl import (
    BuiltSpec,
    EventAnd,
    EventAtom,
    EventNot,
    EventOr,
    SpecDocument,
    build_document,
    compile_event,
    load_spec,
    lower_event,
    parse_document,
    parse_event,
    render_document,
    render_event,
)
from .tree import TreeGeometry

__all__ = [name for name in dir() if not name.startswith("_")]
