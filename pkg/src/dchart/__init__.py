"""Exact computations with curved homotopy structures on affine charts."""

from .bundles import Chart, GradedBundle
from .cdga import (
    CdgaDerivation,
    apply_derivation,
    derivation_square_failures,
    from_derivation,
    morphism_dual,
    morphism_duality_failures,
    morphism_from_dual,
    to_derivation,
)
from .cli import (
    ChartDocument,
    Report,
    SchemaError,
    chart_document,
    main,
    morphism_document,
    parse_chart_document,
    parse_morphism_document,
)
from .compose import (
    bullet_on_tuple,
    circ_on_tuple,
    compose_bullet,
    compose_circ,
    set_partitions,
    symmetrize,
)
from .geometry import (
    ClassicalPoint,
    DerivedChart,
    PullbackResult,
    TangentComplex,
    complex_cohomology,
    diagonal_morphism,
    is_classical_point,
    is_etale_at,
    is_weak_equivalence,
    product_chart,
    product_morphism,
    pullback_fibration,
    tangent_complex,
    virtual_dimension,
)
from .intersection import (
    AffineSubmanifold,
    DerivedIntersection,
    derived_intersection,
    homotopy_fibered_product,
    plain_chart,
)
from .linalg import nullspace, rank
from .pathspace import (
    ConnectionData,
    PathChart,
    PathContraction,
    PolyPath,
    connection_change_iso,
    derived_path_space,
    factorization_check,
    fm_contraction,
    path_structure,
    section_square_failures,
    shifted_tangent,
)
from .ops import (
    MultiOp,
    OpFamily,
    compose_linear,
    identity_op,
    koszul_sign,
    sort_with_sign,
    tabulate,
)
from .poly import Poly, parse_fraction, parse_poly
from .structures import (
    AxiomReport,
    CurvedStructure,
    LooMorphism,
    check_morphism,
    check_structure,
    compose_morphisms,
    identity_family,
    identity_morphism,
    invert_morphism,
    is_fibration,
    is_fibration_at,
    operations_from_tables,
    strictify_fibration,
    transport_structure,
)
from .transfer import (
    ContractionData,
    FiltrationSpec,
    TransferResult,
    nilpotency_failures,
    reduce_fibration_step,
    transfer_closed_forms,
    transfer_structure,
    transfer_tree_oracle,
    validate_contraction,
)

__version__ = "0.1.0"
