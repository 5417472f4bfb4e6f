"""Numerical transport theorems for differential forms on manifolds with corners.

The package integrates time-dependent k-forms over flow-advected cell
complexes (possibly unbounded), and checks the transport identity
``d/dt int_{S_t} alpha_t = int_{S_t} (d/dt + L_{X_t}) alpha_t`` on
closed-form and user-configured scenarios.
"""
from .calculus import (
    DegreeError,
    DensityField,
    DifferentiableMap,
    KFormFamily,
    SingularVolumeError,
    TimeDepVectorField,
    divergence,
    exterior_derivative,
    interior_product,
    lie_derivative,
    pullback,
    time_derivative,
    wedge,
)
from .domains import (
    AxisBound,
    CellComplex,
    CornerCell,
    DomainSpecError,
    make_box,
    make_cut_sheet,
    make_pyramid_lattice,
    make_wave_slab,
)
from .exprlang import ParseError, UnboundVariableError, compile_expr, evaluate, parse
from .flow import AdvectedCell, AdvectionError, ClosedFormFlow, FlowMap, advect_complex, semigroup_residual
from .quadrature import (
    DivergenceError,
    IntegrandDomainError,
    QuadratureResult,
    integrate_cells,
    integrate_density,
    integrate_form,
)
from .scenarios import (
    Scenario,
    build,
    lorenz_sheet,
    pyramid_gaussian,
    reynolds_custom,
    reynolds_translate,
    sandwich_wave,
)
from .transport import (
    TransportReport,
    boundedness_witness,
    check_diff_lemma,
    classify_invariance,
    lhs_time_derivative,
    rhs_divergence_form,
    rhs_time_dependent,
    rhs_time_independent,
    transport_report,
)

__version__ = "0.1.0"
