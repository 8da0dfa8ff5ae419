"""Surface finite elements for scalar elliptic problems on closed hypersurfaces."""

from ._backend import active_backend_name, available_backends, select_backend
from .assembly import (
    AssemblyError,
    CoefficientError,
    CoefficientSet,
    DiscreteField,
    SparseSystem,
    assemble_convection_b,
    assemble_convection_c,
    assemble_load,
    assemble_load_div,
    assemble_mass,
    assemble_operator,
    assemble_stiffness,
    discrete_norm,
    export_matrix_market,
    mass_constraint_row,
    mean_value,
)
from .expressions import ExpressionError, parse_expression
from .fields import (
    AmbientMatrixField,
    AmbientScalarField,
    AmbientVectorField,
    constant_scalar,
    constant_vector,
    coordinate,
    identity_matrix,
    identity_plus,
    matrix_from_scalars,
    position_field,
    rotation_field,
    transpose_matrix,
    vector_from_scalars,
)
from .geometry import (
    Atlas,
    CapabilityError,
    Chart,
    ContractError,
    DegeneracyError,
    DomainError,
    GeometryError,
    area_element,
    atlas_for_preset,
    laplace_beltrami_apply,
    laplace_beltrami_fd,
    metric_tensor,
    planar_chart,
    random_surface_points,
    restrict_scalar,
    restrict_vector,
    shape_operator,
    sphere_atlas,
    surface_divergence,
    surface_gradient,
    tangential_components,
    tangential_projection,
    torus_atlas,
    unit_normal,
)
from .solvers import (
    ConditionReport,
    ConditionViolationError,
    SolveReport,
    SolverError,
    check_div_free,
    check_ellipticity,
    check_reaction_condition,
    estimate_inf_sup,
    fredholm_kernel,
    orthonormal_complement,
    restricted_mean_zero,
    solve_biharmonic,
    solve_divfree_cd,
    solve_general_elliptic,
    solve_laplace_beltrami,
    solve_linear_system,
)
from .surface_mesh import (
    ElementGeometry,
    MeshError,
    SurfaceMesh,
    build_mesh,
    element_geometry,
    mesh_size,
    refine,
    write_csv,
    write_vtk,
)
from .verification import (
    ConvergenceReport,
    ManufacturedCase,
    ManufacturingError,
    ambient_lp_norm,
    convergence_study,
    errors_against_exact,
    fit_rate,
    ibp_residual_test,
    lp_stability_sweep,
    manufacture,
    sphere_divfree_case,
    sphere_eigen_case,
    torus_general_case,
)

__version__ = "0.1.0"
