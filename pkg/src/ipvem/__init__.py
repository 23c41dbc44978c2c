"""Interior penalty virtual elements for eps^2 lap^2 u - lap u = f on polygonal meshes."""
from .analysis import (
    ConvergenceReport,
    ManufacturedCase,
    energy_error,
    example_case,
    fit_rate,
    markdown_table,
    parse_mesh_source,
    polynomial_case,
    run_convergence,
    run_study,
)
from .assembly import (
    BoundaryData,
    PenaltyConfig,
    SolverError,
    apply_boundary_conditions,
    assemble,
    build_dof_map,
    compute_operators,
    is_positive_definite,
    solve,
)
from .element import ElementError, element_operators
from .estimator import IPVEMSolver
from .mesh import (
    Mesh,
    MeshError,
    build_topology,
    generate_cvt_polygonal,
    generate_distorted_grid,
    generate_rectangle_grid,
    l_shape,
    load_mesh,
    save_mesh,
    unit_square,
)

__version__ = "0.1.0"
