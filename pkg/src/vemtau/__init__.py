"""Quadrilateral FEM/VEM stiffness splitting and hourglass-stabilization tools."""
from .decomposition import (
    DiffusionTensor,
    ElementDecomposition,
    consistency_matrix,
    decompose,
    element_stiffness,
    gamma_vector,
    gbc_expansion,
    signed_triangle_areas,
    stability_basis_matrix,
    transform_matrix,
)
from .geometry import (
    DegenerateGeometryError,
    GeometryError,
    Mesh,
    OrientationError,
    load_mesh,
    make_structured_quad_mesh,
    perturb_mesh,
    save_mesh,
)
from .isoparametric import fem_stiffness, gauss_rule, hourglass_energy, tau_parallelogram, tau_rectangle
from .projector import P0Choice, projection_matrix, project_nodal_function, residual_dofs
from .vem import (
    VEM,
    AssemblyError,
    Constant,
    FemQuadrature,
    IsoFEM,
    ParallelogramClosed,
    RectangleClosed,
    SolverError,
    VemTrace,
    assemble_global,
    apply_dirichlet,
    parse_tau_policy,
    solve,
    solve_dirichlet_problem,
    tau_vem,
    vem_element_matrices,
)

__version__ = "0.1.0"
