"""Linear elastodynamics on a box: continuous Lagrange elements of degree 1 to 4
on Kuhn tetrahedral meshes, advanced by an explicit three-level scheme."""
from .assembly import (
    MaterialParams, Operators, assemble_load, assemble_mass, assemble_scalar_mass, assemble_stiffness,
    build_operators,
)
from .mesh import BoxDomain, Mesh, build_box_mesh, mesh_statistics
from .norms import ErrorSeries, a_norm, convergence_order, field_difference_norm, l2_vector_norm, max_in_time
from .solver import SolverConfig, SolverError, cg_solve
from .source import SourceConfig, eval_source, integrate_source_in_time, time_factor
from .space import FunctionSpace, build_space, evaluate_field, interpolate
from .stress import StressField, recover_stress, stress_component_norm, stress_norm
from .timestepper import (
    CFLRefusal, InitialData, InstabilityError, RunResult, SchemeConfig, check_cfl, run, spectral_step_limit,
)

__version__ = "0.1.0"
