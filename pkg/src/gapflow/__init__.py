"""Iterative local block-diagonalization of gapped lattice Hamiltonians."""

from .geometry import (
    LatticeSpec,
    Rect,
    circumference,
    compare_step,
    count_shapes,
    enumerate_steps,
    g_set,
    initial_step,
    minimal_rectangle,
    successor,
)
from .tensor import (
    LocalOp,
    SiteSpace,
    embed,
    hermitian_spectrum,
    op_norm,
    projector_minus,
    projector_plus,
    vacuum_projector,
)
from .model import ModelSpec, build_hamiltonian, initial_interactions, random_model
from .schwinger import (
    ConvergenceError,
    GapError,
    MajorantSeries,
    StepOperators,
    adjoint_power,
    assemble_g,
    check_g_gap,
    lie_schwinger_series,
    majorants,
)
from .flow import (
    FlowState,
    InteractionMap,
    Tolerances,
    apply_step,
    assemble_hamiltonian,
    consistency_check,
    regime_of,
    run_flow,
)
from .expansion import (
    Branch,
    BranchExpansion,
    ComponentDecomposition,
    PathOfRects,
    branch_sum,
    build_gamma,
    closed_path,
    decompose_components,
    direction_count,
    enumerate_branches,
    weighted_branch_sum,
)
from .verify import (
    RunReport,
    inequality_suite,
    norm_decay_audit,
    verify_main_theorem,
)

__version__ = "0.1.0"
