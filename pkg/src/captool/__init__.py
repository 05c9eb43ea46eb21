"""Secrecy-capacity numerics for single-photon direct-communication protocols."""

__version__ = "0.1.0"

from .channels import (  # noqa: F401
    ChannelModel,
    ObservationTable,
    QberReport,
    apply_channel,
    bell_state,
    extract_qber,
    observations_from_state,
    simulate_observations,
)
from .capacity import (  # noqa: F401
    CapacityResult,
    SweepSpec,
    find_zero_boundary,
    reliable_capacity,
    run_point,
    run_sweep,
    secure_capacity,
)
from .optimize import (  # noqa: F401
    FeasibleSet,
    IterationTrace,
    OptimizationResult,
    OptimizerConfig,
    cgd_minimize,
    comb_minimize,
    gradient,
    initial_point,
    linear_subproblem,
    minimize,
    objective,
    project_feasible,
    spgd_minimize,
)
from .protocols import (  # noqa: F401
    ConstraintSet,
    KrausMap,
    PinchingSet,
    PovmSet,
    ProtocolSpec,
    apply_pinching,
    apply_post_selection,
    build_dl04,
    build_dl04_mismatch,
    build_dl04_six_state,
    build_protocol,
    constraints_from_observations,
    post_selection_adjoint,
)
