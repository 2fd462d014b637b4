"""Affine normal flow of convex hypersurfaces via the support function.

The package has three layers: representation (support functions of convex
bodies and their grid slices), geometry (affine differential invariants of
parametrized patches and the closed-form soliton catalog), and dynamics
(the explicit Monge-Ampere-type solver with estimate monitors).
"""

from .errors import (
    AffineFlowError,
    ConditioningError,
    ConfigError,
    ConvexityError,
    DegenerateHessianError,
    DomainError,
    ExtinctionError,
    ImmersionError,
    IncompatibleGridsError,
    InvalidInputError,
    StabilityError,
)
from .flow import (
    FlowConfig,
    FlowTrajectory,
    InitialSpec,
    hessian_det,
    recover_points,
    run,
    run_pair,
    scaling_law_check,
    speed,
    stable_dt,
    step,
)
from .frame import (
    AffineFrame,
    affine_frame_at,
    affine_normal,
    check_structure,
    euclidean_data,
    evolution_identity_check,
)
from .monitors import (
    MonitorReport,
    andrews_speed_monitor,
    containment_monitor,
    cubic_decay_monitor,
    gh_monitor,
    gh_quantity,
)
from .oracles import PatchOracle, make_oracle, oracle_names, soliton_patch_family
from .solitons import (
    SolitonSpec,
    calabi_level,
    calabi_support,
    ellipsoid_support,
    extinction_time,
    paraboloid_support,
    soliton_support_grid,
    sphere_radius,
)
from .support import (
    ConvexBodySample,
    DirectionSlice,
    SupportGrid,
    affine_image_support,
    containment_order,
    exhaustion_limit_check,
    load_points,
    membership_by_duality,
    support_value,
)

__version__ = "0.1.0"
