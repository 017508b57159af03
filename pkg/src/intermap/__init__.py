"""Intermittent interval maps with a neutral fixed point and a critical
point: transfer-operator discretization, invariant densities, cone checks,
parameter-response series, and empirical rate diagnostics."""

from .cones import (
    C3Params,
    ConeParams,
    ConeReport,
    a0,
    check_C3,
    check_Ca,
    lambda_shift,
    random_cone_mixture,
    verify_cone_invariance,
)
from .diagnostics import (
    OrbitRecord,
    PowerLawFit,
    correlation_decay,
    distortion_check,
    expansion_check,
    fit_power_law,
    memory_loss_curve,
    return_time_tail,
    simulate,
)
from .map_core import (
    DomainError,
    ParamBox,
    ParamPoint,
    PreimageLadder,
    SingularityError,
    X_field,
    X_field_derivs,
    X_param_deriv,
    X_param_deriv_prime,
    branch_deriv,
    branch_eval,
    inverse_branch,
    inverse_branch_deriv,
    inverse_branch_third_deriv,
    ladder_envelopes,
    map_deriv,
    map_eval,
    map_second_deriv,
    map_third_deriv,
    preimage_ladder,
)
from .mesh import GradedMesh, GridFunction, build_mesh
from .response import (
    Observable,
    ResponseEstimate,
    directional_derivative,
    lq_admissible,
    partial_L,
    partial_L_pointwise,
    response_fd,
    response_series,
    second_partial_L,
    xn_kernel,
)
from .transfer import (
    InvariantDensityResult,
    UlamOperator,
    WeightedOperatorContext,
    apply_pointwise,
    assemble_ulam,
    invariant_density,
    push_density,
    weighted_apply,
)

__version__ = "0.1.0"
