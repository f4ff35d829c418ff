"""sdelab: Monte Carlo laboratory for coupling-of-noise SDE experiments."""

__version__ = "0.1.0"

from .coefficients import (
    AssumptionReport,
    Coefficient,
    SdeModel,
    eval_one_sided,
    jump_height,
    localize_model,
    validate_assumptions,
)
from .noise import (
    BridgeDecomposition,
    CouplingKind,
    PathLattice,
    RngStream,
    bridge_decompose,
    couple,
    refine_lattice,
    sample_brownian_lattice,
)
from .transforms import (
    TransformG,
    TransformH,
    build_jump_removal_transform,
    identity_transform,
    invert_transform,
    lamperti_transform,
    lipschitz_certificate,
    transformed_coefficients,
)
from .solvers import (
    SolutionPath,
    euler_maruyama,
    frozen_coefficient_step,
    milstein,
    solve_until_exit,
    transformed_milstein,
)
from .couplings import (
    CouplingExperimentConfig,
    DistanceEstimate,
    check_recursion_bounds,
    conditional_expectation_oracle,
    global_coupling_distance,
    global_l1_coupling_gap,
    local_coupling_distances,
    occupation_lower_bound_check,
)
from .adaptive import (
    AdaptiveMethod,
    BrownianPathOracle,
    ObservedData,
    global_l1_error,
    make_builtin_method,
    mean_cost,
    run_adaptive,
)
from .estimation import (
    DensityEstimate,
    RateEstimate,
    fit_rate,
    kernel_density_at,
    mc_mean_ci,
)
