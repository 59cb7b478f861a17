"""Density-based feedback controllers for almost-everywhere safe navigation.

Build an environment from implicit obstacle surfaces, form the navigation
density (smoothed obstacle bumps over a powered goal distance), and steer
along its gradient.  Includes closed-loop simulation, a navigation-function
baseline, numerical verification audits and a scenario-driven CLI.
"""

from .control import (
    ControllerConfig,
    NoiseConfig,
    blended_control,
    blended_field,
    gradient_control,
    gradient_field,
    make_field,
    rescale_speed,
    saturate,
)
from .density import (
    DensityParams,
    DistanceFn,
    distance_V,
    estimate_unsafe_stats,
    grad_V,
    grad_rho,
    grad_rho_values,
    rho,
    rho_values,
    theta_bound,
)
from .dynamics import (
    ArmGains,
    ArmTrajectory,
    IntegratorConfig,
    MappingReport,
    Outcome,
    Reference,
    Trajectory,
    TwoLinkArm,
    arm_bias,
    arm_energy,
    arm_mass_matrix,
    arm_points,
    generate_reference,
    map_task_obstacle_to_joint_space,
    simulate_arm,
    simulate_batch,
    simulate_integrator,
    step_euler,
    step_rk4,
)
from .errors import (
    DensnavError,
    DimensionMismatchError,
    DomainError,
    EstimationError,
    MalformedObstacleError,
    ScenarioError,
    UnboundedDensityError,
)
from .geometry import (
    AxisCylinder,
    CShape,
    Ellipsoid,
    Environment,
    ImplicitFn,
    Obstacle,
    Polynomial,
    Region,
    Sphere,
    Superellipse,
    Torus,
    WarpedEllipse,
    classify,
    eval_field,
    grad_field,
    min_h,
    sample_disc_states,
    sample_safe_states,
    validate_environment,
    wrap_angles,
)
from .baseline_nf import (
    ComparisonResult,
    SphereWorld,
    nf_control,
    nf_value,
    nf_values,
    outcome_counts,
    run_comparison,
)
from .scenario import (
    Scenario,
    build_arm,
    build_controller,
    build_environment,
    build_integrator,
    build_params,
    build_sphere_world,
    load_scenario,
    parse_scenario,
    sample_initial_conditions,
    scenario_hash,
    serialize_scenario,
)
from .smoothing import (
    BumpSpec,
    elementary_f,
    grad_psi,
    grad_psi_values,
    inverse_bump,
    phi,
    psi,
    psi_values,
    smooth_step,
    smooth_step_deriv,
)
from .verify import (
    ConvergenceStats,
    DivergenceField,
    DivergenceStats,
    GradientAuditStats,
    OccupancyStats,
    VerificationReport,
    convergence_monte_carlo,
    divergence_check,
    divergence_field,
    divergence_sweep,
    gradient_audit,
    occupancy_audit,
    summarize_runs,
)

__version__ = "0.1.0"
