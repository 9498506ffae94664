"""Augmented primal-dual gradient flow: simulation and stability certificates."""

from .certify import (
    Certificate,
    EnvelopeReport,
    RateConstants,
    build_pc,
    compute_certificate,
    compute_d0,
    compute_delta_min,
    compute_M_theta,
    condition_10a,
    condition_10b,
    lyapunov_value,
    solve_beta,
    verify_envelope,
)
from .counterexample import (
    CounterexampleParams,
    closed_form,
    closed_form_arrays,
    demonstrate_nonexponential,
    envelope_integral_bound,
    h_alpha,
    h_alpha_integral,
    initial_point,
)
from .dynamics import (
    DynamicsParams,
    apply_eta_scaling,
    augmented_lagrangian,
    make_field,
    plus_part,
    theta_rho,
    vector_field,
)
from .errors import (
    AssumptionViolationError,
    AugPdgdError,
    CertificateInvalidError,
    ConvergenceTimeoutError,
    DimensionError,
    DivergenceError,
    GenerationError,
    StiffnessError,
)
from .integrate import (
    Trajectory,
    integrate_adaptive,
    integrate_fixed,
    integrate_until_converged,
)
from .powercurtail import (
    ExperimentResult,
    FeederConfig,
    build_voltage_model,
    default_feeder_config,
    make_power_curtailment,
    run_experiment,
)
from .problem import (
    BUILTIN_PROBLEMS,
    ConvexProgram,
    KKTReport,
    PrimalDualPoint,
    check_licq,
    detect_active_set,
    kkt_residual,
    load_problem,
    make_counterexample,
    make_random_qp,
    make_soc_ball,
    qp_active_set_oracle,
    save_problem,
    solve_reference_kkt,
)

__version__ = "0.1.0"
