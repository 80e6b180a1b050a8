"""Joint multi-user blind deconvolution and demixing with off-the-grid delays.

A numpy/scipy library that recovers, from a single frequency-domain
measurement vector, the continuous multipath delays and encoded message
magnitudes of several users at once: a purpose-built operator-splitting
solver for the dual semidefinite program, dual-polynomial delay extraction
(unit-circle root finding or grid search, Newton-polished), least-squares
message decoding, an SDP-free constructive recoverability certificate, and
a seeded Monte Carlo experiment harness.
"""

from .model import (
    Channel,
    Codebook,
    GridSpec,
    LiftedTuple,
    Measurement,
    Message,
    atomic_norm_of_decomposition,
    build_lifted,
    lift_adjoint,
    lift_forward,
    min_separation,
    steering_vector,
    synthesize_direct,
    wrap_distance,
)
from .solver import (
    DualSolution,
    FeasibilityReport,
    SolverOptions,
    check_dual_feasibility,
    project_psd,
    project_toeplitz_affine,
    solve_noiseless,
    solve_noisy,
)
from .recovery import (
    DelayEstimate,
    GramPoly,
    OverParameterizedError,
    RecoverOptions,
    RecoveryResult,
    UserDecode,
    decode_messages,
    delays_by_grid,
    delays_by_roots,
    dual_polynomial,
    gram_coefficients,
    least_squares_amplitudes,
)
from .certificate import (
    CertificateReport,
    KernelWeights,
    build_certificate,
    fejer_squared_closed_form,
    g_weights,
    kernel_matrix,
    kernel_scalar,
)
from .oracle import (
    BudgetExceededError,
    OracleConfig,
    direct_adjoint_pair,
    exhaustive_grid_recover,
    finite_difference_kernel_check,
)
from .harness import (
    ExperimentConfig,
    ExperimentSummary,
    Instance,
    InstanceSpec,
    NoiseModel,
    add_noise,
    emit_tables,
    gen_instance,
    match_delays,
    nmse,
    recover_from_solution,
    rng_stream,
    run_experiment,
    ser,
)

__version__ = "0.1.0"
