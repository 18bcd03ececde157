//! Identification of the drift matrix of a continuous-time stochastic linear
//! system `dX = A X dt + kappa B dU + C dW` from one trajectory driven by a
//! randomized white-noise input, together with the finite-time error bounds
//! that govern the least-squares estimate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod sim;
pub mod systems;
pub mod twofold;

pub use error::{Error, Result};
pub use linalg::{
    classify_stability, eigen_real_parts, largest_jordan_block, matrix_exponential,
    structural_constants, JordanInfo, Regime, SpectrumSummary, SquareMatrix,
    StructuralConstants, SystemAnalysis,
};
pub use sim::{
    draw_increments, simulate_trajectory, simulate_with, IncrementSource, Integrator, SimConfig,
    SystemSpec, Trajectory,
};
pub use systems::{reactor_matrix, reactor_system, scalar_system};
pub use estimator::{
    accumulate, error_identity_residual, estimate, estimate_against, run_checkpoints,
    scaled_error_series, self_normalized_noise, Checkpoint, CovarianceAccumulator, Estimate,
};
pub use bounds::{
    clock_limit, covmax_bound, covmin_bound, initial_state_bound, lil_envelope,
    quadratic_variation_clock, regularized_radius, riemann_zeta, self_normalized_radius,
    state_envelope, state_norm_bound, theorem1_rate, BoundReport, ConstantsUsed,
    LilBoundary,
};
