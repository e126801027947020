//! Threshold-kernel jump detection and volatility estimation for
//! jump-diffusion processes observed at high frequency.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! core: path simulation, exact misclassification loss and its optimal
//! threshold, closed-form threshold approximations, kernel estimators of the
//! jump density at the origin and of spot variance, and the iterative
//! fixed-point estimation algorithms. File formats, the Monte Carlo harness
//! and the command-line front end live in `tkjump-tools`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod iterative;
pub mod jump_density;
pub mod law;
pub mod math;
pub mod simulate;
pub mod spot_vol;
pub mod thresholds;

pub use error::{Error, Result};
pub use iterative::{
    algo_constant_first_order, algo_constant_first_order_with, algo_constant_second_order, algo_local, oracle_threshold,
    sample_loss, AlgorithmOutput, AlgoOptions, EstimationReport, F0ThresholdMode, Method,
    IterationRecord, IterationTrace, Order, Status,
};
pub use jump_density::{
    conditional_density_gap, density_threshold, estimate_f0, minimize_exp_plus_linear,
    silverman_bandwidth, DensityEstimate, RightKernel,
};
pub use law::JumpLaw;
pub use simulate::{merton_density, simulate_path, HestonMertonConfig, Latent, SamplePath};
pub use spot_vol::{
    builtin_kernels, kw, mse_expansion, one_sided_estimates, plug_in_bandwidth, spot_series, tkw,
    truncated_quarticity, tsrvv, Kernel, Normalization, VolModelSpec,
};
pub use thresholds::{
    classify, estimate_n_j_iv, fixed_point_residual, lambda_sigma_hat, loss_exact,
    optimal_threshold_exact, threshold_first_order, threshold_second_order, Classification,
    LocalParams, ThresholdVector,
};
