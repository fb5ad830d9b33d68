//! Optimal refresh-interval allocation for multi-bit memory words.
//!
//! Stored bits decay between refreshes: the longer a cell goes unrefreshed,
//! the likelier it is to flip, and a flip in bit position `b` of a binary
//! word costs `4^b / 3` in expected squared error. Refreshing costs power in
//! proportion to `1/t` for a refresh interval `t`. This crate answers the
//! question: given a total refresh-power budget for a `B`-bit word, how
//! should the per-bit refresh intervals be chosen to minimize the word's
//! mean squared error?
//!
//! The exponential bit-error-rate model `ber(t) = alpha * exp(beta * t) / 3`
//! makes the problem convex and separable, so the optimum has a closed form
//! in terms of the Lambert W function plus a scalar dual variable found by
//! bisection. The crate provides:
//!
//! - [`lambert`]: the principal branch of the Lambert W function.
//! - [`metrics`]: the BER model, refresh plans, power, word MSE, and PSNR.
//! - [`continuous`]: the exact continuous solver, box-constrained variant,
//!   and an a-posteriori optimality (KKT) verifier.
//! - [`discrete`]: a branch-and-bound solver for hardware that only offers
//!   integer multiples of a base interval, plus a brute-force cross-check.
//! - [`calibration`]: least-squares fitting of the BER model from retention
//!   measurements, and CSV measurement input.
//! - [`sweep`]: budget sweeps comparing optimal, uniform, and discrete
//!   allocations, minimum-power-for-fidelity search, and savings figures.
//!
//! # Example
//!
//! ```
//! use refresh_opt::{solve, DeviceParams, default_model};
//!
//! let model = default_model();
//! let params = DeviceParams::new(8, 0.064, 1).unwrap();
//! let report = solve(&model, &params, 2.4).unwrap();
//! // The optimum spends the whole budget and protects high-order bits
//! // with shorter intervals.
//! assert!((report.power - 2.4).abs() < 1e-9 * 2.4);
//! let t = report.plan.intervals();
//! assert!(t.windows(2).all(|w| w[0] >= w[1]));
//! ```

#![warn(missing_docs)]

pub mod calibration;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod lambert;
pub mod metrics;
pub mod sweep;

pub use calibration::{
    default_model, fit_ber_model, load_measurements, read_measurements, FitResult,
    RetentionMeasurement,
};
pub use continuous::{intervals_for_dual, solve, solve_boxed, verify_kkt, KktReport, SolveReport};
pub use discrete::{
    brute_force_discrete, default_z_cap, discrete_mse, discrete_power, root_relaxation,
    solve_discrete, DiscretePlan, DiscreteSolveReport,
};
pub use error::{Error, Result};
pub use lambert::{lambert_w0, LambertResult};
pub use metrics::{
    bit_error_rate, max_power, min_mse, mse_for_psnr, psnr, refresh_power, word_mse, BerModel,
    BerSample, DeviceParams, RefreshPlan,
};
pub use sweep::{
    default_budget_grid, log_spaced_budgets, min_power_for_mse, power_savings,
    power_savings_at_psnr, run_sweep, uniform_plan_for_budget, write_sweep_csv, AllocationMethod,
    DiscreteOutcome, SweepRow,
};
