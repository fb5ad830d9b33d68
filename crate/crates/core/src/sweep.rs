//! Budget sweeps and power-savings comparisons.
//!
//! The baseline against which optimized allocations are judged gives every
//! bit position the same interval while spending the same total power
//! budget: `t = max(delta, B/budget)`. Sweeps evaluate the optimal, uniform,
//! and (optionally) discrete allocations over a budget grid; the savings
//! figures invert the question and ask how much power each method needs to
//! reach a fidelity target.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::continuous::solve;
use crate::discrete::{default_z_cap, solve_discrete};
use crate::error::{Error, Result};
use crate::metrics::{
    max_power, min_mse, psnr, refresh_power, word_mse, BerModel, DeviceParams, RefreshPlan,
};

/// Budget-bisection iteration cap for [`min_power_for_mse`].
const MAX_POWER_BISECTION_ITERATIONS: u32 = 200;
/// Relative MSE tolerance at which the budget bisection accepts.
const MSE_REL_TOL: f64 = 1e-8;
/// Relative budget-interval width at which the bisection stops.
const BUDGET_WIDTH_REL_TOL: f64 = 1e-12;

/// Interval allocation strategy for the savings comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationMethod {
    /// Per-bit optimal intervals from the continuous solver.
    Optimal,
    /// One shared interval consuming the whole budget.
    Uniform,
}

/// Discrete-solver outcome for one step multiplier within a sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOutcome {
    /// Step multiplier gamma this cell was solved with.
    pub gamma: u32,
    /// Achieved MSE, absent when the instance is infeasible at this budget.
    pub mse: Option<f64>,
    /// Reason the cell is absent, when it is.
    pub note: Option<String>,
}

/// One budget point of a sweep: optimal, uniform, and discrete outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// The power budget of this row.
    pub budget: f64,
    /// Power drawn by the optimal plan.
    pub power_optimal: f64,
    /// MSE of the optimal plan.
    pub mse_optimal: f64,
    /// PSNR of the optimal plan in dB.
    pub psnr_optimal_db: f64,
    /// Power drawn by the uniform baseline.
    pub power_uniform: f64,
    /// MSE of the uniform baseline.
    pub mse_uniform: f64,
    /// PSNR of the uniform baseline in dB.
    pub psnr_uniform_db: f64,
    /// Dual variable of the optimal solve.
    pub nu: f64,
    /// Optimal per-bit intervals, index 0 = LSB.
    pub intervals: Vec<f64>,
    /// One discrete outcome per requested step multiplier, in request order.
    pub discrete: Vec<DiscreteOutcome>,
}

/// Uniform baseline plan: every bit refreshed at `t = max(delta, B/budget)`.
///
/// The plan draws `B/t <= budget`, with equality whenever the budget is at
/// most the maximum power `B/delta`.
pub fn uniform_plan_for_budget(params: &DeviceParams, budget: f64) -> Result<RefreshPlan> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::domain(format!(
            "power budget must be finite and > 0, got {budget}"
        )));
    }
    let t = params.delta.max(f64::from(params.bits) / budget);
    RefreshPlan::uniform(params.bits, t)
}

/// Evaluate optimal, uniform, and discrete allocations over a budget grid.
///
/// Budgets must be positive and sorted ascending; one row is produced per
/// budget, in order. Each requested step multiplier is solved with its
/// default step-count cap, raised where necessary so the lattice roof
/// covers the row's widest continuous interval — otherwise the cap, not
/// the lattice spacing, would dominate the comparison at low budgets.
/// (That extension also keeps every in-sweep discrete instance feasible:
/// the budget already pays for `B` intervals at the continuous maximum.)
/// Should a discrete instance still be infeasible, the row records an
/// absent MSE with the reason.
pub fn run_sweep(
    model: &BerModel,
    params: &DeviceParams,
    budgets: &[f64],
    gammas: &[u32],
) -> Result<Vec<SweepRow>> {
    for pair in budgets.windows(2) {
        if pair[0] > pair[1] {
            return Err(Error::domain(
                "budgets must be sorted in ascending order".to_string(),
            ));
        }
    }
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let report = solve(model, params, budget)?;
        let uniform = uniform_plan_for_budget(params, budget)?;
        let power_uniform = refresh_power(&uniform)?;
        let mse_uniform = word_mse(model, &uniform);
        let psnr_uniform_db = psnr(mse_uniform, params.bits)?;

        // Intervals are nonincreasing in bit significance, so index 0 is
        // the widest; the lattice must be allowed to reach at least there.
        let widest = report.plan.intervals()[0];
        let mut discrete = Vec::with_capacity(gammas.len());
        for &gamma in gammas {
            let params_g = DeviceParams::new(params.bits, params.delta, gamma)?;
            let needed = (widest / params_g.step()).ceil() as u32 + 1;
            let z_cap = default_z_cap(model, &params_g).max(needed);
            match solve_discrete(model, &params_g, budget, z_cap) {
                Ok(r) => discrete.push(DiscreteOutcome {
                    gamma,
                    mse: Some(r.mse),
                    note: None,
                }),
                Err(e @ Error::Infeasible { .. }) => discrete.push(DiscreteOutcome {
                    gamma,
                    mse: None,
                    note: Some(e.to_string()),
                }),
                Err(e) => return Err(e),
            }
        }

        rows.push(SweepRow {
            budget,
            power_optimal: report.power,
            mse_optimal: report.mse,
            psnr_optimal_db: report.psnr_db,
            power_uniform,
            mse_uniform,
            psnr_uniform_db,
            nu: report.nu,
            intervals: report.plan.intervals().to_vec(),
            discrete,
        });
    }
    Ok(rows)
}

/// Default sweep grid: 200 log-spaced budgets from 1 to the maximum power.
pub fn default_budget_grid(params: &DeviceParams) -> Vec<f64> {
    log_spaced_budgets(1.0, max_power(params), 200)
}

/// `count` log-spaced values from `min` to `max` inclusive, ascending.
pub fn log_spaced_budgets(min: f64, max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    let (ln_min, ln_max) = (min.ln(), max.ln());
    (0..count)
        .map(|i| {
            let f = i as f64 / (count - 1) as f64;
            (ln_min + f * (ln_max - ln_min)).exp()
        })
        .collect()
}

/// Smallest power budget with which `method` reaches `target_mse`.
///
/// The uniform baseline admits a closed form: the shared interval must be
/// `t = (1/beta) * ln(3 * target / (alpha * (4^B - 1)))`, floored at delta.
/// The optimal method bisects on the budget, using the monotone decrease of
/// optimal MSE in budget, until the achieved MSE is within a relative
/// tolerance of 1e-8 (or the budget bracket collapses).
pub fn min_power_for_mse(
    model: &BerModel,
    params: &DeviceParams,
    target_mse: f64,
    method: AllocationMethod,
) -> Result<f64> {
    if !target_mse.is_finite() || target_mse <= 0.0 {
        return Err(Error::domain(format!(
            "target MSE must be finite and > 0, got {target_mse}"
        )));
    }
    let floor = min_mse(model, params);
    if target_mse < floor {
        return Err(Error::UnreachableFidelity {
            target: target_mse,
            min_mse: floor,
        });
    }

    match method {
        AllocationMethod::Uniform => {
            let weight_sum = 4f64.powi(params.bits as i32) - 1.0;
            let t = (1.0 / model.beta) * (3.0 * target_mse / (model.alpha * weight_sum)).ln();
            Ok(f64::from(params.bits) / params.delta.max(t))
        }
        AllocationMethod::Optimal => {
            // Bracket: halve the budget until the target is out of reach.
            let mut lo = max_power(params);
            let mut hi = lo;
            loop {
                let mse_lo = solve(model, params, lo)?.mse;
                if mse_lo > target_mse {
                    break;
                }
                hi = lo;
                lo *= 0.5;
            }
            for _ in 0..MAX_POWER_BISECTION_ITERATIONS {
                if hi - lo <= BUDGET_WIDTH_REL_TOL * hi {
                    return Ok(hi);
                }
                let mid = 0.5 * (lo + hi);
                let mse_mid = solve(model, params, mid)?.mse;
                if (mse_mid - target_mse).abs() <= MSE_REL_TOL * target_mse {
                    return Ok(mid);
                }
                if mse_mid <= target_mse {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Err(Error::NonConvergence(format!(
                "budget bisection for target MSE {target_mse} did not converge"
            )))
        }
    }
}

/// Fraction of refresh power saved by optimal allocation at a fidelity
/// target: `1 - P_optimal / P_uniform` where both are minimum powers
/// reaching `target_mse`.
pub fn power_savings(model: &BerModel, params: &DeviceParams, target_mse: f64) -> Result<f64> {
    let optimal = min_power_for_mse(model, params, target_mse, AllocationMethod::Optimal)?;
    let uniform = min_power_for_mse(model, params, target_mse, AllocationMethod::Uniform)?;
    Ok(1.0 - optimal / uniform)
}

/// Format a float with 17 significant digits (round-trip safe).
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write sweep rows as CSV.
///
/// Columns: `budget,power_optimal,mse_optimal,psnr_optimal_db,power_uniform,`
/// `mse_uniform,psnr_uniform_db,nu,t_0,...,t_{B-1}` plus one
/// `mse_discrete_g<gamma>` column per requested step multiplier (in request
/// order); an infeasible discrete cell is left empty. Floats carry 17
/// significant digits so the file parses back to identical values.
pub fn write_sweep_csv<W: Write>(
    mut out: W,
    bits: u32,
    gammas: &[u32],
    rows: &[SweepRow],
) -> Result<()> {
    let mut header: Vec<String> = [
        "budget",
        "power_optimal",
        "mse_optimal",
        "psnr_optimal_db",
        "power_uniform",
        "mse_uniform",
        "psnr_uniform_db",
        "nu",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for b in 0..bits {
        header.push(format!("t_{b}"));
    }
    for g in gammas {
        header.push(format!("mse_discrete_g{g}"));
    }
    writeln!(out, "{}", header.join(","))?;

    for row in rows {
        let mut fields = vec![
            fmt(row.budget),
            fmt(row.power_optimal),
            fmt(row.mse_optimal),
            fmt(row.psnr_optimal_db),
            fmt(row.power_uniform),
            fmt(row.mse_uniform),
            fmt(row.psnr_uniform_db),
            fmt(row.nu),
        ];
        for t in &row.intervals {
            fields.push(fmt(*t));
        }
        for g in gammas {
            let cell = row
                .discrete
                .iter()
                .find(|d| d.gamma == *g)
                .and_then(|d| d.mse)
                .map(fmt)
                .unwrap_or_default();
            fields.push(cell);
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Savings at a PSNR target, converting the target through the PSNR/MSE
/// bijection at the given word width.
pub fn power_savings_at_psnr(
    model: &BerModel,
    params: &DeviceParams,
    target_psnr_db: f64,
) -> Result<f64> {
    let target_mse = crate::metrics::mse_for_psnr(target_psnr_db, params.bits)?;
    power_savings(model, params, target_mse)
}
