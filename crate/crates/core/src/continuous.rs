//! Exact continuous solver for the power-budgeted refresh allocation problem.
//!
//! The problem: minimize the word MSE `sum_b 4^b * alpha * exp(beta * t_b)`
//! over interval vectors `t` subject to the refresh power budget
//! `sum_b 1/t_b <= budget` and the floor `t_b >= delta`. The objective is
//! strictly convex and the feasible set convex, so KKT conditions are
//! necessary and sufficient. Stationarity for an interior bit reads
//! `4^b * alpha * beta * t^2 * exp(beta * t) = nu`, which inverts in closed
//! form through the Lambert W function:
//!
//! `t_b(nu) = (2/beta) * W0((beta/2) * sqrt(nu / (4^b * alpha * beta)))`
//!
//! clamped from below at `delta`. The achieved power is monotone
//! nonincreasing in the dual variable `nu`, so the unique `nu*` that makes
//! the budget tight is found by bisection. A box-constrained generalization
//! (per-bit lower/upper interval bounds) serves as the relaxation inside the
//! discrete solver's branch-and-bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambert::lambert_w0;
use crate::metrics::{
    bit_weight, max_power, psnr, refresh_power, word_mse, BerModel, DeviceParams, RefreshPlan,
};

/// Relative power defect at which the dual bisection accepts `nu`.
const POWER_REL_TOL: f64 = 1e-10;
/// Relative dual-interval width at which bisection stops (guards against
/// flat stretches where every bit is clamped).
const NU_WIDTH_REL_TOL: f64 = 1e-14;
/// Bisection iteration cap.
const MAX_BISECTION_ITERATIONS: u32 = 200;
/// Bracket-growth doublings allowed before declaring the budget unreachable.
const MAX_BRACKET_DOUBLINGS: u32 = 600;
/// A solution may exceed the budget by this relative slack (boxes whose
/// minimum power sits exactly at the budget approach it asymptotically).
const BUDGET_REL_SLACK: f64 = 1e-9;

/// Karush-Kuhn-Tucker certificate of a solved instance.
///
/// `lambda` is recovered from the stationarity identity
/// `lambda_b = 4^b * alpha * beta * exp(beta * t_b) - nu / t_b^2` and clamped
/// at zero so the multiplier invariant `lambda_b >= 0` always holds; a
/// negative unclamped value is then visible as both the dual-feasibility and
/// the stationarity defect of the clamped certificate (the two entries
/// coincide by construction). Stationarity entries are scaled by the
/// gradient magnitude `4^b * alpha * beta * exp(beta * t_b)` of their bit and
/// slackness entries by `nu * budget`, so every entry is a relative residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Multipliers of the per-bit interval floor, recovered via the
    /// stationarity identity and clamped at zero.
    pub lambda: Vec<f64>,
    /// Scaled per-bit defect of the stationarity condition.
    pub stationarity_residuals: Vec<f64>,
    /// Scaled magnitude of any negative unclamped multiplier.
    pub dual_feasibility_residuals: Vec<f64>,
    /// Relative amount by which the achieved power exceeds the budget.
    pub primal_feasibility_power: f64,
    /// Relative amount by which each interval violates its bounds.
    pub primal_feasibility_bounds: Vec<f64>,
    /// Scaled `|nu * (power - budget)|`.
    pub complementary_slackness_power: f64,
    /// Scaled `|lambda_b * (t_b - floor_b)|` per bit.
    pub complementary_slackness_bounds: Vec<f64>,
}

impl KktReport {
    /// Largest residual entry across every condition in the certificate.
    pub fn max_residual(&self) -> f64 {
        let vecs = self
            .stationarity_residuals
            .iter()
            .chain(&self.dual_feasibility_residuals)
            .chain(&self.primal_feasibility_bounds)
            .chain(&self.complementary_slackness_bounds);
        vecs.fold(
            self.primal_feasibility_power
                .max(self.complementary_slackness_power),
            |acc, &r| acc.max(r),
        )
    }
}

/// A solved continuous instance: the plan, its dual certificate, and the
/// achieved metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Optimal per-bit refresh intervals.
    pub plan: RefreshPlan,
    /// Dual variable of the power constraint; zero exactly when the budget
    /// admits the all-minimum plan.
    pub nu: f64,
    /// Achieved refresh power `sum_b 1/t_b`.
    pub power: f64,
    /// Achieved word MSE.
    pub mse: f64,
    /// Achieved PSNR in dB.
    pub psnr_db: f64,
    /// Dual evaluations spent locating `nu` (bracket growth + bisection).
    pub bisection_iterations: u32,
    /// KKT residual certificate of the returned solution.
    pub kkt: KktReport,
}

/// Unclamped closed-form interval of bit `b` at dual value `nu`.
fn lambert_interval(model: &BerModel, b: u32, nu: f64) -> Result<f64> {
    let arg = (model.beta / 2.0) * (nu / (bit_weight(b) * model.alpha * model.beta)).sqrt();
    Ok((2.0 / model.beta) * lambert_w0(arg)?.value)
}

/// Per-bit intervals induced by a dual value `nu >= 0`, floored at `delta`.
///
/// For `nu = 0` every bit sits at the floor; as `nu` grows, intervals grow
/// and the induced power shrinks. Higher-significance bits always receive
/// intervals no longer than lower-significance ones.
pub fn intervals_for_dual(model: &BerModel, params: &DeviceParams, nu: f64) -> Result<RefreshPlan> {
    if !nu.is_finite() || nu < 0.0 {
        return Err(Error::domain(format!(
            "dual variable must be finite and >= 0, got {nu}"
        )));
    }
    let mut intervals = Vec::with_capacity(params.bits as usize);
    for b in 0..params.bits {
        intervals.push(params.delta.max(lambert_interval(model, b, nu)?));
    }
    RefreshPlan::new(intervals)
}

/// Generic dual bisection: find `nu` making the induced power meet `budget`.
///
/// `plan_at` must induce a power that is monotone nonincreasing in `nu`, with
/// the power at `nu = 0` strictly above the budget (the caller handles the
/// trivial case). Returns the dual value, the plan at it, and the number of
/// dual evaluations.
fn bisect_dual(
    budget: f64,
    mut plan_at: impl FnMut(f64) -> Result<RefreshPlan>,
) -> Result<(f64, RefreshPlan, u32)> {
    let mut evaluations = 0;
    let mut eval = |nu: f64, evals: &mut u32| -> Result<(RefreshPlan, f64)> {
        *evals += 1;
        let plan = plan_at(nu)?;
        let power = refresh_power(&plan)?;
        Ok((plan, power))
    };

    // Grow the upper bracket endpoint until its power falls to the budget.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let (mut plan_hi, mut power_hi) = eval(hi, &mut evaluations)?;
    let mut doublings = 0;
    while power_hi > budget {
        if doublings >= MAX_BRACKET_DOUBLINGS {
            if power_hi <= budget * (1.0 + BUDGET_REL_SLACK) {
                // The induced power approaches the budget asymptotically
                // (every bit pinned at its upper bound); accept.
                return Ok((hi, plan_hi, evaluations));
            }
            return Err(Error::NonConvergence(format!(
                "no dual value reaches the power budget {budget} (power stuck at {power_hi})"
            )));
        }
        doublings += 1;
        lo = hi;
        hi *= 2.0;
        (plan_hi, power_hi) = eval(hi, &mut evaluations)?;
    }

    for _ in 0..MAX_BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let (plan_mid, power_mid) = eval(mid, &mut evaluations)?;
        if (power_mid - budget).abs() <= POWER_REL_TOL * budget {
            return Ok((mid, plan_mid, evaluations));
        }
        if power_mid > budget {
            lo = mid;
        } else {
            hi = mid;
            plan_hi = plan_mid;
        }
        if hi - lo <= NU_WIDTH_REL_TOL * hi {
            // Feasible endpoint of a bracket too narrow to split further.
            return Ok((hi, plan_hi, evaluations));
        }
    }
    Err(Error::NonConvergence(format!(
        "dual bisection did not converge within {MAX_BISECTION_ITERATIONS} iterations"
    )))
}

fn finish_report(
    model: &BerModel,
    budget: f64,
    plan: RefreshPlan,
    nu: f64,
    bisection_iterations: u32,
    lower: &[f64],
    upper: &[f64],
) -> Result<SolveReport> {
    let power = refresh_power(&plan)?;
    let mse = word_mse(model, &plan);
    let psnr_db = psnr(mse, plan.bits())?;
    let kkt = kkt_certificate(model, budget, &plan, nu, lower, upper);
    Ok(SolveReport {
        plan,
        nu,
        power,
        mse,
        psnr_db,
        bisection_iterations,
        kkt,
    })
}

fn check_budget(budget: f64) -> Result<()> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::domain(format!(
            "power budget must be finite and > 0, got {budget}"
        )));
    }
    Ok(())
}

/// Solve the refresh allocation problem for a power budget.
///
/// Budgets at or above the maximum power `B/delta` admit the all-minimum
/// plan, returned with `nu = 0`. Otherwise the power constraint binds and
/// the returned plan satisfies it with equality (to the bisection tolerance).
pub fn solve(model: &BerModel, params: &DeviceParams, budget: f64) -> Result<SolveReport> {
    check_budget(budget)?;
    let floors = vec![params.delta; params.bits as usize];
    let ceilings = vec![f64::INFINITY; params.bits as usize];
    if budget >= max_power(params) {
        let plan = RefreshPlan::uniform(params.bits, params.delta)?;
        return finish_report(model, budget, plan, 0.0, 0, &floors, &ceilings);
    }
    let (nu, plan, iterations) =
        bisect_dual(budget, |nu| intervals_for_dual(model, params, nu))?;
    finish_report(model, budget, plan, nu, iterations, &floors, &ceilings)
}

/// Solve with per-bit interval bounds `lower_b <= t_b <= upper_b`.
///
/// This generalizes [`solve`]: the closed-form interval of each bit is
/// clamped into its box, and the induced power stays monotone in the dual
/// variable. Upper bounds may be infinite. The box must respect the device
/// floor (`lower_b >= delta`) and admit the budget (`sum_b 1/upper_b` within
/// it); the all-lower corner is returned with `nu = 0` whenever it already
/// meets the budget.
pub fn solve_boxed(
    model: &BerModel,
    params: &DeviceParams,
    budget: f64,
    lower: &[f64],
    upper: &[f64],
) -> Result<SolveReport> {
    check_budget(budget)?;
    let bits = params.bits as usize;
    if lower.len() != bits || upper.len() != bits {
        return Err(Error::domain(format!(
            "bounds must have one entry per bit: expected {bits}, got {} lower / {} upper",
            lower.len(),
            upper.len()
        )));
    }
    for b in 0..bits {
        let (l, u) = (lower[b], upper[b]);
        if !l.is_finite() || l < params.delta {
            return Err(Error::domain(format!(
                "lower bound of bit {b} must be finite and >= delta ({}), got {l}",
                params.delta
            )));
        }
        if u.is_nan() || u < l {
            return Err(Error::domain(format!(
                "upper bound of bit {b} must be >= its lower bound {l}, got {u}"
            )));
        }
    }
    let min_power: f64 = upper.iter().map(|&u| if u.is_finite() { 1.0 / u } else { 0.0 }).sum();
    if min_power > budget * (1.0 + BUDGET_REL_SLACK) {
        return Err(Error::Infeasible { min_power, budget });
    }

    let all_lower = RefreshPlan::new(lower.to_vec())?;
    if refresh_power(&all_lower)? <= budget {
        // The power-hungriest corner of the box already fits: it is also the
        // MSE-smallest point, hence optimal, and the budget is slack.
        return finish_report(model, budget, all_lower, 0.0, 0, lower, upper);
    }

    let (nu, plan, iterations) = bisect_dual(budget, |nu| {
        let mut intervals = Vec::with_capacity(bits);
        for b in 0..params.bits {
            let raw = lambert_interval(model, b, nu)?;
            intervals.push(raw.clamp(lower[b as usize], upper[b as usize]));
        }
        RefreshPlan::new(intervals)
    })?;
    finish_report(model, budget, plan, nu, iterations, lower, upper)
}

/// Recompute the KKT certificate of a solved report.
///
/// Intended for reports produced by [`solve`]; the certificate of a solution
/// from [`solve_boxed`] is available as its `kkt` field. Large residuals are
/// reported, never treated as errors, so deliberately perturbed plans can be
/// examined.
pub fn verify_kkt(
    model: &BerModel,
    params: &DeviceParams,
    budget: f64,
    report: &SolveReport,
) -> KktReport {
    let bits = report.plan.intervals().len();
    let floors = vec![params.delta; bits];
    let ceilings = vec![f64::INFINITY; bits];
    kkt_certificate(model, budget, &report.plan, report.nu, &floors, &ceilings)
}

/// Build the scaled KKT residual certificate of a plan/dual pair over a box.
fn kkt_certificate(
    model: &BerModel,
    budget: f64,
    plan: &RefreshPlan,
    nu: f64,
    lower: &[f64],
    upper: &[f64],
) -> KktReport {
    let n = plan.intervals().len();
    let mut lambda = Vec::with_capacity(n);
    let mut stationarity = Vec::with_capacity(n);
    let mut dual_feasibility = Vec::with_capacity(n);
    let mut primal_bounds = Vec::with_capacity(n);
    let mut slack_bounds = Vec::with_capacity(n);

    let power: f64 = plan.intervals().iter().map(|t| 1.0 / t).sum();
    let slack_scale = nu * budget;
    let scaled_slack = |raw: f64| if slack_scale > 0.0 { raw / slack_scale } else { raw };

    for (b, &t) in plan.intervals().iter().enumerate() {
        let l = lower[b];
        let u = upper[b];
        // Gradient magnitude of the objective term; the natural per-bit scale.
        let scale = bit_weight(b as u32) * model.alpha * model.beta * (model.beta * t).exp();
        let raw = scale - nu / (t * t);
        let at_lower = t <= l;
        let at_upper = u.is_finite() && t >= u;

        let (lam, stat) = if at_lower {
            // Floor multiplier absorbs a positive gradient excess.
            (raw.max(0.0), raw.min(0.0).abs() / scale)
        } else if at_upper {
            // An implicit ceiling multiplier absorbs a negative excess; only
            // a positive excess is a genuine stationarity defect here.
            (0.0, raw.max(0.0) / scale)
        } else {
            // Interior bit: the identity should make lambda vanish; any
            // clamped-away negative part is the stationarity defect.
            (raw.max(0.0), raw.min(0.0).abs() / scale)
        };
        lambda.push(lam);
        stationarity.push(stat);
        // lambda is clamped at zero, so the dual-feasibility defect equals
        // the clamped-away magnitude.
        dual_feasibility.push(if at_upper { 0.0 } else { raw.min(0.0).abs() / scale });

        let below = (l - t).max(0.0) / l;
        let above = if u.is_finite() { (t - u).max(0.0) / u } else { 0.0 };
        primal_bounds.push(below.max(above));
        slack_bounds.push(scaled_slack((lam * (t - l)).abs()));
    }

    KktReport {
        lambda,
        stationarity_residuals: stationarity,
        dual_feasibility_residuals: dual_feasibility,
        primal_feasibility_power: (power - budget).max(0.0) / budget,
        primal_feasibility_bounds: primal_bounds,
        complementary_slackness_power: scaled_slack((nu * (power - budget)).abs()),
        complementary_slackness_bounds: slack_bounds,
    }
}
