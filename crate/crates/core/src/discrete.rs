//! Discrete refresh allocation: intervals restricted to multiples of a step.
//!
//! With step size `step = gamma * delta`, intervals are `t_b = step * z_b`
//! for positive integers `z_b`, and the problem becomes a convex integer
//! program: minimize `sum_b 4^b * alpha * exp(beta * step * z_b)` subject to
//! `(1/step) * sum_b 1/z_b <= budget` and `1 <= z_b <= z_cap`. A best-first
//! branch-and-bound over box-constrained continuous relaxations solves it
//! exactly at word scale; an exhaustive enumeration oracle covers small
//! instances for verification.
//!
//! Both solvers score candidate vectors with the same two functions
//! ([`discrete_power`], [`discrete_mse`]), summing in bit order, so their
//! feasibility decisions and tie-breaks agree bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::continuous::{solve_boxed, SolveReport};
use crate::error::{Error, Result};
use crate::metrics::{bit_weight, psnr, BerModel, DeviceParams};

/// Relative slack above the incumbent MSE below which a node may still
/// contain the optimum or a lexicographic tie; nodes are pruned only beyond
/// it. Far larger than the relaxation's own numerical error (~1e-9), far
/// smaller than any real MSE gap between neighboring lattice points.
const PRUNE_REL_SLACK: f64 = 1e-7;
/// A relaxed interval within this distance of an integer step multiple (in
/// step units) is considered integral.
const INTEGRALITY_TOL: f64 = 1e-9;
/// Branch-and-bound node budget; beyond it the incumbent is returned with
/// `proven_optimal = false`.
const NODE_CAP: u64 = 1_000_000;

/// Discrete interval assignment: `t_b = step * z_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePlan {
    /// Step counts per bit position, index 0 = LSB; every entry in `[1, z_cap]`.
    pub z: Vec<u32>,
    /// Interval step size `gamma * delta` in seconds.
    pub step: f64,
    /// Upper limit on step counts used during the search.
    pub z_cap: u32,
}

impl DiscretePlan {
    /// The intervals `step * z_b` in seconds.
    pub fn intervals(&self) -> Vec<f64> {
        self.z.iter().map(|&k| self.step * f64::from(k)).collect()
    }
}

/// A solved discrete instance with search diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolveReport {
    /// The best step-count vector found.
    pub plan: DiscretePlan,
    /// Achieved refresh power `(1/step) * sum_b 1/z_b`.
    pub power: f64,
    /// Achieved word MSE.
    pub mse: f64,
    /// Achieved PSNR in dB.
    pub psnr_db: f64,
    /// Relaxations solved (branch-and-bound) or lattice points scored
    /// (exhaustive oracle).
    pub nodes_explored: u64,
    /// Incumbent MSE minus the root relaxation MSE (zero for the oracle,
    /// which needs no relaxation).
    pub relaxation_gap: f64,
    /// Whether the search closed; false only when the node budget ran out.
    pub proven_optimal: bool,
}

/// Canonical refresh power of a step-count vector.
pub fn discrete_power(step: f64, z: &[u32]) -> f64 {
    z.iter().map(|&k| 1.0 / (step * f64::from(k))).sum()
}

/// Canonical word MSE of a step-count vector.
pub fn discrete_mse(model: &BerModel, step: f64, z: &[u32]) -> f64 {
    z.iter()
        .enumerate()
        .map(|(b, &k)| {
            bit_weight(b as u32) * model.alpha * (model.beta * step * f64::from(k)).exp()
        })
        .sum()
}

/// Step-count cap beyond which even the least-significant bit's error term
/// reaches order one: `ceil(ln(3/alpha) / (beta * step))`, at least 1.
/// Longer intervals are outside the error model's validity, so this is the
/// default search limit when the caller does not supply one.
pub fn default_z_cap(model: &BerModel, params: &DeviceParams) -> u32 {
    let cap = ((3.0 / model.alpha).ln() / (model.beta * params.step())).ceil();
    if cap.is_finite() && cap >= 1.0 {
        cap.min(f64::from(u32::MAX)) as u32
    } else {
        1
    }
}

fn check_inputs(budget: f64, z_cap: u32) -> Result<()> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::domain(format!(
            "power budget must be finite and > 0, got {budget}"
        )));
    }
    if z_cap < 1 {
        return Err(Error::domain("z_cap must be at least 1"));
    }
    Ok(())
}

/// `true` if `candidate` should replace `incumbent`: strictly smaller MSE, or
/// the same MSE with a lexicographically smaller step-count vector.
fn improves(candidate_mse: f64, candidate_z: &[u32], incumbent_mse: f64, incumbent_z: &[u32]) -> bool {
    candidate_mse < incumbent_mse
        || (candidate_mse == incumbent_mse && candidate_z < incumbent_z)
}

struct Node {
    lb: f64,
    seq: u64,
    lo: Vec<u32>,
    hi: Vec<u32>,
    /// Relaxed intervals in step units (`t_b / step`).
    relaxed: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; reverse so the smallest bound (then the
    // oldest node) pops first, which keeps exploration deterministic.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lb
            .total_cmp(&self.lb)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Exact solver for the discrete allocation problem.
///
/// Best-first branch-and-bound: each node is an integer box `[lo, hi]`,
/// bounded below by the box-constrained continuous relaxation. A node whose
/// relaxation lands on integer step counts is closed on the spot; otherwise
/// the bit farthest from an integer multiple is split at its floor/ceiling.
/// Every candidate vector is admitted through the same exact power test the
/// enumeration oracle uses, and ties are broken toward the lexicographically
/// smallest step-count vector.
pub fn solve_discrete(
    model: &BerModel,
    params: &DeviceParams,
    budget: f64,
    z_cap: u32,
) -> Result<DiscreteSolveReport> {
    check_inputs(budget, z_cap)?;
    let bits = params.bits as usize;
    let step = params.step();

    let widest = vec![z_cap; bits];
    let min_power = discrete_power(step, &widest);
    if min_power > budget {
        return Err(Error::Infeasible { min_power, budget });
    }

    // Guaranteed-feasible incumbent: the all-cap vector.
    let mut incumbent = widest.clone();
    let mut incumbent_mse = discrete_mse(model, step, &incumbent);

    let relax = |lo: &[u32], hi: &[u32]| -> Result<Option<(f64, Vec<f64>)>> {
        let lower: Vec<f64> = lo.iter().map(|&k| step * f64::from(k)).collect();
        let upper: Vec<f64> = hi.iter().map(|&k| step * f64::from(k)).collect();
        match solve_boxed(model, params, budget, &lower, &upper) {
            Ok(report) => {
                let relaxed = report
                    .plan
                    .intervals()
                    .iter()
                    .map(|t| t / step)
                    .collect();
                Ok(Some((report.mse, relaxed)))
            }
            Err(Error::Infeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut nodes_explored: u64 = 0;
    let mut capped = false;
    let mut seq: u64 = 0;
    let mut heap = BinaryHeap::new();

    let root = relax(&vec![1; bits], &widest)?
        .expect("root box was checked feasible");
    let root_lb = root.0;
    nodes_explored += 1;
    heap.push(Node {
        lb: root.0,
        seq,
        lo: vec![1; bits],
        hi: widest,
        relaxed: root.1,
    });

    while let Some(node) = heap.pop() {
        if node.lb > incumbent_mse * (1.0 + PRUNE_REL_SLACK) {
            continue;
        }

        if node.lo == node.hi {
            // Single lattice point: decide it exactly, no relaxation needed.
            if discrete_power(step, &node.lo) <= budget {
                let mse = discrete_mse(model, step, &node.lo);
                if improves(mse, &node.lo, incumbent_mse, &incumbent) {
                    incumbent = node.lo;
                    incumbent_mse = mse;
                }
            }
            continue;
        }

        let rounded: Vec<u32> = node
            .relaxed
            .iter()
            .zip(node.lo.iter().zip(&node.hi))
            .map(|(&r, (&l, &h))| (r.round() as u32).clamp(l, h))
            .collect();
        let integral = node
            .relaxed
            .iter()
            .all(|&r| (r - r.round()).abs() <= INTEGRALITY_TOL);

        if integral {
            if discrete_power(step, &rounded) <= budget {
                // The relaxation optimum itself is a lattice point: nothing
                // in this box can beat it, so the node is closed.
                let mse = discrete_mse(model, step, &rounded);
                if improves(mse, &rounded, incumbent_mse, &incumbent) {
                    incumbent = rounded;
                    incumbent_mse = mse;
                }
                continue;
            }
            // The relaxation sits on a lattice point that the exact power
            // test rejects (it overshoots the budget by rounding error), so
            // no fractional coordinate exists to branch on. Halve any
            // unpinned coordinate instead; boxes shrink strictly, so the
            // search still terminates.
            if let Some(j) = (0..bits).find(|&j| node.lo[j] < node.hi[j]) {
                let m = node.lo[j] + (node.hi[j] - node.lo[j]) / 2;
                for (child_lo_j, child_hi_j) in [(node.lo[j], m), (m + 1, node.hi[j])] {
                    push_child(
                        &node, j, child_lo_j, child_hi_j, step, budget, &relax, &mut heap,
                        &mut nodes_explored, &mut capped, &mut seq, incumbent_mse,
                    )?;
                }
            }
            // Fully pinned and rejected: the box holds no feasible point.
            continue;
        }

        // Round the relaxation up to the next step multiples: longer
        // intervals only shed power, so this candidate is feasible unless
        // rounding error says otherwise - the exact test decides.
        let rounded_up: Vec<u32> = node
            .relaxed
            .iter()
            .zip(node.lo.iter().zip(&node.hi))
            .map(|(&r, (&l, &h))| ((r - INTEGRALITY_TOL).ceil() as u32).clamp(l, h))
            .collect();
        if discrete_power(step, &rounded_up) <= budget {
            let mse = discrete_mse(model, step, &rounded_up);
            if improves(mse, &rounded_up, incumbent_mse, &incumbent) {
                incumbent = rounded_up;
                incumbent_mse = mse;
            }
        }

        // Branch on the unpinned bit farthest from its nearest step multiple.
        let j = (0..bits)
            .filter(|&j| node.lo[j] < node.hi[j])
            .max_by(|&a, &b| {
                let fa = (node.relaxed[a] - node.relaxed[a].round()).abs();
                let fb = (node.relaxed[b] - node.relaxed[b].round()).abs();
                fa.total_cmp(&fb)
            })
            .expect("a non-pinned node has an unpinned bit");
        // Both children are strictly smaller boxes than the parent whatever
        // the (clamped) split lands on, so the search always terminates.
        let split = node.relaxed[j].floor() as u32;
        let (left_hi, right_lo) = if split < node.lo[j] {
            (node.lo[j], node.lo[j] + 1)
        } else if split >= node.hi[j] {
            (node.hi[j] - 1, node.hi[j])
        } else {
            (split, split + 1)
        };
        for (child_lo_j, child_hi_j) in [(node.lo[j], left_hi), (right_lo, node.hi[j])] {
            push_child(
                &node, j, child_lo_j, child_hi_j, step, budget, &relax, &mut heap,
                &mut nodes_explored, &mut capped, &mut seq, incumbent_mse,
            )?;
        }
    }

    let power = discrete_power(step, &incumbent);
    let psnr_db = psnr(incumbent_mse, params.bits)?;
    Ok(DiscreteSolveReport {
        plan: DiscretePlan {
            z: incumbent,
            step,
            z_cap,
        },
        power,
        mse: incumbent_mse,
        psnr_db,
        nodes_explored,
        relaxation_gap: incumbent_mse - root_lb,
        proven_optimal: !capped,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_child(
    parent: &Node,
    j: usize,
    lo_j: u32,
    hi_j: u32,
    step: f64,
    budget: f64,
    relax: &impl Fn(&[u32], &[u32]) -> Result<Option<(f64, Vec<f64>)>>,
    heap: &mut BinaryHeap<Node>,
    nodes_explored: &mut u64,
    capped: &mut bool,
    seq: &mut u64,
    incumbent_mse: f64,
) -> Result<()> {
    if lo_j > hi_j {
        return Ok(());
    }
    let mut lo = parent.lo.clone();
    let mut hi = parent.hi.clone();
    lo[j] = lo_j;
    hi[j] = hi_j;
    // The child's least power sits at the all-hi corner; the exact test
    // there decides whether any lattice point of the child is feasible.
    if discrete_power(step, &hi) > budget {
        return Ok(());
    }
    if *nodes_explored >= NODE_CAP {
        *capped = true;
        return Ok(());
    }
    *nodes_explored += 1;
    if let Some((lb, relaxed)) = relax(&lo, &hi)? {
        if lb <= incumbent_mse * (1.0 + PRUNE_REL_SLACK) {
            *seq += 1;
            heap.push(Node {
                lb,
                seq: *seq,
                lo,
                hi,
                relaxed,
            });
        }
    }
    Ok(())
}

/// Exhaustive enumeration oracle for small instances.
///
/// Walks every step-count vector in `{1..z_cap}^B` in lexicographic order,
/// keeps the minimum-MSE vector passing the exact power test, and therefore
/// resolves ties toward the lexicographically smallest vector. Guarded to
/// `B <= 4` and `z_cap <= 40`.
pub fn brute_force_discrete(
    model: &BerModel,
    params: &DeviceParams,
    budget: f64,
    z_cap: u32,
) -> Result<DiscreteSolveReport> {
    check_inputs(budget, z_cap)?;
    let bits = params.bits as usize;
    if params.bits > 4 || z_cap > 40 {
        return Err(Error::TooLarge(format!(
            "exhaustive search is limited to 4 bits and a step cap of 40, got {} bits, cap {z_cap}",
            params.bits
        )));
    }
    let step = params.step();
    let min_power = discrete_power(step, &vec![z_cap; bits]);
    if min_power > budget {
        return Err(Error::Infeasible { min_power, budget });
    }

    let mut z = vec![1u32; bits];
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut points: u64 = 0;
    loop {
        points += 1;
        if discrete_power(step, &z) <= budget {
            let mse = discrete_mse(model, step, &z);
            let better = match &best {
                None => true,
                Some((best_mse, _)) => mse < *best_mse,
            };
            if better {
                best = Some((mse, z.clone()));
            }
        }
        // Odometer increment, last index fastest: lexicographic order.
        let mut pos = bits;
        let mut exhausted = false;
        loop {
            if pos == 0 {
                exhausted = true;
                break;
            }
            pos -= 1;
            if z[pos] < z_cap {
                z[pos] += 1;
                for entry in z.iter_mut().skip(pos + 1) {
                    *entry = 1;
                }
                break;
            }
        }
        if exhausted {
            break;
        }
    }

    let (mse, z) = best.expect("feasibility was checked against the all-cap vector");
    let power = discrete_power(step, &z);
    let psnr_db = psnr(mse, params.bits)?;
    Ok(DiscreteSolveReport {
        plan: DiscretePlan { z, step, z_cap },
        power,
        mse,
        psnr_db,
        nodes_explored: points,
        relaxation_gap: 0.0,
        proven_optimal: true,
    })
}

/// Continuous relaxation at the root of the discrete search: the box
/// `[step, step * z_cap]` per bit. Its MSE lower-bounds every lattice point.
pub fn root_relaxation(
    model: &BerModel,
    params: &DeviceParams,
    budget: f64,
    z_cap: u32,
) -> Result<SolveReport> {
    check_inputs(budget, z_cap)?;
    let bits = params.bits as usize;
    let step = params.step();
    let lower = vec![step; bits];
    let upper = vec![step * f64::from(z_cap); bits];
    solve_boxed(model, params, budget, &lower, &upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::solve;

    fn model() -> BerModel {
        BerModel::new(2.7737e-7, 1.9508).unwrap()
    }

    fn params(bits: u32, gamma: u32) -> DeviceParams {
        DeviceParams::new(bits, 0.064, gamma).unwrap()
    }

    #[test]
    fn single_bit_at_exact_budgets() {
        let m = model();
        let p = params(1, 1);
        // Full budget for one bit at the minimum interval.
        let r = solve_discrete(&m, &p, 1.0 / 0.064, 130).unwrap();
        assert_eq!(r.plan.z, vec![1]);
        // Half that: one step is infeasible, two steps exactly fit.
        let r = solve_discrete(&m, &p, 1.0 / (2.0 * 0.064), 130).unwrap();
        assert_eq!(r.plan.z, vec![2]);
        assert!((r.power - 1.0 / 0.128).abs() == 0.0);
    }

    #[test]
    fn two_bits_unique_max_power_point() {
        let m = model();
        let p = params(2, 1);
        let r = brute_force_discrete(&m, &p, 2.0 / 0.064, 30).unwrap();
        assert_eq!(r.plan.z, vec![1, 1]);
        let bb = solve_discrete(&m, &p, 2.0 / 0.064, 30).unwrap();
        assert_eq!(bb.plan.z, r.plan.z);
    }

    #[test]
    fn matches_the_oracle_on_fixed_instances() {
        let m = model();
        for (bits, gamma, budget, z_cap) in [
            (3u32, 1u32, 20.0, 30u32),
            (3, 1, 8.0, 25),
            (3, 5, 5.0, 20),
            (3, 15, 2.5, 9),
            (2, 15, 1.8, 12),
            (4, 1, 30.0, 12),
        ] {
            let p = params(bits, gamma);
            let bb = solve_discrete(&m, &p, budget, z_cap).unwrap();
            let oracle = brute_force_discrete(&m, &p, budget, z_cap).unwrap();
            assert_eq!(bb.plan.z, oracle.plan.z, "{bits} bits, gamma {gamma}, budget {budget}");
            assert_eq!(bb.mse, oracle.mse);
            assert_eq!(bb.power, oracle.power);
            assert!(bb.proven_optimal);
        }
    }

    #[test]
    fn relaxation_bounds_the_discrete_solution() {
        let m = model();
        let p = params(8, 15);
        for budget in [2.0, 4.0, 6.5, 8.0] {
            let relax = root_relaxation(&m, &p, budget, 9).unwrap();
            let disc = solve_discrete(&m, &p, budget, 9).unwrap();
            assert!(relax.mse <= disc.mse * (1.0 + 1e-9), "budget {budget}");
            assert!(disc.relaxation_gap >= -1e-9 * disc.mse);
        }
    }

    #[test]
    fn relaxation_with_huge_cap_reduces_to_the_free_solver() {
        let m = model();
        let p = params(8, 1);
        for budget in [2.4, 10.0, 60.0] {
            let relax = root_relaxation(&m, &p, budget, 10_000).unwrap();
            let free = solve(&m, &p, budget).unwrap();
            assert!(
                (relax.mse - free.mse).abs() <= 1e-8 * free.mse,
                "budget {budget}: {} vs {}",
                relax.mse,
                free.mse
            );
        }
    }

    #[test]
    fn discrete_never_beats_continuous() {
        let m = model();
        for gamma in [1u32, 5, 15] {
            let p = params(8, gamma);
            let cap = default_z_cap(&m, &p);
            for budget in [1.5, 3.0, 6.0] {
                if discrete_power(p.step(), &[cap; 8]) > budget {
                    continue;
                }
                let disc = solve_discrete(&m, &p, budget, cap).unwrap();
                let cont = solve(&m, &p, budget).unwrap();
                assert!(disc.mse >= cont.mse * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn infeasible_and_malformed_inputs() {
        let m = model();
        let p = params(8, 15);
        // Max power with a cap of 9 steps is 8/(0.96*9); ask for less.
        let err = solve_discrete(&m, &p, 0.5, 9).unwrap_err();
        match err {
            Error::Infeasible { min_power, budget } => {
                assert!((min_power - 8.0 / (0.96 * 9.0)).abs() < 1e-12 * min_power);
                assert_eq!(budget, 0.5);
            }
            other => panic!("expected infeasibility, got {other}"),
        }
        assert!(solve_discrete(&m, &p, -1.0, 9).is_err());
        assert!(solve_discrete(&m, &p, 5.0, 0).is_err());
        assert!(matches!(
            brute_force_discrete(&m, &params(5, 1), 10.0, 10),
            Err(Error::TooLarge(_))
        ));
        assert!(matches!(
            brute_force_discrete(&m, &params(3, 1), 10.0, 41),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn default_caps_for_common_steps() {
        let m = model();
        assert_eq!(default_z_cap(&m, &params(8, 1)), 130);
        assert_eq!(default_z_cap(&m, &params(8, 5)), 26);
        assert_eq!(default_z_cap(&m, &params(8, 15)), 9);
    }

    #[test]
    fn word_scale_instance_closes_quickly() {
        let m = model();
        let p = params(8, 1);
        let r = solve_discrete(&m, &p, 2.4, 130).unwrap();
        assert!(r.proven_optimal);
        assert!(r.power <= 2.4 * (1.0 + 1e-9));
        let cont = solve(&m, &p, 2.4).unwrap();
        assert!(r.mse >= cont.mse);
        assert!(
            r.mse <= cont.mse * 1.01,
            "single-step discretization should track the continuous optimum: {} vs {}",
            r.mse,
            cont.mse
        );
    }
}
