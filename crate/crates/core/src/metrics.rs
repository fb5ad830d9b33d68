//! Core model parameters and the resource/fidelity metrics.
//!
//! A memory word has `B` bit positions; position `b` (0 = LSB) is refreshed
//! every `t_b` seconds. Refreshing costs normalized power `1/t_b` per bit,
//! while waiting longer raises the per-bit error rate `alpha * exp(beta * t)`
//! and therefore the expected squared numeric error of the stored word,
//! which weights position `b` by its squared place value `4^b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the exponential bit-error-rate law `ber(t) = alpha * exp(beta * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerModel {
    /// Dimensionless BER scale at `t = 0`; strictly positive.
    pub alpha: f64,
    /// Growth rate per second of refresh interval; strictly positive.
    pub beta: f64,
}

impl BerModel {
    /// Validating constructor.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain(format!("alpha must be finite and > 0, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::domain(format!("beta must be finite and > 0, got {beta}")));
        }
        Ok(BerModel { alpha, beta })
    }
}

/// Device-level constants of an allocation problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Word width `B` in bits; at least 1.
    pub bits: u32,
    /// Minimum refresh interval `delta` in seconds; strictly positive.
    pub delta: f64,
    /// Discrete step multiplier `gamma` (step size is `gamma * delta`);
    /// at least 1, consulted only by the discrete solver.
    pub gamma: u32,
}

impl DeviceParams {
    /// Validating constructor.
    pub fn new(bits: u32, delta: f64, gamma: u32) -> Result<Self> {
        if bits < 1 {
            return Err(Error::domain("bits must be at least 1"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::domain(format!("delta must be finite and > 0, got {delta}")));
        }
        if gamma < 1 {
            return Err(Error::domain("gamma must be at least 1"));
        }
        Ok(DeviceParams { bits, delta, gamma })
    }

    /// Discrete interval step size `gamma * delta` in seconds.
    pub fn step(&self) -> f64 {
        f64::from(self.gamma) * self.delta
    }
}

/// Per-bit refresh interval assignment, index 0 = LSB.
///
/// Solver outputs additionally satisfy `t_b >= delta`; the type itself only
/// guarantees a nonempty, finite interval vector so that diagnostic plans
/// (e.g. deliberately perturbed ones) can still be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshPlan {
    intervals: Vec<f64>,
}

impl RefreshPlan {
    /// Wrap a vector of per-bit intervals (seconds).
    pub fn new(intervals: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::domain("a refresh plan needs at least one bit position"));
        }
        if let Some(t) = intervals.iter().find(|t| !t.is_finite()) {
            return Err(Error::domain(format!("refresh intervals must be finite, got {t}")));
        }
        Ok(RefreshPlan { intervals })
    }

    /// Plan assigning the same interval `t` to every one of `bits` positions.
    pub fn uniform(bits: u32, t: f64) -> Result<Self> {
        RefreshPlan::new(vec![t; bits as usize])
    }

    /// Per-bit intervals in seconds, index 0 = LSB.
    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    /// Number of bit positions.
    pub fn bits(&self) -> u32 {
        self.intervals.len() as u32
    }
}

/// Squared place value `4^b` of bit position `b`.
pub(crate) fn bit_weight(b: u32) -> f64 {
    4f64.powi(b as i32)
}

/// A BER evaluation together with a model-validity flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerSample {
    /// `alpha * exp(beta * t)`, the modeled probability of losing the bit.
    pub value: f64,
    /// True when the value exceeds 0.5: the exponential fit is only trusted
    /// at low error rates, so such results are outside model validity.
    pub beyond_model_validity: bool,
}

/// Modeled bit error rate `alpha * exp(beta * t)` at refresh interval `t`.
///
/// Values above 0.5 are returned as-is (never clamped, which would break
/// convexity of the word error metric) but carry a warning flag.
pub fn bit_error_rate(model: &BerModel, t: f64) -> Result<BerSample> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::domain(format!(
            "refresh interval must be finite and >= 0, got {t}"
        )));
    }
    let value = model.alpha * (model.beta * t).exp();
    Ok(BerSample {
        value,
        beyond_model_validity: value > 0.5,
    })
}

/// Normalized refresh power `sum_b 1/t_b` of a plan.
pub fn refresh_power(plan: &RefreshPlan) -> Result<f64> {
    if let Some(t) = plan.intervals().iter().find(|&&t| t <= 0.0) {
        return Err(Error::domain(format!(
            "refresh power requires every interval > 0, got {t}"
        )));
    }
    Ok(plan.intervals().iter().map(|t| 1.0 / t).sum())
}

/// Expected squared numeric error `sum_b 4^b * alpha * exp(beta * t_b)` of a
/// stored word under the plan.
pub fn word_mse(model: &BerModel, plan: &RefreshPlan) -> f64 {
    plan.intervals()
        .iter()
        .enumerate()
        .map(|(b, &t)| bit_weight(b as u32) * model.alpha * (model.beta * t).exp())
        .sum()
}

/// Smallest achievable word MSE, `((4^B - 1)/3) * alpha * exp(beta * delta)`,
/// attained by refreshing every bit at the minimum interval.
pub fn min_mse(model: &BerModel, params: &DeviceParams) -> f64 {
    let weight_sum = (4f64.powi(params.bits as i32) - 1.0) / 3.0;
    weight_sum * model.alpha * (model.beta * params.delta).exp()
}

/// Largest possible refresh power `B / delta`, drawn when every bit is
/// refreshed at the minimum interval.
pub fn max_power(params: &DeviceParams) -> f64 {
    f64::from(params.bits) / params.delta
}

/// Peak signal-to-noise ratio `10 * log10((2^B - 1)^2 / mse)` in dB.
///
/// `mse = 0` maps to positive infinity (a sentinel for a perfect word);
/// negative or non-finite MSE is a domain error.
pub fn psnr(mse: f64, bits: u32) -> Result<f64> {
    if !mse.is_finite() || mse < 0.0 {
        return Err(Error::domain(format!("psnr requires mse >= 0, got {mse}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = 2f64.powi(bits as i32) - 1.0;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Word MSE corresponding to a PSNR target, inverting the PSNR formula at
/// fixed word width: `mse = (2^B - 1)^2 / 10^(psnr/10)`.
pub fn mse_for_psnr(psnr_db: f64, bits: u32) -> Result<f64> {
    if !psnr_db.is_finite() {
        return Err(Error::domain(format!("psnr target must be finite, got {psnr_db}")));
    }
    let peak = 2f64.powi(bits as i32) - 1.0;
    Ok(peak * peak / 10f64.powf(psnr_db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const REL: f64 = 1e-12;

    fn default_model() -> BerModel {
        BerModel::new(2.7737e-7, 1.9508).unwrap()
    }

    fn default_params() -> DeviceParams {
        DeviceParams::new(8, 0.064, 1).unwrap()
    }

    #[test]
    fn ber_at_zero_is_alpha() {
        let m = default_model();
        let s = bit_error_rate(&m, 0.0).unwrap();
        assert_eq!(s.value, m.alpha);
        assert!(!s.beyond_model_validity);
    }

    #[test]
    fn ber_at_min_interval() {
        // alpha * exp(beta * 0.064), cross-checked with an independent
        // high-precision exponential
        let s = bit_error_rate(&default_model(), 0.064).unwrap();
        assert!((s.value - 3.142_546_218_602_153e-7).abs() < 1e-13 * s.value);
    }

    #[test]
    fn ber_flags_values_beyond_half() {
        let m = BerModel::new(0.4, 1.0).unwrap();
        let s = bit_error_rate(&m, 1.0).unwrap();
        assert!(s.value > 0.5);
        assert!(s.beyond_model_validity);
    }

    #[test]
    fn ber_rejects_negative_interval() {
        assert!(bit_error_rate(&default_model(), -1.0).is_err());
        assert!(bit_error_rate(&default_model(), f64::NAN).is_err());
    }

    #[test]
    fn power_of_all_min_interval_plan() {
        let plan = RefreshPlan::uniform(8, 0.064).unwrap();
        assert_eq!(refresh_power(&plan).unwrap(), 125.0);
    }

    #[test]
    fn power_single_bit_and_two_bit() {
        let p1 = RefreshPlan::new(vec![1.0]).unwrap();
        assert_eq!(refresh_power(&p1).unwrap(), 1.0);
        let p2 = RefreshPlan::new(vec![0.5, 0.25]).unwrap();
        assert_eq!(refresh_power(&p2).unwrap(), 6.0);
    }

    #[test]
    fn power_rejects_nonpositive_interval() {
        let plan = RefreshPlan::new(vec![1.0, 0.0]).unwrap();
        assert!(refresh_power(&plan).is_err());
    }

    #[test]
    fn mse_single_bit_equals_ber() {
        let m = default_model();
        for t in [0.064, 0.5, 2.0] {
            let plan = RefreshPlan::new(vec![t]).unwrap();
            let ber = bit_error_rate(&m, t).unwrap().value;
            assert_eq!(word_mse(&m, &plan), ber);
        }
    }

    #[test]
    fn mse_is_separable_in_the_changed_bit() {
        let m = default_model();
        let base = RefreshPlan::new(vec![1.0, 1.0, 1.0]).unwrap();
        let bumped = RefreshPlan::new(vec![2.0, 1.0, 1.0]).unwrap();
        let diff = word_mse(&m, &bumped) - word_mse(&m, &base);
        let expected = m.alpha * ((m.beta * 2.0).exp() - (m.beta * 1.0).exp());
        assert!((diff - expected).abs() <= REL * expected.abs());
    }

    #[test]
    fn min_mse_matches_all_min_plan() {
        let m = default_model();
        let p = default_params();
        let closed = min_mse(&m, &p);
        assert!((closed - 6.864_892_214_536_403e-3).abs() < 1e-12 * closed);
        let direct = word_mse(&m, &RefreshPlan::uniform(p.bits, p.delta).unwrap());
        assert!((closed - direct).abs() <= 1e-15 * closed);
    }

    #[test]
    fn min_mse_single_bit_is_ber_at_delta() {
        let m = default_model();
        let p = DeviceParams::new(1, 0.064, 1).unwrap();
        let ber = bit_error_rate(&m, p.delta).unwrap().value;
        assert!((min_mse(&m, &p) - ber).abs() <= REL * ber);
    }

    #[test]
    fn max_power_values() {
        assert_eq!(max_power(&default_params()), 125.0);
        assert_eq!(max_power(&DeviceParams::new(1, 1.0, 1).unwrap()), 1.0);
        // with a 15x step and one step per bit: 8 / (15 * 0.064)
        let p15 = DeviceParams::new(8, 0.064, 15).unwrap();
        let power_at_one_step = f64::from(p15.bits) / p15.step();
        assert!((power_at_one_step - 8.0 / 0.96).abs() < REL * power_at_one_step);
    }

    #[test]
    fn psnr_spot_values() {
        assert_eq!(psnr(65025.0, 8).unwrap(), 0.0);
        assert_eq!(psnr(0.65025, 8).unwrap(), 50.0);
        let m = default_model();
        let p = default_params();
        let at_floor = psnr(min_mse(&m, &p), 8).unwrap();
        assert!((at_floor - 69.764_466_380_860_4).abs() < 1e-9);
    }

    #[test]
    fn psnr_edge_cases() {
        assert_eq!(psnr(0.0, 8).unwrap(), f64::INFINITY);
        assert!(psnr(-1.0, 8).is_err());
        assert!(psnr(f64::NAN, 8).is_err());
    }

    #[test]
    fn psnr_mse_round_trip() {
        for target_db in [30.0, 50.0, 60.0, 69.9] {
            let mse = mse_for_psnr(target_db, 8).unwrap();
            let back = psnr(mse, 8).unwrap();
            assert!((back - target_db).abs() < 1e-12);
        }
    }

    #[test]
    fn constructors_validate() {
        assert!(BerModel::new(0.0, 1.0).is_err());
        assert!(BerModel::new(1e-7, -1.0).is_err());
        assert!(BerModel::new(f64::NAN, 1.0).is_err());
        assert!(DeviceParams::new(0, 0.064, 1).is_err());
        assert!(DeviceParams::new(8, 0.0, 1).is_err());
        assert!(DeviceParams::new(8, 0.064, 0).is_err());
        assert!(RefreshPlan::new(vec![]).is_err());
        assert!(RefreshPlan::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn step_size_is_gamma_times_delta() {
        let p = DeviceParams::new(8, 0.064, 15).unwrap();
        assert_eq!(p.step(), 0.96);
        let p1 = DeviceParams::new(8, 0.064, 1).unwrap();
        assert_eq!(p1.step(), 0.064);
    }
}
