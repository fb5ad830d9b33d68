//! Estimation of the exponential BER model from retention measurements.
//!
//! The model `ber(t) = alpha * exp(beta * t)` is log-linear, so ordinary
//! least squares on `ln(ber)` against `t` recovers `(ln(alpha), beta)`
//! directly and weights the decades-spanning error rates evenly. Fits with
//! nonpositive `beta` are rejected: retention failures can only become more
//! likely as the refresh interval grows.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::BerModel;

/// One measured (refresh interval, bit error rate) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionMeasurement {
    /// Refresh interval in seconds; strictly positive.
    #[serde(rename = "interval_s")]
    pub interval: f64,
    /// Measured bit error rate, strictly inside (0, 1). Zero rates are
    /// rejected rather than floored: `ln(0)` is undefined and an invented
    /// floor would silently bias the fitted scale.
    pub ber: f64,
}

impl RetentionMeasurement {
    /// Validating constructor.
    pub fn new(interval: f64, ber: f64) -> Result<Self> {
        let m = RetentionMeasurement { interval, ber };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !self.interval.is_finite() || self.interval <= 0.0 {
            return Err(Error::domain(format!(
                "measurement interval must be finite and > 0, got {}",
                self.interval
            )));
        }
        if !self.ber.is_finite() || self.ber <= 0.0 || self.ber >= 1.0 {
            return Err(Error::domain(format!(
                "measured BER must lie strictly between 0 and 1, got {}",
                self.ber
            )));
        }
        Ok(())
    }
}

/// Result of a least-squares calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// The fitted model parameters.
    pub model: BerModel,
    /// Coefficient of determination of the log-space regression.
    pub r_squared: f64,
    /// Log-space residuals `ln(ber_i) - (ln(alpha) + beta * t_i)`, in input
    /// order.
    pub residuals: Vec<f64>,
}

/// Fit `(alpha, beta)` by ordinary least squares on `ln(ber) = ln(alpha) + beta * t`.
///
/// Needs at least two measurements at distinct intervals. A fitted slope
/// `beta <= 0` is a non-physical fit and reported as an error.
pub fn fit_ber_model(measurements: &[RetentionMeasurement]) -> Result<FitResult> {
    if measurements.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least 2 measurements, got {}",
            measurements.len()
        )));
    }
    for m in measurements {
        m.validate()?;
    }

    let n = measurements.len() as f64;
    let xs: Vec<f64> = measurements.iter().map(|m| m.interval).collect();
    let ys: Vec<f64> = measurements.iter().map(|m| m.ber.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "calibration needs measurements at two or more distinct intervals".into(),
        ));
    }

    let beta = sxy / sxx;
    if beta <= 0.0 {
        return Err(Error::NonPhysicalFit { beta });
    }
    let ln_alpha = y_mean - beta * x_mean;
    let model = BerModel::new(ln_alpha.exp(), beta)?;

    let residuals: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (ln_alpha + beta * x))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };

    Ok(FitResult {
        model,
        r_squared,
        residuals,
    })
}

/// Built-in model constants fitted from published DRAM retention
/// measurements at 80 degrees Celsius: `alpha = 2.7737e-7`, `beta = 1.9508`.
pub fn default_model() -> BerModel {
    BerModel {
        alpha: 2.7737e-7,
        beta: 1.9508,
    }
}

/// Parse measurements from CSV with the exact header `interval_s,ber`.
///
/// Values may use decimal or scientific notation. Any structural or value
/// problem is reported as a measurement-input error naming the offending
/// row.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<RetentionMeasurement>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::MeasurementInput(format!("unreadable CSV header: {e}")))?;
    let expected = ["interval_s", "ber"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::MeasurementInput(format!(
            "expected CSV header `interval_s,ber`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut measurements = Vec::new();
    for (idx, record) in csv_reader.deserialize::<RetentionMeasurement>().enumerate() {
        let row = idx + 2; // 1-based, after the header line
        let m = record
            .map_err(|e| Error::MeasurementInput(format!("row {row}: {e}")))?;
        m.validate()
            .map_err(|e| Error::MeasurementInput(format!("row {row}: {e}")))?;
        measurements.push(m);
    }
    Ok(measurements)
}

/// Read measurements from a CSV file on disk (see [`read_measurements`]).
pub fn load_measurements(path: &Path) -> Result<Vec<RetentionMeasurement>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::MeasurementInput(format!("cannot open {}: {e}", path.display()))
    })?;
    read_measurements(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(alpha: f64, beta: f64, intervals: &[f64]) -> Vec<RetentionMeasurement> {
        intervals
            .iter()
            .map(|&t| RetentionMeasurement {
                interval: t,
                ber: alpha * (beta * t).exp(),
            })
            .collect()
    }

    #[test]
    fn two_point_exact_fit() {
        let pts = synthetic(1e-6, 2.0, &[1.0, 2.0]);
        let fit = fit_ber_model(&pts).unwrap();
        assert!((fit.model.alpha - 1e-6).abs() <= 1e-12 * 1e-6);
        assert!((fit.model.beta - 2.0).abs() <= 1e-12 * 2.0);
        assert!(fit.r_squared >= 1.0 - 1e-12);
    }

    #[test]
    fn noiseless_round_trip_many_points() {
        let intervals: Vec<f64> = (0..50).map(|i| 0.064 + 0.05 * i as f64).collect();
        let pts = synthetic(2.7737e-7, 1.9508, &intervals);
        let fit = fit_ber_model(&pts).unwrap();
        assert!((fit.model.alpha - 2.7737e-7).abs() <= 1e-10 * 2.7737e-7);
        assert!((fit.model.beta - 1.9508).abs() <= 1e-10 * 1.9508);
    }

    #[test]
    fn scale_equivariance() {
        let intervals: Vec<f64> = (1..30).map(|i| 0.1 * i as f64).collect();
        let base = synthetic(3e-7, 1.7, &intervals);
        let fit_base = fit_ber_model(&base).unwrap();
        let c = 4.5;
        let scaled: Vec<_> = base
            .iter()
            .map(|m| RetentionMeasurement {
                interval: m.interval,
                ber: m.ber * c,
            })
            .collect();
        let fit_scaled = fit_ber_model(&scaled).unwrap();
        assert!(
            (fit_scaled.model.alpha - c * fit_base.model.alpha).abs()
                <= 1e-10 * c * fit_base.model.alpha
        );
        assert!((fit_scaled.model.beta - fit_base.model.beta).abs() <= 1e-10 * fit_base.model.beta);
    }

    #[test]
    fn shift_equivariance() {
        let intervals: Vec<f64> = (1..30).map(|i| 0.1 * i as f64).collect();
        let base = synthetic(3e-7, 1.7, &intervals);
        let fit_base = fit_ber_model(&base).unwrap();
        let s = 0.75;
        let shifted: Vec<_> = base
            .iter()
            .map(|m| RetentionMeasurement {
                interval: m.interval + s,
                ber: m.ber,
            })
            .collect();
        let fit_shifted = fit_ber_model(&shifted).unwrap();
        let expected_alpha = fit_base.model.alpha * (-fit_base.model.beta * s).exp();
        assert!((fit_shifted.model.beta - fit_base.model.beta).abs() <= 1e-10 * fit_base.model.beta);
        assert!((fit_shifted.model.alpha - expected_alpha).abs() <= 1e-10 * expected_alpha);
    }

    #[test]
    fn residuals_satisfy_the_normal_equations() {
        // Noisy data: residuals are nonzero but orthogonal to the regressors.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (1..40)
            .map(|i| {
                let t = 0.1 * i as f64;
                let noise: f64 = rng.random_range(-0.2..0.2);
                RetentionMeasurement {
                    interval: t,
                    ber: (2e-7 * (1.9 * t).exp()) * noise.exp(),
                }
            })
            .collect();
        let fit = fit_ber_model(&pts).unwrap();
        let sum: f64 = fit.residuals.iter().sum();
        let dot: f64 = fit
            .residuals
            .iter()
            .zip(&pts)
            .map(|(r, m)| r * m.interval)
            .sum();
        assert!(sum.abs() <= 1e-10, "residual sum {sum}");
        assert!(dot.abs() <= 1e-9, "residual-interval correlation {dot}");
        assert!(fit.r_squared > 0.9 && fit.r_squared <= 1.0);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let one = synthetic(1e-6, 2.0, &[1.0]);
        assert!(matches!(
            fit_ber_model(&one),
            Err(Error::InsufficientData(_))
        ));
        let same_interval = vec![
            RetentionMeasurement { interval: 1.0, ber: 1e-6 },
            RetentionMeasurement { interval: 1.0, ber: 2e-6 },
        ];
        assert!(matches!(
            fit_ber_model(&same_interval),
            Err(Error::InsufficientData(_))
        ));
        let decreasing = vec![
            RetentionMeasurement { interval: 1.0, ber: 1e-4 },
            RetentionMeasurement { interval: 2.0, ber: 1e-6 },
        ];
        assert!(matches!(
            fit_ber_model(&decreasing),
            Err(Error::NonPhysicalFit { .. })
        ));
        assert!(RetentionMeasurement::new(1.0, 0.0).is_err());
        assert!(RetentionMeasurement::new(1.0, 1.0).is_err());
        assert!(RetentionMeasurement::new(0.0, 1e-6).is_err());
    }

    #[test]
    fn default_constants() {
        let m = default_model();
        assert_eq!(m.alpha, 2.7737e-7);
        assert_eq!(m.beta, 1.9508);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let good = "interval_s,ber\n0.064,3.14e-7\n1.5,5.2e-6\n2,1e-4\n";
        let ms = read_measurements(good.as_bytes()).unwrap();
        assert_eq!(ms.len(), 3);
        assert_eq!(ms[0].interval, 0.064);
        assert_eq!(ms[0].ber, 3.14e-7);

        let bad_header = "t,ber\n1,1e-6\n";
        assert!(matches!(
            read_measurements(bad_header.as_bytes()),
            Err(Error::MeasurementInput(_))
        ));

        let bad_value = "interval_s,ber\n1.0,not-a-number\n";
        let err = read_measurements(bad_value.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");

        let out_of_range = "interval_s,ber\n1.0,1.5\n";
        assert!(read_measurements(out_of_range.as_bytes()).is_err());
    }
}
