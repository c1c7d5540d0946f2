//! Spatial diffusion coefficients from the mean squared displacement.

use crate::dynamics::TrajectoryRecord;
use crate::stats::{bootstrap_std, line_fit, Estimate};

use super::{Axis, ObservableError, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED};

const MIN_RECORDS: usize = 10;
const MIN_SAMPLES: usize = 2;
const MAX_LAGS: usize = 32;
const SLOPE_RANGE: (f64, f64) = (0.8, 1.2);

/// Ensemble MSD at the lags of the fit window, plus the per-atom values the
/// bootstrap resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdCurve {
    pub lags: Vec<f64>,
    pub msd: Vec<f64>,
    per_atom: Vec<Vec<f64>>,
}

impl MsdCurve {
    fn weighted(&self, weights: &[u32]) -> Vec<f64> {
        let total: u32 = weights.iter().sum();
        (0..self.lags.len())
            .map(|k| {
                self.per_atom.iter().zip(weights).map(|(m, &w)| m[k] * w as f64).sum::<f64>() / total as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionResult {
    pub axis: Axis,
    pub diffusion: Estimate,
    pub fit_window: (f64, f64),
    /// Log-log slope of MSD(τ) over the window; `NaN` when nothing moved.
    pub slope: f64,
    pub curve: MsdCurve,
}

fn coordinate(axis: Axis) -> fn(&crate::dynamics::TrajectorySample<f64>) -> f64 {
    match axis {
        Axis::X => |s| s.r.x,
        Axis::Z => |s| s.r.z,
    }
}

/// Time-and-ensemble averaged MSD over lags in `[T/2, T]`.
pub fn msd_curve(records: &[TrajectoryRecord<f64>], axis: Axis) -> Result<MsdCurve, ObservableError> {
    let usable = records.iter().filter(|r| r.len() >= MIN_SAMPLES).count();
    if records.len() < MIN_RECORDS || usable < records.len() {
        return Err(ObservableError::InsufficientData { needed: MIN_RECORDS, samples: MIN_SAMPLES, got: usable });
    }
    let n_samples = records[0].len();
    let interval = records[0].samples[1].t - records[0].samples[0].t;
    if !(interval > 0.0) {
        return Err(ObservableError::IrregularSampling);
    }
    let tolerance = 1e-6 * interval;
    for record in records {
        if record.len() != n_samples {
            return Err(ObservableError::IrregularSampling);
        }
        let t0 = record.samples[0].t;
        let regular = record
            .samples
            .iter()
            .enumerate()
            .all(|(i, s)| (s.t - t0 - interval * i as f64).abs() <= tolerance * (1 + i) as f64);
        if !regular {
            return Err(ObservableError::IrregularSampling);
        }
    }

    let n = n_samples - 1;
    let first = n.div_ceil(2).max(1);
    let span = n - first;
    let count = (span + 1).min(MAX_LAGS);
    let mut lag_steps: Vec<usize> = (0..count)
        .map(|k| if count == 1 { n } else { first + (k * span) / (count - 1) })
        .collect();
    lag_steps.dedup();

    let coord = coordinate(axis);
    let per_atom: Vec<Vec<f64>> = records
        .iter()
        .map(|record| {
            let xs: Vec<f64> = record.samples.iter().map(coord).collect();
            lag_steps
                .iter()
                .map(|&lag| {
                    let terms = n_samples - lag;
                    (0..terms).map(|j| (xs[j + lag] - xs[j]).powi(2)).sum::<f64>() / terms as f64
                })
                .collect()
        })
        .collect();
    let lags: Vec<f64> = lag_steps.iter().map(|&l| l as f64 * interval).collect();
    let msd = (0..lags.len())
        .map(|k| per_atom.iter().map(|m| m[k]).sum::<f64>() / per_atom.len() as f64)
        .collect();
    Ok(MsdCurve { lags, msd, per_atom })
}

/// Weighted fit of `MSD = 2Dτ` with weights `1/τ²`, which reduces to the mean
/// of `MSD/(2τ)` over the window lags.
fn fit_coefficient(lags: &[f64], msd: &[f64]) -> f64 {
    lags.iter().zip(msd).map(|(t, m)| m / (2.0 * t)).sum::<f64>() / lags.len() as f64
}

/// Diffusion coefficient along `axis`, with a bootstrap standard error over
/// atoms and a log-log linearity check.
pub fn msd_diffusion(records: &[TrajectoryRecord<f64>], axis: Axis) -> Result<DiffusionResult, ObservableError> {
    let curve = msd_curve(records, axis)?;
    let value = fit_coefficient(&curve.lags, &curve.msd);
    let error = bootstrap_std(records.len(), BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, |w| {
        fit_coefficient(&curve.lags, &curve.weighted(w))
    });
    let diffusion = Estimate::new(value, error);
    let fit_window = (curve.lags[0], *curve.lags.last().unwrap());

    let slope = if curve.lags.len() >= 2 && curve.msd.iter().all(|&m| m > 0.0) {
        let lx: Vec<f64> = curve.lags.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = curve.msd.iter().map(|m| m.ln()).collect();
        line_fit(&lx, &ly).map_or(f64::NAN, |(_, b)| b)
    } else {
        f64::NAN
    };
    if slope.is_finite() && !(SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope) {
        return Err(ObservableError::DiffusiveRegimeNotReached { slope, diffusion });
    }
    Ok(DiffusionResult { axis, diffusion, fit_window, slope, curve })
}
