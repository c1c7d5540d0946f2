//! Measurement pipelines over trajectory records.
//!
//! All estimators are pure functions of immutable record collections, so the
//! order in which concurrent trajectories finished never matters.

mod bunching;
mod diffusion;
mod energy;
mod peak;
mod spectrum;

pub use bunching::{bunching_histogram, bunching_with, first_harmonic, BunchingOptions, BunchingResult, DEFAULT_BINS};
pub use diffusion::{msd_curve, msd_diffusion, DiffusionResult, MsdCurve};
pub use energy::kinetic_energy;
pub use peak::{locate_peak, PeakLocation};
pub use spectrum::{fit_spectrum, spectrum_model, spectrum_point, SpectrumFit, SpectrumParams};

use thiserror::Error;

use crate::ensemble::EnsembleError;
use crate::stats::Estimate;

/// Number of bootstrap resamples used by every estimator.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Fixed seed of the bootstrap stream; estimators stay pure functions.
pub const BOOTSTRAP_SEED: u64 = 0xb007_5eed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("need at least {needed} records with {samples} samples each, got {got}")]
    InsufficientData { needed: usize, samples: usize, got: usize },
    #[error("records are not on a common uniform time grid")]
    IrregularSampling,
    #[error("MSD not diffusive over the fit window (log-log slope {slope:.3})")]
    DiffusiveRegimeNotReached { slope: f64, diffusion: Estimate },
    #[error("reference diffusion coefficient is not positive")]
    ZeroReference,
    #[error("probe beam is off, moving-frame quantities are undefined")]
    ProbeOff,
    #[error("no samples to accumulate")]
    EmptyRecords,
    #[error("spectrum fit diverged: {0}")]
    FitDiverged(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("curve has no interior maximum")]
    NoInteriorMaximum,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Cartesian axis of the lattice plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Z,
}

/// Fractional increase `ξ = (D - D⁰)/D⁰` with the error propagated in quadrature.
pub fn enhancement(d: Estimate, reference: Estimate) -> Result<Estimate, ObservableError> {
    if !(reference.value > 0.0) {
        return Err(ObservableError::ZeroReference);
    }
    let ratio = d.value / reference.value;
    let err = ((d.error / reference.value).powi(2) + (ratio * reference.error / reference.value).powi(2)).sqrt();
    Ok(Estimate::new(ratio - 1.0, err))
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepRow {
    pub gamma0: f64,
    pub delta0: f64,
    pub delta: f64,
    pub probe_ratio: f64,
    pub d_x: f64,
    pub d_x_err: f64,
    pub d_z: f64,
    pub d_z_err: f64,
    pub xi: f64,
    pub xi_err: f64,
    pub a: f64,
    pub a_err: f64,
    pub phi: f64,
    pub phi_err: f64,
    pub a_b: f64,
    pub a_b_err: f64,
    pub e_k: f64,
    pub e_k_err: f64,
}

impl SweepRow {
    pub const COLUMNS: [&'static str; 18] = [
        "gamma0", "delta0", "delta", "probe_ratio", "d_x", "d_x_err", "d_z", "d_z_err", "xi", "xi_err", "a", "a_err",
        "phi", "phi_err", "a_b", "a_b_err", "e_k", "e_k_err",
    ];

    pub fn header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn values(&self) -> [f64; 18] {
        [
            self.gamma0,
            self.delta0,
            self.delta,
            self.probe_ratio,
            self.d_x,
            self.d_x_err,
            self.d_z,
            self.d_z_err,
            self.xi,
            self.xi_err,
            self.a,
            self.a_err,
            self.phi,
            self.phi_err,
            self.a_b,
            self.a_b_err,
            self.e_k,
            self.e_k_err,
        ]
    }

    /// Comma-separated values in column order; `NaN` marks a quantity that
    /// was not measured for this row.
    pub fn to_csv(&self) -> String {
        self.values().iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
    }

    pub fn uncertainties_valid(&self) -> bool {
        [self.d_x_err, self.d_z_err, self.xi_err, self.a_err, self.phi_err, self.a_b_err, self.e_k_err]
            .iter()
            .all(|e| e.is_nan() || *e >= 0.0)
    }
}
