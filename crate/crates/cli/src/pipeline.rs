//! Measurement pipelines behind the commands. Everything here is pure
//! computation; [`crate::output`] turns the outcomes into files.

use latticemc_core::field::ProbeModel;
use latticemc_core::geometry::predict_sr;
use latticemc_core::observables::{
    bunching_with, enhancement, fit_spectrum, kinetic_energy, locate_peak, msd_diffusion, Axis,
    BunchingOptions, BunchingResult, ObservableError, PeakLocation, SpectrumFit, SweepRow,
};
use latticemc_core::stats::{correlation, slope_through_origin, Estimate};
use latticemc_core::{run_ensemble, DerivedGeometry, EnsembleConfig, EnsembleError, LatticeConfig};
use thiserror::Error;

use crate::config::{ConfigError, PeakObservable, RunSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("cannot write output: {0}")]
    Io(String),
}

impl RunError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Observable(ObservableError::NoInteriorMaximum | ObservableError::TooFewPoints { .. }) => 4,
            RunError::Observable(_) | RunError::Ensemble(_) => 3,
        }
    }
}

/// One measured sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub row: SweepRow,
    pub bunching: Option<BunchingResult>,
    pub reference: Option<Reference>,
    pub warnings: Vec<String>,
}

/// Observables of the far-detuned reference run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub d_x: Estimate,
    pub d_z: Estimate,
    pub e_k: Estimate,
}

/// Lattice of the main run at pump rate `gamma0` and probe detuning `delta`.
pub fn lattice_at(spec: &RunSpec, delta0: f64, gamma0: f64, delta: Option<f64>) -> LatticeConfig {
    let mut cfg = RunSpec { delta0, gamma0, ..spec.clone() }.lattice();
    if let Some(d) = delta {
        cfg.probe_detuning = d;
    }
    cfg
}

fn diffusion(records: &[latticemc_core::TrajectoryRecord], axis: Axis, warnings: &mut Vec<String>) -> Result<Estimate, RunError> {
    match msd_diffusion(records, axis) {
        Ok(r) => Ok(r.diffusion),
        Err(ObservableError::DiffusiveRegimeNotReached { slope, diffusion }) => {
            warnings.push(format!("D_{} log-log slope {slope:.3} outside the diffusive range", axis_name(axis)));
            Ok(diffusion)
        }
        Err(e) => Err(e.into()),
    }
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "x",
        Axis::Z => "z",
    }
}

fn failures(result: &latticemc_core::EnsembleResult, warnings: &mut Vec<String>) {
    for (index, seed, err) in &result.manifest.failures {
        warnings.push(format!("trajectory {index} (seed {seed:016x}) failed: {err}"));
    }
}

/// Far-detuned reference run; its D_x is the D_x⁰ of ξ.
pub fn reference_run(spec: &RunSpec, lattice: &LatticeConfig, warnings: &mut Vec<String>) -> Result<Option<Reference>, RunError> {
    if spec.reference_factor <= 0.0 {
        return Ok(None);
    }
    let geometry = DerivedGeometry::new(lattice);
    let mut reference = *lattice;
    reference.probe_detuning = spec.reference_factor * geometry.omega_x;
    let ensemble = EnsembleConfig { probe_model: spec.reference_model, ..spec.ensemble() };
    let result = run_ensemble(&reference, &DerivedGeometry::new(&reference), &ensemble)?;
    failures(&result, warnings);
    let mut local = Vec::new();
    let d_x = diffusion(&result.records, Axis::X, &mut local)?;
    let d_z = diffusion(&result.records, Axis::Z, &mut local)?;
    warnings.extend(local.into_iter().map(|w| format!("reference {w}")));
    Ok(Some(Reference { d_x, d_z, e_k: kinetic_energy(&result.records) }))
}

/// Runs the ensemble at `lattice` and measures every sweep observable.
/// `reference` supplies D_x⁰ for ξ; `None` leaves ξ unmeasured.
pub fn measure(spec: &RunSpec, lattice: &LatticeConfig, reference: Option<Reference>) -> Result<Point, RunError> {
    let geometry = DerivedGeometry::new(lattice);
    let ensemble = EnsembleConfig { probe_model: ProbeModel::Coherent, ..spec.ensemble() };
    let result = run_ensemble(lattice, &geometry, &ensemble)?;
    let mut warnings = Vec::new();
    failures(&result, &mut warnings);
    let records = &result.records;

    let d_x = diffusion(records, Axis::X, &mut warnings)?;
    let d_z = diffusion(records, Axis::Z, &mut warnings)?;
    let e_k = kinetic_energy(records);
    let xi = match reference {
        Some(r) => Some(enhancement(d_x, r.d_x)?),
        None => None,
    };
    let bunching = if lattice.probe_on() {
        let options = BunchingOptions { bins: spec.bins, combine_modes: spec.combine_modes, ..BunchingOptions::default() };
        Some(bunching_with(records, lattice, &geometry, options)?)
    } else {
        None
    };
    let nan = Estimate::new(f64::NAN, f64::NAN);
    let xi = xi.unwrap_or(nan);
    let (a, phi) = bunching.as_ref().map_or((nan, nan), |b| (b.amplitude, b.phase));
    let row = SweepRow {
        gamma0: lattice.pump_rate,
        delta0: lattice.light_shift,
        delta: lattice.probe_detuning,
        probe_ratio: lattice.probe_ratio,
        d_x: d_x.value,
        d_x_err: d_x.error,
        d_z: d_z.value,
        d_z_err: d_z.error,
        xi: xi.value,
        xi_err: xi.error,
        a: a.value,
        a_err: a.error,
        phi: phi.value,
        phi_err: phi.error,
        a_b: f64::NAN,
        a_b_err: f64::NAN,
        e_k: e_k.value,
        e_k_err: e_k.error,
    };
    Ok(Point { row, bunching, reference, warnings })
}

/// Main run plus its reference at one pump rate.
pub fn measure_with_reference(spec: &RunSpec, lattice: &LatticeConfig) -> Result<Point, RunError> {
    let mut warnings = Vec::new();
    let reference = reference_run(spec, lattice, &mut warnings)?;
    let mut point = measure(spec, lattice, reference)?;
    warnings.append(&mut point.warnings);
    point.warnings = warnings;
    Ok(point)
}

/// `(x, y, σ_y)` of the chosen observable along a sweep.
pub fn curve(rows: &[SweepRow], observable: PeakObservable, x: impl Fn(&SweepRow) -> f64) -> Vec<(f64, f64, f64)> {
    rows.iter()
        .map(|r| {
            let (y, e) = match observable {
                PeakObservable::Xi => (r.xi, r.xi_err),
                PeakObservable::Dx => (r.d_x, r.d_x_err),
                PeakObservable::A => (r.a, r.a_err),
            };
            (x(r), y, e)
        })
        .collect()
}

/// Γ₀′ sweep at fixed Δ₀′. `sink` sees every finished point, in grid order.
pub fn sweep_gamma(
    spec: &RunSpec,
    delta0: f64,
    grid: &[f64],
    mut sink: impl FnMut(&Point),
) -> Result<Vec<Point>, RunError> {
    let mut points = Vec::with_capacity(grid.len());
    for &gamma0 in grid {
        let lattice = lattice_at(spec, delta0, gamma0, spec.delta);
        let point = measure_with_reference(spec, &lattice)?;
        sink(&point);
        points.push(point);
    }
    Ok(points)
}

/// Resonance of a Γ₀′ sweep together with the synchronization prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSummary {
    pub observable: PeakObservable,
    pub delta0: f64,
    pub peak: PeakLocation,
    pub prediction: f64,
}

pub fn gamma_peak(spec: &RunSpec, delta0: f64, rows: &[SweepRow]) -> Result<PeakSummary, RunError> {
    let peak = locate_peak(&curve(rows, spec.peak_observable, |r| r.gamma0))?;
    let prediction = predict_sr(&lattice_at(spec, delta0, spec.gamma0, None));
    Ok(PeakSummary { observable: spec.peak_observable, delta0, peak, prediction })
}

/// Probe detuning sweep at fixed Γ₀′; the far-detuned reference is shared by
/// all points.
pub fn sweep_delta(spec: &RunSpec, mut sink: impl FnMut(&Point)) -> Result<Vec<Point>, RunError> {
    let base = spec.lattice();
    let mut warnings = Vec::new();
    let reference = reference_run(spec, &base, &mut warnings)?;
    let omega_x = spec.omega_x();
    let mut points = Vec::new();
    for (i, &ratio) in spec.delta_ratio_grid.iter().enumerate() {
        let lattice = lattice_at(spec, spec.delta0, spec.gamma0, Some(ratio * omega_x));
        let mut point = measure(spec, &lattice, reference)?;
        if i == 0 {
            point.warnings.splice(0..0, warnings.drain(..));
        }
        sink(&point);
        points.push(point);
    }
    Ok(points)
}

/// One spectrum: the quadrature `A sinφ` of the `+` mode at every probe
/// detuning of the grid, and the line fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub gamma0: f64,
    /// `(δ, S, σ_S)`.
    pub points: Vec<(f64, f64, f64)>,
    pub fit: Result<SpectrumFit, ObservableError>,
}

pub fn spectrum(spec: &RunSpec, gamma0: f64) -> Result<Spectrum, RunError> {
    let ensemble = EnsembleConfig {
        n_atoms: spec.spectrum_atoms,
        measurement_time: spec.spectrum_tmax,
        probe_model: ProbeModel::Coherent,
        ..spec.ensemble()
    };
    let omega_x = spec.omega_x();
    let mut points = Vec::with_capacity(spec.delta_ratio_grid.len());
    for &ratio in &spec.delta_ratio_grid {
        let lattice = lattice_at(spec, spec.delta0, gamma0, Some(ratio * omega_x));
        let geometry = DerivedGeometry::new(&lattice);
        let result = run_ensemble(&lattice, &geometry, &ensemble)?;
        let options = BunchingOptions { bins: spec.bins, ..BunchingOptions::default() };
        let s = bunching_with(&result.records, &lattice, &geometry, options)?.quadrature;
        points.push((lattice.probe_detuning, s.value, s.error));
    }
    let fit = fit_spectrum(&points, omega_x);
    Ok(Spectrum { gamma0, points, fit })
}

/// Stochastic-resonance position against `√|Δ₀′|` over the depth grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    /// Per depth: `(Δ₀′, √|Δ₀′|, located peak)`.
    pub peaks: Vec<(f64, f64, Result<PeakSummary, ObservableError>)>,
    /// Through-origin slope of `(Γ₀′)_SR` against `√|Δ₀′|`.
    pub slope: Option<Estimate>,
    pub correlation: f64,
    /// Slope predicted by the synchronization condition.
    pub predicted_slope: f64,
}

pub fn scaling_from_peaks(spec: &RunSpec, peaks: Vec<(f64, f64, Result<PeakSummary, ObservableError>)>) -> Scaling {
    let found: Vec<(f64, Estimate)> = peaks
        .iter()
        .filter_map(|(_, s, p)| p.as_ref().ok().map(|p| (*s, p.peak.position)))
        .collect();
    let x: Vec<f64> = found.iter().map(|f| f.0).collect();
    let y: Vec<f64> = found.iter().map(|f| f.1.value).collect();
    let e: Vec<f64> = found.iter().map(|f| f.1.error).collect();
    let slope = if found.len() >= 2 { slope_through_origin(&x, &y, &e) } else { None };
    let correlation = if found.len() >= 3 { correlation(&x, &y) } else { f64::NAN };
    let predicted_slope = predict_sr(&lattice_at(spec, -1.0, spec.gamma0, None));
    Scaling { peaks, slope, correlation, predicted_slope }
}

/// Γ₀′ grid of the scaling sweep at depth `delta0`: the configured ratios
/// times the predicted resonance.
pub fn scaling_grid(spec: &RunSpec, delta0: f64) -> Vec<f64> {
    let prediction = predict_sr(&lattice_at(spec, delta0, spec.gamma0, None));
    spec.sr_ratio_grid.iter().map(|r| r * prediction).collect()
}
