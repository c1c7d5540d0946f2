//! Pump-probe spectrum estimator and its line-shape fit.
//!
//! The signal at a probe detuning is the out-of-phase component `A sinφ` of
//! the moving-frame density grating. Spectra are fitted to a linear
//! background plus Raman and Brillouin Gaussians with a damped Gauss-Newton
//! iteration.

use nalgebra::{DMatrix, DVector};

use crate::ensemble::{run_ensemble, EnsembleConfig};
use crate::geometry::{DerivedGeometry, LatticeConfig, ModeSign};
use crate::stats::{line_fit, Estimate};

use super::{bunching_histogram, ObservableError};

const MIN_POINTS: usize = 12;
const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e16;

/// Runs an ensemble at the configured probe detuning and returns `A sinφ` of
/// the `+` mode grating with its bootstrap error.
pub fn spectrum_point(
    config: &LatticeConfig<f64>,
    geometry: &DerivedGeometry<f64>,
    ensemble: &EnsembleConfig,
) -> Result<Estimate, ObservableError> {
    if !config.probe_on() {
        return Err(ObservableError::ProbeOff);
    }
    let result = run_ensemble(config, geometry, ensemble)?;
    Ok(bunching_histogram(&result.records, config, geometry, ModeSign::Plus)?.quadrature)
}

/// Parameters of `A_e δ + B_e + A_R g(δ; Ω_R, σ_R) + A_B g(δ; Ω_B, σ_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectrumParams {
    pub a_e: f64,
    pub b_e: f64,
    pub a_r: f64,
    pub omega_r: f64,
    pub sigma_r: f64,
    pub a_b: f64,
    pub omega_b: f64,
    pub sigma_b: f64,
}

impl SpectrumParams {
    #[cfg(test)]
    fn to_array(self) -> [f64; 8] {
        [self.a_e, self.b_e, self.a_r, self.omega_r, self.sigma_r, self.a_b, self.omega_b, self.sigma_b]
    }

    fn from_array(p: &[f64]) -> Self {
        Self {
            a_e: p[0],
            b_e: p[1],
            a_r: p[2],
            omega_r: p[3],
            sigma_r: p[4],
            a_b: p[5],
            omega_b: p[6],
            sigma_b: p[7],
        }
    }
}

/// Line shape of the fit.
pub fn spectrum_model(p: &SpectrumParams, delta: f64) -> f64 {
    p.a_e * delta
        + p.b_e
        + p.a_r * gaussian(delta, p.omega_r, p.sigma_r)
        + p.a_b * gaussian(delta, p.omega_b, p.sigma_b)
}

fn gaussian(x: f64, center: f64, sigma: f64) -> f64 {
    (-(x - center).powi(2) / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    pub params: SpectrumParams,
    /// Standard errors in the order of [`SpectrumParams`].
    pub errors: SpectrumParams,
    /// `√χ²` of the weighted residuals.
    pub residual_norm: f64,
    /// Residual norm after every accepted iteration, starting at the initial guess.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The two lines overlap within half a width.
    pub degenerate_lines: bool,
}

/// Which parameters a stage of the fit is allowed to move.
#[derive(Clone, Copy)]
struct Free([bool; 8]);

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64]) -> DVector<f64> {
        let params = SpectrumParams::from_array(p);
        DVector::from_fn(self.x.len(), |i, _| (self.y[i] - spectrum_model(&params, self.x[i])) * self.w[i].sqrt())
    }

    /// Jacobian of the weighted model (sign convention: d model / d p).
    fn jacobian(&self, p: &[f64], free: Free) -> DMatrix<f64> {
        let n = self.x.len();
        let mut j = DMatrix::zeros(n, 8);
        for (i, &x) in self.x.iter().enumerate() {
            let s = self.w[i].sqrt();
            let mut row = [0.0; 8];
            row[0] = x;
            row[1] = 1.0;
            for (k, (a, c, sg)) in [(p[2], p[3], p[4]), (p[5], p[6], p[7])].into_iter().enumerate() {
                let g = gaussian(x, c, sg);
                let d = x - c;
                row[2 + 3 * k] = g;
                row[3 + 3 * k] = a * g * d / (sg * sg);
                row[4 + 3 * k] = a * g * d * d / (sg * sg * sg);
            }
            for k in 0..8 {
                if free.0[k] {
                    j[(i, k)] = row[k] * s;
                }
            }
        }
        j
    }

    fn chi2(&self, p: &[f64]) -> f64 {
        self.residuals(p).norm_squared()
    }
}

struct Outcome {
    params: [f64; 8],
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Damped Gauss-Newton with Marquardt scaling; a step is accepted only if it
/// does not increase χ².
fn levenberg_marquardt(problem: &Problem, start: [f64; 8], free: Free) -> Result<Outcome, ObservableError> {
    let mut p = start;
    let mut chi2 = problem.chi2(&p);
    if !chi2.is_finite() {
        return Err(ObservableError::FitDiverged("non-finite residual at the initial guess".into()));
    }
    let mut history = vec![chi2.sqrt()];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let j = problem.jacobian(&p, free);
        let r = problem.residuals(&p);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * r;
        let diag_max = (0..8).map(|k| jtj[(k, k)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < MAX_DAMPING {
            let mut a = jtj.clone();
            for k in 0..8 {
                if free.0[k] {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * diag_max);
                } else {
                    a[(k, k)] = 1.0;
                }
            }
            let Some(step) = a.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for k in 0..8 {
                trial[k] += step[k];
            }
            let rel_step = (0..8)
                .filter(|&k| free.0[k])
                .map(|k| (step[k] / p[k].abs().max(1e-12)).abs())
                .fold(0.0, f64::max);
            let trial_chi2 = problem.chi2(&trial);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                p = trial;
                chi2 = trial_chi2;
                history.push(chi2.sqrt());
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_step < STEP_TOLERANCE {
                    converged = true;
                }
                break;
            }
            if rel_step < STEP_TOLERANCE {
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ObservableError::FitDiverged("non-finite parameters".into()));
        }
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    Ok(Outcome { params: p, history, iterations, converged })
}

/// Fits `(δ, S, σ_S)` points to the spectrum line shape. The Brillouin line
/// starts at `omega_b_guess`, the Raman line at the largest residual left
/// after a background-plus-Brillouin fit, both widths at three grid spacings.
pub fn fit_spectrum(points: &[(f64, f64, f64)], omega_b_guess: f64) -> Result<SpectrumFit, ObservableError> {
    if points.len() < MIN_POINTS {
        return Err(ObservableError::TooFewPoints { needed: MIN_POINTS, got: points.len() });
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(ObservableError::FitDiverged("non-finite input".into()));
    }
    let weighted = pts.iter().all(|p| p.2 > 0.0);
    let w: Vec<f64> = pts.iter().map(|p| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 }).collect();
    let problem = Problem { x: &x, y: &y, w };

    let spacing = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let width = 3.0 * spacing;
    let (b_e, a_e) = line_fit(&x, &y).ok_or_else(|| ObservableError::FitDiverged("degenerate grid".into()))?;
    let nearest = |c: f64| {
        (0..x.len()).min_by(|&i, &k| (x[i] - c).abs().total_cmp(&(x[k] - c).abs())).unwrap()
    };
    let ib = nearest(omega_b_guess);
    let a_b = y[ib] - (a_e * x[ib] + b_e);

    let stage1 = levenberg_marquardt(
        &problem,
        [a_e, b_e, 0.0, omega_b_guess, width, a_b, omega_b_guess, width],
        Free([true, true, false, false, false, true, true, true]),
    )?;
    let p1 = SpectrumParams::from_array(&stage1.params);
    let ir = (0..x.len())
        .max_by(|&i, &k| {
            let ri = (y[i] - spectrum_model(&p1, x[i])).abs();
            let rk = (y[k] - spectrum_model(&p1, x[k])).abs();
            ri.total_cmp(&rk)
        })
        .unwrap();
    let mut start = stage1.params;
    start[2] = y[ir] - spectrum_model(&p1, x[ir]);
    start[3] = x[ir];
    start[4] = width;

    let outcome = levenberg_marquardt(&problem, start, Free([true; 8]))?;
    let mut params = SpectrumParams::from_array(&outcome.params);
    params.sigma_r = params.sigma_r.abs();
    params.sigma_b = params.sigma_b.abs();
    if !(params.sigma_r > 0.0 && params.sigma_b > 0.0) {
        return Err(ObservableError::FitDiverged("collapsed line width".into()));
    }

    let chi2 = problem.chi2(&outcome.params);
    let dof = x.len().saturating_sub(8).max(1);
    let scale = if weighted { (chi2 / dof as f64).max(1.0) } else { chi2 / dof as f64 };
    let j = problem.jacobian(&outcome.params, Free([true; 8]));
    let jtj = j.transpose() * &j;
    let errors = match jtj.try_inverse() {
        Some(cov) => {
            let e: Vec<f64> = (0..8).map(|k| (cov[(k, k)].max(0.0) * scale).sqrt()).collect();
            SpectrumParams::from_array(&e)
        }
        None => SpectrumParams::from_array(&[f64::INFINITY; 8]),
    };
    let degenerate_lines = (params.omega_r - params.omega_b).abs() < params.sigma_r.max(params.sigma_b) / 2.0;
    Ok(SpectrumFit {
        params,
        errors,
        residual_norm: chi2.sqrt(),
        history: outcome.history,
        iterations: stage1.iterations + outcome.iterations,
        converged: outcome.converged,
        degenerate_lines,
    })
}
