//! Location of a resonance maximum along a pump-rate sweep.

use crate::stats::{weighted_least_squares, Estimate};

use super::ObservableError;

const WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakLocation {
    pub position: Estimate,
    /// Index of the largest sample in the sorted curve.
    pub max_index: usize,
    /// Parabola `c0 + c1 L + c2 L²` with `L = ln Γ − center`.
    pub coefficients: [f64; 3],
    pub center: f64,
    /// Vertex inside the span of the fitted points.
    pub vertex_in_window: bool,
}

impl PeakLocation {
    /// Height of the fitted parabola at its vertex.
    pub fn height(&self) -> f64 {
        let [c0, c1, c2] = self.coefficients;
        c0 - c1 * c1 / (4.0 * c2)
    }
}

/// Fits a parabola in `ln Γ` to the five points around the maximum of
/// `(Γ, y, σ_y)` and returns the vertex with its delta-method standard error.
/// Points without a positive error are fitted unweighted.
pub fn locate_peak(curve: &[(f64, f64, f64)]) -> Result<PeakLocation, ObservableError> {
    if curve.len() < WINDOW {
        return Err(ObservableError::TooFewPoints { needed: WINDOW, got: curve.len() });
    }
    let mut pts: Vec<(f64, f64, f64)> = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.iter().any(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return Err(ObservableError::NoInteriorMaximum);
    }
    let max_index = pts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();
    if max_index == 0 || max_index == pts.len() - 1 {
        return Err(ObservableError::NoInteriorMaximum);
    }
    let start = max_index.saturating_sub(WINDOW / 2).min(pts.len() - WINDOW);
    let window = &pts[start..start + WINDOW];

    let center = pts[max_index].0.ln();
    let weighted = window.iter().all(|p| p.2 > 0.0);
    let rows: Vec<Vec<f64>> = window
        .iter()
        .map(|p| {
            let l = p.0.ln() - center;
            vec![1.0, l, l * l]
        })
        .collect();
    let y: Vec<f64> = window.iter().map(|p| p.1).collect();
    let w: Vec<f64> = window.iter().map(|p| if weighted { 1.0 / (p.2 * p.2) } else { 1.0 }).collect();
    let fit = weighted_least_squares(&rows, &y, &w).ok_or(ObservableError::NoInteriorMaximum)?;
    let (c1, c2) = (fit.coefficients[1], fit.coefficients[2]);
    if !(c2 < 0.0) {
        return Err(ObservableError::NoInteriorMaximum);
    }
    let vertex = -c1 / (2.0 * c2);
    let reduced = if fit.dof > 0 { fit.chi_square / fit.dof as f64 } else { 0.0 };
    let scale = if weighted { reduced.max(1.0) } else { reduced };
    // gradient of the vertex with respect to (c1, c2)
    let g1 = -1.0 / (2.0 * c2);
    let g2 = c1 / (2.0 * c2 * c2);
    let cov = &fit.covariance;
    let var = scale * (g1 * g1 * cov[(1, 1)] + 2.0 * g1 * g2 * cov[(1, 2)] + g2 * g2 * cov[(2, 2)]);
    let position = (center + vertex).exp();
    let lo = window[0].0.ln() - center;
    let hi = window[WINDOW - 1].0.ln() - center;
    Ok(PeakLocation {
        position: Estimate::new(position, position * var.max(0.0).sqrt()),
        max_index,
        coefficients: [fit.coefficients[0], c1, c2],
        center,
        vertex_in_window: (lo..=hi).contains(&vertex),
    })
}
