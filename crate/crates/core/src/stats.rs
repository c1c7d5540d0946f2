//! Small statistics helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    /// Number of standard errors separating the value from zero.
    pub fn significance(&self) -> f64 {
        if self.error > 0.0 {
            self.value.abs() / self.error
        } else if self.value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.p$} ± {:.p$}", self.value, self.error),
            None => write!(f, "{} ± {}", self.value, self.error),
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator).
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Mean and standard error of the mean.
pub fn mean_estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    Estimate::new(mean(values), (variance(values) / n as f64).sqrt())
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Runs `visit` on `resamples` bootstrap draws over `n_units` units. Each draw
/// is given as the multiplicity of every unit (sampling with replacement).
pub fn bootstrap_each<F>(n_units: usize, resamples: usize, seed: u64, mut visit: F)
where
    F: FnMut(&[u32]),
{
    if n_units == 0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0u32; n_units];
    for _ in 0..resamples {
        weights.iter_mut().for_each(|w| *w = 0);
        for _ in 0..n_units {
            weights[rng.random_range(0..n_units)] += 1;
        }
        visit(&weights);
    }
}

/// Standard deviation of `statistic` over bootstrap draws (non-finite values
/// skipped).
pub fn bootstrap_std<F>(n_units: usize, resamples: usize, seed: u64, mut statistic: F) -> f64
where
    F: FnMut(&[u32]) -> f64,
{
    let mut values = Vec::with_capacity(resamples);
    bootstrap_each(n_units, resamples, seed, |w| {
        let v = statistic(w);
        if v.is_finite() {
            values.push(v);
        }
    });
    std_dev(&values)
}

/// Result of a linear least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub chi_square: f64,
    pub dof: usize,
}

impl LinearFit {
    pub fn std_error(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

/// Weighted linear least squares `y ≈ Σ_j c_j f_j(x)` with design rows
/// `basis(x)` and weights `w_i` (inverse variances). Returns `None` if the
/// normal matrix is singular.
pub fn weighted_least_squares(rows: &[Vec<f64>], y: &[f64], weights: &[f64]) -> Option<LinearFit> {
    let n = rows.len();
    let p = rows.first()?.len();
    if n < p || y.len() != n || weights.len() != n {
        return None;
    }
    let design = DMatrix::from_fn(n, p, |i, j| rows[i][j] * weights[i].sqrt());
    let rhs = DVector::from_fn(n, |i, _| y[i] * weights[i].sqrt());
    let normal = design.transpose() * &design;
    let covariance = normal.clone().try_inverse()?;
    let coefficients = &covariance * (design.transpose() * rhs);
    let chi_square = (0..n)
        .map(|i| {
            let model: f64 = rows[i].iter().zip(coefficients.iter()).map(|(a, c)| a * c).sum();
            weights[i] * (y[i] - model).powi(2)
        })
        .sum();
    Some(LinearFit { coefficients: coefficients.iter().copied().collect(), covariance, chi_square, dof: n - p })
}

/// Ordinary least-squares line `y = a + b x`, returns `(a, b)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![1.0, v]).collect();
    let fit = weighted_least_squares(&rows, y, &vec![1.0; x.len()])?;
    Some((fit.coefficients[0], fit.coefficients[1]))
}

/// Weighted fit of `y = s x` through the origin; returns the slope estimate.
pub fn slope_through_origin(x: &[f64], y: &[f64], errors: &[f64]) -> Option<Estimate> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let weights: Vec<f64> = errors
        .iter()
        .map(|&e| if e > 0.0 { 1.0 / (e * e) } else { 1.0 })
        .collect();
    let fit = weighted_least_squares(&rows, y, &weights)?;
    let scale = if fit.dof > 0 { (fit.chi_square / fit.dof as f64).max(1.0) } else { 1.0 };
    Some(Estimate::new(fit.coefficients[0], fit.std_error(0) * scale.sqrt()))
}
