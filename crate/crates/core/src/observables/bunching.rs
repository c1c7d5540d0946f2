//! Atomic density in the frame co-moving with a probe modulation.
//!
//! Samples are folded into one modulation period, `u = (r·û − v_mod t) mod
//! λ_mod`, and the histogram is projected on its first Fourier harmonic,
//! which gives `(C, A, φ)` of `C [1 + A sin(2πu/λ_mod + φ)]`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::dynamics::TrajectoryRecord;
use crate::geometry::{DerivedGeometry, LatticeConfig, ModeSign};
use crate::stats::{bootstrap_each, std_dev, Estimate};

use super::{ObservableError, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED};

pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BunchingOptions {
    pub mode: ModeSign,
    pub bins: usize,
    /// Accumulate the mirror mode as well (same grating by symmetry).
    pub combine_modes: bool,
}

impl Default for BunchingOptions {
    fn default() -> Self {
        Self { mode: ModeSign::Plus, bins: DEFAULT_BINS, combine_modes: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BunchingResult {
    pub mode: ModeSign,
    pub counts: Vec<u64>,
    /// Mean bin content.
    pub mean_level: f64,
    pub amplitude: Estimate,
    pub phase: Estimate,
    /// Out-of-phase component `A sinφ`.
    pub quadrature: Estimate,
    /// RMS deviation of `counts/C − 1` from the fitted sinusoid.
    pub residual_rms: f64,
    /// RMS of the same quantity expected from sampling noise alone.
    pub noise_rms: f64,
}

impl BunchingResult {
    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Misfit beyond sampling noise, `√max(0, residual² − noise²)`.
    pub fn excess_residual(&self) -> f64 {
        (self.residual_rms.powi(2) - self.noise_rms.powi(2)).max(0.0).sqrt()
    }

    /// Normalized model density at bin `b`.
    pub fn model(&self, b: usize) -> f64 {
        1.0 + self.amplitude.value * (bin_angle(b, self.counts.len()) + self.phase.value).sin()
    }

}

fn bin_angle(b: usize, bins: usize) -> f64 {
    TAU * (b as f64 + 0.5) / bins as f64
}

/// `(C, A, φ)` of a binned periodic density, projected on bin centres.
pub fn first_harmonic(counts: &[f64]) -> (f64, f64, f64) {
    let bins = counts.len();
    let total: f64 = counts.iter().sum();
    let z: Complex64 = counts
        .iter()
        .enumerate()
        .map(|(b, &n)| Complex64::from_polar(n, -bin_angle(b, bins)))
        .sum();
    let coeff = Complex64::i() * z * 2.0 / total;
    (total / bins as f64, coeff.norm(), coeff.arg())
}

fn wrap(angle: f64) -> f64 {
    (angle + PI).rem_euclid(TAU) - PI
}

/// Moving-frame histogram of one mode with default binning.
pub fn bunching_histogram(
    records: &[TrajectoryRecord<f64>],
    config: &LatticeConfig<f64>,
    geometry: &DerivedGeometry<f64>,
    mode: ModeSign,
) -> Result<BunchingResult, ObservableError> {
    bunching_with(records, config, geometry, BunchingOptions { mode, ..BunchingOptions::default() })
}

pub fn bunching_with(
    records: &[TrajectoryRecord<f64>],
    config: &LatticeConfig<f64>,
    geometry: &DerivedGeometry<f64>,
    options: BunchingOptions,
) -> Result<BunchingResult, ObservableError> {
    if !config.probe_on() {
        return Err(ObservableError::ProbeOff);
    }
    let bins = options.bins.max(4);
    let modes: &[ModeSign] = match (options.combine_modes, options.mode) {
        (false, ModeSign::Plus) => &[ModeSign::Plus],
        (false, ModeSign::Minus) => &[ModeSign::Minus],
        (true, _) => &[ModeSign::Plus, ModeSign::Minus],
    };
    let lambda = geometry.lambda_mod;
    let v = geometry.v_mod;

    let per_atom: Vec<Vec<u64>> = records
        .iter()
        .map(|record| {
            let mut h = vec![0u64; bins];
            for &mode in modes {
                let u_hat = geometry.direction(mode);
                for s in &record.samples {
                    let u = (s.r.dot(u_hat) - v * s.t).rem_euclid(lambda);
                    let b = ((u / lambda * bins as f64) as usize).min(bins - 1);
                    h[b] += 1;
                }
            }
            h
        })
        .collect();
    let mut counts = vec![0u64; bins];
    for h in &per_atom {
        for (c, n) in counts.iter_mut().zip(h) {
            *c += n;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(ObservableError::EmptyRecords);
    }

    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (mean_level, amplitude, phase) = first_harmonic(&as_f64);

    let mut amplitudes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut phase_shifts = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut quadratures = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut bin_sum = vec![0.0; bins];
    let mut bin_sq = vec![0.0; bins];
    let mut draws = 0usize;
    let mut acc = vec![0.0; bins];
    bootstrap_each(records.len(), BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, |w| {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (h, &k) in per_atom.iter().zip(w) {
            if k > 0 {
                for (a, &n) in acc.iter_mut().zip(h) {
                    *a += (k as u64 * n) as f64;
                }
            }
        }
        let (c, a, phi) = first_harmonic(&acc);
        if !(c > 0.0) {
            return;
        }
        amplitudes.push(a);
        phase_shifts.push(wrap(phi - phase));
        quadratures.push(a * phi.sin());
        for b in 0..bins {
            let d = acc[b] / c;
            bin_sum[b] += d;
            bin_sq[b] += d * d;
        }
        draws += 1;
    });
    // per-bin spread of the normalized density under resampling
    let noise_var = if draws > 1 {
        let n = draws as f64;
        (0..bins)
            .map(|b| (bin_sq[b] - bin_sum[b] * bin_sum[b] / n) / (n - 1.0))
            .sum::<f64>()
            / bins as f64
    } else {
        0.0
    };

    let result = BunchingResult {
        mode: options.mode,
        counts,
        mean_level,
        amplitude: Estimate::new(amplitude, std_dev(&amplitudes)),
        phase: Estimate::new(phase, std_dev(&phase_shifts)),
        quadrature: Estimate::new(amplitude * phase.sin(), std_dev(&quadratures)),
        residual_rms: 0.0,
        noise_rms: noise_var.max(0.0).sqrt(),
    };
    let residual_rms = ((0..bins)
        .map(|b| (as_f64[b] / mean_level - result.model(b)).powi(2))
        .sum::<f64>()
        / bins as f64)
        .sqrt();
    Ok(BunchingResult { residual_rms, ..result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrajectorySample;
    use crate::field::Sublevel;
    use crate::num::Vec2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (LatticeConfig<f64>, DerivedGeometry<f64>) {
        let cfg = LatticeConfig { light_shift: -50.0, pump_rate: 9.0, probe_ratio: 0.09, probe_detuning: 14.142, ..LatticeConfig::default() };
        (cfg, DerivedGeometry::new(&cfg))
    }

    /// Inverse-transform sample of `1 + a sin(2πu/λ + φ)` on `[0, λ)`.
    fn sample_u(rng: &mut ChaCha8Rng, a: f64, phi: f64, lambda: f64) -> f64 {
        let target: f64 = rng.random();
        let cdf = |x: f64| x - a / TAU * ((x * TAU + phi).cos() - phi.cos());
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi) * lambda
    }

    /// Records whose samples sit at moving-frame coordinates drawn from the density.
    fn synthetic(a: f64, phi: f64, atoms: usize, per_atom: usize, seed: u64) -> Vec<TrajectoryRecord<f64>> {
        let (_, geo) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..atoms)
            .map(|i| {
                let samples = (0..per_atom)
                    .map(|k| {
                        let t = k as f64 * 0.7;
                        let u = sample_u(&mut rng, a, phi, geo.lambda_mod);
                        let cells: f64 = rng.random_range(-5..5) as f64;
                        let along = u + cells * geo.lambda_mod + geo.v_mod * t;
                        let across: f64 = rng.random_range(-10.0..10.0);
                        let perp = Vec2::new(-geo.u_plus.z, geo.u_plus.x);
                        TrajectorySample {
                            t,
                            r: geo.u_plus.scale(along) + perp.scale(across),
                            p: Vec2::zero(),
                            s: Sublevel::Minus,
                        }
                    })
                    .collect();
                TrajectoryRecord { atom_index: i, samples }
            })
            .collect()
    }

    #[test]
    fn inverse_sampling_oracle() {
        let (cfg, geo) = setup();
        let records = synthetic(0.3, 1.0, 200, 500, 3);
        let res = bunching_histogram(&records, &cfg, &geo, ModeSign::Plus).unwrap();
        assert_eq!(res.samples(), 100_000);
        assert!((res.mean_level * 64.0 - 100_000.0).abs() < 1e-6);
        assert!((res.amplitude.value - 0.30).abs() < 0.01, "{}", res.amplitude);
        assert!((res.phase.value - 1.00).abs() < 0.03, "{}", res.phase);
        assert!(res.amplitude.error > 0.0 && res.amplitude.error < 0.01);
        assert!(res.excess_residual() < 0.1 * res.amplitude.value);
    }

    #[test]
    fn uniform_samples_show_no_modulation() {
        let (cfg, geo) = setup();
        let records = synthetic(0.0, 0.0, 100, 200, 5);
        let res = bunching_histogram(&records, &cfg, &geo, ModeSign::Plus).unwrap();
        assert!(res.amplitude.value < 3.0 * res.amplitude.error, "{}", res.amplitude);
    }

    #[test]
    fn errors() {
        let (cfg, geo) = setup();
        let records = synthetic(0.1, 0.0, 2, 5, 1);
        let off = LatticeConfig { probe_ratio: 0.0, ..cfg };
        assert_eq!(bunching_histogram(&records, &off, &geo, ModeSign::Plus).unwrap_err(), ObservableError::ProbeOff);
        assert_eq!(bunching_histogram(&[], &cfg, &geo, ModeSign::Plus).unwrap_err(), ObservableError::EmptyRecords);
    }

    #[test]
    fn combined_modes_double_the_mass() {
        let (cfg, geo) = setup();
        let records = synthetic(0.2, 0.5, 10, 50, 9);
        let opts = BunchingOptions { combine_modes: true, ..BunchingOptions::default() };
        let res = bunching_with(&records, &cfg, &geo, opts).unwrap();
        assert_eq!(res.samples(), 1000);
    }

    proptest! {
        #[test]
        fn harmonic_extraction_is_exact_for_binned_sinusoids(a in 0.0f64..0.999, phi in -PI..PI, bins in 16usize..128) {
            let density: Vec<f64> = (0..bins).map(|b| 1.0 + a * (bin_angle(b, bins) + phi).sin()).collect();
            let (c, a_fit, phi_fit) = first_harmonic(&density);
            prop_assert!((c - 1.0).abs() < 1e-12);
            prop_assert!((a_fit - a).abs() < 1e-3);
            if a > 1e-2 {
                prop_assert!(wrap(phi_fit - phi).abs() < 1e-3 / a.max(1e-3));
            }
        }

        #[test]
        fn histogram_mass_is_conserved(atoms in 1usize..6, per in 1usize..40, seed in 0u64..100) {
            let (cfg, geo) = setup();
            let records = synthetic(0.1, 0.3, atoms, per, seed);
            let res = bunching_histogram(&records, &cfg, &geo, ModeSign::Minus).unwrap();
            prop_assert_eq!(res.samples(), (atoms * per) as u64);
            prop_assert!((res.mean_level * res.counts.len() as f64 - (atoms * per) as f64).abs() < 1e-9);
            prop_assert!(res.amplitude.value >= 0.0);
        }
    }
}
