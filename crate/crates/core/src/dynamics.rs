//! Single-trajectory Langevin/jump integrator on the bipotential surfaces.
//!
//! Each step is a symmetric drift-kick-drift split of the Hamiltonian part,
//! with the field evaluated once at the half-step position and time. That
//! one sample supplies the force, the optical-pumping rate for the jump
//! trial and the local scattering rate that sets the momentum noise.

use rand::Rng;
use thiserror::Error;

use crate::field::{Field, Sublevel};
use crate::geometry::{DerivedGeometry, LatticeConfig, MASS};
use crate::num::{Real, Vec2};

/// Upper bound on the jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.05;
/// Minimum number of steps per oscillation (or probe beat) period.
pub const STEPS_PER_PERIOD: f64 = 200.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("no pumping and no oscillation: the time step is unbounded")]
    DegenerateDynamics,
    #[error("non-finite state at t = {time} (trajectory seed {seed:?})")]
    NumericalBlowup { time: f64, seed: Option<u64> },
    #[error("horizon must be non-negative and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("sampling interval {interval} is shorter than the time step {dt}")]
    SamplingTooFine { interval: f64, dt: f64 },
}

impl DynamicsError {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            DynamicsError::NumericalBlowup { time, .. } => {
                DynamicsError::NumericalBlowup { time, seed: Some(seed) }
            }
            other => other,
        }
    }
}

/// Phase-space point and internal state of one atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomState<T> {
    pub r: Vec2<T>,
    pub p: Vec2<T>,
    pub s: Sublevel,
    pub t: T,
}

impl<T: Real> AtomState<T> {
    pub fn at_rest(r: Vec2<T>, s: Sublevel) -> Self {
        Self { r, p: Vec2::zero(), s, t: T::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.p.is_finite() && self.t.is_finite()
    }

    /// `p²/2M` in ħω_r.
    pub fn kinetic_energy(&self) -> T {
        self.p.norm_sqr() / T::of(2.0 * MASS)
    }
}

/// Integration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<T> {
    pub dt: T,
    /// Scale η of the continuous momentum diffusion.
    pub noise_scale: T,
    /// Whether a jump adds absorption and emission recoils.
    pub jump_recoil: bool,
}

impl<T: Real> StepControl<T> {
    /// Picks the largest step satisfying the jump-probability bound and the
    /// oscillation / probe-beat resolution bounds.
    pub fn choose(config: &LatticeConfig<T>, geometry: &DerivedGeometry<T>) -> Result<Self, DynamicsError> {
        Self::for_field(&Field::new(config, geometry), geometry)
    }

    /// As [`StepControl::choose`] for an explicit field model; the probe-beat
    /// bound only applies when the field is time dependent.
    pub fn for_field(field: &Field<T>, geometry: &DerivedGeometry<T>) -> Result<Self, DynamicsError> {
        let mut dt = T::infinity();
        if geometry.omega_x > T::zero() {
            dt = dt.min(T::TAU() / (T::of(STEPS_PER_PERIOD) * geometry.omega_x));
        }
        let gamma_max = field.max_departure_rate();
        if gamma_max > T::zero() {
            dt = dt.min(T::of(MAX_JUMP_PROBABILITY) / gamma_max);
        }
        if field.is_time_dependent() {
            dt = dt.min(T::TAU() / (T::of(STEPS_PER_PERIOD) * field.probe_detuning().abs()));
        }
        if !dt.is_finite() {
            return Err(DynamicsError::DegenerateDynamics);
        }
        Ok(Self { dt, noise_scale: T::one(), jump_recoil: true })
    }

    pub fn with_noise_scale(self, noise_scale: T) -> Self {
        Self { noise_scale, ..self }
    }

    pub fn with_jump_recoil(self, jump_recoil: bool) -> Self {
        Self { jump_recoil, ..self }
    }
}

/// Same as [`StepControl::choose`].
pub fn choose_dt<T: Real>(
    config: &LatticeConfig<T>,
    geometry: &DerivedGeometry<T>,
) -> Result<StepControl<T>, DynamicsError> {
    StepControl::choose(config, geometry)
}

/// One sampled point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample<T> {
    pub t: T,
    pub r: Vec2<T>,
    pub p: Vec2<T>,
    pub s: Sublevel,
}

impl<T: Real> From<&AtomState<T>> for TrajectorySample<T> {
    fn from(state: &AtomState<T>) -> Self {
        Self { t: state.t, r: state.r, p: state.p, s: state.s }
    }
}

/// Uniformly sampled time series of one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T> {
    pub atom_index: usize,
    pub samples: Vec<TrajectorySample<T>>,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_f64(&self) -> TrajectoryRecord<f64> {
        TrajectoryRecord {
            atom_index: self.atom_index,
            samples: self
                .samples
                .iter()
                .map(|s| TrajectorySample {
                    t: s.t.to_f64_lossy(),
                    r: s.r.cast(),
                    p: s.p.cast(),
                    s: s.s,
                })
                .collect(),
        }
    }
}

/// Stochastic integrator for one configuration.
#[derive(Debug, Clone, Copy)]
pub struct Integrator<T> {
    field: Field<T>,
    control: StepControl<T>,
}

impl<T: Real> Integrator<T> {
    pub fn new(config: &LatticeConfig<T>, geometry: &DerivedGeometry<T>, control: StepControl<T>) -> Self {
        Self { field: Field::new(config, geometry), control }
    }

    pub fn from_field(field: Field<T>, control: StepControl<T>) -> Self {
        Self { field, control }
    }

    pub fn field(&self) -> &Field<T> {
        &self.field
    }

    pub fn control(&self) -> &StepControl<T> {
        &self.control
    }

    /// Advances `state` by one step of length `dt`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, state: &mut AtomState<T>, rng: &mut R) -> Result<(), DynamicsError> {
        self.step_with(state, self.control.dt, rng)
    }

    fn step_with<R: Rng + ?Sized>(
        &self,
        state: &mut AtomState<T>,
        dt: T,
        rng: &mut R,
    ) -> Result<(), DynamicsError> {
        let half = dt / T::of(2.0);
        let velocity_scale = T::of(1.0 / MASS);
        let s = state.s;

        // drift half, kick, drift half
        let r_mid = state.r + state.p.scale(velocity_scale * half);
        let local = self.field.local(r_mid, state.t + half, s);
        state.p += local.force.scale(dt);
        state.r = r_mid + state.p.scale(velocity_scale * half);

        if T::sample_unit(rng) < local.departure_rate * dt {
            state.s = s.flipped();
            if self.control.jump_recoil {
                state.p += random_unit(rng) + random_unit(rng);
            }
        }

        // per-axis variance 2 D_p dt with D_p = η R_s / 2
        let variance = self.control.noise_scale * local.scatter_rate * dt;
        if variance > T::zero() {
            let sigma = variance.sqrt();
            state.p += Vec2::new(T::sample_normal(rng), T::sample_normal(rng)).scale(sigma);
        }

        state.t = state.t + dt;
        if !state.is_finite() {
            return Err(DynamicsError::NumericalBlowup { time: state.t.to_f64_lossy(), seed: None });
        }
        Ok(())
    }

    /// Integrates for `duration` without recording. The step is shrunk so an
    /// integer number of steps covers the duration exactly.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        state: &mut AtomState<T>,
        duration: T,
        rng: &mut R,
    ) -> Result<(), DynamicsError> {
        if !(duration >= T::zero()) || !duration.is_finite() {
            return Err(DynamicsError::InvalidHorizon(duration.to_f64_lossy()));
        }
        let steps = (duration / self.control.dt).ceil().to_usize().unwrap_or(0);
        if steps == 0 {
            return Ok(());
        }
        let dt = duration / T::of(steps as f64);
        let t0 = state.t;
        for k in 1..=steps {
            self.step_with(state, dt, rng)?;
            state.t = t0 + dt * T::of(k as f64);
        }
        Ok(())
    }

    /// Integrates for `horizon`, recording the state every `sampling_interval`
    /// (initial state included).
    pub fn simulate_trajectory<R: Rng + ?Sized>(
        &self,
        init: AtomState<T>,
        horizon: T,
        sampling_interval: T,
        rng: &mut R,
    ) -> Result<TrajectoryRecord<T>, DynamicsError> {
        if !(horizon >= T::zero()) || !horizon.is_finite() {
            return Err(DynamicsError::InvalidHorizon(horizon.to_f64_lossy()));
        }
        if sampling_interval < self.control.dt {
            return Err(DynamicsError::SamplingTooFine {
                interval: sampling_interval.to_f64_lossy(),
                dt: self.control.dt.to_f64_lossy(),
            });
        }
        let n_samples = (horizon / sampling_interval + T::of(1e-9)).floor().to_usize().unwrap_or(0);
        let mut samples = Vec::with_capacity(n_samples + 1);
        let mut state = init;
        let t0 = init.t;
        samples.push(TrajectorySample::from(&state));
        for i in 1..=n_samples {
            self.advance(&mut state, sampling_interval, rng)?;
            state.t = t0 + sampling_interval * T::of(i as f64);
            samples.push(TrajectorySample::from(&state));
        }
        Ok(TrajectoryRecord { atom_index: 0, samples })
    }
}

#[inline]
fn random_unit<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Vec2<T> {
    let (s, c) = (T::TAU() * T::sample_unit(rng)).sin_cos();
    Vec2::new(c, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_6, TAU};

    fn config(depth: f64, gamma: f64, probe_ratio: f64) -> LatticeConfig<f64> {
        LatticeConfig {
            light_shift: -depth,
            pump_rate: gamma,
            half_angle: FRAC_PI_6,
            probe_ratio,
            probe_detuning: 0.0,
        }
    }

    #[test]
    fn dt_oscillation_bound_binds() {
        let cfg = config(200.0, 13.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let control = choose_dt(&cfg, &geo).unwrap();
        let osc = TAU / (200.0 * geo.omega_x);
        let jump = 0.05 / (2.0 * 13.0 / 9.0 * 8.0);
        assert!(osc < jump);
        assert_relative_eq!(control.dt, osc, max_relative = 1e-14);
        assert_relative_eq!(control.dt, 1.1107e-3, max_relative = 1e-4);
        assert_eq!(control.noise_scale, 1.0);
        assert!(control.jump_recoil);
    }

    #[test]
    fn dt_jump_bound_binds() {
        let cfg = config(50.0, 1e4, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let control = choose_dt(&cfg, &geo).unwrap();
        assert_relative_eq!(control.dt, 0.05 / (2.0 * 1e4 / 9.0 * 8.0), max_relative = 1e-14);
    }

    #[test]
    fn dt_probe_bound() {
        let mut cfg = config(50.0, 1.0, 0.09);
        cfg.probe_detuning = 100.0;
        let geo = DerivedGeometry::new(&cfg);
        let control = choose_dt(&cfg, &geo).unwrap();
        assert_relative_eq!(control.dt, TAU / (200.0 * 100.0), max_relative = 1e-14);
        let gamma_max = 2.0 / 9.0 * (4.3f64).powi(2) / 2.0;
        assert!(control.dt * gamma_max <= 0.05);
    }

    #[test]
    fn dt_without_pumping_uses_oscillation_only() {
        let cfg = config(200.0, 0.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let control = choose_dt(&cfg, &geo).unwrap();
        assert_relative_eq!(control.dt, TAU / (200.0 * geo.omega_x), max_relative = 1e-14);
    }

    #[test]
    fn dt_degenerate() {
        // Only reachable with an unvalidated config.
        let cfg = LatticeConfig { half_angle: 0.0, ..config(200.0, 0.0, 0.0) };
        let geo = DerivedGeometry::new(&cfg);
        assert_eq!(choose_dt(&cfg, &geo), Err(DynamicsError::DegenerateDynamics));
    }

    #[test]
    fn free_flight_is_straight() {
        let cfg = config(1e-300, 0.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let control = StepControl { dt: 1e-3, noise_scale: 0.0, jump_recoil: true };
        let integrator = Integrator::new(&cfg, &geo, control);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = AtomState { r: Vec2::new(1.0, -2.0), p: Vec2::new(0.3, -0.7), s: Sublevel::Minus, t: 0.0 };
        integrator.advance(&mut state, 5.0, &mut rng).unwrap();
        assert_relative_eq!(state.r.x, 1.0 + 2.0 * 0.3 * 5.0, max_relative = 1e-12);
        assert_relative_eq!(state.r.z, -2.0 - 2.0 * 0.7 * 5.0, max_relative = 1e-12);
        assert_relative_eq!(state.t, 5.0, max_relative = 1e-15);
    }

    #[test]
    fn never_flips_without_pumping() {
        let cfg = config(200.0, 0.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let control = choose_dt(&cfg, &geo).unwrap();
        let integrator = Integrator::new(&cfg, &geo, control);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = AtomState {
            r: integrator.field().minus_well(0, 0),
            p: Vec2::new(12.0, 3.0),
            s: Sublevel::Minus,
            t: 0.0,
        };
        let rec = integrator.simulate_trajectory(start, 20.0, 0.1, &mut rng).unwrap();
        assert!(rec.samples.iter().all(|s| s.s == Sublevel::Minus));
    }

    #[test]
    fn zero_horizon_keeps_initial_sample_only() {
        let cfg = config(200.0, 13.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let integrator = Integrator::new(&cfg, &geo, choose_dt(&cfg, &geo).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = AtomState::at_rest(Vec2::new(0.1, 0.2), Sublevel::Plus);
        let rec = integrator.simulate_trajectory(start, 0.0, 0.5, &mut rng).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.samples[0], TrajectorySample::from(&start));
    }

    #[test]
    fn rejects_bad_horizon_and_sampling() {
        let cfg = config(200.0, 13.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let integrator = Integrator::new(&cfg, &geo, choose_dt(&cfg, &geo).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = AtomState::at_rest(Vec2::zero(), Sublevel::Plus);
        assert!(matches!(
            integrator.simulate_trajectory(start, -1.0, 0.5, &mut rng),
            Err(DynamicsError::InvalidHorizon(_))
        ));
        assert!(matches!(
            integrator.simulate_trajectory(start, 1.0, 1e-6, &mut rng),
            Err(DynamicsError::SamplingTooFine { .. })
        ));
    }

    #[test]
    fn blowup_is_reported_with_seed() {
        let cfg = config(200.0, 13.0, 0.0);
        let geo = DerivedGeometry::new(&cfg);
        let integrator = Integrator::new(&cfg, &geo, choose_dt(&cfg, &geo).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = AtomState::at_rest(Vec2::new(f64::NAN, 0.0), Sublevel::Plus);
        let err = integrator.step(&mut state, &mut rng).unwrap_err().with_seed(77);
        assert!(matches!(err, DynamicsError::NumericalBlowup { seed: Some(77), .. }));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut cfg = config(50.0, 7.0, 0.09);
        cfg.probe_detuning = 14.14;
        let geo = DerivedGeometry::new(&cfg);
        let integrator = Integrator::new(&cfg, &geo, choose_dt(&cfg, &geo).unwrap());
        let start = AtomState::at_rest(integrator.field().minus_well(1, 0), Sublevel::Minus);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            integrator.simulate_trajectory(start, 30.0, 0.5, &mut rng).unwrap()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn single_precision_runs() {
        let cfg = LatticeConfig::<f32> {
            light_shift: -50.0,
            pump_rate: 7.0,
            half_angle: std::f32::consts::FRAC_PI_6,
            probe_ratio: 0.09,
            probe_detuning: 14.14,
        };
        let geo = DerivedGeometry::new(&cfg);
        let integrator = Integrator::new(&cfg, &geo, choose_dt(&cfg, &geo).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = AtomState::at_rest(integrator.field().minus_well(0, 0), Sublevel::Minus);
        let rec = integrator.simulate_trajectory(start, 10.0, 0.5, &mut rng).unwrap();
        assert_eq!(rec.len(), 21);
        assert!(rec.samples.iter().all(|s| s.r.is_finite()));
    }
}
