//! Ensemble preparation, thermalization and deterministic parallel execution.
//!
//! Every trajectory owns a ChaCha8 stream seeded from `(master_seed,
//! atom_index)` through SplitMix64, so results do not depend on thread count
//! or on the order in which trajectories finish.

pub mod archive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{AtomState, DynamicsError, Integrator, StepControl, TrajectoryRecord};
use crate::field::{Field, ProbeModel, Sublevel};
use crate::geometry::{ConfigError, DerivedGeometry, LatticeConfig, MASS};
use crate::num::{Real, Vec2};

/// Fraction of failed trajectories above which the ensemble is rejected.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Number of wells per axis (on each side of the origin) used for seeding.
const INIT_WELL_SPAN: i64 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid ensemble configuration: {0}")]
    InvalidEnsemble(String),
    #[error("{failed} of {total} trajectories failed (first: {first})")]
    EnsembleUnhealthy { failed: usize, total: usize, first: String },
}

/// Size and timing of one ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n_atoms: usize,
    /// `None` selects `max(50/⟨γ⟩, 20·2π/Ω_x)`.
    pub thermalization_time: Option<f64>,
    pub measurement_time: f64,
    pub sampling_interval: f64,
    pub master_seed: u64,
    /// Initial `k_B T` in ħω_r; `None` selects `|Δ₀′|/5`.
    pub init_temperature: Option<f64>,
    pub noise_scale: f64,
    pub jump_recoil: bool,
    pub probe_model: ProbeModel,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_atoms: 500,
            thermalization_time: None,
            measurement_time: 2000.0,
            sampling_interval: 1.0,
            master_seed: 0x5eed,
            init_temperature: None,
            noise_scale: 1.0,
            jump_recoil: true,
            probe_model: ProbeModel::Coherent,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_atoms == 0 {
            return Err(EnsembleError::InvalidEnsemble("n_atoms must be at least 1".into()));
        }
        if !(self.measurement_time > 0.0) || !self.measurement_time.is_finite() {
            return Err(EnsembleError::InvalidEnsemble("measurement_time must be positive".into()));
        }
        if !(self.sampling_interval > 0.0) || !self.sampling_interval.is_finite() {
            return Err(EnsembleError::InvalidEnsemble("sampling_interval must be positive".into()));
        }
        if let Some(t) = self.thermalization_time {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(EnsembleError::InvalidEnsemble("thermalization_time must be non-negative".into()));
            }
        }
        if let Some(temp) = self.init_temperature {
            if !(temp >= 0.0) || !temp.is_finite() {
                return Err(EnsembleError::InvalidEnsemble("init_temperature must be non-negative".into()));
            }
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(EnsembleError::InvalidEnsemble("noise_scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Thermalization time actually used for `config`.
    pub fn resolved_thermalization<T: Real>(&self, config: &LatticeConfig<T>, geometry: &DerivedGeometry<T>) -> f64 {
        self.thermalization_time.unwrap_or_else(|| default_thermalization(config, geometry))
    }

    pub fn resolved_temperature<T: Real>(&self, config: &LatticeConfig<T>) -> f64 {
        self.init_temperature
            .unwrap_or_else(|| config.light_shift.abs().to_f64_lossy() / 5.0)
    }
}

/// `max(50/⟨γ⟩, 20·2π/Ω_x)` with `⟨γ⟩ = 2Γ₀′/3`.
pub fn default_thermalization<T: Real>(config: &LatticeConfig<T>, geometry: &DerivedGeometry<T>) -> f64 {
    let mean_pump = 2.0 / 3.0 * config.pump_rate.to_f64_lossy();
    let omega = geometry.omega_x.to_f64_lossy();
    let pumping = if mean_pump > 0.0 { 50.0 / mean_pump } else { 0.0 };
    let oscillation = if omega > 0.0 { 20.0 * std::f64::consts::TAU / omega } else { 0.0 };
    pumping.max(oscillation)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the RNG stream owned by trajectory `atom_index`.
pub fn trajectory_seed(master_seed: u64, atom_index: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(atom_index as u64))
}

pub fn trajectory_rng(master_seed: u64, atom_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trajectory_seed(master_seed, atom_index))
}

/// Provenance of one ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub lattice: LatticeConfig<f64>,
    pub ensemble: EnsembleConfig,
    pub thermalization_time: f64,
    pub init_temperature: f64,
    pub dt: f64,
    pub code_version: &'static str,
    pub seeds: Vec<u64>,
    /// `(atom_index, seed, error)` for every failed trajectory.
    pub failures: Vec<(usize, u64, String)>,
}

impl RunManifest {
    /// Flat `key = value` rendering, one entry per line.
    pub fn to_lines(&self) -> Vec<String> {
        let l = &self.lattice;
        let e = &self.ensemble;
        let mut lines = vec![
            format!("code_version = {}", self.code_version),
            format!("delta0 = {}", l.light_shift),
            format!("gamma0 = {}", l.pump_rate),
            format!("theta_rad = {}", l.half_angle),
            format!("probe_ratio = {}", l.probe_ratio),
            format!("probe_detuning = {}", l.probe_detuning),
            format!("atoms = {}", e.n_atoms),
            format!("thermalization_time = {}", self.thermalization_time),
            format!("measurement_time = {}", e.measurement_time),
            format!("sampling_interval = {}", e.sampling_interval),
            format!("master_seed = {}", e.master_seed),
            format!("init_temperature = {}", self.init_temperature),
            format!("noise_scale = {}", e.noise_scale),
            format!("jump_recoil = {}", e.jump_recoil),
            format!("probe_model = {:?}", e.probe_model),
            format!("dt = {}", self.dt),
        ];
        let seeds: Vec<String> = self.seeds.iter().map(|s| format!("{s:016x}")).collect();
        lines.push(format!("trajectory_seeds = {}", seeds.join(",")));
        for (index, seed, err) in &self.failures {
            lines.push(format!("failed_trajectory = {index},{seed:016x},{err}"));
        }
        lines
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult<T> {
    /// Post-thermalization records, ordered by atom index.
    pub records: Vec<TrajectoryRecord<T>>,
    pub manifest: RunManifest,
}

/// Draws starting states: random `U₋` well bottoms of the probe-free lattice,
/// sublevel `|−⟩`, Maxwellian momenta with per-axis variance `M k_B T`.
pub fn init_atoms<T: Real, R: rand::Rng + ?Sized>(
    config: &LatticeConfig<T>,
    geometry: &DerivedGeometry<T>,
    ensemble: &EnsembleConfig,
    rng: &mut R,
) -> Vec<AtomState<T>> {
    (0..ensemble.n_atoms)
        .map(|_| init_atom(config, geometry, ensemble, rng))
        .collect()
}

fn init_atom<T: Real, R: rand::Rng + ?Sized>(
    config: &LatticeConfig<T>,
    geometry: &DerivedGeometry<T>,
    ensemble: &EnsembleConfig,
    rng: &mut R,
) -> AtomState<T> {
    let probe_free = LatticeConfig { probe_ratio: T::zero(), ..*config };
    let field = Field::new(&probe_free, geometry);
    let m = rng.random_range(-INIT_WELL_SPAN..=INIT_WELL_SPAN);
    let n = rng.random_range(-INIT_WELL_SPAN..=INIT_WELL_SPAN);
    let sigma = T::of((MASS * ensemble.resolved_temperature(config)).sqrt());
    let p = Vec2::new(T::sample_normal(rng), T::sample_normal(rng)).scale(sigma);
    AtomState { r: field.minus_well(m, n), p, s: Sublevel::Minus, t: T::zero() }
}

/// Runs one thermalized, sampled trajectory per atom in parallel on the
/// current rayon pool.
pub fn run_ensemble<T: Real>(
    config: &LatticeConfig<T>,
    geometry: &DerivedGeometry<T>,
    ensemble: &EnsembleConfig,
) -> Result<EnsembleResult<T>, EnsembleError> {
    let config = config.validate()?;
    ensemble.validate()?;
    let field = Field::new(&config, geometry).with_probe_model(ensemble.probe_model);
    let control = StepControl::for_field(&field, geometry)?
        .with_noise_scale(T::of(ensemble.noise_scale))
        .with_jump_recoil(ensemble.jump_recoil);
    let integrator = Integrator::from_field(field, control);
    let thermalization = ensemble.resolved_thermalization(&config, geometry);

    let outcomes: Vec<Result<TrajectoryRecord<T>, DynamicsError>> = (0..ensemble.n_atoms)
        .into_par_iter()
        .map(|index| {
            let seed = trajectory_seed(ensemble.master_seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = init_atom(&config, geometry, ensemble, &mut rng);
            integrator
                .advance(&mut state, T::of(thermalization), &mut rng)
                .and_then(|_| {
                    integrator.simulate_trajectory(
                        state,
                        T::of(ensemble.measurement_time),
                        T::of(ensemble.sampling_interval),
                        &mut rng,
                    )
                })
                .map(|mut record| {
                    record.atom_index = index;
                    record
                })
                .map_err(|e| e.with_seed(seed))
        })
        .collect();

    let seeds: Vec<u64> = (0..ensemble.n_atoms)
        .map(|i| trajectory_seed(ensemble.master_seed, i))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(record) => records.push(record),
            Err(err) => failures.push((index, seeds[index], err.to_string())),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * ensemble.n_atoms as f64 {
        return Err(EnsembleError::EnsembleUnhealthy {
            failed: failures.len(),
            total: ensemble.n_atoms,
            first: failures[0].2.clone(),
        });
    }

    let lattice = LatticeConfig {
        light_shift: config.light_shift.to_f64_lossy(),
        pump_rate: config.pump_rate.to_f64_lossy(),
        half_angle: config.half_angle.to_f64_lossy(),
        probe_ratio: config.probe_ratio.to_f64_lossy(),
        probe_detuning: config.probe_detuning.to_f64_lossy(),
    };
    let manifest = RunManifest {
        lattice,
        ensemble: ensemble.clone(),
        thermalization_time: thermalization,
        init_temperature: ensemble.resolved_temperature(&config),
        dt: control.dt.to_f64_lossy(),
        code_version: env!("CARGO_PKG_VERSION"),
        seeds,
        failures,
    };
    Ok(EnsembleResult { records, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_6;

    fn lattice(depth: f64, gamma: f64) -> LatticeConfig<f64> {
        LatticeConfig {
            light_shift: -depth,
            pump_rate: gamma,
            half_angle: FRAC_PI_6,
            probe_ratio: 0.0,
            probe_detuning: 0.0,
        }
    }

    fn small(n_atoms: usize) -> EnsembleConfig {
        EnsembleConfig {
            n_atoms,
            thermalization_time: Some(2.0),
            measurement_time: 5.0,
            sampling_interval: 0.5,
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn zero_temperature_gives_zero_momenta() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let ens = EnsembleConfig { init_temperature: Some(0.0), ..small(50) };
        let atoms = init_atoms(&cfg, &geo, &ens, &mut trajectory_rng(1, 0));
        assert!(atoms.iter().all(|a| a.p == Vec2::zero()));
    }

    #[test]
    fn initial_momentum_variance() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let ens = EnsembleConfig { n_atoms: 1000, ..EnsembleConfig::default() };
        let atoms = init_atoms(&cfg, &geo, &ens, &mut trajectory_rng(2, 0));
        let expected = MASS * 50.0 / 5.0;
        let var = atoms.iter().map(|a| a.p.x * a.p.x).sum::<f64>() / atoms.len() as f64;
        assert!((var - expected).abs() < 0.05 * expected, "var {var} vs {expected}");
    }

    #[test]
    fn initial_positions_are_dark_for_plus() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let field = Field::new(&cfg, &geo);
        let atoms = init_atoms(&cfg, &geo, &small(200), &mut trajectory_rng(3, 0));
        for atom in atoms {
            assert!(field.sample(atom.r, 0.0).pump_minus_to_plus.abs() < 1e-10);
            assert_eq!(atom.s, Sublevel::Minus);
        }
    }

    #[test]
    fn same_seed_same_result() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let a = run_ensemble(&cfg, &geo, &small(8)).unwrap();
        let b = run_ensemble(&cfg, &geo, &small(8)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.manifest, b.manifest);
        let c = run_ensemble(&cfg, &geo, &EnsembleConfig { master_seed: 99, ..small(8) }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&cfg, &geo, &small(6)).unwrap())
        };
        assert_eq!(run(1).records, run(3).records);
    }

    #[test]
    fn single_atom() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let res = run_ensemble(&cfg, &geo, &small(1)).unwrap();
        assert_eq!(res.records.len(), 1);
        assert_eq!(res.records[0].len(), 11);
        assert_eq!(res.manifest.seeds.len(), 1);
    }

    #[test]
    fn records_start_after_thermalization() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        let res = run_ensemble(&cfg, &geo, &small(2)).unwrap();
        for rec in &res.records {
            assert!((rec.samples[0].t - 2.0).abs() < 1e-12);
            assert!((rec.samples.last().unwrap().t - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn default_thermalization_time() {
        let cfg = lattice(200.0, 6.0);
        let geo = DerivedGeometry::new(&cfg);
        // 50 / 4 = 12.5 > 20·2π/28.28
        assert!((default_thermalization(&cfg, &geo) - 12.5).abs() < 1e-12);
        let cfg = lattice(200.0, 0.0);
        let expected = 20.0 * std::f64::consts::TAU / geo.omega_x;
        assert!((default_thermalization(&cfg, &geo) - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_ensembles() {
        let cfg = lattice(50.0, 5.0);
        let geo = DerivedGeometry::new(&cfg);
        assert!(run_ensemble(&cfg, &geo, &small(0)).is_err());
        let bad = EnsembleConfig { measurement_time: 0.0, ..small(2) };
        assert!(matches!(run_ensemble(&cfg, &geo, &bad), Err(EnsembleError::InvalidEnsemble(_))));
        let blue = LatticeConfig { light_shift: 10.0, ..cfg };
        assert!(matches!(run_ensemble(&blue, &geo, &small(2)), Err(EnsembleError::Config(_))));
    }

    #[test]
    fn seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| trajectory_seed(7, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }
}
