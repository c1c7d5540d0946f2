use std::f64::consts::FRAC_PI_6;

use latticemc_core::field::ProbeModel;
use latticemc_core::observables::{kinetic_energy, msd_diffusion, spectrum_point, Axis, ObservableError};
use latticemc_core::stats::{correlation, Estimate};
use latticemc_core::{
    run_ensemble, AtomState, DerivedGeometry, EnsembleConfig, Field, Integrator, LatticeConfig, StepControl,
    Sublevel, Vec2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lattice(delta0: f64, gamma0: f64, eps2: f64, delta: f64) -> LatticeConfig {
    LatticeConfig { light_shift: delta0, pump_rate: gamma0, half_angle: FRAC_PI_6, probe_ratio: eps2, probe_detuning: delta }
}

fn omega_x(delta0: f64) -> f64 {
    DerivedGeometry::new(&lattice(delta0, 0.0, 0.0, 0.0)).omega_x
}

#[test]
fn force_matches_central_differences() {
    let cfg = lattice(-50.0, 7.0, 0.09, omega_x(-50.0));
    let field = Field::new(&cfg, &DerivedGeometry::new(&cfg));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r = Vec2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let t = rng.random_range(0.0..10.0);
        let sample = field.sample(r, t);
        // scale of the force for a relative measure
        let scale = 8.0 / 3.0 * 50.0 * 4.0;
        for s in [Sublevel::Plus, Sublevel::Minus] {
            let u = |dr: Vec2| field.sample(r + dr, t).potential(s);
            let d = |e: Vec2| (-u(e.scale(2.0 * h)) + 8.0 * u(e.scale(h)) - 8.0 * u(e.scale(-h)) + u(e.scale(-2.0 * h))) / (12.0 * h);
            let numeric = Vec2::new(-d(Vec2::new(1.0, 0.0)), -d(Vec2::new(0.0, 1.0)));
            let err = (numeric - sample.force(s)).norm() / scale;
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

/// Upward zero crossings of `x − x0` after a small kick out of a `U₋` well.
fn harmonic_run(delta0: f64) -> (f64, f64) {
    let cfg = lattice(delta0, 0.0, 0.0, 0.0);
    let geometry = DerivedGeometry::new(&cfg);
    let integrator = Integrator::new(&cfg, &geometry, StepControl::choose(&cfg, &geometry).unwrap());
    let field = integrator.field();
    let well = field.minus_well(0, 0);
    let mut state = AtomState::at_rest(well + Vec2::new(0.02, 0.0), Sublevel::Minus);
    let energy = |s: &AtomState| s.kinetic_energy() + field.sample(s.r, s.t).potential(Sublevel::Minus);
    let e0 = energy(&state);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut crossings = Vec::new();
    let mut drift: f64 = 0.0;
    let mut prev = (state.t, state.r.x - well.x);
    while crossings.len() < 51 {
        integrator.step(&mut state, &mut rng).unwrap();
        let now = (state.t, state.r.x - well.x);
        if prev.1 < 0.0 && now.1 >= 0.0 {
            crossings.push(prev.0 + (now.0 - prev.0) * prev.1 / (prev.1 - now.1));
        }
        drift = drift.max((energy(&state) - e0).abs());
        prev = now;
    }
    let period = (crossings[50] - crossings[0]) / 50.0;
    (std::f64::consts::TAU / period, drift / (e0 - field.sample(well, 0.0).potential(Sublevel::Minus)))
}

#[test]
fn small_oscillations_match_harmonic_frequency() {
    for delta0 in [-50.0, -200.0] {
        let (omega, drift) = harmonic_run(delta0);
        let expected = omega_x(delta0);
        assert!((omega / expected - 1.0).abs() < 0.01, "Δ={delta0}: {omega} vs {expected}");
        assert!(drift < 1e-3, "Δ={delta0}: oscillation energy drift {drift:e}");
    }
}

#[test]
fn jump_and_noise_statistics() {
    let cfg = lattice(-50.0, 13.0, 0.09, omega_x(-50.0));
    let geometry = DerivedGeometry::new(&cfg);
    let control = StepControl::choose(&cfg, &geometry).unwrap();
    let integrator = Integrator::new(&cfg, &geometry, control);
    let field = integrator.field();
    let dt = control.dt;
    let start = AtomState { r: Vec2::new(1.3, 0.4), p: Vec2::zero(), s: Sublevel::Minus, t: 2.0 };
    let local = field.local(start.r, start.t + dt / 2.0, Sublevel::Minus);
    let q = local.departure_rate * dt;
    assert!(q > 1e-3 && q <= 0.05, "{q}");

    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut flips, mut kick_sq, mut noise) = (0u64, 0.0, Vec::new());
    for _ in 0..n {
        let mut state = start;
        integrator.step(&mut state, &mut rng).unwrap();
        let dp = state.p - local.force.scale(dt);
        if state.s == Sublevel::Plus {
            flips += 1;
            kick_sq += dp.norm_sqr();
        } else if noise.len() < 200_000 {
            noise.push(dp.x);
        }
    }
    let expected = n as f64 * q;
    let sigma = (expected * (1.0 - q)).sqrt();
    assert!((flips as f64 - expected).abs() < 4.0 * sigma, "{flips} flips, expected {expected:.0}");

    // two unit recoils plus noise: ⟨|Δp|²⟩ = 2 + 2 η R dt
    let noise_var = local.scatter_rate * dt;
    let mean_kick = kick_sq / flips as f64;
    assert!((mean_kick - (2.0 + 2.0 * noise_var)).abs() < 0.03 * 2.0, "{mean_kick}");
    let var = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    assert!((var / noise_var - 1.0).abs() < 0.02, "{var} vs {noise_var}");
}

fn ensemble(atoms: usize, tmax: f64, seed: u64) -> EnsembleConfig {
    EnsembleConfig { n_atoms: atoms, measurement_time: tmax, master_seed: seed, ..EnsembleConfig::default() }
}

#[test]
fn kinetic_energy_scales_with_depth() {
    let depths = [-50.0, -100.0, -200.0, -400.0];
    let energies: Vec<Estimate> = depths
        .iter()
        .map(|&d| {
            let cfg = lattice(d, 0.5 * d.abs().sqrt(), 0.0, 0.0);
            let res = run_ensemble(&cfg, &DerivedGeometry::new(&cfg), &ensemble(40, 60.0, 5)).unwrap();
            kinetic_energy(&res.records)
        })
        .collect();
    let abs: Vec<f64> = depths.iter().map(|d: &f64| d.abs()).collect();
    let values: Vec<f64> = energies.iter().map(|e| e.value).collect();
    assert!(correlation(&abs, &values) > 0.95, "{energies:?}");
    assert!(energies[3].value > energies[1].value);
}

#[test]
fn time_averaged_probe_matches_far_detuned_coherent_probe() {
    let delta0 = -50.0;
    let cfg = lattice(delta0, 7.0, 0.09, 100.0 * omega_x(delta0));
    let geometry = DerivedGeometry::new(&cfg);
    let base = ensemble(30, 40.0, 21);
    let coherent = run_ensemble(&cfg, &geometry, &base).unwrap();
    let averaged = EnsembleConfig { probe_model: ProbeModel::TimeAveraged, master_seed: 22, ..base };
    let averaged = run_ensemble(&cfg, &geometry, &averaged).unwrap();
    let (a, b) = (kinetic_energy(&coherent.records), kinetic_energy(&averaged.records));
    let joint = (a.error.powi(2) + b.error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() < 3.0 * joint, "{a} vs {b}");
}

#[test]
fn far_detuned_probe_leaves_no_grating() {
    let delta0 = -50.0;
    let ens = EnsembleConfig { sampling_interval: 0.5, ..ensemble(60, 200.0, 8) };
    let far = lattice(delta0, 7.0, 0.09, 10.0 * omega_x(delta0));
    let s = spectrum_point(&far, &DerivedGeometry::new(&far), &ens).unwrap();
    assert!(s.value.abs() < 3.0 * s.error, "far: {s}");
    let near = lattice(delta0, 7.0, 0.09, omega_x(delta0));
    let s = spectrum_point(&near, &DerivedGeometry::new(&near), &ens).unwrap();
    assert!(s.value.abs() > 3.0 * s.error, "resonant: {s}");
    let off = lattice(delta0, 7.0, 0.0, omega_x(delta0));
    assert_eq!(spectrum_point(&off, &DerivedGeometry::new(&off), &ens).unwrap_err(), ObservableError::ProbeOff);
}

#[test]
fn different_seeds_give_compatible_diffusion() {
    let cfg = lattice(-50.0, 10.0, 0.0, 0.0);
    let geometry = DerivedGeometry::new(&cfg);
    let d: Vec<Estimate> = [1, 2]
        .iter()
        .map(|&seed| {
            let res = run_ensemble(&cfg, &geometry, &ensemble(100, 300.0, seed)).unwrap();
            match msd_diffusion(&res.records, Axis::Z) {
                Ok(r) => r.diffusion,
                Err(ObservableError::DiffusiveRegimeNotReached { diffusion, .. }) => diffusion,
                Err(e) => panic!("{e}"),
            }
        })
        .collect();
    assert!((d[0].value - d[1].value).abs() < d[0].error + d[1].error, "{} vs {}", d[0], d[1]);
}
