//! Lattice and probe geometry in recoil units.
//!
//! Every quantity in this crate is expressed in recoil units: lengths in `1/k`,
//! momenta in `ħk`, rates and angular frequencies in `ω_r = ħk²/2M`, energies in
//! `ħω_r` and times in `1/ω_r`. With `ħ = k = ω_r = 1` the atomic mass is
//! `M = 1/2`, so free flight obeys `dx/dt = 2p`.
//!
//! The lattice is the 3D lin⊥lin arrangement restricted to the `y = 0` plane:
//! two beams in the (x, z) plane at `±θ` from the z axis and a weak probe
//! propagating along `+z`. The probe beats against the (x, z) beams and
//! produces two travelling modulations with wave vectors `Δk± = k_L(±x) − k_P`.

use thiserror::Error;

use crate::num::{Real, Vec2};

/// Atomic mass in recoil units.
pub const MASS: f64 = 0.5;

/// Spatial average of `cos²(2πx̂) + cos²(2πŷ)` in the `y = 0` plane.
pub const PLANE_SPATIAL_AVERAGE: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("light shift per beam must be strictly negative (red detuning), got {0}")]
    RedDetuningRequired(f64),
    #[error("half angle must lie in (0, π/2), got {0} rad")]
    HalfAngleOutOfRange(f64),
    #[error("pump rate per beam must be non-negative, got {0}")]
    NegativePumpRate(f64),
    #[error("probe intensity ratio must be non-negative, got {0}")]
    NegativeProbeRatio(f64),
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
}

/// Physical parameters of one lattice + probe configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig<T> {
    /// Light shift per lattice beam Δ₀′ (ω_r), strictly negative.
    pub light_shift: T,
    /// Photon scattering rate per lattice beam Γ₀′ (ω_r).
    pub pump_rate: T,
    /// Half angle θ between the quasi-copropagating beams (rad).
    pub half_angle: T,
    /// Probe to lattice-beam intensity ratio ε² = I_P / I_L.
    pub probe_ratio: T,
    /// Probe detuning δ from the lattice beams (ω_r).
    pub probe_detuning: T,
}

impl<T: Real> Default for LatticeConfig<T> {
    fn default() -> Self {
        Self {
            light_shift: T::of(-200.0),
            pump_rate: T::of(13.0),
            half_angle: T::FRAC_PI_6(),
            probe_ratio: T::zero(),
            probe_detuning: T::zero(),
        }
    }
}

impl<T: Real> LatticeConfig<T> {
    /// Probe field amplitude ε in single-beam units.
    #[inline]
    pub fn probe_amplitude(&self) -> T {
        self.probe_ratio.sqrt()
    }

    pub fn probe_on(&self) -> bool {
        self.probe_ratio > T::zero()
    }

    /// Checks the parameter invariants and hands the config back untouched.
    pub fn validate(self) -> Result<Self, ConfigError> {
        let fields = [
            ("light_shift", self.light_shift),
            ("pump_rate", self.pump_rate),
            ("half_angle", self.half_angle),
            ("probe_ratio", self.probe_ratio),
            ("probe_detuning", self.probe_detuning),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(ConfigError::NonFinite(name));
            }
        }
        if self.light_shift >= T::zero() {
            return Err(ConfigError::RedDetuningRequired(self.light_shift.to_f64_lossy()));
        }
        if self.half_angle <= T::zero() || self.half_angle >= T::FRAC_PI_2() {
            return Err(ConfigError::HalfAngleOutOfRange(self.half_angle.to_f64_lossy()));
        }
        if self.pump_rate < T::zero() {
            return Err(ConfigError::NegativePumpRate(self.pump_rate.to_f64_lossy()));
        }
        if self.probe_ratio < T::zero() {
            return Err(ConfigError::NegativeProbeRatio(self.probe_ratio.to_f64_lossy()));
        }
        Ok(self)
    }
}

/// Which of the two travelling probe modulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeSign {
    Plus,
    Minus,
}

impl ModeSign {
    pub fn sign<T: Real>(self) -> T {
        match self {
            ModeSign::Plus => T::one(),
            ModeSign::Minus => -T::one(),
        }
    }
}

/// Closed-form quantities derived from a [`LatticeConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedGeometry<T> {
    /// Harmonic oscillation frequency along x at a well bottom.
    pub omega_x: T,
    /// `k sinθ`.
    pub k_x: T,
    /// `k cosθ`.
    pub k_z: T,
    /// `k_L(+x) − k_P`.
    pub dk_plus: Vec2<T>,
    /// `k_L(−x) − k_P`.
    pub dk_minus: Vec2<T>,
    /// Spatial period of the travelling modulations, `2π/|Δk±|`.
    pub lambda_mod: T,
    /// Phase velocity of the travelling modulations along `û±`, `δ/|Δk±|`.
    pub v_mod: T,
    pub u_plus: Vec2<T>,
    pub u_minus: Vec2<T>,
    /// Probe detuning of the Brillouin resonance along x (`δ_B = Ω_x`).
    pub brillouin_detuning: T,
    /// Pump rate at which stochastic resonance is expected.
    pub sr_prediction: T,
}

impl<T: Real> DerivedGeometry<T> {
    /// Evaluates every derived quantity. Expects a validated config.
    pub fn new(config: &LatticeConfig<T>) -> Self {
        let (sin_t, cos_t) = config.half_angle.sin_cos();
        let omega_x = oscillation_frequency(config.light_shift, config.half_angle);
        let dk_plus = Vec2::new(sin_t, cos_t - T::one());
        let dk_minus = Vec2::new(-sin_t, cos_t - T::one());
        let dk_norm = dk_plus.norm();
        Self {
            omega_x,
            k_x: sin_t,
            k_z: cos_t,
            dk_plus,
            dk_minus,
            lambda_mod: T::TAU() / dk_norm,
            v_mod: config.probe_detuning / dk_norm,
            u_plus: dk_plus.scale(dk_norm.recip()),
            u_minus: dk_minus.scale(dk_norm.recip()),
            brillouin_detuning: omega_x,
            sr_prediction: predict_sr(config),
        }
    }

    pub fn wave_vector(&self, mode: ModeSign) -> Vec2<T> {
        match mode {
            ModeSign::Plus => self.dk_plus,
            ModeSign::Minus => self.dk_minus,
        }
    }

    pub fn direction(&self, mode: ModeSign) -> Vec2<T> {
        match mode {
            ModeSign::Plus => self.u_plus,
            ModeSign::Minus => self.u_minus,
        }
    }

    /// Lattice period along x, `2π/k_x`.
    pub fn period_x(&self) -> T {
        T::TAU() / self.k_x
    }

    /// Lattice period along z, `π/k_z`.
    pub fn period_z(&self) -> T {
        T::PI() / self.k_z
    }

    /// Speed at which the modulation pattern sweeps along x, `δ/|Δk±·e_x|`.
    pub fn modulation_velocity_x(&self, probe_detuning: T) -> T {
        probe_detuning / self.dk_plus.x.abs()
    }

    /// Natural velocity of an atom in an x propagation mode, `Ω_x/k_x`.
    pub fn mode_velocity_x(&self) -> T {
        self.omega_x / self.k_x
    }
}

/// `Ω_x = 4 sinθ √|Δ₀′|` in recoil units.
pub fn oscillation_frequency<T: Real>(light_shift: T, half_angle: T) -> T {
    T::of(4.0) * half_angle.sin() * light_shift.abs().sqrt()
}

/// Same as [`DerivedGeometry::new`].
pub fn derive_geometry<T: Real>(config: &LatticeConfig<T>) -> DerivedGeometry<T> {
    DerivedGeometry::new(config)
}

/// Pump rate at which a pumping cycle happens once per half oscillation,
/// using the in-plane spatial average 3/2.
pub fn predict_sr<T: Real>(config: &LatticeConfig<T>) -> T {
    predict_sr_with_average(config, T::of(PLANE_SPATIAL_AVERAGE))
}

/// Synchronization rate `9 sinθ √|Δ₀′| / (π · avg)` for an arbitrary spatial
/// average of `cos²(2πx̂) + cos²(2πŷ)`.
pub fn predict_sr_with_average<T: Real>(config: &LatticeConfig<T>, spatial_average: T) -> T {
    T::of(9.0) * config.half_angle.sin() * config.light_shift.abs().sqrt()
        / (T::PI() * spatial_average)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig3_config() -> LatticeConfig<f64> {
        LatticeConfig {
            light_shift: -200.0,
            pump_rate: 13.0,
            half_angle: std::f64::consts::FRAC_PI_6,
            probe_ratio: 0.09,
            probe_detuning: 28.28,
        }
    }

    #[test]
    fn accepts_reference_config() {
        let cfg = fig3_config();
        assert_eq!(cfg.validate(), Ok(cfg));
    }

    #[test]
    fn rejects_blue_detuning() {
        let cfg = LatticeConfig { light_shift: 50.0, ..fig3_config() };
        assert!(matches!(cfg.validate(), Err(ConfigError::RedDetuningRequired(_))));
        let cfg = LatticeConfig { light_shift: 0.0, ..fig3_config() };
        assert!(matches!(cfg.validate(), Err(ConfigError::RedDetuningRequired(_))));
    }

    #[test]
    fn accepts_zero_pump_rate() {
        let cfg = LatticeConfig { pump_rate: 0.0, ..fig3_config() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_angles_and_negatives() {
        for angle in [0.0, std::f64::consts::FRAC_PI_2, -0.1, 2.0] {
            let cfg = LatticeConfig { half_angle: angle, ..fig3_config() };
            assert!(matches!(cfg.validate(), Err(ConfigError::HalfAngleOutOfRange(_))));
        }
        let cfg = LatticeConfig { pump_rate: -1.0, ..fig3_config() };
        assert!(matches!(cfg.validate(), Err(ConfigError::NegativePumpRate(_))));
        let cfg = LatticeConfig { probe_ratio: -0.01, ..fig3_config() };
        assert!(matches!(cfg.validate(), Err(ConfigError::NegativeProbeRatio(_))));
        let cfg = LatticeConfig { probe_detuning: f64::NAN, ..fig3_config() };
        assert!(matches!(cfg.validate(), Err(ConfigError::NonFinite("probe_detuning"))));
    }

    #[test]
    fn oscillation_frequency_values() {
        let geo = DerivedGeometry::new(&fig3_config());
        // 4 · 0.5 · √200
        assert_relative_eq!(geo.omega_x, 2.0 * 200f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(geo.omega_x, 28.284, max_relative = 2e-5);
        assert_eq!(geo.brillouin_detuning, geo.omega_x);
    }

    #[test]
    fn omega_vanishes_with_angle() {
        let w = oscillation_frequency(-200.0f64, 1e-12);
        assert!(w < 1e-9);
    }

    #[test]
    fn modulation_geometry() {
        let geo = DerivedGeometry::new(&fig3_config());
        assert_relative_eq!(geo.dk_plus.norm(), 0.51764, max_relative = 2e-5);
        assert_relative_eq!(geo.dk_minus.norm(), geo.dk_plus.norm(), max_relative = 1e-15);
        assert_relative_eq!(geo.lambda_mod / std::f64::consts::TAU, 1.9319, epsilon = 5e-5);
        // û⁺ ∝ (0.5, −0.13397)
        let ratio = geo.u_plus.z / geo.u_plus.x;
        assert_relative_eq!(ratio, -0.13397 / 0.5, max_relative = 1e-4);
        assert_relative_eq!(geo.u_plus.norm(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(geo.u_minus.x, -geo.u_plus.x);
        assert_relative_eq!(geo.u_minus.z, geo.u_plus.z);
        assert_relative_eq!(geo.period_x(), 4.0 * std::f64::consts::PI, max_relative = 1e-14);
    }

    #[test]
    fn brillouin_velocity_matches_mode_velocity() {
        let cfg = fig3_config();
        let geo = DerivedGeometry::new(&cfg);
        let v = geo.modulation_velocity_x(geo.brillouin_detuning);
        assert_relative_eq!(v, geo.mode_velocity_x(), max_relative = 1e-15);
    }

    #[test]
    fn sr_prediction_values() {
        let cfg = fig3_config();
        assert_relative_eq!(predict_sr(&cfg), 13.50, max_relative = 5e-4);
        assert_relative_eq!(
            predict_sr(&cfg),
            3.0 / std::f64::consts::PI * 200f64.sqrt(),
            max_relative = 1e-14
        );
        let cfg50 = LatticeConfig { light_shift: -50.0, ..cfg };
        assert_relative_eq!(predict_sr(&cfg50), 6.752, max_relative = 1e-4);
        let tiny = LatticeConfig { light_shift: -1e-14, ..cfg };
        assert!(predict_sr(&tiny) < 1e-6);
    }

    #[test]
    fn sr_override_average() {
        let cfg = fig3_config();
        let plane = predict_sr(&cfg);
        let other = predict_sr_with_average(&cfg, 1.0);
        assert_relative_eq!(other, 1.5 * plane, max_relative = 1e-14);
    }

    #[test]
    fn single_precision_geometry() {
        let cfg = LatticeConfig::<f32> {
            light_shift: -200.0,
            pump_rate: 13.0,
            half_angle: std::f32::consts::FRAC_PI_6,
            probe_ratio: 0.09,
            probe_detuning: 28.28,
        };
        let geo = DerivedGeometry::new(&cfg.validate().unwrap());
        assert!((geo.omega_x - 28.284).abs() < 1e-3);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sr_scales_with_root_depth(depth in 0.5f64..2000.0, theta in 0.05f64..1.5) {
                let cfg = LatticeConfig {
                    light_shift: -depth,
                    pump_rate: 1.0,
                    half_angle: theta,
                    probe_ratio: 0.0,
                    probe_detuning: 0.0,
                };
                let slope = predict_sr(&cfg) / depth.sqrt();
                let expected = 9.0 * theta.sin() / (std::f64::consts::PI * 1.5);
                prop_assert!((slope - expected).abs() <= 1e-12 * expected);
            }

            #[test]
            fn geometry_is_deterministic(depth in 0.5f64..2000.0, delta in -100.0f64..100.0) {
                let cfg = LatticeConfig {
                    light_shift: -depth,
                    pump_rate: 3.0,
                    half_angle: std::f64::consts::FRAC_PI_6,
                    probe_ratio: 0.04,
                    probe_detuning: delta,
                };
                let a = DerivedGeometry::new(&cfg);
                let b = DerivedGeometry::new(&cfg);
                prop_assert_eq!(a, b);
                let v = a.modulation_velocity_x(a.brillouin_detuning);
                prop_assert!((v - a.mode_velocity_x()).abs() <= 1e-12 * a.mode_velocity_x());
            }
        }
    }
}
