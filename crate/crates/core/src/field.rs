//! Optical field, bipotentials and optical-pumping rates of a `J = 1/2 → 3/2`
//! atom in the `y = 0` plane of the lattice.
//!
//! Field construction, in single-beam amplitude units:
//!
//! ```text
//! a_y = 2 cos(k_x x) e^{i k_z z} + ε e^{i (k z + δ t)}     (L±x beams + probe)
//! a_x = 2 e^{-i k_z z}                                     (L±y beams at y = 0)
//! ```
//!
//! The probe phase makes the probe/lattice beat `cos(Δk±·r − δt)` travel along
//! `+û±` at `v_mod = δ/|Δk±|`. The σ± intensities are
//! `ι± = |a_x ± i a_y|²/2 = (|a_x|² + |a_y|²)/2 ± Im(a_x a_y*)`.
//!
//! Couplings: `U± = Δ₀′ (ι± + ι∓/3)`, `γ±∓ = (2Γ₀′/9) ι∓`,
//! `R± = (2/3) Γ₀′ (ι± + ι∓/3)`.

use num_complex::Complex;

use crate::geometry::{DerivedGeometry, LatticeConfig};
use crate::num::{Real, Vec2};

/// Ground-state Zeeman sublevel `|±⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sublevel {
    Plus,
    Minus,
}

impl Sublevel {
    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            Sublevel::Plus => Sublevel::Minus,
            Sublevel::Minus => Sublevel::Plus,
        }
    }

    /// `+1` for `|+⟩`, `-1` for `|−⟩`.
    pub fn as_i8(self) -> i8 {
        match self {
            Sublevel::Plus => 1,
            Sublevel::Minus => -1,
        }
    }
}

/// Everything the integrator needs to know about the light at one `(r, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample<T> {
    pub a_x: Complex<T>,
    pub a_y: Complex<T>,
    pub iota_plus: T,
    pub iota_minus: T,
    pub u_plus: T,
    pub u_minus: T,
    pub force_plus: Vec2<T>,
    pub force_minus: Vec2<T>,
    pub pump_plus_to_minus: T,
    pub pump_minus_to_plus: T,
    pub scatter_plus: T,
    pub scatter_minus: T,
}

impl<T: Real> FieldSample<T> {
    #[inline]
    pub fn potential(&self, s: Sublevel) -> T {
        match s {
            Sublevel::Plus => self.u_plus,
            Sublevel::Minus => self.u_minus,
        }
    }

    #[inline]
    pub fn force(&self, s: Sublevel) -> Vec2<T> {
        match s {
            Sublevel::Plus => self.force_plus,
            Sublevel::Minus => self.force_minus,
        }
    }

    /// Optical pumping rate out of `s`.
    #[inline]
    pub fn departure_rate(&self, s: Sublevel) -> T {
        match s {
            Sublevel::Plus => self.pump_plus_to_minus,
            Sublevel::Minus => self.pump_minus_to_plus,
        }
    }

    #[inline]
    pub fn scatter_rate(&self, s: Sublevel) -> T {
        match s {
            Sublevel::Plus => self.scatter_plus,
            Sublevel::Minus => self.scatter_minus,
        }
    }
}

/// How the probe enters the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeModel {
    /// Full coherent probe amplitude beating with the lattice beams.
    #[default]
    Coherent,
    /// Infinite-detuning limit: the beat terms average out and the probe only
    /// adds its uniform intensity `ε²/2` to both σ± components.
    TimeAveraged,
}

/// Precomputed field model for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field<T> {
    k_x: T,
    k_z: T,
    probe_amplitude: T,
    probe_detuning: T,
    light_shift: T,
    pump_rate: T,
    model: ProbeModel,
}

impl<T: Real> Field<T> {
    pub fn new(config: &LatticeConfig<T>, geometry: &DerivedGeometry<T>) -> Self {
        Self {
            k_x: geometry.k_x,
            k_z: geometry.k_z,
            probe_amplitude: config.probe_amplitude(),
            probe_detuning: config.probe_detuning,
            light_shift: config.light_shift,
            pump_rate: config.pump_rate,
            model: ProbeModel::Coherent,
        }
    }

    pub fn with_probe_model(self, model: ProbeModel) -> Self {
        Self { model, ..self }
    }

    pub fn probe_model(&self) -> ProbeModel {
        self.model
    }

    /// Whether the field depends on time.
    pub fn is_time_dependent(&self) -> bool {
        self.model == ProbeModel::Coherent
            && self.probe_amplitude > T::zero()
            && self.probe_detuning != T::zero()
    }

    pub fn light_shift(&self) -> T {
        self.light_shift
    }

    pub fn pump_rate(&self) -> T {
        self.pump_rate
    }

    pub fn probe_amplitude(&self) -> T {
        self.probe_amplitude
    }

    pub fn probe_detuning(&self) -> T {
        self.probe_detuning
    }

    /// Complex amplitudes `(a_x, a_y)` at `r` and time `t` (always the
    /// coherent field, whatever the probe model).
    pub fn amplitudes(&self, r: Vec2<T>, t: T) -> (Complex<T>, Complex<T>) {
        let two = T::of(2.0);
        let cx = (self.k_x * r.x).cos();
        let (sz, cz) = (self.k_z * r.z).sin_cos();
        let (sp, cp) = (r.z + self.probe_detuning * t).sin_cos();
        let a_y = Complex::new(two * cx * cz + self.probe_amplitude * cp, two * cx * sz + self.probe_amplitude * sp);
        let a_x = Complex::new(two * cz, -two * sz);
        (a_x, a_y)
    }

    /// Full field sample with analytic forces.
    pub fn sample(&self, r: Vec2<T>, t: T) -> FieldSample<T> {
        let two = T::of(2.0);
        let third = T::one() / T::of(3.0);
        let (eps, offset) = match self.model {
            ProbeModel::Coherent => (self.probe_amplitude, T::zero()),
            ProbeModel::TimeAveraged => (T::zero(), self.probe_amplitude * self.probe_amplitude / two),
        };

        let (sx, cx) = (self.k_x * r.x).sin_cos();
        let (sz, cz) = (self.k_z * r.z).sin_cos();
        let (sp, cp) = if eps > T::zero() {
            (r.z + self.probe_detuning * t).sin_cos()
        } else {
            (T::zero(), T::one())
        };

        let lat = Complex::new(cz, sz);
        let probe = Complex::new(cp, sp).scale(eps);
        let a_y = lat.scale(two * cx) + probe;
        let a_x = lat.conj().scale(two);

        // ∂a/∂x and ∂a/∂z
        let i = Complex::new(T::zero(), T::one());
        let day_dx = lat.scale(-two * self.k_x * sx);
        let day_dz = i * (lat.scale(two * cx * self.k_z) + probe);
        let dax_dz = -i * a_x.scale(self.k_z);

        let total = (a_x.norm_sqr() + a_y.norm_sqr()) / two + offset;
        let cross = (a_x * a_y.conj()).im;
        let iota_plus = total + cross;
        let iota_minus = total - cross;

        // |a_x|² is uniform in the plane, so only a_y contributes to ∇ total.
        let dtotal_dx = (a_y.conj() * day_dx).re;
        let dtotal_dz = (a_y.conj() * day_dz).re;
        let dcross_dx = (a_x * day_dx.conj()).im;
        let dcross_dz = (dax_dz * a_y.conj() + a_x * day_dz.conj()).im;

        let grad_plus = Vec2::new(dtotal_dx + dcross_dx, dtotal_dz + dcross_dz);
        let grad_minus = Vec2::new(dtotal_dx - dcross_dx, dtotal_dz - dcross_dz);

        let shift = self.light_shift;
        let u_plus = shift * (iota_plus + third * iota_minus);
        let u_minus = shift * (iota_minus + third * iota_plus);
        let force_plus = (grad_plus + grad_minus.scale(third)).scale(-shift);
        let force_minus = (grad_minus + grad_plus.scale(third)).scale(-shift);

        let pump = T::of(2.0 / 9.0) * self.pump_rate;
        let scatter = T::of(2.0 / 3.0) * self.pump_rate;
        FieldSample {
            a_x,
            a_y,
            iota_plus,
            iota_minus,
            u_plus,
            u_minus,
            force_plus,
            force_minus,
            pump_plus_to_minus: pump * iota_minus,
            pump_minus_to_plus: pump * iota_plus,
            scatter_plus: scatter * (iota_plus + third * iota_minus),
            scatter_minus: scatter * (iota_minus + third * iota_plus),
        }
    }

    /// Force, departure rate and scattering rate of sublevel `s` only; the
    /// integrator's hot path. Agrees with [`Field::sample`].
    ///
    /// With `Φ∓ = (1 ∓ k_z) z + δt`:
    /// `total = 2 + 2c² + ε²/2 + 2εc cos Φ₋` and
    /// `cross = −4c sin 2k_z z − 2ε sin Φ₊`, where `c = cos k_x x`.
    #[inline]
    pub fn local(&self, r: Vec2<T>, t: T, s: Sublevel) -> LocalField<T> {
        let two = T::of(2.0);
        let four = T::of(4.0);
        let (eps, offset) = match self.model {
            ProbeModel::Coherent => (self.probe_amplitude, T::zero()),
            ProbeModel::TimeAveraged => (T::zero(), self.probe_amplitude * self.probe_amplitude / two),
        };
        let sigma = match s {
            Sublevel::Plus => T::one(),
            Sublevel::Minus => -T::one(),
        };

        let (sx, c) = (self.k_x * r.x).sin_cos();
        let dc = -self.k_x * sx;
        let (sz, cz) = (self.k_z * r.z).sin_cos();
        let (s2z, c2z) = (two * sz * cz, cz * cz - sz * sz);

        let mut total = two + two * c * c + offset;
        let mut cross = -four * c * s2z;
        let mut dtotal = Vec2::new(four * c * dc, T::zero());
        let mut dcross = Vec2::new(-four * dc * s2z, -T::of(8.0) * c * self.k_z * c2z);
        if eps > T::zero() {
            let (sp, cp) = (r.z + self.probe_detuning * t).sin_cos();
            // e^{iΦ₋} = e^{iφ_p} e^{−ik_z z}, e^{iΦ₊} = e^{iφ_p} e^{ik_z z}
            let (cm, sm) = (cp * cz + sp * sz, sp * cz - cp * sz);
            let (cpl, spl) = (cp * cz - sp * sz, sp * cz + cp * sz);
            total = total + eps * eps / two + two * eps * c * cm;
            cross = cross - two * eps * spl;
            dtotal += Vec2::new(two * eps * dc * cm, -two * eps * c * (T::one() - self.k_z) * sm);
            dcross += Vec2::new(T::zero(), -two * eps * (T::one() + self.k_z) * cpl);
        }

        let four_thirds = T::of(4.0 / 3.0);
        let two_thirds = T::of(2.0 / 3.0);
        let grad = dtotal.scale(four_thirds) + dcross.scale(two_thirds * sigma);
        LocalField {
            force: grad.scale(-self.light_shift),
            departure_rate: T::of(2.0 / 9.0) * self.pump_rate * (total - sigma * cross),
            scatter_rate: two_thirds * self.pump_rate * (four_thirds * total + two_thirds * sigma * cross),
        }
    }

    /// Largest σ± intensity anywhere, `(4 + ε)²/2`.
    pub fn max_intensity(&self) -> T {
        let peak = T::of(4.0) + self.probe_amplitude;
        peak * peak / T::of(2.0)
    }

    /// Upper bound of the departure rate over all positions and times.
    pub fn max_departure_rate(&self) -> T {
        T::of(2.0 / 9.0) * self.pump_rate * self.max_intensity()
    }

    /// Bottom of a `U₋` well of the probe-free lattice, where `ι₊ = 0`:
    /// `k_x x = πm` and `2 k_z z = (−1)^m π/2 + 2πn`.
    pub fn minus_well(&self, m: i64, n: i64) -> Vec2<T> {
        let x = T::PI() * T::of(m as f64) / self.k_x;
        let quarter = if m.rem_euclid(2) == 0 { T::FRAC_PI_4() } else { -T::FRAC_PI_4() };
        let z = (quarter + T::PI() * T::of(n as f64)) / self.k_z;
        Vec2::new(x, z)
    }
}

/// What the integrator needs for one sublevel at one `(r, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalField<T> {
    pub force: Vec2<T>,
    pub departure_rate: T,
    pub scatter_rate: T,
}

/// σ± intensities `(ι₊, ι₋)` of a transverse field `(a_x, a_y)`.
pub fn sigma_intensities<T: Real>(a_x: Complex<T>, a_y: Complex<T>) -> (T, T) {
    let i = Complex::new(T::zero(), T::one());
    let two = T::of(2.0);
    ((a_x + i * a_y).norm_sqr() / two, (a_x - i * a_y).norm_sqr() / two)
}
