//! Semi-classical Monte-Carlo simulation of atoms in a driven dissipative
//! lin⊥lin optical lattice.
//!
//! The atoms move on the two bipotential surfaces `U±` of a `J = 1/2 → 3/2`
//! ground state, jump between them by optical pumping at position-dependent
//! rates, and receive recoil noise. A weak probe beam beating with the lattice
//! beams drives the Brillouin propagation modes; the [`observables`] module
//! measures how strongly they are excited as a function of the pumping rate.
//!
//! The physics modules are generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`). The aliases below fix the scalar to `f64`, which is
//! what the analysis pipeline and the command-line driver use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod field;
pub mod geometry;
pub mod num;
pub mod observables;
pub mod stats;

pub use dynamics::{DynamicsError, Integrator};
pub use ensemble::{run_ensemble, EnsembleConfig, EnsembleError};
pub use field::Sublevel;
pub use geometry::{ConfigError, ModeSign};
pub use num::Real;

pub type Vec2 = num::Vec2<f64>;
pub type LatticeConfig = geometry::LatticeConfig<f64>;
pub type DerivedGeometry = geometry::DerivedGeometry<f64>;
pub type Field = field::Field<f64>;
pub type FieldSample = field::FieldSample<f64>;
pub type AtomState = dynamics::AtomState<f64>;
pub type StepControl = dynamics::StepControl<f64>;
pub type TrajectorySample = dynamics::TrajectorySample<f64>;
pub type TrajectoryRecord = dynamics::TrajectoryRecord<f64>;
pub type EnsembleResult = ensemble::EnsembleResult<f64>;
