//! Mean kinetic energy.

use crate::dynamics::TrajectoryRecord;
use crate::geometry::MASS;
use crate::stats::{mean_estimate, Estimate};

/// Time-and-ensemble average of `p²/2M` in ħω_r. The error is the standard
/// error over per-atom time averages, which absorbs the time correlation of
/// each trajectory.
pub fn kinetic_energy(records: &[TrajectoryRecord<f64>]) -> Estimate {
    let per_atom: Vec<f64> = records
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| r.samples.iter().map(|s| s.p.norm_sqr() / (2.0 * MASS)).sum::<f64>() / r.len() as f64)
        .collect();
    if per_atom.is_empty() {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    mean_estimate(&per_atom)
}
