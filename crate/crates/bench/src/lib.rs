//! Benchmark fixtures shared by the criterion targets.

use kramers_core::fitting::{DataKind, DataPoint};
use kramers_core::hamiltonian::{energies, Axis, FieldVector, LEVEL_PAIRS};
use kramers_core::presets::spin_system;
use kramers_core::{Site, State};

/// Noise-free site-I ground transitions for B along D1 and D2, 0 to 150 mT.
pub fn synthetic_sweep() -> Vec<DataPoint> {
    let sys = spin_system(Site::I, State::Ground);
    let mut data = Vec::new();
    for axis in [Axis::D1, Axis::D2] {
        for k in 0..=30 {
            let field = FieldVector::along_axis(axis, 5.0 * k as f64);
            let e = energies(&sys, &field);
            for &(i, j) in LEVEL_PAIRS.iter() {
                data.push(DataPoint::frequency(DataKind::Shb, State::Ground, field, e[j] - e[i]).with_label(i, j));
            }
        }
    }
    data
}
