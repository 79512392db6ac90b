//! Discrete 2D Helmholtz problem `(-Δ - ω² m) p = f` with a pressure-free
//! surface on top and first-order absorbing conditions on the other edges.

mod acquisition;
mod operator;

pub use acquisition::{point_source_rhs, sample_receivers, Acquisition, ReceiverSampler, Source};
pub use operator::{
    assemble, assemble_with, BoundaryConditions, EdgeCondition, HelmholtzOperator, HelmholtzSolver, NodeKind,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::field::ComplexField;
use crate::model::Model;

/// Angular frequency of a frequency in Hz.
pub fn angular(freq_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq_hz
}

/// Wavefields for every source of `acq` at one frequency.
pub fn source_wavefields(solver: &HelmholtzSolver, acq: &Acquisition) -> Result<Vec<ComplexField>> {
    let grid = solver.operator().grid();
    let rhs = acq
        .sources()
        .iter()
        .map(|s| point_source_rhs(grid, s.x, s.z, s.amplitude).map(|f| solver.operator().apply_boundary_rhs(f)))
        .collect::<Result<Vec<_>>>()?;
    solver.solve(&rhs)
}

/// Forward map at one frequency: receiver traces `[source][receiver]`.
pub fn simulate(model: &Model, acq: &Acquisition, freq_hz: f64) -> Result<Vec<Vec<Complex64>>> {
    let solver = assemble(model, angular(freq_hz))?.factorize()?;
    let sampler = ReceiverSampler::new(model.grid(), acq)?;
    let fields = source_wavefields(&solver, acq)?;
    Ok(fields.par_iter().map(|u| sampler.sample(u.values())).collect())
}
