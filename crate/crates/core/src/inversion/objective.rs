//! Least-squares misfit and its adjoint-state gradient.

use num_complex::Complex64;
use rayon::prelude::*;

use super::dataset::FrequencyDataset;
use crate::diffusion::EigenBasis;
use crate::error::Result;
use crate::field::ScalarField;
use crate::helmholtz::{angular, assemble, source_wavefields, ReceiverSampler};
use crate::model::Model;

fn residual_energy(sampler: &ReceiverSampler, u: &[Complex64], d: &[Complex64]) -> f64 {
    sampler
        .sample(u)
        .iter()
        .zip(d)
        .map(|(s, o)| (s - o).norm_sqr())
        .sum()
}

/// `½ Σ_ω Σ_src |F_ω(m) - d|²` over the listed frequencies.
pub fn misfit(model: &Model, data: &FrequencyDataset, freqs: &[f64]) -> Result<f64> {
    model.grid().check_same(data.grid())?;
    let sampler = ReceiverSampler::new(model.grid(), data.acquisition())?;
    let mut j = 0.0;
    for &f in freqs {
        let fi = data.frequency_index(f)?;
        let solver = assemble(model, angular(f))?.factorize()?;
        let fields = source_wavefields(&solver, data.acquisition())?;
        let per_source: Vec<f64> = fields
            .par_iter()
            .zip(data.gather(fi))
            .map(|(u, d)| residual_energy(&sampler, u.values(), d))
            .collect();
        j += per_source.iter().sum::<f64>();
    }
    Ok(0.5 * j)
}

/// Misfit and its gradient with respect to every nodal value of `m`.
///
/// Per source: `A u = f`, `A^H q = R^H (R u - d)`, and
/// `g_j = -Re(conj(∂A_jj/∂m_j u_j) q_j)`, which is `Re(ω² conj(u_j) q_j)` inside
/// and picks up the absorbing-row derivative on the edges.
pub fn misfit_and_gradient(model: &Model, data: &FrequencyDataset, freqs: &[f64]) -> Result<(f64, ScalarField)> {
    let grid = *model.grid();
    grid.check_same(data.grid())?;
    let sampler = ReceiverSampler::new(&grid, data.acquisition())?;
    let mut j = 0.0;
    let mut g = vec![0.0; grid.len()];
    for &f in freqs {
        let fi = data.frequency_index(f)?;
        let solver = assemble(model, angular(f))?.factorize()?;
        let op = solver.operator();
        let fields = source_wavefields(&solver, data.acquisition())?;
        let residuals: Vec<Vec<Complex64>> = fields
            .par_iter()
            .zip(data.gather(fi))
            .map(|(u, d)| sampler.sample(u.values()).iter().zip(d).map(|(s, o)| s - o).collect())
            .collect();
        let adjoint_rhs: Vec<Vec<Complex64>> = residuals.iter().map(|r| sampler.spread(r)).collect();
        let adjoints = solver.solve_adjoint(&adjoint_rhs)?;
        let derivs: Vec<Complex64> = (0..grid.len()).map(|k| op.diagonal_derivative(k)).collect();
        let per_source: Vec<Vec<f64>> = fields
            .par_iter()
            .zip(&adjoints)
            .map(|(u, q)| {
                u.values()
                    .iter()
                    .zip(q.values())
                    .zip(&derivs)
                    .map(|((uj, qj), dj)| -((dj * uj).conj() * qj).re)
                    .collect()
            })
            .collect();
        // same summation order as `misfit`, so both report bit-identical values
        let energies: Vec<f64> = residuals.iter().map(|r| r.iter().map(|v| v.norm_sqr()).sum()).collect();
        j += energies.iter().sum::<f64>();
        for gs in &per_source {
            for (gk, v) in g.iter_mut().zip(gs) {
                *gk += v;
            }
        }
    }
    Ok((0.5 * j, ScalarField::new(grid, g)?))
}

/// Nodal gradient of the misfit.
pub fn gradient_nodal(model: &Model, data: &FrequencyDataset, freqs: &[f64]) -> Result<ScalarField> {
    Ok(misfit_and_gradient(model, data, freqs)?.1)
}

/// Chain rule to basis coefficients: `g_α[l] = ⟨ψ_l, g⟩`.
pub fn gradient_alpha(g_nodal: &ScalarField, basis: &EigenBasis, n_active: usize) -> Result<Vec<f64>> {
    basis.inner_products(g_nodal, n_active)
}
