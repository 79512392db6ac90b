//! Reconstruction error over a grid of scalings and basis sizes.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use super::basis::{project, BasisOptions, EigenBasis};
use super::eta::{DiffusionSpec, EtaKind};
use crate::error::{Error, Result};
use crate::field::{relative_error, ScalarField};
use crate::io::fmt_f64;

/// Scalings `{1e-7, 1e-6, ..., 1e6}` with the extra points `5e-2` and `5e-1`.
pub const DEFAULT_BETAS: [f64; 17] = [
    1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1.0, 5.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6,
];

/// Relative errors (percent) of `reconstruct(project(m, basis, n))` for one coefficient kind.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSweep {
    pub kind: EtaKind,
    /// Scalings actually used; a single placeholder for kinds without one.
    pub betas: Vec<f64>,
    pub ns: Vec<usize>,
    /// `errors[b][k]` for `betas[b]` and `ns[k]`; `None` when the basis could not be built.
    pub errors: Vec<Vec<Option<f64>>>,
}

impl BetaSweep {
    /// Smallest error at `ns[k]` and the scaling that reached it.
    pub fn best(&self, k: usize) -> Option<(f64, f64)> {
        self.betas
            .iter()
            .zip(&self.errors)
            .filter_map(|(b, row)| row[k].map(|e| (*b, e)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// `eta,beta,n,relative_error_pct` lines; failed builds print `failed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eta,beta,n,relative_error_pct\n");
        for (b, row) in self.betas.iter().zip(&self.errors) {
            let beta = if self.kind.uses_beta() { fmt_f64(*b) } else { "none".into() };
            for (n, e) in self.ns.iter().zip(row) {
                let e = e.map_or_else(|| "failed".into(), fmt_f64);
                writeln!(out, "{},{beta},{n},{e}", self.kind).unwrap();
            }
        }
        out
    }
}

/// Builds one basis of size `max(ns)` per scaling and projects `m` on its prefixes.
///
/// Builds run in parallel; a scaling whose eigensolve fails is logged and
/// recorded as `None` instead of aborting the sweep.
pub fn beta_sweep(m: &ScalarField, kind: EtaKind, betas: &[f64], ns: &[usize], opts: &BasisOptions) -> Result<BetaSweep> {
    beta_sweep_against(m, m, kind, betas, ns, opts)
}

/// Like [`beta_sweep`], but errors are measured against `reference` (e.g. the
/// clean model when `m` is a noisy copy of it).
pub fn beta_sweep_against(
    m: &ScalarField,
    reference: &ScalarField,
    kind: EtaKind,
    betas: &[f64],
    ns: &[usize],
    opts: &BasisOptions,
) -> Result<BetaSweep> {
    m.grid().check_same(reference.grid())?;
    let n_max = *ns
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("sweep needs at least one basis size".into()))?;
    let betas: Vec<f64> = if kind.uses_beta() {
        if betas.is_empty() {
            return Err(Error::InvalidArgument(format!("{kind} sweep needs at least one scaling")));
        }
        betas.to_vec()
    } else {
        vec![1.0]
    };
    let specs = betas
        .iter()
        .map(|&b| if kind.uses_beta() { DiffusionSpec::new(kind, b) } else { DiffusionSpec::unscaled(kind) })
        .collect::<Result<Vec<_>>>()?;
    let errors = specs
        .par_iter()
        .map(|spec| {
            let basis = match EigenBasis::build_with(m, *spec, n_max, opts) {
                Ok(b) => Arc::new(b),
                Err(e) if e.is_numerical() => {
                    log::warn!("{kind} beta {}: {e}", spec.beta());
                    return Ok(vec![None; ns.len()]);
                }
                Err(e) => return Err(e),
            };
            ns.iter()
                .map(|&n| Ok(Some(relative_error(reference, &project(m, &basis, n)?.reconstruct())?)))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BetaSweep {
        kind,
        betas,
        ns: ns.to_vec(),
        errors,
    })
}
