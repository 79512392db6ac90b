//! Diffusion coefficients, the diffusion operator `-div(η ∇·)`, and the
//! eigenvector decomposition of models built on it.

mod basis;
mod eta;
mod operator;
mod sweep;

pub use basis::{
    diffusion_coefficient, field_hash, project, reconstruct, BasisOptions, DecomposedModel, EigenBasis,
};
pub use eta::{eval_eta, gradient_norms, DiffusionSpec, EtaKind, GradientNorms, ZERO_GRADIENT_THRESHOLD};
pub use operator::{assemble_diffusion, lift_m0, DiffusionOperator, DIFFUSION_SOLVE_TOLERANCE};
pub use sweep::{beta_sweep, beta_sweep_against, BetaSweep, DEFAULT_BETAS};
