//! Least-squares waveform inversion: misfit, adjoint-state gradient, nonlinear
//! conjugate gradients, and the frequency / basis-size schedule.

mod dataset;
mod driver;
mod nlcg;
mod objective;

pub use dataset::FrequencyDataset;
pub use driver::{
    run_inversion, Block, InversionConfig, InversionFailure, InversionHistory, InversionResult, IterationRecord,
    Parametrization,
};
pub use nlcg::{nlcg_step, LineSearch, NlcgState, Objective, StepRecord, StepStatus};
pub use objective::{gradient_alpha, gradient_nodal, misfit, misfit_and_gradient};
