//! Frequency / basis-size schedule driver.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::dataset::FrequencyDataset;
use super::nlcg::{nlcg_step, LineSearch, NlcgState, Objective, StepRecord, StepStatus};
use super::objective::{misfit, misfit_and_gradient};
use crate::diffusion::{project, BasisOptions, DiffusionSpec, EigenBasis};
use crate::error::{Error, Result};
use crate::field::{norm2, ScalarField};
use crate::io::{fmt_f64, write_field};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parametrization {
    /// `m = m0 + Σ αₖ ψₖ`, optimizing `α`.
    Eigen,
    /// Every nodal value is a free parameter (classical FWI).
    Nodal,
}

/// One optimization block: a single frequency and an active basis size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub freq_hz: f64,
    pub n_active: usize,
}

#[derive(Debug, Clone)]
pub struct InversionConfig {
    pub frequencies: Vec<f64>,
    /// One entry per frequency, one entry for all frequencies, or (with a single
    /// frequency) one block per entry.
    pub n_schedule: Vec<usize>,
    pub n_iter: usize,
    pub spec: DiffusionSpec,
    pub refresh_basis: bool,
    pub line_search: LineSearch,
    pub parametrization: Parametrization,
    pub basis: BasisOptions,
}

impl InversionConfig {
    pub fn new(frequencies: Vec<f64>, n_schedule: Vec<usize>, n_iter: usize, spec: DiffusionSpec) -> Self {
        Self {
            frequencies,
            n_schedule,
            n_iter,
            spec,
            refresh_basis: false,
            line_search: LineSearch::default(),
            parametrization: Parametrization::Eigen,
            basis: BasisOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::InvalidArgument("no frequencies given".into()));
        }
        if self.frequencies.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "frequencies must be positive, got {:?}",
                self.frequencies
            )));
        }
        if self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "frequencies must be strictly increasing, got {:?}",
                self.frequencies
            )));
        }
        if self.parametrization == Parametrization::Eigen {
            if self.n_schedule.is_empty() || self.n_schedule.contains(&0) {
                return Err(Error::InvalidArgument(format!(
                    "basis sizes must be positive, got {:?}",
                    self.n_schedule
                )));
            }
            if self.n_schedule.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "basis-size schedule must be nondecreasing, got {:?}",
                    self.n_schedule
                )));
            }
        }
        self.line_search.validate()?;
        self.blocks().map(|_| ())
    }

    /// Expands the schedules into the ordered list of blocks.
    pub fn blocks(&self) -> Result<Vec<Block>> {
        let (nf, nn) = (self.frequencies.len(), self.n_schedule.len());
        let pair = |f: f64, n: usize| Block { freq_hz: f, n_active: n };
        if self.parametrization == Parametrization::Nodal && nn == 0 {
            return Ok(self.frequencies.iter().map(|&f| pair(f, 0)).collect());
        }
        if nn == nf {
            Ok(self.frequencies.iter().zip(&self.n_schedule).map(|(&f, &n)| pair(f, n)).collect())
        } else if nn == 1 {
            Ok(self.frequencies.iter().map(|&f| pair(f, self.n_schedule[0])).collect())
        } else if nf == 1 {
            Ok(self.n_schedule.iter().map(|&n| pair(self.frequencies[0], n)).collect())
        } else {
            Err(Error::InvalidArgument(format!(
                "{nf} frequencies cannot be paired with a schedule of {nn} basis sizes"
            )))
        }
    }

    fn n_max_from(&self, blocks: &[Block]) -> usize {
        blocks.iter().map(|b| b.n_active).max().unwrap_or(0)
    }
}

/// One line of the history CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub block: usize,
    /// 0 for the block's starting point.
    pub iter: usize,
    pub freq_hz: f64,
    pub n_active: usize,
    pub step: StepRecord,
}

#[derive(Debug, Clone, Default)]
pub struct InversionHistory {
    pub records: Vec<IterationRecord>,
    /// Model (squared slowness) at the end of each block.
    pub snapshots: Vec<ScalarField>,
}

impl InversionHistory {
    pub const CSV_HEADER: &'static str = "block,iter,freq_hz,n_active,misfit,step,misfit_before,slope,c1,backtracks,clamps,status";

    pub fn to_csv(&self, c1: f64) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            let st = &r.step;
            let status = if r.iter == 0 { "start" } else { st.status.as_str() };
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.block,
                r.iter,
                fmt_f64(r.freq_hz),
                r.n_active,
                fmt_f64(st.misfit),
                fmt_f64(st.step),
                fmt_f64(st.misfit_before),
                fmt_f64(st.slope),
                fmt_f64(c1),
                st.backtracks,
                st.clamps,
                status
            )
            .unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, c1: f64) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv(c1)).map_err(|e| Error::io(path, e))
    }

    /// Writes `snapshot_001.ewf`... into `dir`.
    pub fn write_snapshots(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, s) in self.snapshots.iter().enumerate() {
            write_field(dir.join(format!("snapshot_{:03}.ewf", k + 1)), s)?;
        }
        Ok(())
    }

    /// Misfit at the start of the run and after the last accepted step.
    pub fn first_and_last_misfit(&self) -> Option<(f64, f64)> {
        Some((self.records.first()?.step.misfit, self.records.last()?.step.misfit))
    }
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub model: Model,
    pub history: InversionHistory,
    /// Basis in use at the end of the run (eigen parametrization only).
    pub basis: Option<Arc<EigenBasis>>,
}

/// A failed run, with the history up to the last completed iteration.
#[derive(Debug, thiserror::Error)]
#[error("inversion aborted after {} recorded iterations: {error}", history.records.len())]
pub struct InversionFailure {
    #[source]
    pub error: Error,
    pub history: InversionHistory,
}

impl From<InversionFailure> for Error {
    fn from(f: InversionFailure) -> Self {
        f.error
    }
}

/// Misfit at one frequency as a function of basis coefficients.
struct EigenObjective<'a> {
    basis: &'a EigenBasis,
    template: &'a Model,
    data: &'a FrequencyDataset,
    freqs: [f64; 1],
    clamps: usize,
}

impl EigenObjective<'_> {
    fn model(&mut self, alpha: &[f64]) -> Result<Model> {
        let (m, clamps) = self.template.with_values(self.basis.combine(alpha)?)?;
        self.clamps = clamps;
        Ok(m)
    }
}

impl Objective for EigenObjective<'_> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        let m = self.model(x)?;
        misfit(&m, self.data, &self.freqs)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.model(x)?;
        let (j, g) = misfit_and_gradient(&m, self.data, &self.freqs)?;
        Ok((j, self.basis.inner_products(&g, x.len())?))
    }

    /// The reconstructed model norm; with orthonormal vectors `|Ψ s| = |s|`, so
    /// the first trial changes the model by a fixed fraction of its size.
    fn step_scale(&self, x: &[f64]) -> f64 {
        self.basis.combine(x).map(|m| m.norm()).unwrap_or(0.0)
    }

    fn clamps(&self) -> usize {
        self.clamps
    }
}

struct NodalObjective<'a> {
    template: &'a Model,
    data: &'a FrequencyDataset,
    freqs: [f64; 1],
    clamps: usize,
}

impl NodalObjective<'_> {
    fn model(&mut self, x: &[f64]) -> Result<Model> {
        let (m, clamps) = self
            .template
            .with_values(ScalarField::new(*self.template.grid(), x.to_vec())?)?;
        self.clamps = clamps;
        Ok(m)
    }
}

impl Objective for NodalObjective<'_> {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        let m = self.model(x)?;
        misfit(&m, self.data, &self.freqs)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.model(x)?;
        let (j, g) = misfit_and_gradient(&m, self.data, &self.freqs)?;
        Ok((j, g.into_values()))
    }

    fn clamps(&self) -> usize {
        self.clamps
    }
}

fn run_block(
    obj: &mut impl Objective,
    x: Vec<f64>,
    n_iter: usize,
    ls: &LineSearch,
    block: usize,
    b: Block,
    history: &mut InversionHistory,
) -> Result<Vec<f64>> {
    let mut st = NlcgState::new(obj, x)?;
    history.records.push(IterationRecord {
        block,
        iter: 0,
        freq_hz: b.freq_hz,
        n_active: b.n_active,
        step: StepRecord {
            misfit_before: st.misfit(),
            misfit: st.misfit(),
            step: 0.0,
            slope: 0.0,
            backtracks: 0,
            clamps: obj.clamps(),
            status: StepStatus::Accepted,
        },
    });
    log::info!(
        "block {block}: {} Hz, N = {}, misfit {:e}, |g| {:e}",
        b.freq_hz,
        b.n_active,
        st.misfit(),
        norm2(st.gradient())
    );
    for it in 1..=n_iter {
        let rec = nlcg_step(&mut st, obj, ls)?;
        let failed = rec.status == StepStatus::Failed;
        log::debug!(
            "block {block} iter {it}: misfit {:e} step {:e} ({} backtracks, {})",
            rec.misfit,
            rec.step,
            rec.backtracks,
            rec.status.as_str()
        );
        history.records.push(IterationRecord {
            block,
            iter: it,
            freq_hz: b.freq_hz,
            n_active: b.n_active,
            step: rec,
        });
        if failed {
            log::info!("block {block}: line search failed at iteration {it}, ending block");
            break;
        }
    }
    Ok(st.x().to_vec())
}

/// Sequential frequency / basis-size blocks, `n_iter` NLCG iterations each.
pub fn run_inversion(
    config: &InversionConfig,
    data: &FrequencyDataset,
    m_start: &Model,
) -> std::result::Result<InversionResult, InversionFailure> {
    let mut history = InversionHistory::default();
    match run_inner(config, data, m_start, &mut history) {
        Ok((model, basis)) => Ok(InversionResult { model, history, basis }),
        Err(error) => Err(InversionFailure { error, history }),
    }
}

fn run_inner(
    config: &InversionConfig,
    data: &FrequencyDataset,
    m_start: &Model,
    history: &mut InversionHistory,
) -> Result<(Model, Option<Arc<EigenBasis>>)> {
    config.validate()?;
    m_start.grid().check_same(data.grid())?;
    for &f in &config.frequencies {
        data.frequency_index(f)?;
    }
    let blocks = config.blocks()?;
    let ls = &config.line_search;

    if config.parametrization == Parametrization::Nodal {
        let mut x = m_start.values().to_vec();
        for (bi, &b) in blocks.iter().enumerate() {
            let mut obj = NodalObjective {
                template: m_start,
                data,
                freqs: [b.freq_hz],
                clamps: 0,
            };
            x = run_block(&mut obj, x, config.n_iter, ls, bi + 1, b, history)?;
            history.snapshots.push(ScalarField::new(*m_start.grid(), x.clone())?);
        }
        let (model, _) = m_start.with_values(ScalarField::new(*m_start.grid(), x)?)?;
        return Ok((model, None));
    }

    let n_max = config.n_max_from(&blocks);
    let mut basis = Arc::new(EigenBasis::build_with(m_start.field(), config.spec, n_max, &config.basis)?);
    let mut alpha = project(m_start.field(), &basis, blocks[0].n_active)?.alpha().to_vec();
    for (bi, &b) in blocks.iter().enumerate() {
        if bi > 0 && config.refresh_basis {
            let current = basis.combine(&alpha)?;
            let n_rest = config.n_max_from(&blocks[bi..]);
            basis = Arc::new(EigenBasis::build_with(&current, config.spec, n_rest, &config.basis)?);
            alpha = project(&current, &basis, b.n_active)?.alpha().to_vec();
        } else {
            // growing N keeps the model: new coefficients start at zero
            alpha.resize(b.n_active, 0.0);
        }
        let mut obj = EigenObjective {
            basis: &basis,
            template: m_start,
            data,
            freqs: [b.freq_hz],
            clamps: 0,
        };
        alpha = run_block(&mut obj, alpha, config.n_iter, ls, bi + 1, b, history)?;
        history.snapshots.push(m_start.with_values(basis.combine(&alpha)?)?.0.field().clone());
    }
    let (model, _) = m_start.with_values(basis.combine(&alpha)?)?;
    Ok((model, Some(basis)))
}
