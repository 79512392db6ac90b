//! Polak-Ribière+ nonlinear conjugate gradients with Armijo backtracking.

use crate::error::{Error, Result};
use crate::field::{dot, norm2};

/// A smooth function of a real parameter vector.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Norm that sets the size of the first trial step (`|x|` by default).
    fn step_scale(&self, x: &[f64]) -> f64 {
        norm2(x)
    }
    /// Number of clamped entries at the last evaluated point.
    fn clamps(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// First trial step is `initial_fraction * scale / |s|`, reduced after the
    /// first iteration so the predicted decrease `μ ⟨g, s⟩` does not exceed the
    /// previous one.
    pub initial_fraction: f64,
    /// Scale used when the objective reports a zero scale.
    pub scale_floor: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 20,
            initial_fraction: 0.05,
            scale_floor: 1e-12,
        }
    }
}

impl LineSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::InvalidArgument(format!("armijo c1 must lie in (0, 1), got {}", self.c1)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument(format!("shrink factor must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.initial_fraction > 0.0 && self.initial_fraction.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial step fraction must be positive, got {}",
                self.initial_fraction
            )));
        }
        if !(self.scale_floor > 0.0) {
            return Err(Error::InvalidArgument("step scale floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Accepted,
    /// Accepted along `-g` after the conjugate direction failed the line search.
    AcceptedAfterReset,
    /// No step satisfied the Armijo condition; the iterate is unchanged.
    Failed,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Accepted => "accepted",
            StepStatus::AcceptedAfterReset => "reset",
            StepStatus::Failed => "failed",
        }
    }
}

/// What one iteration did; enough to re-check the Armijo inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub misfit_before: f64,
    pub misfit: f64,
    pub step: f64,
    /// `⟨g, s⟩` of the direction actually searched.
    pub slope: f64,
    pub backtracks: usize,
    pub clamps: usize,
    pub status: StepStatus,
}

#[derive(Debug, Clone)]
pub struct NlcgState {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    /// `(step, slope)` of the last accepted step.
    last_step: Option<(f64, f64)>,
}

impl NlcgState {
    pub fn new(obj: &mut impl Objective, x: Vec<f64>) -> Result<Self> {
        let (f, g) = obj.value_and_gradient(&x)?;
        Ok(Self {
            x,
            f,
            g,
            prev: None,
            last_step: None,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn misfit(&self) -> f64 {
        self.f
    }

    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    /// Forgets the previous direction; the next step is steepest descent.
    pub fn reset(&mut self) {
        self.prev = None;
        self.last_step = None;
    }

    /// Search direction: `-g + max(0, β_PR) s_prev`, or `-g` when that is not a descent direction.
    pub fn direction(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.g.iter().map(|v| -v).collect();
        if let Some((g_prev, s_prev)) = &self.prev {
            let denom = dot(g_prev, g_prev);
            if denom > 0.0 {
                let num: f64 = self.g.iter().zip(g_prev).map(|(a, b)| a * (a - b)).sum();
                let beta = (num / denom).max(0.0);
                for (si, sp) in s.iter_mut().zip(s_prev) {
                    *si += beta * sp;
                }
            }
            if dot(&self.g, &s) >= 0.0 {
                s = self.g.iter().map(|v| -v).collect();
            }
        }
        s
    }
}

struct Search {
    f: f64,
    x: Vec<f64>,
    step: f64,
    backtracks: usize,
    clamps: usize,
}

fn armijo(obj: &mut impl Objective, st: &NlcgState, s: &[f64], slope: f64, ls: &LineSearch) -> Result<(Option<Search>, usize, f64)> {
    let s_norm = norm2(s);
    let scale = obj.step_scale(&st.x);
    let scale = if scale > 0.0 { scale } else { ls.scale_floor };
    let mut mu = ls.initial_fraction * scale / s_norm;
    if let Some((mu_prev, slope_prev)) = st.last_step {
        mu = mu.min(mu_prev * slope_prev / slope);
    }
    for b in 0..=ls.max_backtracks {
        let trial: Vec<f64> = st.x.iter().zip(s).map(|(x, d)| x + mu * d).collect();
        let f = obj.value(&trial)?;
        if f <= st.f + ls.c1 * mu * slope {
            return Ok((
                Some(Search {
                    f,
                    x: trial,
                    step: mu,
                    backtracks: b,
                    clamps: obj.clamps(),
                }),
                b,
                mu,
            ));
        }
        if b < ls.max_backtracks {
            mu *= ls.shrink;
        }
    }
    Ok((None, ls.max_backtracks, mu))
}

/// One NLCG iteration. On failure the state is left unchanged.
pub fn nlcg_step(state: &mut NlcgState, obj: &mut impl Objective, ls: &LineSearch) -> Result<StepRecord> {
    let f0 = state.f;
    let failed = |slope, backtracks, step| StepRecord {
        misfit_before: f0,
        misfit: f0,
        step,
        slope,
        backtracks,
        clamps: 0,
        status: StepStatus::Failed,
    };
    if norm2(&state.g) == 0.0 {
        return Ok(failed(0.0, 0, 0.0));
    }
    let mut s = state.direction();
    let steepest = state.prev.is_none() || s.iter().zip(&state.g).all(|(a, b)| *a == -b);
    let mut slope = dot(&state.g, &s);
    let mut status = StepStatus::Accepted;
    let (mut found, mut bt, mut mu) = armijo(obj, state, &s, slope, ls)?;
    if found.is_none() && !steepest {
        log::debug!("line search failed along the conjugate direction, retrying along -g");
        s = state.g.iter().map(|v| -v).collect();
        slope = dot(&state.g, &s);
        status = StepStatus::AcceptedAfterReset;
        (found, bt, mu) = armijo(obj, state, &s, slope, ls)?;
    }
    let Some(found) = found else {
        state.reset();
        return Ok(failed(slope, bt, mu));
    };
    let (f_new, g_new) = obj.value_and_gradient(&found.x)?;
    if f_new != found.f {
        log::warn!("misfit re-evaluation differs: {} vs {}", found.f, f_new);
    }
    let g_old = std::mem::replace(&mut state.g, g_new);
    state.prev = Some((g_old, s));
    state.last_step = Some((found.step, slope));
    state.x = found.x;
    state.f = found.f;
    Ok(StepRecord {
        misfit_before: f0,
        misfit: found.f,
        step: found.step,
        slope,
        backtracks: found.backtracks,
        clamps: found.clamps,
        status,
    })
}
