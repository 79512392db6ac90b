//! Procedural velocity models, synthetic data, and the two noise models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::helmholtz::{simulate, Acquisition};
use crate::diffusion::{DiffusionSpec, EtaKind};
use crate::inversion::{FrequencyDataset, InversionConfig, Parametrization};
use crate::model::Model;

/// Elliptic body of constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dome {
    pub cx: f64,
    pub cz: f64,
    pub rx: f64,
    pub rz: f64,
    pub speed: f64,
}

impl Dome {
    /// Node-inclusion test, coordinates relative to the domain origin.
    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (u, v) = ((x - self.cx) / self.rx, (z - self.cz) / self.rz);
        u * u + v * v <= 1.0
    }
}

/// Linear-in-depth background with salt-like domes on top.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltModelSpec {
    pub width: f64,
    pub depth: f64,
    pub top_speed: f64,
    pub bottom_speed: f64,
    pub domes: Vec<Dome>,
    pub c_min: f64,
    pub c_max: f64,
}

impl SaltModelSpec {
    pub fn layered_background(width: f64, depth: f64, top_speed: f64, bottom_speed: f64) -> Self {
        Self {
            width,
            depth,
            top_speed,
            bottom_speed,
            domes: Vec::new(),
            c_min: 1000.0,
            c_max: 6000.0,
        }
    }

    /// Three domes of 4500 m/s in a 1500 to 3500 m/s background.
    pub fn three_domes(width: f64, depth: f64) -> Self {
        let mut s = Self::layered_background(width, depth, 1500.0, 3500.0);
        s.domes = vec![
            Dome {
                cx: 0.2 * width,
                cz: 0.45 * depth,
                rx: 0.1 * width,
                rz: 0.18 * depth,
                speed: 4500.0,
            },
            Dome {
                cx: 0.52 * width,
                cz: 0.6 * depth,
                rx: 0.14 * width,
                rz: 0.22 * depth,
                speed: 4500.0,
            },
            Dome {
                cx: 0.82 * width,
                cz: 0.4 * depth,
                rx: 0.08 * width,
                rz: 0.15 * depth,
                speed: 4500.0,
            },
        ];
        s
    }

    /// One central dome of 4500 m/s in a 1500 to 3000 m/s background.
    pub fn single_dome(width: f64, depth: f64) -> Self {
        let mut s = Self::layered_background(width, depth, 1500.0, 3000.0);
        s.domes = vec![Dome {
            cx: 0.5 * width,
            cz: 0.5 * depth,
            rx: 0.15 * width,
            rz: 0.25 * depth,
            speed: 4500.0,
        }];
        s
    }

    pub fn background_speed(&self, z: f64) -> f64 {
        self.top_speed + (self.bottom_speed - self.top_speed) * (z / self.depth).clamp(0.0, 1.0)
    }

    /// Speed at `(x, z)` relative to the domain origin; the last dome containing the point wins.
    pub fn speed_at(&self, x: f64, z: f64) -> f64 {
        self.domes
            .iter()
            .rev()
            .find(|d| d.contains(x, z))
            .map_or_else(|| self.background_speed(z), |d| d.speed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0) {
            return Err(Error::InvalidArgument("domain size must be positive".into()));
        }
        let in_range = |c: f64| c >= self.c_min && c <= self.c_max;
        if !(in_range(self.top_speed) && in_range(self.bottom_speed)) {
            return Err(Error::InvalidArgument(format!(
                "background speeds {}..{} outside [{}, {}]",
                self.top_speed, self.bottom_speed, self.c_min, self.c_max
            )));
        }
        for d in &self.domes {
            if !in_range(d.speed) {
                return Err(Error::InvalidArgument(format!("dome speed {} outside bounds", d.speed)));
            }
            if !(d.rx > 0.0 && d.rz > 0.0)
                || d.cx - d.rx < 0.0
                || d.cx + d.rx > self.width
                || d.cz - d.rz < 0.0
                || d.cz + d.rz > self.depth
            {
                return Err(Error::InvalidArgument(format!("dome {d:?} does not fit in the domain")));
            }
        }
        Ok(())
    }
}

fn check_extent(grid: &Grid2D, width: f64, depth: f64) -> Result<()> {
    let (w, d) = grid.extent();
    if (w - width).abs() > 0.5 * grid.hx() || (d - depth).abs() > 0.5 * grid.hz() {
        return Err(Error::GridMismatch(format!(
            "grid spans {w} x {d} m, model domain is {width} x {depth} m"
        )));
    }
    Ok(())
}

/// Rasterized speed field (m/s) of a salt model.
pub fn salt_speed(spec: &SaltModelSpec, grid: Grid2D) -> Result<ScalarField> {
    spec.validate()?;
    check_extent(&grid, spec.width, spec.depth)?;
    let (x0, z0) = (grid.x0(), grid.z0());
    ScalarField::from_fn(grid, |x, z| spec.speed_at(x - x0, z - z0))
}

pub fn make_salt_model(spec: &SaltModelSpec, grid: Grid2D) -> Result<Model> {
    Model::from_speed(&salt_speed(spec, grid)?, spec.c_min, spec.c_max)
}

/// Piecewise-constant layers: `layers[k] = (top depth, speed)`, sorted by depth,
/// the first starting at 0.
pub fn make_layered_model(grid: Grid2D, layers: &[(f64, f64)], c_min: f64, c_max: f64) -> Result<Model> {
    if layers.is_empty() || layers[0].0 > 0.0 || layers.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument(format!(
            "layers must start at depth 0 with increasing tops, got {layers:?}"
        )));
    }
    let z0 = grid.z0();
    let speed = ScalarField::from_fn(grid, |_, z| {
        layers.iter().rev().find(|l| z - z0 >= l.0).map_or(layers[0].1, |l| l.1)
    })?;
    Model::from_speed(&speed, c_min, c_max)
}

/// Noise-free receiver data for every (frequency, source).
pub fn generate_data(model: &Model, acq: &Acquisition, frequencies: &[f64]) -> Result<FrequencyDataset> {
    let traces = frequencies
        .iter()
        .map(|&f| simulate(model, acq, f))
        .collect::<Result<Vec<_>>>()?;
    FrequencyDataset::new(*model.grid(), acq.clone(), frequencies.to_vec(), traces)
}

/// Multiplies every nodal speed by an independent factor uniform in
/// `[1 - p/100, 1 + p/100]`.
pub fn add_model_noise(model: &Model, percent: f64, seed: u64) -> Result<Model> {
    if !(0.0..100.0).contains(&percent) {
        return Err(Error::InvalidArgument(format!("noise level must lie in [0, 100), got {percent}")));
    }
    if percent == 0.0 {
        return Ok(model.clone());
    }
    let p = percent / 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speed = model.speed();
    let noisy: Vec<f64> = speed
        .values()
        .iter()
        .map(|c| c * rng.random_range(1.0 - p..=1.0 + p))
        .collect();
    let noisy = ScalarField::new(*model.grid(), noisy)?;
    let (m, clamps) = model.with_values(crate::model::speed_to_slowness(&noisy)?)?;
    if clamps > 0 {
        log::info!("model noise pushed {clamps} nodes outside the speed bounds; clamped");
    }
    Ok(m)
}

/// Adds circular complex Gaussian noise to each (frequency, source) trace with
/// per-sample variance `E 10^(-snr/10) / n`, `E` the trace energy.
pub fn add_data_noise(data: &FrequencyDataset, snr_db: f64, seed: u64) -> Result<FrequencyDataset> {
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR must be finite, got {snr_db}")));
    }
    let ratio = 10f64.powf(-snr_db / 10.0);
    // one stream per (frequency, source) keeps the result independent of thread count
    let traces = data
        .traces()
        .iter()
        .enumerate()
        .map(|(fi, gather)| {
            gather
                .par_iter()
                .enumerate()
                .map(|(si, t)| {
                    if t.is_empty() {
                        return Err(Error::InvalidArgument("empty trace".into()));
                    }
                    let energy: f64 = t.iter().map(|v| v.norm_sqr()).sum();
                    let sigma = (0.5 * energy * ratio / t.len() as f64).sqrt();
                    let stream = ((fi as u64) << 32) | si as u64;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(stream);
                    Ok(t.iter()
                        .map(|v| {
                            let re: f64 = rng.sample(StandardNormal);
                            let im: f64 = rng.sample(StandardNormal);
                            v + Complex64::new(sigma * re, sigma * im)
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(data.with_traces(traces, Some(snr_db)))
}

/// Single-dome transmission experiment used to compare the two parametrizations.
///
/// 92 x 31 nodes at 50 m, truth [`SaltModelSpec::single_dome`], start model the
/// dome-free 1D background, 12 sources along the top row, 46 receivers one row
/// above the bottom, one frequency, 10 dB data noise.
#[derive(Debug, Clone)]
pub struct MiniFwiScenario {
    pub spec: SaltModelSpec,
    pub truth: Model,
    pub start: Model,
    pub frequency: f64,
    /// Noisy data.
    pub data: FrequencyDataset,
    /// Speed midway between the dome and the background at the dome center.
    pub threshold: f64,
}

impl MiniFwiScenario {
    pub const FREQUENCY: f64 = 2.5;
    pub const SNR_DB: f64 = 10.0;
    pub const BETA: f64 = 1.0;
    pub const N_SCHEDULE: [usize; 3] = [10, 20, 30];
    pub const N_ITER: usize = 30;

    pub fn new(seed: u64) -> Result<Self> {
        let h = 50.0;
        let grid = Grid2D::new(92, 31, h, h)?;
        let (w, d) = grid.extent();
        let spec = SaltModelSpec::single_dome(w, d);
        let truth = make_salt_model(&spec, grid)?;
        let background = SaltModelSpec::layered_background(w, d, spec.top_speed, spec.bottom_speed);
        let start = make_salt_model(&background, grid)?;
        let acq = Acquisition::line(&grid, 12, h, 46, d - h, h, w - h)?;
        let clean = generate_data(&truth, &acq, &[Self::FREQUENCY])?;
        let data = add_data_noise(&clean, Self::SNR_DB, seed)?;
        let dome = spec.domes[0];
        let threshold = 0.5 * (dome.speed + spec.background_speed(dome.cz));
        Ok(Self {
            spec,
            truth,
            start,
            frequency: Self::FREQUENCY,
            data,
            threshold,
        })
    }

    pub fn config(&self, parametrization: Parametrization) -> Result<InversionConfig> {
        let spec = DiffusionSpec::new(EtaKind::Eta3, Self::BETA)?;
        let mut cfg = InversionConfig::new(vec![self.frequency], Self::N_SCHEDULE.to_vec(), Self::N_ITER, spec);
        cfg.parametrization = parametrization;
        Ok(cfg)
    }

    pub fn true_centroid(&self) -> (f64, f64) {
        anomaly_centroid(&self.truth.speed(), self.threshold).expect("the dome exceeds the threshold")
    }

    /// Distance in cells between the thresholded centroids of `model` and the
    /// truth; `None` if nothing in `model` exceeds the threshold.
    pub fn centroid_offset(&self, model: &Model) -> Option<f64> {
        let (tx, tz) = self.true_centroid();
        let g = self.truth.grid();
        anomaly_centroid(&model.speed(), self.threshold).map(|(x, z)| ((x - tx) / g.hx()).hypot((z - tz) / g.hz()))
    }
}

/// Centroid `(x, z)` of the nodes whose value exceeds `threshold`, or `None`
/// when no node does.
pub fn anomaly_centroid(field: &ScalarField, threshold: f64) -> Option<(f64, f64)> {
    let g = field.grid();
    let (mut sx, mut sz, mut n) = (0.0, 0.0, 0usize);
    for iz in 0..g.nz() {
        for ix in 0..g.nx() {
            if field.get(ix, iz) > threshold {
                sx += g.x(ix);
                sz += g.z(iz);
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sx / n as f64, sz / n as f64))
}
