use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub x: f64,
    pub z: f64,
    pub amplitude: Complex64,
}

/// Line acquisition: sources share one depth, receivers share one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    sources: Vec<Source>,
    receivers: Vec<(f64, f64)>,
}

impl Acquisition {
    pub fn new(grid: &Grid2D, sources: Vec<Source>, receivers: Vec<(f64, f64)>) -> Result<Self> {
        if sources.is_empty() || receivers.is_empty() {
            return Err(Error::InvalidArgument(
                "acquisition needs at least one source and one receiver".into(),
            ));
        }
        for s in &sources {
            if !grid.contains(s.x, s.z) {
                return Err(Error::OutsideGrid { x: s.x, z: s.z });
            }
        }
        for &(x, z) in &receivers {
            if !grid.contains(x, z) {
                return Err(Error::OutsideGrid { x, z });
            }
        }
        let same_depth = |zs: &[f64]| zs.iter().all(|z| (z - zs[0]).abs() <= 1e-9 * (1.0 + zs[0].abs()));
        if !same_depth(&sources.iter().map(|s| s.z).collect::<Vec<_>>()) {
            return Err(Error::InvalidArgument("sources must share one depth".into()));
        }
        if !same_depth(&receivers.iter().map(|r| r.1).collect::<Vec<_>>()) {
            return Err(Error::InvalidArgument("receivers must share one depth".into()));
        }
        Ok(Self { sources, receivers })
    }

    /// `n_src` unit sources and `n_rcv` receivers evenly spread over `[x_from, x_to]`.
    pub fn line(
        grid: &Grid2D,
        n_src: usize,
        src_depth: f64,
        n_rcv: usize,
        rcv_depth: f64,
        x_from: f64,
        x_to: f64,
    ) -> Result<Self> {
        let spread = |n: usize, i: usize| {
            if n == 1 {
                0.5 * (x_from + x_to)
            } else {
                x_from + (x_to - x_from) * i as f64 / (n - 1) as f64
            }
        };
        let sources = (0..n_src)
            .map(|i| Source {
                x: spread(n_src, i),
                z: src_depth,
                amplitude: Complex64::new(1.0, 0.0),
            })
            .collect();
        let receivers = (0..n_rcv).map(|i| (spread(n_rcv, i), rcv_depth)).collect();
        Self::new(grid, sources, receivers)
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn receivers(&self) -> &[(f64, f64)] {
        &self.receivers
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_receivers(&self) -> usize {
        self.receivers.len()
    }
}

/// Delta load `amplitude / (hx hz)` on the node nearest to `(x, z)`.
pub fn point_source_rhs(grid: &Grid2D, x: f64, z: f64, amplitude: Complex64) -> Result<Vec<Complex64>> {
    let (ix, iz) = grid.nearest_node(x, z)?;
    let mut f = vec![Complex64::new(0.0, 0.0); grid.len()];
    f[grid.index(ix, iz)] = amplitude / (grid.hx() * grid.hz());
    Ok(f)
}

/// Precomputed bilinear weights for a receiver set (the operator `R`).
#[derive(Debug, Clone)]
pub struct ReceiverSampler {
    stencils: Vec<[(usize, f64); 4]>,
    n_nodes: usize,
}

impl ReceiverSampler {
    pub fn new(grid: &Grid2D, acq: &Acquisition) -> Result<Self> {
        Self::from_positions(grid, acq.receivers())
    }

    pub fn from_positions(grid: &Grid2D, positions: &[(f64, f64)]) -> Result<Self> {
        let stencils = positions
            .iter()
            .map(|&(x, z)| bilinear_stencil(grid, x, z))
            .collect::<Result<_>>()?;
        Ok(Self {
            stencils,
            n_nodes: grid.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    /// `R u`.
    pub fn sample(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.stencils
            .iter()
            .map(|st| st.iter().map(|&(k, w)| u[k] * w).sum())
            .collect()
    }

    /// `R^H r` (the weights are real).
    pub fn spread(&self, r: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_nodes];
        for (st, &ri) in self.stencils.iter().zip(r) {
            for &(k, w) in st {
                out[k] += ri * w;
            }
        }
        out
    }
}

fn bilinear_stencil(grid: &Grid2D, x: f64, z: f64) -> Result<[(usize, f64); 4]> {
    if !grid.contains(x, z) {
        return Err(Error::OutsideGrid { x, z });
    }
    let fx = ((x - grid.x0()) / grid.hx()).clamp(0.0, (grid.nx() - 1) as f64);
    let fz = ((z - grid.z0()) / grid.hz()).clamp(0.0, (grid.nz() - 1) as f64);
    let ix = (fx.floor() as usize).min(grid.nx() - 2);
    let iz = (fz.floor() as usize).min(grid.nz() - 2);
    let (tx, tz) = (fx - ix as f64, fz - iz as f64);
    Ok([
        (grid.index(ix, iz), (1.0 - tx) * (1.0 - tz)),
        (grid.index(ix + 1, iz), tx * (1.0 - tz)),
        (grid.index(ix, iz + 1), (1.0 - tx) * tz),
        (grid.index(ix + 1, iz + 1), tx * tz),
    ])
}

/// Samples a wavefield at every receiver of `acq` by bilinear interpolation.
pub fn sample_receivers(u: &crate::field::ComplexField, acq: &Acquisition) -> Result<Vec<Complex64>> {
    Ok(ReceiverSampler::new(u.grid(), acq)?.sample(u.values()))
}
