use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::helmholtz::{Acquisition, Source};
use crate::io::fmt_f64;

/// Receiver traces indexed `[frequency][source][receiver]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDataset {
    grid: Grid2D,
    acquisition: Acquisition,
    frequencies: Vec<f64>,
    traces: Vec<Vec<Vec<Complex64>>>,
    snr_db: Option<f64>,
}

impl FrequencyDataset {
    pub fn new(
        grid: Grid2D,
        acquisition: Acquisition,
        frequencies: Vec<f64>,
        traces: Vec<Vec<Vec<Complex64>>>,
    ) -> Result<Self> {
        if frequencies.is_empty() || frequencies.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "dataset frequencies must be positive, got {frequencies:?}"
            )));
        }
        if traces.len() != frequencies.len() {
            return Err(Error::InvalidArgument(format!(
                "{} frequencies but {} trace gathers",
                frequencies.len(),
                traces.len()
            )));
        }
        for gather in &traces {
            if gather.len() != acquisition.n_sources() {
                return Err(Error::InvalidArgument(format!(
                    "gather holds {} sources, acquisition has {}",
                    gather.len(),
                    acquisition.n_sources()
                )));
            }
            for t in gather {
                if t.len() != acquisition.n_receivers() {
                    return Err(Error::InvalidArgument(format!(
                        "trace holds {} samples, acquisition has {} receivers",
                        t.len(),
                        acquisition.n_receivers()
                    )));
                }
                if t.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                    return Err(Error::InvalidArgument("trace contains non-finite samples".into()));
                }
            }
        }
        Ok(Self {
            grid,
            acquisition,
            frequencies,
            traces,
            snr_db: None,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn acquisition(&self) -> &Acquisition {
        &self.acquisition
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Gather `[source][receiver]` of the `fi`-th frequency.
    pub fn gather(&self, fi: usize) -> &[Vec<Complex64>] {
        &self.traces[fi]
    }

    pub fn traces(&self) -> &[Vec<Vec<Complex64>>] {
        &self.traces
    }

    /// SNR of added noise, if any.
    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }

    pub(crate) fn with_traces(&self, traces: Vec<Vec<Vec<Complex64>>>, snr_db: Option<f64>) -> Self {
        Self {
            traces,
            snr_db,
            ..self.clone()
        }
    }

    /// Position of `freq` in the dataset (relative tolerance 1e-9).
    pub fn frequency_index(&self, freq: f64) -> Result<usize> {
        self.frequencies
            .iter()
            .position(|f| (f - freq).abs() <= 1e-9 * freq.abs())
            .ok_or_else(|| Error::InvalidArgument(format!("frequency {freq} Hz is not in the dataset")))
    }

    /// Sum of `|d|²` over all traces.
    pub fn energy(&self) -> f64 {
        self.traces.iter().flatten().flatten().map(|v| v.norm_sqr()).sum()
    }

    /// Writes `acquisition.txt`, `dataset_manifest.txt` and `data_0001.bin`... into `dir`.
    pub fn write_archive(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut acq = String::from("# source x z amplitude_re amplitude_im | receiver x z\n");
        for s in self.acquisition.sources() {
            let a = s.amplitude;
            writeln!(acq, "source {} {} {} {}", fmt_f64(s.x), fmt_f64(s.z), fmt_f64(a.re), fmt_f64(a.im)).unwrap();
        }
        for &(x, z) in self.acquisition.receivers() {
            writeln!(acq, "receiver {} {}", fmt_f64(x), fmt_f64(z)).unwrap();
        }
        let p = dir.join("acquisition.txt");
        fs::write(&p, acq).map_err(|e| Error::io(&p, e))?;

        let g = &self.grid;
        let mut man = String::new();
        writeln!(man, "grid = {} {} {} {} {} {}", g.nx(), g.nz(), g.hx(), g.hz(), g.x0(), g.z0()).unwrap();
        writeln!(man, "sources = {}", self.acquisition.n_sources()).unwrap();
        writeln!(man, "receivers = {}", self.acquisition.n_receivers()).unwrap();
        match self.snr_db {
            Some(s) => writeln!(man, "snr_db = {}", fmt_f64(s)).unwrap(),
            None => writeln!(man, "snr_db = none").unwrap(),
        }
        for (k, f) in self.frequencies.iter().enumerate() {
            let name = format!("data_{:04}.bin", k + 1);
            writeln!(man, "frequency = {} {name}", fmt_f64(*f)).unwrap();
            let mut bytes = Vec::with_capacity(16 * self.acquisition.n_sources() * self.acquisition.n_receivers());
            for v in self.traces[k].iter().flatten() {
                bytes.extend_from_slice(&v.re.to_le_bytes());
                bytes.extend_from_slice(&v.im.to_le_bytes());
            }
            let p = dir.join(&name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        let p = dir.join("dataset_manifest.txt");
        fs::write(&p, man).map_err(|e| Error::io(&p, e))
    }

    pub fn read_archive(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mp = dir.join("dataset_manifest.txt");
        let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let bad = |msg: String| Error::format(&mp, msg);
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
        let mut grid = None;
        let mut snr_db = None;
        let mut files = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected `key = value`, found `{line}`")))?;
            let toks: Vec<&str> = value.split_whitespace().collect();
            match key {
                "grid" => {
                    if toks.len() != 6 {
                        return Err(bad(format!("grid needs 6 values, found `{value}`")));
                    }
                    let n = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer `{s}`")));
                    grid = Some(
                        Grid2D::with_origin(
                            n(toks[0])?,
                            n(toks[1])?,
                            real(toks[2])?,
                            real(toks[3])?,
                            real(toks[4])?,
                            real(toks[5])?,
                        )
                        .map_err(|e| bad(e.to_string()))?,
                    );
                }
                "sources" | "receivers" => {}
                "snr_db" => snr_db = if value == "none" { None } else { Some(real(value)?) },
                "frequency" => {
                    if toks.len() != 2 {
                        return Err(bad(format!("frequency line needs `value file`, found `{value}`")));
                    }
                    files.push((real(toks[0])?, toks[1].to_string()));
                }
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        let grid = grid.ok_or_else(|| bad("missing `grid`".into()))?;

        let ap = dir.join("acquisition.txt");
        let text = fs::read_to_string(&ap).map_err(|e| Error::io(&ap, e))?;
        let mut sources = Vec::new();
        let mut receivers = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(&ap, format!("bad number `{s}`")))
            };
            match (toks[0], toks.len()) {
                ("source", 5) => sources.push(Source {
                    x: num(toks[1])?,
                    z: num(toks[2])?,
                    amplitude: Complex64::new(num(toks[3])?, num(toks[4])?),
                }),
                ("receiver", 3) => receivers.push((num(toks[1])?, num(toks[2])?)),
                _ => return Err(Error::format(&ap, format!("unrecognized line `{line}`"))),
            }
        }
        let acquisition = Acquisition::new(&grid, sources, receivers)?;
        let (ns, nr) = (acquisition.n_sources(), acquisition.n_receivers());
        let mut frequencies = Vec::new();
        let mut traces = Vec::new();
        for (f, name) in files {
            let p = dir.join(&name);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if bytes.len() != 16 * ns * nr {
                return Err(Error::format(
                    &p,
                    format!("expected {} complex samples, file holds {} bytes", ns * nr, bytes.len()),
                ));
            }
            let vals: Vec<Complex64> = bytes
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
            frequencies.push(f);
            traces.push(vals.chunks(nr).map(|c| c.to_vec()).collect());
        }
        let mut d = Self::new(grid, acquisition, frequencies, traces)?;
        d.snr_db = snr_db;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks_and_archive() {
        let g = Grid2D::new(11, 6, 10.0, 10.0).unwrap();
        let acq = Acquisition::line(&g, 2, 10.0, 3, 20.0, 10.0, 90.0).unwrap();
        let tr = |k: f64| vec![vec![Complex64::new(k, -k); 3]; 2];
        assert!(FrequencyDataset::new(g, acq.clone(), vec![1.0], vec![tr(1.0), tr(2.0)]).is_err());
        assert!(FrequencyDataset::new(g, acq.clone(), vec![1.0], vec![vec![vec![Complex64::new(0.0, 0.0); 2]; 2]]).is_err());
        let d = FrequencyDataset::new(g, acq, vec![1.5, 3.0], vec![tr(1.0), tr(0.1)]).unwrap();
        assert_eq!(d.frequency_index(3.0).unwrap(), 1);
        assert!(d.frequency_index(2.0).is_err());
        let d = d.with_traces(d.traces().to_vec(), Some(10.0));
        let dir = tempfile::tempdir().unwrap();
        d.write_archive(dir.path()).unwrap();
        assert_eq!(FrequencyDataset::read_archive(dir.path()).unwrap(), d);
    }
}
