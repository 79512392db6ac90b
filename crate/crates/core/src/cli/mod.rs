//! The `eigenwave` commands. Each reads a run file, writes its artifacts into a
//! staging directory, and renames it onto `[output] dir` only on success.

mod config;

pub use config::RunConfig;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;

use crate::diffusion::{beta_sweep_against, project, BasisOptions, BetaSweep, DiffusionSpec, EigenBasis, EtaKind, DEFAULT_BETAS};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::helmholtz::{angular, assemble, source_wavefields, Acquisition};
use crate::inversion::{run_inversion, FrequencyDataset, InversionConfig, InversionHistory, LineSearch, Parametrization};
use crate::io::{fmt_f64, read_field, read_raw_f32, write_csv, write_field, write_pgm, RasterOrder};
use crate::model::Model;
use crate::synthetics::{add_data_noise, add_model_noise, generate_data, make_salt_model, SaltModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Decompose,
    Forward,
    Invert,
    DumpBasis,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Overrides `[run] seed`.
    pub seed: Option<u64>,
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Runs `command` on the run file at `config_path`. Returns the output directory.
pub fn execute(command: Command, config_path: &Path, opts: &RunOptions) -> Result<PathBuf> {
    let cfg = RunConfig::load(config_path)?;
    match opts.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be at least 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {k} worker threads: {e}")))?
            .install(|| dispatch(command, &cfg, opts)),
        None => dispatch(command, &cfg, opts),
    }
}

fn dispatch(command: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<PathBuf> {
    let out = Staging::new(output_dir(cfg))?;
    match command {
        Command::Synth => synth(cfg, opts, &out.dir)?,
        Command::Decompose => decompose(cfg, opts, &out.dir)?,
        Command::Forward => forward(cfg, &out.dir)?,
        Command::Invert => invert(cfg, &out.dir)?,
        Command::DumpBasis => dump_basis(cfg, &out.dir)?,
    }
    out.commit()
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.path_of("output", "dir")
        .unwrap_or_else(|| cfg.path().parent().unwrap_or(Path::new(".")).join("out"))
}

/// Sibling directory that replaces the target on commit and is removed otherwise.
struct Staging {
    dir: PathBuf,
    target: PathBuf,
    done: bool,
}

impl Staging {
    fn new(target: PathBuf) -> Result<Self> {
        let name = target
            .file_name()
            .ok_or_else(|| Error::InvalidArgument(format!("output path {} has no directory name", target.display())))?
            .to_string_lossy()
            .into_owned();
        let dir = target.with_file_name(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            target,
            done: false,
        })
    }

    fn commit(mut self) -> Result<PathBuf> {
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        fs::rename(&self.dir, &self.target).map_err(|e| Error::io(&self.target, e))?;
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn seed(cfg: &RunConfig, opts: &RunOptions) -> Result<u64> {
    match opts.seed {
        Some(s) => Ok(s),
        None => cfg.get_or("run", "seed", 0),
    }
}

fn grid(cfg: &RunConfig) -> Result<Grid2D> {
    let nx = cfg.require("grid", "nx")?;
    let nz = cfg.require("grid", "nz")?;
    let h: Option<f64> = cfg.get("grid", "h")?;
    let hx = cfg.get("grid", "hx")?.or(h).ok_or_else(|| cfg.invalid("grid", "hx", "give `h` or `hx` and `hz`"))?;
    let hz = cfg.get("grid", "hz")?.or(h).ok_or_else(|| cfg.invalid("grid", "hz", "give `h` or `hx` and `hz`"))?;
    Grid2D::new(nx, nz, hx, hz).map_err(|e| cfg.invalid("grid", "nx", e))
}

fn speed_bounds(cfg: &RunConfig) -> Result<(f64, f64)> {
    Ok((cfg.get_or("model", "c_min", 1000.0)?, cfg.get_or("model", "c_max", 6000.0)?))
}

/// Model described by `section`: an `EWF1` squared-slowness file (`path`), a raw
/// `f32` speed raster (`raw_speed`), or a procedural salt model (`salt`).
fn load_model(cfg: &RunConfig, section: &str, on_grid: Option<Grid2D>) -> Result<Model> {
    let (c_min, c_max) = speed_bounds(cfg)?;
    let grid_for = |key: &str| match on_grid {
        Some(g) => Ok(g),
        None if cfg.has_section("grid") => grid(cfg),
        None => Err(cfg.invalid(section, key, "needs a [grid] section")),
    };
    let model = if let Some(p) = cfg.path_of(section, "path") {
        let (m, clamps) = Model::clamped(read_field(&p)?, c_min, c_max)?;
        if clamps > 0 {
            log::info!("{}: clamped {clamps} nodes into [{c_min}, {c_max}] m/s", p.display());
        }
        m
    } else if let Some(p) = cfg.path_of(section, "raw_speed") {
        let order = match cfg.str(section, "raw_order").unwrap_or("z") {
            "x" => RasterOrder::XFastest,
            "z" => RasterOrder::ZFastest,
            o => return Err(cfg.invalid(section, "raw_order", format!("expected `x` or `z`, found `{o}`"))),
        };
        let speed = read_raw_f32(&p, grid_for("raw_speed")?, order)?;
        if speed.min() <= 0.0 {
            return Err(Error::format(&p, "speeds must be positive"));
        }
        let (m, clamps) = Model::clamped(crate::model::speed_to_slowness(&speed)?, c_min, c_max)?;
        if clamps > 0 {
            log::info!("{}: clamped {clamps} nodes into [{c_min}, {c_max}] m/s", p.display());
        }
        m
    } else if let Some(kind) = cfg.str(section, "salt") {
        let g = grid_for("salt")?;
        let (w, d) = g.extent();
        let mut spec = match kind {
            "single_dome" => SaltModelSpec::single_dome(w, d),
            "three_domes" => SaltModelSpec::three_domes(w, d),
            "background" => SaltModelSpec::single_dome(w, d),
            k => {
                return Err(cfg.invalid(
                    section,
                    "salt",
                    format!("expected single_dome, three_domes or background, found `{k}`"),
                ))
            }
        };
        if kind == "background" {
            spec.domes.clear();
        }
        spec.top_speed = cfg.get_or(section, "top_speed", spec.top_speed)?;
        spec.bottom_speed = cfg.get_or(section, "bottom_speed", spec.bottom_speed)?;
        spec.c_min = c_min;
        spec.c_max = c_max;
        make_salt_model(&spec, g).map_err(|e| cfg.invalid(section, "salt", e))?
    } else {
        return Err(cfg.invalid(section, "path", "give one of `path`, `raw_speed` or `salt`"));
    };
    if let Some(g) = on_grid {
        g.check_same(model.grid())?;
    }
    Ok(model)
}

fn acquisition(cfg: &RunConfig, g: &Grid2D) -> Result<Acquisition> {
    let (w, _) = g.extent();
    let n_src = cfg.require("acquisition", "sources")?;
    let n_rcv = cfg.require("acquisition", "receivers")?;
    let src_z = cfg.get_or("acquisition", "source_depth", g.hz())?;
    let rcv_z = cfg.get_or("acquisition", "receiver_depth", g.hz())?;
    let x_min = cfg.get_or("acquisition", "x_min", g.hx())?;
    let x_max = cfg.get_or("acquisition", "x_max", w - g.hx())?;
    Acquisition::line(g, n_src, g.z0() + src_z, n_rcv, g.z0() + rcv_z, g.x0() + x_min, g.x0() + x_max)
        .map_err(|e| cfg.invalid("acquisition", "sources", e))
}

fn frequencies(cfg: &RunConfig, section: &str) -> Result<Vec<f64>> {
    let f: Vec<f64> = cfg
        .list(section, "frequencies")?
        .ok_or_else(|| cfg.invalid(section, "frequencies", "missing"))?;
    if f.is_empty() {
        return Err(cfg.invalid(section, "frequencies", "empty list"));
    }
    Ok(f)
}

fn diffusion_spec(cfg: &RunConfig, kind: EtaKind) -> Result<DiffusionSpec> {
    if kind.uses_beta() {
        DiffusionSpec::new(kind, cfg.require("basis", "beta")?)
    } else {
        DiffusionSpec::unscaled(kind)
    }
    .map_err(|e| cfg.invalid("basis", "beta", e))
}

/// `stem.ewf` (squared slowness) plus speed quick-looks `stem.csv` and `stem.pgm`.
fn emit_model(dir: &Path, stem: &str, model: &Model) -> Result<()> {
    write_field(dir.join(format!("{stem}.ewf")), model.field())?;
    emit_image(dir, stem, &model.speed())
}

fn emit_image(dir: &Path, stem: &str, field: &ScalarField) -> Result<()> {
    write_csv(dir.join(format!("{stem}.csv")), field)?;
    write_pgm(dir.join(format!("{stem}.pgm")), field)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(cfg: &RunConfig, opts: &RunOptions, out: &Path) -> Result<()> {
    let seed = seed(cfg, opts)?;
    let truth = load_model(cfg, "model", None)?;
    let g = *truth.grid();
    emit_model(out, "model", &truth)?;
    if let Some(p) = cfg.get::<f64>("model", "noise_percent")? {
        let noisy = add_model_noise(&truth, p, seed).map_err(|e| cfg.invalid("model", "noise_percent", e))?;
        emit_model(out, "model_noisy", &noisy)?;
    }
    if cfg.has_section("start") {
        emit_model(out, "start", &load_model(cfg, "start", Some(g))?)?;
    }
    let acq = acquisition(cfg, &g)?;
    let data = generate_data(&truth, &acq, &frequencies(cfg, "data")?)?;
    let data = match cfg.get::<f64>("data", "snr_db")? {
        Some(snr) => add_data_noise(&data, snr, seed).map_err(|e| cfg.invalid("data", "snr_db", e))?,
        None => data,
    };
    data.write_archive(out.join("dataset"))?;
    println!(
        "synth: {}x{} grid, {} sources, {} receivers, {} frequencies, seed {seed}",
        g.nx(),
        g.nz(),
        acq.n_sources(),
        acq.n_receivers(),
        data.frequencies().len()
    );
    Ok(())
}

fn data_csv(data: &FrequencyDataset, fi: usize) -> String {
    let mut s = String::from("source,receiver,re,im\n");
    for (si, trace) in data.gather(fi).iter().enumerate() {
        for (ri, v) in trace.iter().enumerate() {
            writeln!(s, "{},{},{},{}", si + 1, ri + 1, fmt_f64(v.re), fmt_f64(v.im)).unwrap();
        }
    }
    s
}

fn forward(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = load_model(cfg, "model", None)?;
    let g = *model.grid();
    let acq = acquisition(cfg, &g)?;
    let freqs = frequencies(cfg, "data")?;
    let data = generate_data(&model, &acq, &freqs)?;
    data.write_archive(out.join("dataset"))?;
    let first = Acquisition::new(&g, acq.sources()[..1].to_vec(), acq.receivers().to_vec())?;
    for (fi, &f) in freqs.iter().enumerate() {
        write_text(&out.join(format!("data_{:04}.csv", fi + 1)), &data_csv(&data, fi))?;
        let solver = assemble(&model, angular(f))?.factorize()?;
        let u = source_wavefields(&solver, &first)?.remove(0);
        emit_image(out, &format!("wavefield_{:04}_re", fi + 1), &u.real_part())?;
    }
    let amp: f64 = data.traces().iter().flatten().flatten().map(|v: &Complex64| v.norm()).fold(0.0, f64::max);
    println!(
        "forward: {} frequencies x {} sources x {} receivers, max |d| = {amp:.3e}",
        freqs.len(),
        acq.n_sources(),
        acq.n_receivers()
    );
    Ok(())
}

/// Table of the best scaling per coefficient kind and basis size.
pub fn sweep_report(sweeps: &[BetaSweep]) -> String {
    let mut s = format!("{:<6} {:>6} {:>12} {:>12}\n", "eta", "N", "best_beta", "error_pct");
    for sw in sweeps {
        for (k, n) in sw.ns.iter().enumerate() {
            match sw.best(k) {
                Some((b, e)) => {
                    let beta = if sw.kind.uses_beta() { format!("{b:e}") } else { "-".into() };
                    writeln!(s, "{:<6} {n:>6} {beta:>12} {e:>12.4}", sw.kind.to_string()).unwrap()
                }
                None => writeln!(s, "{:<6} {n:>6} {:>12} {:>12}", sw.kind.to_string(), "-", "failed").unwrap(),
            }
        }
    }
    s
}

fn decompose(cfg: &RunConfig, opts: &RunOptions, out: &Path) -> Result<()> {
    let clean = load_model(cfg, "model", None)?;
    let g = *clean.grid();
    let (c_min, c_max) = speed_bounds(cfg)?;
    let (model, reference) = match cfg.get::<f64>("model", "noise_percent")? {
        Some(p) => {
            let noisy = add_model_noise(&clean, p, seed(cfg, opts)?).map_err(|e| cfg.invalid("model", "noise_percent", e))?;
            (noisy, clean.field().clone())
        }
        None => {
            let reference = match cfg.path_of("model", "reference") {
                Some(p) => read_field(&p)?,
                None => clean.field().clone(),
            };
            (clean, reference)
        }
    };
    g.check_same(reference.grid())?;
    emit_model(out, "model", &model)?;

    let kinds: Vec<EtaKind> = match cfg.list::<EtaKind>("basis", "etas")? {
        Some(k) => k,
        None => vec![cfg.get("basis", "eta")?.unwrap_or(EtaKind::Eta3)],
    };
    let betas = cfg.list("basis", "betas")?.unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    let ns: Vec<usize> = cfg.list("basis", "n")?.ok_or_else(|| cfg.invalid("basis", "n", "missing"))?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(cfg.invalid("basis", "n", "basis sizes must be positive"));
    }
    let opts = BasisOptions::default();
    let mut sweeps = Vec::new();
    let mut csv = String::new();
    for &kind in &kinds {
        let sw = beta_sweep_against(model.field(), &reference, kind, &betas, &ns, &opts)?;
        let body = sw.to_csv();
        csv.push_str(if csv.is_empty() { &body } else { body.split_once('\n').unwrap().1 });

        // reconstructions at the best scaling for each N, one basis per distinct scaling
        let mut by_beta: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for k in 0..ns.len() {
            if let Some((b, _)) = sw.best(k) {
                by_beta.entry(b.to_bits()).or_default().push(ns[k]);
            }
        }
        let n_max = *ns.iter().max().unwrap();
        for (bits, sizes) in by_beta {
            let spec = if kind.uses_beta() {
                DiffusionSpec::new(kind, f64::from_bits(bits))?
            } else {
                DiffusionSpec::unscaled(kind)?
            };
            let basis = Arc::new(EigenBasis::build_with(model.field(), spec, n_max, &opts)?);
            for n in sizes {
                let rec = project(model.field(), &basis, n)?.reconstruct();
                let stem = format!("recon_{kind}_n{n:03}");
                write_field(out.join(format!("{stem}.ewf")), &rec)?;
                emit_image(out, &stem, &Model::clamped(rec, c_min, c_max)?.0.speed())?;
            }
        }
        sweeps.push(sw);
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    let report = sweep_report(&sweeps);
    write_text(&out.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn dump_basis(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = load_model(cfg, "model", None)?;
    let kind: EtaKind = cfg.require("basis", "eta")?;
    let spec = diffusion_spec(cfg, kind)?;
    let n: usize = cfg.require("basis", "n")?;
    let basis = EigenBasis::build(model.field(), spec, n)?;
    basis.write_archive(out.join("basis"))?;
    let mut ev = String::from("index,eigenvalue\n");
    for (k, l) in basis.eigenvalues().iter().enumerate() {
        writeln!(ev, "{},{}", k + 1, fmt_f64(*l)).unwrap();
    }
    write_text(&out.join("eigenvalues.csv"), &ev)?;
    write_pgm(out.join("m0.pgm"), basis.m0())?;
    for (k, psi) in basis.eigenvectors().iter().enumerate() {
        write_pgm(out.join(format!("psi_{:04}.pgm", k + 1)), psi)?;
    }
    println!(
        "dump-basis: {kind}, beta {}, {} eigenpairs, eigenvalues {:.4e} .. {:.4e}",
        spec.beta(),
        basis.len(),
        basis.eigenvalues().first().copied().unwrap_or(f64::NAN),
        basis.eigenvalues().last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn invert(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data_dir = cfg.path_of("data", "path").ok_or_else(|| cfg.invalid("data", "path", "missing"))?;
    let data = FrequencyDataset::read_archive(&data_dir)?;
    let start = load_model(cfg, "start", Some(*data.grid()))?;
    let parametrization = match cfg.str("inversion", "parametrization").unwrap_or("eigen") {
        "eigen" => Parametrization::Eigen,
        "nodal" => Parametrization::Nodal,
        p => {
            return Err(cfg.invalid("inversion", "parametrization", format!("expected eigen or nodal, found `{p}`")))
        }
    };
    let spec = match parametrization {
        Parametrization::Eigen => diffusion_spec(cfg, cfg.require("basis", "eta")?)?,
        Parametrization::Nodal => DiffusionSpec::unscaled(EtaKind::Eta9)?,
    };
    let freqs = match cfg.list("inversion", "frequencies")? {
        Some(f) => f,
        None => data.frequencies().to_vec(),
    };
    let schedule = cfg.list("inversion", "n_schedule")?.unwrap_or_default();
    let mut ic = InversionConfig::new(freqs, schedule, cfg.require("inversion", "n_iter")?, spec);
    ic.parametrization = parametrization;
    ic.refresh_basis = cfg.bool_or("inversion", "refresh_basis", false)?;
    let d = LineSearch::default();
    ic.line_search = LineSearch {
        c1: cfg.get_or("inversion", "c1", d.c1)?,
        shrink: cfg.get_or("inversion", "shrink", d.shrink)?,
        max_backtracks: cfg.get_or("inversion", "max_backtracks", d.max_backtracks)?,
        initial_fraction: cfg.get_or("inversion", "initial_fraction", d.initial_fraction)?,
        ..d
    };
    ic.validate().map_err(|e| cfg.invalid("inversion", "n_schedule", e))?;

    let run = run_inversion(&ic, &data, &start)?;
    run.history.write_csv(out.join("history.csv"), ic.line_search.c1)?;
    if cfg.bool_or("output", "snapshots", true)? {
        run.history.write_snapshots(out.join("snapshots"))?;
    }
    emit_model(out, "final_model", &run.model)?;
    print_summary(&run.history);
    Ok(())
}

fn print_summary(h: &InversionHistory) {
    let accepted = h.records.iter().filter(|r| r.iter > 0 && r.step.status.as_str() != "failed").count();
    match h.first_and_last_misfit() {
        Some((j0, j1)) => println!(
            "invert: {accepted} accepted steps, misfit {j0:.4e} -> {j1:.4e} (ratio {:.4})",
            j1 / j0
        ),
        None => println!("invert: no iterations recorded"),
    }
}
