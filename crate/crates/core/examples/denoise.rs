//! Projection onto a few diffusion eigenvectors as a denoiser: a salt model
//! with ±20% nodal noise is compared with its reconstructions.
//!
//! ```bash
//! cargo run --release --example denoise
//! ```

use std::sync::Arc;

use eigenwave::diffusion::{project, DiffusionSpec, EigenBasis, EtaKind};
use eigenwave::io::write_pgm;
use eigenwave::synthetics::{add_model_noise, make_salt_model, SaltModelSpec};
use eigenwave::{relative_error, Grid2D};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let g = Grid2D::new(92, 31, 50.0, 50.0)?;
    let (w, d) = g.extent();
    let clean = make_salt_model(&SaltModelSpec::three_domes(w, d), g)?;
    let noisy = add_model_noise(&clean, 20.0, 7)?;
    println!("noisy model error: {:.2}%", relative_error(clean.field(), noisy.field())?);

    let basis = Arc::new(EigenBasis::build(noisy.field(), DiffusionSpec::new(EtaKind::Eta3, 1e-2)?, 30)?);
    let out = std::env::temp_dir().join("eigenwave_denoise");
    std::fs::create_dir_all(&out)?;
    write_pgm(out.join("noisy.pgm"), &noisy.speed())?;
    for n in [5, 10, 20, 30] {
        let rec = project(noisy.field(), &basis, n)?.reconstruct();
        println!("N = {n:>2}: error {:.2}%", relative_error(clean.field(), &rec)?);
        let (rec, _) = clean.with_values(rec)?;
        write_pgm(out.join(format!("recon_n{n:02}.pgm")), &rec.speed())?;
    }
    println!("images in {}", out.display());
    Ok(())
}
