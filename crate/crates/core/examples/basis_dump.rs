//! Smallest eigenpairs of the diffusion operator built from a salt model.
//! Low modes follow the dome boundaries; higher modes add detail.
//!
//! ```bash
//! cargo run --release --example basis_dump
//! ```

use eigenwave::diffusion::{DiffusionSpec, EigenBasis, EtaKind};
use eigenwave::io::write_pgm;
use eigenwave::synthetics::{make_salt_model, SaltModelSpec};
use eigenwave::Grid2D;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let g = Grid2D::new(92, 31, 50.0, 50.0)?;
    let (w, d) = g.extent();
    let model = make_salt_model(&SaltModelSpec::three_domes(w, d), g)?;
    let spec = DiffusionSpec::new(EtaKind::Eta1, 1e-3)?;
    let basis = EigenBasis::build(model.field(), spec, 12)?;

    let out = std::env::temp_dir().join("eigenwave_basis");
    basis.write_archive(out.join("archive"))?;
    write_pgm(out.join("m0.pgm"), basis.m0())?;
    for (k, (lambda, psi)) in basis.eigenvalues().iter().zip(basis.eigenvectors()).enumerate() {
        println!("mode {:>2}: lambda = {lambda:.4e}", k + 1);
        write_pgm(out.join(format!("psi_{:02}.pgm", k + 1)), psi)?;
    }
    let reread = EigenBasis::read_archive(out.join("archive"))?;
    assert_eq!(reread, basis);
    println!("archive and images in {}", out.display());
    Ok(())
}
