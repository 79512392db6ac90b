//! Reconstruction error of a three-dome salt raster over the scaling grid,
//! for several diffusion coefficients and basis sizes.
//!
//! ```bash
//! cargo run --release --example beta_sweep
//! ```

use eigenwave::diffusion::{beta_sweep, BasisOptions, EtaKind, DEFAULT_BETAS};
use eigenwave::synthetics::{make_salt_model, SaltModelSpec};
use eigenwave::Grid2D;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let g = Grid2D::new(92, 31, 50.0, 50.0)?;
    let (w, d) = g.extent();
    let model = make_salt_model(&SaltModelSpec::three_domes(w, d), g)?;
    let ns = [5, 10, 20];

    println!("{:<6} {:>4} {:>10} {:>10}", "eta", "N", "best_beta", "error_%");
    for kind in [EtaKind::Eta1, EtaKind::Eta3, EtaKind::Eta6, EtaKind::Eta9] {
        let sweep = beta_sweep(model.field(), kind, &DEFAULT_BETAS, &ns, &BasisOptions::default())?;
        for (k, n) in ns.iter().enumerate() {
            if let Some((beta, err)) = sweep.best(k) {
                let beta = if kind.uses_beta() { format!("{beta:e}") } else { "-".into() };
                println!("{kind:<6} {n:>4} {beta:>10} {err:>10.2}");
            }
        }
    }
    Ok(())
}
