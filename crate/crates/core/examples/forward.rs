//! Monochromatic wavefield of a surface source over a salt dome, and the
//! receiver line it produces.
//!
//! ```bash
//! cargo run --release --example forward
//! ```

use eigenwave::helmholtz::{angular, assemble, simulate, source_wavefields, Acquisition};
use eigenwave::io::write_pgm;
use eigenwave::synthetics::{make_salt_model, SaltModelSpec};
use eigenwave::Grid2D;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let h = 20.0;
    let g = Grid2D::new(201, 81, h, h)?;
    let (w, d) = g.extent();
    let model = make_salt_model(&SaltModelSpec::single_dome(w, d), g)?;
    let acq = Acquisition::line(&g, 1, 2.0 * h, 21, 2.0 * h, h, w - h)?;
    let freq = 6.0;

    let solver = assemble(&model, angular(freq))?.factorize()?;
    let u = source_wavefields(&solver, &acq)?.remove(0);
    let out = std::env::temp_dir().join("eigenwave_forward");
    std::fs::create_dir_all(&out)?;
    write_pgm(out.join("wavefield_re.pgm"), &u.real_part())?;
    write_pgm(out.join("speed.pgm"), &model.speed())?;

    println!("{freq} Hz, source at x = {} m", acq.sources()[0].x);
    for (&(x, _), v) in acq.receivers().iter().zip(&simulate(&model, &acq, freq)?[0]) {
        println!("x = {x:>6.0} m  |u| = {:.3e}  phase = {:+.3}", v.norm(), v.arg());
    }
    println!("images in {}", out.display());
    Ok(())
}
