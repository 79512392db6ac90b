//! Single-dome recovery from one noisy frequency with the eigenvector
//! parametrization, next to classical nodal FWI on the same data.
//!
//! ```bash
//! cargo run --release --example mini_fwi
//! ```

use eigenwave::inversion::{misfit, run_inversion, Parametrization};
use eigenwave::relative_error;
use eigenwave::synthetics::MiniFwiScenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let sc = MiniFwiScenario::new(2024)?;
    let f = sc.frequency;
    let (cx, cz) = sc.true_centroid();
    println!("{f} Hz, {} sources, {} receivers", sc.data.acquisition().n_sources(), sc.data.acquisition().n_receivers());
    println!("misfit of the true model on noisy data: {:.3e}", misfit(&sc.truth, &sc.data, &[f])?);
    println!("true dome centroid ({cx:.0}, {cz:.0}) m, threshold {} m/s", sc.threshold);

    for param in [Parametrization::Eigen, Parametrization::Nodal] {
        let run = run_inversion(&sc.config(param)?, &sc.data, &sc.start)?;
        let (j0, j1) = run.history.first_and_last_misfit().unwrap();
        let offset = sc
            .centroid_offset(&run.model)
            .map_or_else(|| "no anomaly".to_string(), |o| format!("{o:.2} cells"));
        println!(
            "{param:?}: misfit ratio {:.3}, error vs truth {:.2}%, centroid offset {offset}",
            j1 / j0,
            relative_error(sc.truth.field(), run.model.field())?
        );
    }
    Ok(())
}
