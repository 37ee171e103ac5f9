//! First Born, iterative linearisation and CISOR on the same 2D dataset.

use diffract::config::parse_config;
use diffract::experiment::{run_reconstruction, simulate};
use diffract::optim::Method;
use diffract::phantom::snr_db;

fn main() -> diffract::Result<()> {
    let mut config = parse_config(
        r#"{
            "grid": {"dim": 2, "side": 32, "pitch": 0.003125},
            "layout": {"preset": "circular", "transmitters": 8, "receivers": 32, "radius": 0.3},
            "phantom": {"kind": "shepp-logan", "contrast": 2.0},
            "simulation": {"noise_snr_db": 40},
            "tau_rel": 1e-2,
            "solver": {"max_iter": 150, "step": {"rule": "born", "factor": 1.0}, "bounds": {"lower": 0, "upper": 2}}
        }"#,
    )?;
    let (truth, ds) = simulate(&config)?;
    for method in [Method::Fb, Method::Il, Method::Cisor] {
        config.method = method;
        let rec = run_reconstruction(&config, &ds)?;
        let last = rec.telemetry.last().expect("at least one iteration");
        println!(
            "{:<6} SNR {:6.2} dB  F = {:.3e}  ({} iterations, γ = {:.3e})",
            method.to_string(),
            snr_db(rec.image.values(), &truth.values)?,
            last.objective,
            rec.telemetry.len(),
            rec.gamma
        );
    }
    Ok(())
}
