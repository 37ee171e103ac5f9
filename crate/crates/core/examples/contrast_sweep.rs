//! Reconstruction quality of each method as the contrast grows (a reduced-size sweep).

use diffract::config::ExperimentConfig;
use diffract::experiment::sweep;
use diffract::optim::{Method, StepRule};

fn main() -> diffract::Result<()> {
    let mut config = ExperimentConfig::desk_2d();
    config.grid.side = 32;
    config.grid.pitch = 0.1 / 32.0;
    config.sweep.contrasts = vec![1e-3, 1.0, 2.0];
    config.sweep.methods = vec![Method::Fb, Method::Cisor];
    config.sweep.tau_rel = vec![1e-2];
    config.solver.step = StepRule::Born { factor: 1.0 };
    config.solver.max_iter = 100;
    config.solver.monitor = false;
    println!("contrast  method  snr_db");
    sweep(&config, |r| println!("{:<9} {:<7} {:.2}", r.contrast, r.method.to_string(), r.snr_db))?;
    Ok(())
}
