//! Adjoint-state gradient against central differences in 2D and 3D, plus the Lipschitz estimate.

use diffract::experiment::{gradcheck, gradcheck_config_2d, gradcheck_config_3d, simulate};
use diffract::gradient::{born_operator_norm, lipschitz_estimate};
use diffract::krylov::KrylovOptions;
use diffract::operators::{BoxConstraint, OperatorBundle};

fn main() -> diffract::Result<()> {
    for (name, config) in [("2D", gradcheck_config_2d()), ("3D", gradcheck_config_3d())] {
        let report = gradcheck(&config, 6, 1e-4)?;
        println!("{name}: max relative error {:.2e}", report.max_relative_error);
        for e in &report.entries {
            println!("  n = {:<4} adjoint {:+.8e}  fd {:+.8e}", e.index, e.adjoint, e.finite_difference);
        }
    }

    let config = gradcheck_config_2d();
    let (_, ds) = simulate(&config)?;
    let (grid, phys, layout) = config.scene()?;
    let bundle = OperatorBundle::new(&grid, &phys, &layout)?;
    let l = lipschitz_estimate(&bundle, &ds, BoxConstraint::new(0.0, 0.5)?, 4, 0, &KrylovOptions::default())?;
    println!("sampled Lipschitz estimate {:.4e}, first-Born bound {:.4e}", l.value, born_operator_norm(&bundle, 0)?);
    Ok(())
}
