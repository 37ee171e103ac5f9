//! Simulates noiseless and noisy measurements of a Shepp-Logan phantom and writes the dataset.

use diffract::forward::{scattered_field, simulate_measurements, solve_total_field, SimulationOptions};
use diffract::geometry::{build_grid, LinearArrayGeometry, PhysicsConfig};
use diffract::io::{read_dataset, write_dataset};
use diffract::krylov::KrylovOptions;
use diffract::operators::OperatorBundle;
use diffract::phantom::shepp_logan;

fn main() -> diffract::Result<()> {
    let phys = PhysicsConfig::new(0.0749, 1.0)?;
    let grid = build_grid(2, 48, 0.1 / 48.0)?;
    let layout = LinearArrayGeometry::halved().build();
    let phantom = shepp_logan(48, 1.0)?;
    println!(
        "{} transmitters, {} receivers, {} measurements",
        layout.num_transmitters(),
        layout.num_receivers(),
        layout.total_measurements()
    );

    // one transmitter by hand: total field, then the receiver samples
    let bundle = OperatorBundle::new(&grid, &phys, &layout)?;
    let sol = solve_total_field(&bundle, &phantom.values, bundle.incident(6), &KrylovOptions::default(), None)?;
    println!("transmitter 6: {} Krylov iterations, residual {:.1e}", sol.iterations, sol.residual);
    let y = scattered_field(&bundle, 6, &phantom.values, &sol.field)?;
    println!("  |y| at the first receivers: {:?}", y.iter().take(4).map(|v| format!("{:.3e}", v.norm())).collect::<Vec<_>>());

    // the whole dataset, simulated on a twice-finer grid
    let clean = simulate_measurements(&grid, &phantom.values, &layout, &phys, &SimulationOptions::default())?;
    let noisy = simulate_measurements(
        &grid,
        &phantom.values,
        &layout,
        &phys,
        &SimulationOptions {
            noise_snr_db: Some(20.0),
            seed: 3,
            ..Default::default()
        },
    )?;
    println!("data energy: clean {:.4e}, 20 dB noise {:.4e}", clean.energy(), noisy.energy());

    let dir = std::env::temp_dir().join("diffract-forward");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("data.csv");
    write_dataset(&path, &noisy, 2)?;
    let (back, _) = read_dataset(&path)?;
    println!("wrote {} (round trip exact: {})", path.display(), back.measurements == noisy.measurements);
    Ok(())
}
