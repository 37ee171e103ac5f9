//! Box-constrained TV denoising with the proximal operator, across a few weights.

use diffract::geometry::build_grid;
use diffract::operators::BoxConstraint;
use diffract::phantom::{shepp_logan, snr_db};
use diffract::tv::{tv_value, TvProx};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

fn main() -> diffract::Result<()> {
    let side = 64;
    let grid = build_grid(2, side, 1.0 / side as f64)?;
    let truth = shepp_logan(side, 1.0)?.values;
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.15).expect("valid deviation");
    let z: Vec<f64> = truth.iter().map(|v| v + noise.sample(&mut rng)).collect();
    println!("noisy input: SNR {:.2} dB, TV {:.1}", snr_db(&z, &truth)?, tv_value(&z, &grid)?);

    let bounds = BoxConstraint::new(0.0, 1.0)?;
    let mut prox = TvProx::new(&grid);
    for lambda in [0.02, 0.05, 0.1, 0.2] {
        prox.reset();
        let out = prox.apply(&z, lambda, bounds, 2000, 1e-6)?;
        println!(
            "λ = {lambda:<4}  SNR {:6.2} dB  TV {:7.1}  {} iterations, gap {:.1e}",
            snr_db(&out.x, &truth)?,
            tv_value(&out.x, &grid)?,
            out.iterations,
            out.gap
        );
    }
    Ok(())
}
