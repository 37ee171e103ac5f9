//! Bessel/Hankel values and the 2D/3D Green's functions at a few distances.

use diffract::geometry::PhysicsConfig;
use diffract::special::{bessel_01, dyadic_green, hankel_h0_first_kind, scalar_green};

fn main() -> diffract::Result<()> {
    println!("{:>6}  {:>12} {:>12} {:>12} {:>12}", "x", "J0", "J1", "Y0", "Y1");
    for x in [0.1, 1.0, 2.404825557695773, 5.0, 20.0] {
        let (j0, j1, y0, y1) = bessel_01(x)?;
        println!("{x:>6.3}  {j0:>12.9} {j1:>12.9} {y0:>12.9} {y1:>12.9}");
    }
    println!("H0(1)(3) = {}", hankel_h0_first_kind(3.0)?);

    let phys = PhysicsConfig::new(0.0749, 1.0)?;
    println!("k = {:.4} rad/m", phys.k());
    for d in [0.01, 0.05, 0.2] {
        let r = [d, 0.0, 0.0];
        println!(
            "|r| = {d:<5} g2 = {:.4e}  g3 = {:.4e}",
            scalar_green(&r, &phys, 2)?,
            scalar_green(&r, &phys, 3)?
        );
    }
    let g = dyadic_green(&[0.03, 0.04, 0.0], &phys)?;
    println!("dyadic Green's tensor at (0.03, 0.04, 0):");
    for row in g {
        println!("  {:.3e}  {:.3e}  {:.3e}", row[0], row[1], row[2]);
    }
    Ok(())
}
