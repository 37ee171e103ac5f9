//! The built-in phantoms, written as CSV/PGM and read back.

use diffract::config::SliceSpec;
use diffract::geometry::build_grid;
use diffract::io::{read_image_csv, read_pgm, write_image};
use diffract::phantom::{shepp_logan, two_cubes, two_spheres};

fn main() -> diffract::Result<()> {
    let dir = std::env::temp_dir().join("diffract-phantoms");
    let g2 = build_grid(2, 64, 0.1 / 64.0)?;
    let sl = shepp_logan(64, 1.0)?;
    let files = write_image(&dir, "shepp_logan", &g2, &sl.values, &SliceSpec::default())?;
    let back = read_image_csv(&files[0])?;
    println!("Shepp-Logan: {} pixels, CSV round trip exact: {}", back.len(), back == sl.values);
    let pgm = read_pgm(&dir.join("shepp_logan.pgm"))?;
    println!("  PGM {}×{}, range {:?}", pgm.width, pgm.height, pgm.range);

    let g3 = build_grid(3, 24, 0.1 / 24.0)?;
    for (name, p) in [("two_spheres", two_spheres(&g3, 1.0)?), ("two_cubes", two_cubes(&g3, 1.0)?)] {
        let filled = p.values.iter().filter(|v| **v > 0.0).count();
        println!("{name}: {filled} of {} voxels occupied", p.values.len());
        for f in write_image(&dir, name, &g3, &p.values, &SliceSpec::default())? {
            println!("  wrote {}", f.display());
        }
    }
    Ok(())
}
