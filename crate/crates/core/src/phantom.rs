//! Test objects and the reconstruction SNR metric.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{Grid, Point};
use crate::operators::{BoxConstraint, ContrastImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomLabel {
    SheppLogan,
    TwoSpheres,
    TwoCubes,
    Custom,
}

/// Ground-truth contrast on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub values: Vec<f64>,
    pub label: PhantomLabel,
}

impl Phantom {
    pub fn contrast(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The phantom as an image constrained to `[0, contrast]`.
    pub fn image(&self) -> ContrastImage {
        let hi = self.contrast();
        ContrastImage::new(self.values.clone(), BoxConstraint { lower: 0.0, upper: hi })
            .expect("phantom values are nonnegative")
    }
}

/// `(intensity, a, b, x0, y0, φ in degrees)` of the original head phantom.
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (2.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.98, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.02, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.02, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.01, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.01, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.01, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.01, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.01, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.01, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Raw Shepp-Logan intensity at canonical coordinates in `[-1, 1]²`.
pub fn shepp_logan_intensity(x: f64, y: f64) -> f64 {
    SHEPP_LOGAN
        .iter()
        .filter(|(_, a, b, x0, y0, phi)| {
            let (s, c) = phi.to_radians().sin_cos();
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        })
        .map(|e| e.0)
        .sum()
}

/// `J×J` Shepp-Logan phantom, floored at zero and scaled so its maximum equals `contrast`.
///
/// Pixel `(l, s)` samples canonical point `((l + ½ - J/2)/(J/2), (s + ½ - J/2)/(J/2))`.
pub fn shepp_logan(side: usize, contrast: f64) -> Result<Phantom> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!("phantom side must be >= 8, got {side}")));
    }
    if !(contrast > 0.0 && contrast.is_finite()) {
        return Err(Error::InvalidArgument(format!("contrast must be positive, got {contrast}")));
    }
    let h = side as f64 / 2.0;
    let raw: Vec<f64> = (0..side * side)
        .map(|n| {
            let (l, s) = (n % side, n / side);
            shepp_logan_intensity((l as f64 + 0.5 - h) / h, (s as f64 + 0.5 - h) / h).max(0.0)
        })
        .collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let values = raw.iter().map(|v| if *v == max { contrast } else { v / max * contrast }).collect();
    Ok(Phantom {
        values,
        label: PhantomLabel::SheppLogan,
    })
}

/// An analytic solid in physical coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Solid {
    Sphere { center: Point, radius: f64, value: f64 },
    /// Axis-aligned cube.
    Cube { center: Point, half_width: f64, value: f64 },
}

impl Solid {
    fn covers(&self, r: &Point) -> Option<f64> {
        match *self {
            Solid::Sphere { center, radius, value } => {
                let d2: f64 = (0..3).map(|i| (r[i] - center[i]).powi(2)).sum();
                (d2 <= radius * radius).then_some(value)
            }
            Solid::Cube { center, half_width, value } => {
                (0..3).all(|i| (r[i] - center[i]).abs() <= half_width).then_some(value)
            }
        }
    }
}

/// Rasterises solids by testing each sample centre; overlaps take the larger value.
pub fn spheres_cubes_3d(grid: &Grid, solids: &[Solid]) -> Result<Phantom> {
    for s in solids {
        let (size, value) = match *s {
            Solid::Sphere { radius, value, .. } => (radius, value),
            Solid::Cube { half_width, value, .. } => (half_width, value),
        };
        if !(size > 0.0) || !(value >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid solid {s:?}")));
        }
    }
    let values = grid
        .points()
        .iter()
        .map(|r| solids.iter().filter_map(|s| s.covers(r)).fold(0.0, f64::max))
        .collect();
    Ok(Phantom {
        values,
        label: PhantomLabel::Custom,
    })
}

/// Two touching spheres of 25 mm radius on the x axis.
pub fn two_spheres(grid: &Grid, contrast: f64) -> Result<Phantom> {
    let r = 0.025;
    let mut p = spheres_cubes_3d(
        grid,
        &[
            Solid::Sphere { center: [-r, 0.0, 0.0], radius: r, value: contrast },
            Solid::Sphere { center: [r, 0.0, 0.0], radius: r, value: contrast },
        ],
    )?;
    p.label = PhantomLabel::TwoSpheres;
    Ok(p)
}

/// Two 25 mm cubes sharing an edge, approximately the layout of the classic measurement target.
pub fn two_cubes(grid: &Grid, contrast: f64) -> Result<Phantom> {
    let h = 0.0125;
    let mut p = spheres_cubes_3d(
        grid,
        &[
            Solid::Cube { center: [-h, -h, -h], half_width: h, value: contrast },
            Solid::Cube { center: [h, h, h], half_width: h, value: contrast },
        ],
    )?;
    p.label = PhantomLabel::TwoCubes;
    Ok(p)
}

/// Cap returned when the reconstruction error vanishes.
pub const SNR_CAP_DB: f64 = 300.0;

/// `20 log₁₀(‖f_true‖ / ‖f̂ - f_true‖)`.
pub fn snr_db(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    let t = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    if t == 0.0 {
        return Err(Error::InvalidArgument("reference image is zero".into()));
    }
    let e = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if e == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((20.0 * (t / e).log10()).min(SNR_CAP_DB))
}
