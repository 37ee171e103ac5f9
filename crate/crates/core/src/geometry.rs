//! Sampling grids, wave constants, transmitter/receiver layouts and incident fields.
//!
//! Positions are always stored as 3-vectors; 2D geometry lives in the `z = 0` plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// A point or direction in space (metres). 2D problems keep `z = 0`.
pub type Point = [f64; 3];

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Which wavenumber multiplies the polynomial factors of the dyadic Green's function.
///
/// The printed form uses the vacuum wavenumber there and the background one inside the
/// scalar Green's function; the two coincide when the background permittivity is 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DyadicWavenumber {
    #[default]
    Vacuum,
    Background,
}

/// Wavelength and background permittivity plus the wavenumbers derived from them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsConfig {
    wavelength: f64,
    background_permittivity: f64,
    dyadic_wavenumber: DyadicWavenumber,
}

impl PhysicsConfig {
    pub fn new(wavelength: f64, background_permittivity: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(background_permittivity > 0.0 && background_permittivity.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "background permittivity must be positive, got {background_permittivity}"
            )));
        }
        Ok(Self {
            wavelength,
            background_permittivity,
            dyadic_wavenumber: DyadicWavenumber::Vacuum,
        })
    }

    pub fn with_dyadic_wavenumber(mut self, mode: DyadicWavenumber) -> Self {
        self.dyadic_wavenumber = mode;
        self
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn background_permittivity(&self) -> f64 {
        self.background_permittivity
    }

    pub fn dyadic_wavenumber(&self) -> DyadicWavenumber {
        self.dyadic_wavenumber
    }

    /// Vacuum wavenumber `2π/λ`.
    pub fn k(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Background wavenumber `k·√ε_b`.
    pub fn kb(&self) -> f64 {
        self.k() * self.background_permittivity.sqrt()
    }

    /// Wavenumber used in the polynomial factors of the dyadic Green's function.
    pub fn dyadic_k(&self) -> f64 {
        match self.dyadic_wavenumber {
            DyadicWavenumber::Vacuum => self.k(),
            DyadicWavenumber::Background => self.kb(),
        }
    }
}

/// A uniform square (2D) or cubic (3D) sampling of the imaging domain, centred on the origin.
///
/// Linear index `n = l + J·s (+ J²·t)` with `l` running along x.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    side: usize,
    pitch: f64,
}

/// Builds a grid of `side^dim` samples with spacing `pitch`.
pub fn build_grid(dim: usize, side: usize, pitch: f64) -> Result<Grid> {
    Grid::new(dim, side, pitch)
}

impl Grid {
    pub fn new(dim: usize, side: usize, pitch: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 2 or 3, got {dim}"
            )));
        }
        if side < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid side must be at least 2, got {side}"
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid pitch must be positive, got {pitch}"
            )));
        }
        Ok(Self { dim, side, pitch })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Number of samples `N = J^d`.
    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Area (2D) or volume (3D) of one pixel.
    pub fn cell_measure(&self) -> f64 {
        self.pitch.powi(self.dim as i32)
    }

    /// Half the side length of the bounding box.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.side as f64 * self.pitch
    }

    /// Coordinate of the sample with zero-based axis index `i`.
    pub fn axis_coordinate(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - 0.5 * self.side as f64) * self.pitch
    }

    /// Nearest axis index to a physical coordinate, clamped to the grid.
    pub fn axis_index(&self, coordinate: f64) -> usize {
        let i = (coordinate / self.pitch + 0.5 * self.side as f64 - 0.5).round();
        i.clamp(0.0, (self.side - 1) as f64) as usize
    }

    pub fn unravel(&self, n: usize) -> [usize; 3] {
        let j = self.side;
        if self.dim == 2 {
            [n % j, n / j, 0]
        } else {
            [n % j, (n / j) % j, n / (j * j)]
        }
    }

    pub fn ravel(&self, idx: [usize; 3]) -> usize {
        let j = self.side;
        idx[0] + j * idx[1] + j * j * idx[2]
    }

    pub fn point(&self, n: usize) -> Point {
        let [l, s, t] = self.unravel(n);
        let z = if self.dim == 3 {
            self.axis_coordinate(t)
        } else {
            0.0
        };
        [self.axis_coordinate(l), self.axis_coordinate(s), z]
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|n| self.point(n)).collect()
    }

    /// True when `p` lies strictly outside the bounding box of the domain.
    pub fn is_outside(&self, p: &Point) -> bool {
        let h = self.half_extent();
        (0..self.dim).any(|a| p[a].abs() > h)
    }

    /// The grid refined by an integer factor over the same physical box.
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        Grid::new(self.dim, self.side * factor, self.pitch / factor as f64)
    }
}

/// Transmitter and receiver positions with the receivers active for each transmitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub transmitters: Vec<Point>,
    pub receivers: Vec<Point>,
    /// `active[p][m]` is true when receiver `m` records transmitter `p`.
    pub active: Vec<Vec<bool>>,
}

impl Layout {
    /// Layout with every receiver active for every transmitter.
    pub fn all_active(transmitters: Vec<Point>, receivers: Vec<Point>) -> Self {
        let active = vec![vec![true; receivers.len()]; transmitters.len()];
        Self {
            transmitters,
            receivers,
            active,
        }
    }

    pub fn num_transmitters(&self) -> usize {
        self.transmitters.len()
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }

    /// Indices of the receivers recording transmitter `p`.
    pub fn active_receivers(&self, p: usize) -> Vec<usize> {
        self.active[p]
            .iter()
            .enumerate()
            .filter_map(|(m, &a)| a.then_some(m))
            .collect()
    }

    pub fn total_measurements(&self) -> usize {
        self.active
            .iter()
            .map(|mask| mask.iter().filter(|&&a| a).count())
            .sum()
    }

    /// Checks mask shapes, the one-active-receiver rule and disjointness from the grid.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.active.len() != self.transmitters.len() {
            return Err(Error::DimensionMismatch {
                expected: self.transmitters.len(),
                got: self.active.len(),
            });
        }
        for (p, mask) in self.active.iter().enumerate() {
            if mask.len() != self.receivers.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.receivers.len(),
                    got: mask.len(),
                });
            }
            if !mask.iter().any(|&a| a) {
                return Err(Error::InvalidArgument(format!(
                    "transmitter {p} has no active receiver"
                )));
            }
        }
        for p in self.transmitters.iter().chain(&self.receivers) {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite position".into()));
            }
            if !grid.is_outside(p) {
                return Err(Error::SourceInsideDomain { distance: norm(p) });
            }
        }
        Ok(())
    }
}

/// Two opposing linear detectors with a line of transmitters behind the left one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearArrayGeometry {
    /// Distance of each detector line from the origin.
    pub detector_offset: f64,
    pub sensors_per_detector: usize,
    pub sensor_spacing: f64,
    /// Distance of the transmitter line to the left of the left detector.
    pub source_offset: f64,
    /// Transmitter azimuths span `[-max_angle_deg, max_angle_deg]`.
    pub max_angle_deg: f64,
    pub angle_step_deg: f64,
}

impl LinearArrayGeometry {
    /// 2×169 sensors at 3.84 cm, detectors at ±95.9 cm, 25 transmitters every 5°.
    pub fn standard() -> Self {
        Self {
            detector_offset: 0.959,
            sensors_per_detector: 169,
            sensor_spacing: 0.0384,
            source_offset: 0.480,
            max_angle_deg: 60.0,
            angle_step_deg: 5.0,
        }
    }

    /// Same aperture with half the sensors and transmitters: 2×85 sensors, 13 transmitters.
    pub fn halved() -> Self {
        Self {
            sensors_per_detector: 85,
            sensor_spacing: 0.0768,
            angle_step_deg: 10.0,
            ..Self::standard()
        }
    }

    pub fn build(&self) -> Layout {
        let mut receivers = Vec::with_capacity(2 * self.sensors_per_detector);
        let centre = 0.5 * (self.sensors_per_detector as f64 - 1.0);
        for x in [-self.detector_offset, self.detector_offset] {
            for i in 0..self.sensors_per_detector {
                receivers.push([x, (i as f64 - centre) * self.sensor_spacing, 0.0]);
            }
        }
        // azimuth measured from the -x axis, i.e. towards the transmitter line
        let line = self.detector_offset + self.source_offset;
        let steps = (2.0 * self.max_angle_deg / self.angle_step_deg).round() as usize;
        let transmitters = (0..=steps)
            .map(|i| {
                let deg = -self.max_angle_deg + i as f64 * self.angle_step_deg;
                [-line, line * deg.to_radians().tan(), 0.0]
            })
            .collect();
        Layout::all_active(transmitters, receivers)
    }
}

/// The full-resolution simulated 2D layout: 338 receivers and 25 transmitters.
pub fn simulated_layout_2d() -> Layout {
    LinearArrayGeometry::standard().build()
}

fn azimuth_gap_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Transmitters and receivers evenly spaced on one circle in the x-y plane.
///
/// Receivers within `exclusion_deg` of a transmitter (inclusive) are inactive for it.
pub fn circular_layout(
    transmitters: usize,
    receivers: usize,
    radius: f64,
    exclusion_deg: f64,
) -> Layout {
    let tx_az: Vec<f64> = (0..transmitters)
        .map(|p| p as f64 * 360.0 / transmitters as f64)
        .collect();
    let rx_az: Vec<f64> = (0..receivers)
        .map(|m| m as f64 * 360.0 / receivers as f64)
        .collect();
    let on_circle = |deg: f64| {
        let a = deg.to_radians();
        [radius * a.cos(), radius * a.sin(), 0.0]
    };
    let active = tx_az
        .iter()
        .map(|&t| {
            rx_az
                .iter()
                .map(|&r| azimuth_gap_deg(t, r) > exclusion_deg + 1e-9)
                .collect()
        })
        .collect();
    Layout {
        transmitters: tx_az.iter().map(|&a| on_circle(a)).collect(),
        receivers: rx_az.iter().map(|&a| on_circle(a)).collect(),
        active,
    }
}

/// 2D microwave setup: 8 transmitters and 360 receivers on a 1.67 m circle, 241 active each.
pub fn fresnel_layout_2d() -> Layout {
    circular_layout(8, 360, 1.67, 59.0)
}

/// 3D microwave setup: 81 transmitters on a 1.769 m sphere, 36 receivers on the azimuthal
/// circle, receivers active when more than 50° in azimuth from the transmitter.
pub fn fresnel_layout_3d() -> Layout {
    let radius = 1.769;
    let mut transmitters = Vec::new();
    let mut tx_az = Vec::new();
    for theta in (20..=340).step_by(40) {
        for phi in (30..=150).step_by(15) {
            let (t, p) = ((theta as f64).to_radians(), (phi as f64).to_radians());
            transmitters.push([
                radius * p.sin() * t.cos(),
                radius * p.sin() * t.sin(),
                radius * p.cos(),
            ]);
            tx_az.push(theta as f64);
        }
    }
    let rx_az: Vec<f64> = (0..36).map(|m| 10.0 * m as f64).collect();
    let receivers = rx_az
        .iter()
        .map(|a| {
            let a = a.to_radians();
            [radius * a.cos(), radius * a.sin(), 0.0]
        })
        .collect();
    let active = tx_az
        .iter()
        .map(|&t| rx_az.iter().map(|&r| azimuth_gap_deg(t, r) > 50.0).collect())
        .collect();
    Layout {
        transmitters,
        receivers,
        active,
    }
}

/// How a transmitter illuminates the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum IncidentMode {
    /// Unit-amplitude point (2D: line) source: the scalar Green's function of the source.
    /// In 3D this is interpreted as a dipole polarised along z.
    PointSource,
    /// Unit plane wave travelling from the source position towards the origin.
    PlaneWave,
    /// 3D point dipole with the given polarisation, radiating through the dyadic Green's function.
    Dipole { polarization: Point },
}

impl IncidentMode {
    pub fn default_for(dim: usize) -> Self {
        if dim == 2 {
            IncidentMode::PointSource
        } else {
            IncidentMode::PlaneWave
        }
    }
}

/// Incident field sampled on the grid: `N` values in 2D, three stacked `N` blocks in 3D.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidentField {
    pub values: Vec<Complex64>,
}

impl IncidentField {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Plane-wave polarisation: z projected orthogonal to `dir`, or x when `dir` is along z.
fn plane_wave_polarization(dir: &Point) -> Point {
    let z = [0.0, 0.0, 1.0];
    let c = dot(&z, dir);
    let mut p = [-c * dir[0], -c * dir[1], 1.0 - c * dir[2]];
    let n = norm(&p);
    if n < 1e-8 {
        let x = [1.0, 0.0, 0.0];
        let c = dot(&x, dir);
        p = [1.0 - c * dir[0], -c * dir[1], -c * dir[2]];
        let n = norm(&p);
        return [p[0] / n, p[1] / n, p[2] / n];
    }
    [p[0] / n, p[1] / n, p[2] / n]
}

/// Samples the incident field of a transmitter at `source` on every grid point.
pub fn incident_field(
    grid: &Grid,
    source: &Point,
    physics: &PhysicsConfig,
    mode: IncidentMode,
) -> Result<IncidentField> {
    if !grid.is_outside(source) {
        return Err(Error::SourceInsideDomain {
            distance: norm(source),
        });
    }
    let points = grid.points();
    let kb = physics.kb();
    let dist = norm(source);
    let dir = [-source[0] / dist, -source[1] / dist, -source[2] / dist];
    let values = match (grid.dim(), mode) {
        (2, IncidentMode::PointSource) => points
            .iter()
            .map(|r| special::scalar_green(&sub(r, source), physics, 2))
            .collect::<Result<Vec<_>>>()?,
        (2, _) => points
            .iter()
            .map(|r| Complex64::from_polar(1.0, kb * dot(&dir, r)))
            .collect(),
        (_, IncidentMode::PlaneWave) => {
            let pol = plane_wave_polarization(&dir);
            let phase: Vec<Complex64> = points
                .iter()
                .map(|r| Complex64::from_polar(1.0, kb * dot(&dir, r)))
                .collect();
            let mut out = Vec::with_capacity(3 * points.len());
            for c in pol {
                out.extend(phase.iter().map(|v| v * c));
            }
            out
        }
        (_, m) => {
            let pol = match m {
                IncidentMode::Dipole { polarization } => polarization,
                _ => [0.0, 0.0, 1.0],
            };
            let n = points.len();
            let mut out = vec![Complex64::new(0.0, 0.0); 3 * n];
            for (i, r) in points.iter().enumerate() {
                let g = special::dyadic_green(&sub(r, source), physics)?;
                for a in 0..3 {
                    out[a * n + i] = (0..3).map(|b| g[a][b] * pol[b]).sum();
                }
            }
            out
        }
    };
    Ok(IncidentField { values })
}
