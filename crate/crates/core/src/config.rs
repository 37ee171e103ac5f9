//! Strict JSON experiment description.
//!
//! Only `grid` and `method` are required; everything else has a default. Unknown keys are
//! rejected and every error names the offending key path.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SimulationOptions;
use crate::geometry::{
    circular_layout, fresnel_layout_2d, fresnel_layout_3d, DyadicWavenumber, Grid, IncidentMode, Layout,
    LinearArrayGeometry, PhysicsConfig,
};
use crate::optim::{Method, SolverConfig};
use crate::phantom::{shepp_logan, spheres_cubes_3d, two_cubes, two_spheres, Phantom, PhantomLabel, Solid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSpec {
    /// Metres.
    pub wavelength: f64,
    pub background_permittivity: f64,
    pub dyadic_wavenumber: DyadicWavenumber,
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        Self {
            wavelength: 0.0749,
            background_permittivity: 1.0,
            dyadic_wavenumber: DyadicWavenumber::Vacuum,
        }
    }
}

impl PhysicsSpec {
    pub fn build(&self) -> Result<PhysicsConfig> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::config("physics.wavelength", format!("must be positive, got {}", self.wavelength)));
        }
        if !(self.background_permittivity > 0.0 && self.background_permittivity.is_finite()) {
            return Err(Error::config(
                "physics.background_permittivity",
                format!("must be positive, got {}", self.background_permittivity),
            ));
        }
        Ok(PhysicsConfig::new(self.wavelength, self.background_permittivity)?
            .with_dyadic_wavenumber(self.dyadic_wavenumber))
    }

    pub fn of(physics: &PhysicsConfig) -> Self {
        Self {
            wavelength: physics.wavelength(),
            background_permittivity: physics.background_permittivity(),
            dyadic_wavenumber: physics.dyadic_wavenumber(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub side: usize,
    /// Sample spacing in metres.
    pub pitch: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::config("grid.dim", format!("must be 2 or 3, got {}", self.dim)));
        }
        if self.side < 2 {
            return Err(Error::config("grid.side", format!("must be at least 2, got {}", self.side)));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::config("grid.pitch", format!("must be positive, got {}", self.pitch)));
        }
        Grid::new(self.dim, self.side, self.pitch)
    }
}

/// Transmitter/receiver arrangement: a named preset or explicit positions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "preset", deny_unknown_fields)]
pub enum LayoutSpec {
    /// Two 169-sensor detectors and 25 transmitters.
    LinearArray,
    /// Two 85-sensor detectors and 13 transmitters.
    #[default]
    LinearArrayHalved,
    #[serde(rename = "fresnel-2d")]
    Fresnel2d,
    #[serde(rename = "fresnel-3d")]
    Fresnel3d,
    Circular {
        transmitters: usize,
        receivers: usize,
        radius: f64,
        #[serde(default)]
        exclusion_deg: f64,
    },
    /// Transmitters on a sphere at every (polar, azimuth) pair, receivers on the equator;
    /// receivers within `exclusion_deg` of a transmitter's azimuth are inactive.
    SphereCircle {
        radius: f64,
        polar_deg: Vec<f64>,
        azimuth_deg: Vec<f64>,
        receivers: usize,
        #[serde(default)]
        exclusion_deg: f64,
    },
    Explicit {
        transmitters: Vec<[f64; 3]>,
        receivers: Vec<[f64; 3]>,
        /// Defaults to every receiver active for every transmitter.
        #[serde(default)]
        active: Option<Vec<Vec<bool>>>,
    },
}

impl LayoutSpec {
    pub fn build(&self) -> Result<Layout> {
        Ok(match self {
            LayoutSpec::LinearArray => LinearArrayGeometry::standard().build(),
            LayoutSpec::LinearArrayHalved => LinearArrayGeometry::halved().build(),
            LayoutSpec::Fresnel2d => fresnel_layout_2d(),
            LayoutSpec::Fresnel3d => fresnel_layout_3d(),
            LayoutSpec::Circular {
                transmitters,
                receivers,
                radius,
                exclusion_deg,
            } => {
                if *transmitters == 0 || *receivers == 0 || !(*radius > 0.0) {
                    return Err(Error::config("layout", "circular layout needs transmitters, receivers and a positive radius"));
                }
                circular_layout(*transmitters, *receivers, *radius, *exclusion_deg)
            }
            LayoutSpec::SphereCircle {
                radius,
                polar_deg,
                azimuth_deg,
                receivers,
                exclusion_deg,
            } => {
                if *receivers == 0 || !(*radius > 0.0) || polar_deg.is_empty() || azimuth_deg.is_empty() {
                    return Err(Error::config("layout", "sphere-circle layout needs angles, receivers and a positive radius"));
                }
                let mut tx = Vec::new();
                let mut tx_az = Vec::new();
                for &az in azimuth_deg {
                    for &pol in polar_deg {
                        let (t, p) = (az.to_radians(), pol.to_radians());
                        tx.push([radius * p.sin() * t.cos(), radius * p.sin() * t.sin(), radius * p.cos()]);
                        tx_az.push(az);
                    }
                }
                let rx_az: Vec<f64> = (0..*receivers).map(|m| m as f64 * 360.0 / *receivers as f64).collect();
                let rx = rx_az
                    .iter()
                    .map(|a| [radius * a.to_radians().cos(), radius * a.to_radians().sin(), 0.0])
                    .collect();
                let active = tx_az
                    .iter()
                    .map(|t| {
                        rx_az
                            .iter()
                            .map(|r| {
                                let d = (t - r).rem_euclid(360.0);
                                d.min(360.0 - d) > exclusion_deg + 1e-9
                            })
                            .collect()
                    })
                    .collect();
                Layout {
                    transmitters: tx,
                    receivers: rx,
                    active,
                }
            }
            LayoutSpec::Explicit {
                transmitters,
                receivers,
                active,
            } => match active {
                None => Layout::all_active(transmitters.clone(), receivers.clone()),
                Some(mask) => {
                    if mask.len() != transmitters.len() || mask.iter().any(|r| r.len() != receivers.len()) {
                        return Err(Error::config("layout.active", "mask must be transmitters × receivers"));
                    }
                    Layout {
                        transmitters: transmitters.clone(),
                        receivers: receivers.clone(),
                        active: mask.clone(),
                    }
                }
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum PhantomSpec {
    SheppLogan { contrast: f64 },
    TwoSpheres { contrast: f64 },
    TwoCubes { contrast: f64 },
    Solids { solids: Vec<Solid> },
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec::SheppLogan { contrast: 1.0 }
    }
}

impl PhantomSpec {
    /// Peak contrast of the phantom.
    pub fn contrast(&self) -> f64 {
        match self {
            PhantomSpec::SheppLogan { contrast }
            | PhantomSpec::TwoSpheres { contrast }
            | PhantomSpec::TwoCubes { contrast } => *contrast,
            PhantomSpec::Solids { solids } => solids
                .iter()
                .map(|s| match s {
                    Solid::Sphere { value, .. } | Solid::Cube { value, .. } => *value,
                })
                .fold(0.0, f64::max),
        }
    }

    /// The same shape rescaled to peak contrast `c`.
    pub fn with_contrast(&self, c: f64) -> Self {
        match self {
            PhantomSpec::SheppLogan { .. } => PhantomSpec::SheppLogan { contrast: c },
            PhantomSpec::TwoSpheres { .. } => PhantomSpec::TwoSpheres { contrast: c },
            PhantomSpec::TwoCubes { .. } => PhantomSpec::TwoCubes { contrast: c },
            PhantomSpec::Solids { solids } => {
                let peak = self.contrast();
                let k = if peak > 0.0 { c / peak } else { 0.0 };
                PhantomSpec::Solids {
                    solids: solids
                        .iter()
                        .map(|s| match *s {
                            Solid::Sphere { center, radius, value } => Solid::Sphere { center, radius, value: value * k },
                            Solid::Cube { center, half_width, value } => Solid::Cube { center, half_width, value: value * k },
                        })
                        .collect(),
                }
            }
        }
    }

    pub fn build(&self, grid: &Grid) -> Result<Phantom> {
        let c = self.contrast();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config("phantom.contrast", format!("must be positive, got {c}")));
        }
        let need = |dim: usize| -> Result<()> {
            if grid.dim() == dim {
                Ok(())
            } else {
                Err(Error::config("phantom.kind", format!("this phantom needs a {dim}D grid")))
            }
        };
        match self {
            PhantomSpec::SheppLogan { contrast } => {
                need(2)?;
                shepp_logan(grid.side(), *contrast)
            }
            PhantomSpec::TwoSpheres { contrast } => {
                need(3)?;
                two_spheres(grid, *contrast)
            }
            PhantomSpec::TwoCubes { contrast } => {
                need(3)?;
                two_cubes(grid, *contrast)
            }
            PhantomSpec::Solids { solids } => {
                need(3)?;
                let mut p = spheres_cubes_3d(grid, solids)?;
                p.label = PhantomLabel::Custom;
                Ok(p)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    /// Measurement SNR in dB; `null` for noiseless data.
    pub noise_snr_db: Option<f64>,
    /// Simulate on a grid refined by this factor to avoid the inverse crime (1 or 2).
    pub anti_crime_factor: usize,
    /// Defaults to a point source in 2D and a plane wave in 3D.
    pub incident: Option<IncidentMode>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            noise_snr_db: None,
            anti_crime_factor: 2,
            incident: None,
        }
    }
}

/// Slice positions (metres) for 3D image previews; `null` skips that axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SliceSpec {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
}

impl Default for SliceSpec {
    fn default() -> Self {
        Self {
            x: Some(0.0),
            y: Some(0.0),
            z: Some(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub contrasts: Vec<f64>,
    pub methods: Vec<Method>,
    /// Candidate relative weights; each (method, contrast) keeps the best SNR.
    pub tau_rel: Vec<f64>,
    /// Use `[0, contrast]` as the box for each contrast instead of `solver.bounds`.
    pub bound_to_contrast: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            contrasts: vec![1e-3, 0.5, 1.0, 2.0, 3.0],
            methods: vec![Method::Fb, Method::Il, Method::Cisor],
            tau_rel: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            bound_to_contrast: true,
        }
    }
}

fn default_tau_rel() -> Option<f64> {
    Some(1e-3)
}

fn default_method() -> Method {
    Method::Cisor
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub physics: PhysicsSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub layout: LayoutSpec,
    #[serde(default)]
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    /// `τ = tau_rel · ‖∇D_B(0)‖_∞`; when `null`, `solver.tau` is used as given.
    #[serde(default = "default_tau_rel")]
    pub tau_rel: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Drives measurement noise and Lipschitz sampling (overrides `solver.seed`).
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub slices: SliceSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

/// Parses and validates a config, reporting the key path of the first problem.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// A desk-scale 2D setup: 64×64 grid over 10 cm, halved linear array, CISOR.
    pub fn desk_2d() -> Self {
        Self {
            physics: PhysicsSpec::default(),
            grid: GridSpec {
                dim: 2,
                side: 64,
                pitch: 0.1 / 64.0,
            },
            layout: LayoutSpec::default(),
            phantom: PhantomSpec::default(),
            simulation: SimulationSpec::default(),
            solver: SolverConfig::default(),
            tau_rel: default_tau_rel(),
            method: Method::Cisor,
            output_dir: default_output_dir(),
            seed: 0,
            slices: SliceSpec::default(),
            sweep: SweepSpec::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.physics.build()?;
        let layout = self.layout.build()?;
        layout
            .validate(&grid)
            .map_err(|e| Error::config("layout", e.to_string()))?;
        match (&self.layout, grid.dim()) {
            (LayoutSpec::Fresnel3d | LayoutSpec::SphereCircle { .. }, 2) => {
                return Err(Error::config("layout.preset", "3D layout on a 2D grid"));
            }
            (LayoutSpec::LinearArray | LayoutSpec::LinearArrayHalved | LayoutSpec::Fresnel2d, 3) => {
                return Err(Error::config("layout.preset", "2D layout on a 3D grid"));
            }
            _ => {}
        }
        self.phantom.build(&grid)?;
        if let Some(s) = self.simulation.noise_snr_db {
            if s.is_nan() {
                return Err(Error::config("simulation.noise_snr_db", "must be a number"));
            }
        }
        if !(1..=2).contains(&self.simulation.anti_crime_factor) {
            return Err(Error::config("simulation.anti_crime_factor", "must be 1 or 2"));
        }
        self.solver.validate()?;
        if let Some(t) = self.tau_rel {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::config("tau_rel", format!("must be >= 0, got {t}")));
            }
        }
        if grid.dim() == 3 && self.method == Method::Il {
            return Err(Error::config("method", "il is only available in 2D"));
        }
        if self.sweep.contrasts.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::config("sweep.contrasts", "must be positive"));
        }
        if self.sweep.tau_rel.is_empty() || self.sweep.tau_rel.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::config("sweep.tau_rel", "need at least one nonnegative value"));
        }
        Ok(())
    }

    /// Grid, physics and layout, already validated.
    pub fn scene(&self) -> Result<(Grid, PhysicsConfig, Layout)> {
        Ok((self.grid.build()?, self.physics.build()?, self.layout.build()?))
    }

    pub fn incident(&self) -> IncidentMode {
        self.simulation
            .incident
            .unwrap_or(IncidentMode::default_for(self.grid.dim))
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        SimulationOptions {
            noise_snr_db: self.simulation.noise_snr_db,
            anti_crime_factor: self.simulation.anti_crime_factor,
            seed: self.seed,
            krylov: self.solver.krylov,
            incident: self.incident(),
        }
    }

    /// Solver settings with the experiment seed applied; `τ` is resolved later against the data.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            ..self.solver
        }
    }
}
