//! End-to-end experiments driven by an [`ExperimentConfig`]: simulation, reconstruction,
//! gradient checks and contrast sweeps for either the 2D scalar or the 3D vectorial model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::ExperimentConfig;
use crate::error::{check_len, Error, Result};
use crate::forward::{data_fidelity, simulate_measurements, ScatteringDataset};
use crate::geometry::{Grid, IncidentMode, Layout, PhysicsConfig};
use crate::gradient::{gradient_data_fidelity, GradientResult};
use crate::io::SweepRow;
use crate::krylov::KrylovOptions;
use crate::operators::{BoxConstraint, BundleOptions, OperatorBundle};
use crate::optim::{reconstruct, regularization_scale, Method, Reconstruction, SolverConfig};
use crate::phantom::{snr_db, Phantom};
use crate::vectorial::{
    data_fidelity_3d, gradient_3d, reconstruct_3d, regularization_scale_3d, simulate_measurements_3d,
    VectorBundle,
};

/// Forward operators for one grid and layout.
#[derive(Clone, Debug)]
pub enum Scene {
    Scalar(OperatorBundle),
    Vector(VectorBundle),
}

impl Scene {
    pub fn new(grid: &Grid, physics: &PhysicsConfig, layout: &Layout, incident: IncidentMode) -> Result<Self> {
        if grid.dim() == 2 {
            let options = BundleOptions {
                incident: Some(incident),
                ..Default::default()
            };
            Ok(Scene::Scalar(OperatorBundle::with_options(grid, physics, layout, options)?))
        } else {
            Ok(Scene::Vector(VectorBundle::new(grid, physics, layout, incident)?))
        }
    }

    /// Operators matching a dataset's physics, layout and illumination.
    pub fn for_dataset(grid: &Grid, dataset: &ScatteringDataset) -> Result<Self> {
        Self::new(grid, &dataset.physics, &dataset.layout, dataset.incident)
    }

    pub fn grid(&self) -> &Grid {
        match self {
            Scene::Scalar(b) => b.grid(),
            Scene::Vector(b) => b.grid(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn regularization_scale(&self, dataset: &ScatteringDataset) -> Result<f64> {
        match self {
            Scene::Scalar(b) => regularization_scale(b, dataset),
            Scene::Vector(b) => regularization_scale_3d(b, dataset),
        }
    }

    pub fn data_fidelity(&self, f: &[f64], dataset: &ScatteringDataset, opts: &KrylovOptions) -> Result<f64> {
        match self {
            Scene::Scalar(b) => data_fidelity(b, f, dataset, opts),
            Scene::Vector(b) => data_fidelity_3d(b, f, dataset, opts),
        }
    }

    pub fn gradient(&self, f: &[f64], dataset: &ScatteringDataset, opts: &KrylovOptions) -> Result<GradientResult> {
        match self {
            Scene::Scalar(b) => gradient_data_fidelity(b, f, dataset, opts),
            Scene::Vector(b) => gradient_3d(b, f, dataset, opts),
        }
    }

    pub fn reconstruct(&self, dataset: &ScatteringDataset, config: &SolverConfig, method: Method) -> Result<Reconstruction> {
        match self {
            Scene::Scalar(b) => reconstruct(b, dataset, config, method),
            Scene::Vector(b) => reconstruct_3d(b, dataset, config, method),
        }
    }
}

/// Ground truth and measurements as described by `config`.
pub fn simulate(config: &ExperimentConfig) -> Result<(Phantom, ScatteringDataset)> {
    config.validate()?;
    let (grid, physics, layout) = config.scene()?;
    let phantom = config.phantom.build(&grid)?;
    let opts = config.simulation_options();
    let ds = if grid.dim() == 2 {
        simulate_measurements(&grid, &phantom.values, &layout, &physics, &opts)?
    } else {
        simulate_measurements_3d(&grid, &phantom.values, &layout, &physics, &opts)?
    };
    Ok((phantom, ds))
}

/// Solver settings with `τ` resolved: `tau_rel · scale` when a relative weight is given.
pub fn resolve_solver(config: &ExperimentConfig, scene: &Scene, dataset: &ScatteringDataset) -> Result<SolverConfig> {
    let mut solver = config.solver_config();
    if let Some(rel) = config.tau_rel {
        solver.tau = rel * scene.regularization_scale(dataset)?;
    }
    Ok(solver)
}

/// Runs `config.method` on `dataset`.
pub fn run_reconstruction(config: &ExperimentConfig, dataset: &ScatteringDataset) -> Result<Reconstruction> {
    config.validate()?;
    let grid = config.grid.build()?;
    let scene = Scene::for_dataset(&grid, dataset)?;
    let solver = resolve_solver(config, &scene, dataset)?;
    scene.reconstruct(dataset, &solver, config.method)
}

/// One coordinate of a finite-difference gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub index: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub entries: Vec<GradCheckEntry>,
    pub max_relative_error: f64,
}

/// 16×16 Shepp-Logan at contrast 0.5 with three transmitters on a circle.
pub fn gradcheck_config_2d() -> ExperimentConfig {
    let text = r#"{
        "grid": {"dim": 2, "side": 16, "pitch": 0.00625},
        "layout": {"preset": "circular", "transmitters": 3, "receivers": 24, "radius": 0.3},
        "phantom": {"kind": "shepp-logan", "contrast": 0.5},
        "method": "cisor"
    }"#;
    crate::config::parse_config(text).expect("built-in config is valid")
}

/// 6³ two-sphere phantom at contrast 0.5 with four transmitters on a sphere.
pub fn gradcheck_config_3d() -> ExperimentConfig {
    let text = r#"{
        "grid": {"dim": 3, "side": 6, "pitch": 0.0166666666666666667},
        "layout": {"preset": "sphere-circle", "radius": 0.5, "polar_deg": [60, 120],
                   "azimuth_deg": [0, 180], "receivers": 12, "exclusion_deg": 30},
        "phantom": {"kind": "two-spheres", "contrast": 0.5},
        "method": "cisor"
    }"#;
    crate::config::parse_config(text).expect("built-in config is valid")
}

/// Compares the adjoint-state gradient with central differences at `coords` random samples.
///
/// Data come from the configured phantom; the gradient is taken at a random image in
/// `[0, contrast]`. The relative error of each entry is `|g - g_FD| / max(|g|, |g_FD|)`.
pub fn gradcheck(config: &ExperimentConfig, coords: usize, step: f64) -> Result<GradCheck> {
    if coords == 0 || !(step > 0.0) {
        return Err(Error::InvalidArgument("need at least one coordinate and a positive step".into()));
    }
    let (phantom, ds) = simulate(config)?;
    let grid = config.grid.build()?;
    let scene = Scene::for_dataset(&grid, &ds)?;
    let opts = KrylovOptions::default().with_tol(1e-13);
    let c = phantom.contrast();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x6772_6164);
    let f: Vec<f64> = (0..scene.len()).map(|_| rng.random_range(0.0..c)).collect();
    let g = scene.gradient(&f, &ds, &opts)?.gradient;
    let mut picked = Vec::with_capacity(coords);
    while picked.len() < coords.min(scene.len()) {
        let i = rng.random_range(0..scene.len());
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    let h = step * c;
    let mut entries = Vec::with_capacity(picked.len());
    for i in picked {
        let mut fp = f.clone();
        let mut fm = f.clone();
        fp[i] += h;
        fm[i] -= h;
        let fd = (scene.data_fidelity(&fp, &ds, &opts)? - scene.data_fidelity(&fm, &ds, &opts)?) / (2.0 * h);
        let denom = g[i].abs().max(fd.abs()).max(f64::MIN_POSITIVE);
        entries.push(GradCheckEntry {
            index: i,
            adjoint: g[i],
            finite_difference: fd,
            relative_error: (g[i] - fd).abs() / denom,
        });
    }
    let max_relative_error = entries.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    Ok(GradCheck {
        entries,
        max_relative_error,
    })
}

/// Reconstruction SNR for every (contrast, method) pair, keeping the best `τ` candidate.
///
/// Rows come out contrast-major in the configured method order. `on_row` is called as soon
/// as each row is final.
pub fn sweep(config: &ExperimentConfig, mut on_row: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let grid = config.grid.build()?;
    let mut rows = Vec::new();
    for &contrast in &config.sweep.contrasts {
        let mut cfg = config.clone();
        cfg.phantom = config.phantom.with_contrast(contrast);
        let (phantom, ds) = simulate(&cfg)?;
        let scene = Scene::for_dataset(&grid, &ds)?;
        let scale = scene.regularization_scale(&ds)?;
        let mut solver = cfg.solver_config();
        if config.sweep.bound_to_contrast {
            solver.bounds = BoxConstraint::new(0.0, contrast)?;
        }
        for &method in &config.sweep.methods {
            let mut best: Option<SweepRow> = None;
            for &rel in &config.sweep.tau_rel {
                let run = SolverConfig {
                    tau: rel * scale,
                    ..solver
                };
                let rec = scene.reconstruct(&ds, &run, method)?;
                check_len(phantom.values.len(), rec.image.len())?;
                let snr = snr_db(rec.image.values(), &phantom.values)?;
                if best.as_ref().is_none_or(|b| snr > b.snr_db) {
                    best = Some(SweepRow {
                        contrast,
                        method,
                        tau_rel: rel,
                        snr_db: snr,
                    });
                }
            }
            let row = best.expect("at least one tau candidate");
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}
