//! Total-field solves, the scattered-wave map `Z(f) = H(u ⊙ f)` and measurement simulation.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{IncidentMode, Layout, PhysicsConfig, Grid};
use crate::krylov::{self, KrylovOptions};
use crate::operators::{BundleOptions, OperatorBundle};

/// Solution of `A(f) u = u_in` for one transmitter.
#[derive(Clone, Debug)]
pub struct TotalFieldSolution {
    pub field: Vec<Complex64>,
    pub iterations: usize,
    /// Final relative residual `‖Au - u_in‖ / ‖u_in‖`.
    pub residual: f64,
}

/// Measurements of every transmitter at its active receivers.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringDataset {
    pub layout: Layout,
    pub physics: PhysicsConfig,
    pub incident: IncidentMode,
    /// `measurements[p]` has one entry per receiver active for transmitter `p`.
    pub measurements: Vec<Vec<Complex64>>,
    /// Noise that was added to the clean measurements, when known.
    pub noise: Option<Vec<Vec<Complex64>>>,
}

impl ScatteringDataset {
    pub fn validate(&self) -> Result<()> {
        check_len(self.layout.num_transmitters(), self.measurements.len())?;
        for (p, y) in self.measurements.iter().enumerate() {
            check_len(self.layout.active_receivers(p).len(), y.len())?;
            if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite measurement for transmitter {p}"
                )));
            }
        }
        if let Some(noise) = &self.noise {
            check_len(self.measurements.len(), noise.len())?;
            for (y, e) in self.measurements.iter().zip(noise) {
                check_len(y.len(), e.len())?;
            }
        }
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        self.measurements
            .iter()
            .flatten()
            .map(|v| v.norm_sqr())
            .sum()
    }

    /// Copy with every measurement multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in out.measurements.iter_mut().flatten() {
            *v *= c;
        }
        out
    }
}

/// Solves `A(f) u = u_in` with the configured Krylov method, optionally warm-started.
pub fn solve_total_field(
    bundle: &OperatorBundle,
    f: &[f64],
    incident: &[Complex64],
    opts: &KrylovOptions,
    warm: Option<&[Complex64]>,
) -> Result<TotalFieldSolution> {
    check_len(bundle.len(), f.len())?;
    check_len(bundle.len(), incident.len())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
    }
    let out = krylov::solve(&bundle.system(f), incident, warm, opts)?;
    Ok(TotalFieldSolution {
        field: out.x,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// `Z_p(f) = H_p (u ⊙ f)` for transmitter `p` and its total field `u`.
pub fn scattered_field(
    bundle: &OperatorBundle,
    p: usize,
    f: &[f64],
    u: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_len(bundle.len(), f.len())?;
    check_len(bundle.len(), u.len())?;
    let fu: Vec<Complex64> = u.iter().zip(f).map(|(a, b)| a * b).collect();
    bundle.apply_h(p, &fu)
}

/// Clean measurements `Z_p(f)` for all transmitters.
pub fn predict(bundle: &OperatorBundle, f: &[f64], opts: &KrylovOptions) -> Result<Vec<Vec<Complex64>>> {
    (0..bundle.num_transmitters())
        .into_par_iter()
        .map(|p| {
            let sol = solve_total_field(bundle, f, bundle.incident(p), opts, None)
                .map_err(|e| Error::Transmitter {
                    transmitter: p,
                    source: Box::new(e),
                })?;
            scattered_field(bundle, p, f, &sol.field)
        })
        .collect()
}

/// `D(f) = ½ Σ_p ‖y_p - Z_p(f)‖²`.
pub fn data_fidelity(
    bundle: &OperatorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    opts: &KrylovOptions,
) -> Result<f64> {
    check_len(bundle.num_transmitters(), dataset.measurements.len())?;
    let z = predict(bundle, f, opts)?;
    Ok(residual_energy(&z, &dataset.measurements))
}

pub(crate) fn residual_energy(z: &[Vec<Complex64>], y: &[Vec<Complex64>]) -> f64 {
    0.5 * z
        .iter()
        .zip(y)
        .map(|(zp, yp)| zp.iter().zip(yp).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
        .sum::<f64>()
}

/// How synthetic measurements are generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Measurement SNR in dB; `None` is noiseless.
    pub noise_snr_db: Option<f64>,
    /// Forward-solve on a grid refined by this factor (1 or 2).
    pub anti_crime_factor: usize,
    pub seed: u64,
    pub krylov: KrylovOptions,
    pub incident: IncidentMode,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            noise_snr_db: None,
            anti_crime_factor: 2,
            seed: 0,
            krylov: KrylovOptions::default(),
            incident: IncidentMode::PointSource,
        }
    }
}

/// Nearest-neighbour upsampling of grid values by an integer factor per axis.
pub fn upsample(grid: &Grid, values: &[f64], factor: usize) -> Result<(Grid, Vec<f64>)> {
    check_len(grid.len(), values.len())?;
    let fine = grid.refined(factor)?;
    let out = (0..fine.len())
        .map(|n| {
            let [l, s, t] = fine.unravel(n);
            values[grid.ravel([l / factor, s / factor, t / factor])]
        })
        .collect();
    Ok((fine, out))
}

/// Adds circular complex Gaussian noise at the requested SNR over the whole dataset.
pub(crate) fn add_noise(
    clean: Vec<Vec<Complex64>>,
    snr_db: Option<f64>,
    seed: u64,
) -> (Vec<Vec<Complex64>>, Option<Vec<Vec<Complex64>>>) {
    let snr_db = match snr_db {
        Some(s) if s.is_finite() => s,
        _ => {
            let zeros = clean
                .iter()
                .map(|y| vec![Complex64::new(0.0, 0.0); y.len()])
                .collect();
            return (clean, Some(zeros));
        }
    };
    let count: usize = clean.iter().map(|y| y.len()).sum();
    let energy: f64 = clean.iter().flatten().map(|v| v.norm_sqr()).sum();
    let sigma = if count == 0 {
        0.0
    } else {
        (energy / (count as f64 * 10f64.powf(snr_db / 10.0))).sqrt()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut noisy = clean;
    let mut noise = Vec::with_capacity(noisy.len());
    for y in noisy.iter_mut() {
        let mut e = Vec::with_capacity(y.len());
        for v in y.iter_mut() {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let n = Complex64::new(a, b) * (sigma / std::f64::consts::SQRT_2);
            *v += n;
            e.push(n);
        }
        noise.push(e);
    }
    (noisy, Some(noise))
}

/// Forward-solves for `f_true` and records (optionally noisy) measurements.
pub fn simulate_measurements(
    grid: &Grid,
    f_true: &[f64],
    layout: &Layout,
    physics: &PhysicsConfig,
    opts: &SimulationOptions,
) -> Result<ScatteringDataset> {
    check_len(grid.len(), f_true.len())?;
    if !(1..=2).contains(&opts.anti_crime_factor) {
        return Err(Error::InvalidArgument(format!(
            "anti-crime factor must be 1 or 2, got {}",
            opts.anti_crime_factor
        )));
    }
    let (sim_grid, sim_f) = upsample(grid, f_true, opts.anti_crime_factor)?;
    let bundle = OperatorBundle::with_options(
        &sim_grid,
        physics,
        layout,
        BundleOptions {
            incident: Some(opts.incident),
            ..Default::default()
        },
    )?;
    let clean = predict(&bundle, &sim_f, &opts.krylov)?;
    let (measurements, noise) = add_noise(clean, opts.noise_snr_db, opts.seed);
    let ds = ScatteringDataset {
        layout: layout.clone(),
        physics: *physics,
        incident: opts.incident,
        measurements,
        noise,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, circular_layout};

    fn setup() -> (Grid, Layout, PhysicsConfig) {
        let phys = PhysicsConfig::new(0.1, 1.0).unwrap();
        let grid = build_grid(2, 8, 0.1 / 8.0).unwrap();
        (grid, circular_layout(2, 10, 0.6, 30.0), phys)
    }

    #[test]
    fn zero_contrast_returns_incident() {
        let (grid, layout, phys) = setup();
        let b = OperatorBundle::new(&grid, &phys, &layout).unwrap();
        let f = vec![0.0; grid.len()];
        let sol = solve_total_field(&b, &f, b.incident(0), &KrylovOptions::default(), None).unwrap();
        assert_eq!(sol.field, b.incident(0).to_vec());
        assert!(sol.iterations <= 1);
        let z = scattered_field(&b, 0, &f, &sol.field).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn fidelity_at_zero_is_half_energy() {
        let (grid, layout, phys) = setup();
        let b = OperatorBundle::new(&grid, &phys, &layout).unwrap();
        let f_true: Vec<f64> = (0..grid.len()).map(|i| 0.3 * ((i % 5) as f64) / 4.0).collect();
        let ds = simulate_measurements(
            &grid,
            &f_true,
            &layout,
            &phys,
            &SimulationOptions {
                anti_crime_factor: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let zero = vec![0.0; grid.len()];
        let opts = KrylovOptions::default().with_tol(1e-10);
        let d0 = data_fidelity(&b, &zero, &ds, &opts).unwrap();
        assert!((d0 - 0.5 * ds.energy()).abs() <= 1e-15 * d0);
        let d2 = data_fidelity(&b, &zero, &ds.scaled(2.0), &opts).unwrap();
        assert!((d2 - 4.0 * d0).abs() <= 1e-12 * d2);
        // consistent data: fidelity at the truth vanishes up to solver tolerance
        let dt = data_fidelity(&b, &f_true, &ds, &opts).unwrap();
        assert!(dt <= 1e-12 * d0, "{dt:e} vs {d0:e}");
        assert!(dt >= 0.0);
    }

    #[test]
    fn zero_object_gives_zero_data_and_noise() {
        let (grid, layout, phys) = setup();
        let ds = simulate_measurements(
            &grid,
            &vec![0.0; grid.len()],
            &layout,
            &phys,
            &SimulationOptions {
                noise_snr_db: Some(20.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(ds.measurements.iter().flatten().all(|v| v.norm() == 0.0));
        assert!(ds.noise.unwrap().iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn noiseless_records_zero_noise() {
        let (grid, layout, phys) = setup();
        let f: Vec<f64> = vec![0.2; grid.len()];
        let ds = simulate_measurements(&grid, &f, &layout, &phys, &SimulationOptions::default()).unwrap();
        assert!(ds.noise.as_ref().unwrap().iter().flatten().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn noise_level_matches_snr() {
        let clean = vec![vec![Complex64::new(1.0, -1.0); 4000]];
        let (noisy, noise) = add_noise(clean.clone(), Some(30.0), 5);
        let e: f64 = noise.unwrap().iter().flatten().map(|v| v.norm_sqr()).sum();
        let s: f64 = clean.iter().flatten().map(|v| v.norm_sqr()).sum();
        let snr = 10.0 * (s / e).log10();
        assert!((snr - 30.0).abs() < 0.3, "{snr}");
        assert_ne!(noisy, clean);
    }

    #[test]
    fn deterministic_fidelity() {
        let (grid, layout, phys) = setup();
        let b = OperatorBundle::new(&grid, &phys, &layout).unwrap();
        let f: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.1).sin().abs()).collect();
        let ds = simulate_measurements(&grid, &vec![0.1; grid.len()], &layout, &phys, &SimulationOptions::default()).unwrap();
        let opts = KrylovOptions::default();
        let a = data_fidelity(&b, &f, &ds, &opts).unwrap();
        let c = data_fidelity(&b, &f, &ds, &opts).unwrap();
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn upsample_replicates_pixels() {
        let grid = build_grid(2, 2, 1.0).unwrap();
        let (fine, v) = upsample(&grid, &[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(fine.side(), 4);
        assert_eq!(v[fine.ravel([0, 0, 0])], 1.0);
        assert_eq!(v[fine.ravel([3, 0, 0])], 2.0);
        assert_eq!(v[fine.ravel([1, 3, 0])], 3.0);
        assert_eq!(v[fine.ravel([3, 3, 0])], 4.0);
    }

    #[test]
    fn rejects_bad_anti_crime_factor() {
        let (grid, layout, phys) = setup();
        let opts = SimulationOptions {
            anti_crime_factor: 3,
            ..Default::default()
        };
        assert!(simulate_measurements(&grid, &vec![0.0; grid.len()], &layout, &phys, &opts).is_err());
    }
}
