//! Adjoint-state gradient of the data term and an empirical Lipschitz estimator.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::forward::{solve_total_field, ScatteringDataset};
use crate::krylov::{self, norm2, Adjoint, KrylovOptions};
use crate::operators::{BoxConstraint, OperatorBundle};

/// Solver statistics for one transmitter.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransmitterTelemetry {
    pub forward_iterations: usize,
    pub forward_residual: f64,
    pub adjoint_iterations: usize,
    pub adjoint_residual: f64,
}

#[derive(Clone, Debug)]
pub struct GradientResult {
    /// `∇D(f)`, one real entry per grid sample.
    pub gradient: Vec<f64>,
    /// `D(f)` at the same point (free by-product of the forward solves).
    pub value: f64,
    /// `w_p = Z_p(f) - y_p`.
    pub residuals: Vec<Vec<Complex64>>,
    pub telemetry: Vec<TransmitterTelemetry>,
}

/// Previous forward/adjoint solutions used as Krylov initial guesses.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub(crate) forward: Vec<Option<Vec<Complex64>>>,
    pub(crate) adjoint: Vec<Option<Vec<Complex64>>>,
}

impl WarmStart {
    pub fn new(transmitters: usize) -> Self {
        Self {
            forward: vec![None; transmitters],
            adjoint: vec![None; transmitters],
        }
    }

    /// Latest total field for transmitter `p`, if any.
    pub fn field(&self, p: usize) -> Option<&[Complex64]> {
        self.forward.get(p).and_then(|v| v.as_deref())
    }

    pub(crate) fn ensure(&mut self, transmitters: usize) {
        if self.forward.len() != transmitters {
            *self = Self::new(transmitters);
        }
    }
}

struct Contribution {
    gradient: Vec<f64>,
    value: f64,
    residual: Vec<Complex64>,
    telemetry: TransmitterTelemetry,
}

pub(crate) fn wrap(p: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Transmitter {
        transmitter: p,
        source: Box::new(e),
    }
}

fn contribution(
    bundle: &OperatorBundle,
    p: usize,
    f: &[f64],
    y: &[Complex64],
    opts: &KrylovOptions,
    warm_u: &mut Option<Vec<Complex64>>,
    warm_v: &mut Option<Vec<Complex64>>,
) -> Result<Contribution> {
    let fwd = solve_total_field(bundle, f, bundle.incident(p), opts, warm_u.as_deref()).map_err(wrap(p))?;
    let u = fwd.field;
    let fu: Vec<Complex64> = u.iter().zip(f).map(|(a, b)| a * b).collect();
    let z = bundle.apply_h(p, &fu)?;
    check_len(z.len(), y.len())?;
    let w: Vec<Complex64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
    let value = 0.5 * w.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let hw = bundle.apply_h_adjoint(p, &w)?;
    let rhs: Vec<Complex64> = hw.iter().zip(f).map(|(a, b)| a * b).collect();
    let adj = krylov::solve(&Adjoint(&bundle.system(f)), &rhs, warm_v.as_deref(), opts).map_err(wrap(p))?;
    let gv = bundle.apply_g_adjoint(&adj.x)?;
    let gradient: Vec<f64> = u
        .iter()
        .zip(hw.iter().zip(&gv))
        .map(|(un, (a, b))| (un.conj() * (a + b)).re)
        .collect();
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(wrap(p)(Error::InvalidArgument("non-finite gradient".into())));
    }
    let telemetry = TransmitterTelemetry {
        forward_iterations: fwd.iterations,
        forward_residual: fwd.residual,
        adjoint_iterations: adj.iterations,
        adjoint_residual: adj.residual,
    };
    *warm_u = Some(u);
    *warm_v = Some(adj.x);
    Ok(Contribution {
        gradient,
        value,
        residual: w,
        telemetry,
    })
}

/// `∇D(f) = Re Σ_p diag(u_p)ᴴ (Hᴴw_p + Gᴴv_p)` with `A u_p = u_in,p` and `Aᴴ v_p = diag(f) Hᴴ w_p`.
pub fn gradient_data_fidelity(
    bundle: &OperatorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    opts: &KrylovOptions,
) -> Result<GradientResult> {
    gradient_warm(bundle, f, dataset, opts, &mut WarmStart::default())
}

/// As [`gradient_data_fidelity`], seeding each Krylov solve from `warm` and updating it.
pub fn gradient_warm(
    bundle: &OperatorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    opts: &KrylovOptions,
    warm: &mut WarmStart,
) -> Result<GradientResult> {
    let np = bundle.num_transmitters();
    check_len(bundle.len(), f.len())?;
    check_len(np, dataset.measurements.len())?;
    warm.ensure(np);
    let parts: Vec<Result<Contribution>> = warm
        .forward
        .par_iter_mut()
        .zip(warm.adjoint.par_iter_mut())
        .enumerate()
        .map(|(p, (wu, wv))| contribution(bundle, p, f, &dataset.measurements[p], opts, wu, wv))
        .collect();
    // fixed-order reduction keeps results independent of scheduling
    let mut gradient = vec![0.0; bundle.len()];
    let mut value = 0.0;
    let mut residuals = Vec::with_capacity(np);
    let mut telemetry = Vec::with_capacity(np);
    for part in parts {
        let c = part?;
        for (g, v) in gradient.iter_mut().zip(&c.gradient) {
            *g += v;
        }
        value += c.value;
        residuals.push(c.residual);
        telemetry.push(c.telemetry);
    }
    Ok(GradientResult {
        gradient,
        value,
        residuals,
        telemetry,
    })
}

/// Components of the Lipschitz estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    /// `safety × max(sampled, born_floor)`.
    pub value: f64,
    /// Largest `‖∇D(s₁) - ∇D(s₂)‖ / ‖s₁ - s₂‖` over the sampled pairs.
    pub sampled: f64,
    /// `‖Σ_p B_pᴴ B_p‖` with `B_p = H diag(u_in,p)`.
    pub born_floor: f64,
}

pub const LIPSCHITZ_SAFETY: f64 = 2.0;

/// Largest eigenvalue of `Σ_p B_pᴴB_p`, `B_p = H_p diag(u_in,p)`, by power iteration.
pub fn born_operator_norm(bundle: &OperatorBundle, seed: u64) -> Result<f64> {
    let fields: Vec<&[Complex64]> = (0..bundle.num_transmitters()).map(|p| bundle.incident(p)).collect();
    linearized_operator_norm(bundle, &fields, seed)
}

/// Largest eigenvalue of `Σ_p B_pᴴB_p` with `B_p = H_p diag(fields[p])`.
pub fn linearized_operator_norm(bundle: &OperatorBundle, fields: &[&[Complex64]], seed: u64) -> Result<f64> {
    let n = bundle.len();
    check_len(bundle.num_transmitters(), fields.len())?;
    for u in fields {
        check_len(n, u.len())?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let nx = norm2(&x);
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let parts: Vec<Result<Vec<Complex64>>> = fields
            .par_iter()
            .enumerate()
            .map(|(p, uin)| {
                let bx: Vec<Complex64> = x.iter().zip(uin.iter()).map(|(a, b)| a * b).collect();
                let hb = bundle.apply_h(p, &bx)?;
                let back = bundle.apply_h_adjoint(p, &hb)?;
                Ok(back.iter().zip(uin.iter()).map(|(a, b)| a * b.conj()).collect())
            })
            .collect();
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for part in parts {
            for (a, b) in y.iter_mut().zip(part?) {
                *a += b;
            }
        }
        let next = norm2(&y);
        let done = (next - lambda).abs() <= 1e-9 * next;
        lambda = next;
        x = y;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// Empirical Lipschitz constant of `∇D` over the box.
///
/// Each sample draws `s₁` uniformly in the box and a nearby `s₂` (a random perturbation of
/// 1% of the box width, clipped back into it), so the difference quotient probes the local
/// curvature. Samples whose solves fail are skipped; the Born floor always applies.
pub fn lipschitz_estimate(
    bundle: &OperatorBundle,
    dataset: &ScatteringDataset,
    bounds: BoxConstraint,
    n_samples: usize,
    seed: u64,
    opts: &KrylovOptions,
) -> Result<LipschitzEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 Lipschitz samples".into()));
    }
    let born_floor = born_operator_norm(bundle, seed)?;
    let sampled = sampled_quotient(bundle.len(), bounds, n_samples, seed, |f| {
        gradient_data_fidelity(bundle, f, dataset, opts).map(|g| g.gradient)
    })?;
    Ok(LipschitzEstimate {
        value: LIPSCHITZ_SAFETY * sampled.max(born_floor),
        sampled,
        born_floor,
    })
}

/// Largest `‖∇D(s₁) - ∇D(s₂)‖ / ‖s₁ - s₂‖` over random nearby pairs in the box.
pub(crate) fn sampled_quotient(
    n: usize,
    bounds: BoxConstraint,
    n_samples: usize,
    seed: u64,
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let width = bounds.upper - bounds.lower;
    let mut sampled: f64 = 0.0;
    if !(width > 0.0) {
        return Ok(0.0);
    }
    for _ in 0..n_samples {
        let s1: Vec<f64> = (0..n)
            .map(|_| rng.random_range(bounds.lower..=bounds.upper))
            .collect();
        let s2: Vec<f64> = s1
            .iter()
            .map(|v| bounds.clip(v + 0.01 * width * rng.random_range(-1.0..1.0)))
            .collect();
        let dist = s1.iter().zip(&s2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let (g1, g2) = match (grad(&s1), grad(&s2)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) if !e.is_solver_failure() => return Err(e),
            _ => continue,
        };
        let dg = g1.iter().zip(&g2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        sampled = sampled.max(dg / dist);
    }
    Ok(sampled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{data_fidelity, simulate_measurements, SimulationOptions};
    use crate::geometry::{build_grid, circular_layout, PhysicsConfig};

    fn scene() -> (OperatorBundle, ScatteringDataset, Vec<f64>) {
        let phys = PhysicsConfig::new(0.1, 1.0).unwrap();
        let grid = build_grid(2, 8, 0.1 / 6.0).unwrap();
        let layout = circular_layout(2, 12, 0.6, 40.0);
        let bundle = OperatorBundle::new(&grid, &phys, &layout).unwrap();
        let truth: Vec<f64> = (0..grid.len())
            .map(|i| 0.5 * (((i * 7) % 11) as f64 / 10.0))
            .collect();
        let ds = simulate_measurements(
            &grid,
            &truth,
            &layout,
            &phys,
            &SimulationOptions {
                anti_crime_factor: 1,
                krylov: KrylovOptions::default().with_tol(1e-12),
                ..Default::default()
            },
        )
        .unwrap();
        (bundle, ds, truth)
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (bundle, ds, truth) = scene();
        let opts = KrylovOptions::default().with_tol(1e-12);
        let g = gradient_data_fidelity(&bundle, &truth, &ds, &opts).unwrap();
        let scale = gradient_data_fidelity(&bundle, &vec![0.0; truth.len()], &ds, &opts)
            .unwrap()
            .gradient
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(g.gradient.iter().all(|v| v.abs() <= 1e-8 * scale));
    }

    #[test]
    fn gradient_at_zero_is_born_term() {
        let (bundle, ds, truth) = scene();
        let opts = KrylovOptions::default().with_tol(1e-12);
        let g = gradient_data_fidelity(&bundle, &vec![0.0; truth.len()], &ds, &opts).unwrap();
        let mut expect = vec![0.0; truth.len()];
        for p in 0..bundle.num_transmitters() {
            let hy = bundle.apply_h_adjoint(p, &ds.measurements[p]).unwrap();
            for ((e, h), u) in expect.iter_mut().zip(&hy).zip(bundle.incident(p)) {
                *e -= (u.conj() * h).re;
            }
        }
        for (a, b) in g.gradient.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        assert!(g.telemetry.iter().all(|t| t.adjoint_iterations == 0));
    }

    #[test]
    fn matches_central_differences() {
        let (bundle, ds, truth) = scene();
        let opts = KrylovOptions::default().with_tol(1e-13);
        let f: Vec<f64> = truth.iter().map(|v| 0.8 * v + 0.05).collect();
        let g = gradient_data_fidelity(&bundle, &f, &ds, &opts).unwrap();
        assert!((g.value - data_fidelity(&bundle, &f, &ds, &opts).unwrap()).abs() <= 1e-12 * g.value);
        for n in [0, 9, 27, 40, 63] {
            let h = 1e-5 * f[n].abs().max(1.0);
            let mut fp = f.clone();
            fp[n] += h;
            let mut fm = f.clone();
            fm[n] -= h;
            let fd = (data_fidelity(&bundle, &fp, &ds, &opts).unwrap()
                - data_fidelity(&bundle, &fm, &ds, &opts).unwrap())
                / (2.0 * h);
            assert!((fd - g.gradient[n]).abs() <= 1e-6 * g.gradient[n].abs(), "n={n}: {fd} vs {}", g.gradient[n]);
        }
    }

    #[test]
    fn warm_start_gives_same_gradient() {
        let (bundle, ds, truth) = scene();
        let opts = KrylovOptions::default().with_tol(1e-12);
        let mut warm = WarmStart::default();
        let f1: Vec<f64> = truth.iter().map(|v| 0.5 * v).collect();
        gradient_warm(&bundle, &f1, &ds, &opts, &mut warm).unwrap();
        assert!(warm.field(0).is_some());
        let f2: Vec<f64> = truth.iter().map(|v| 0.6 * v).collect();
        let a = gradient_warm(&bundle, &f2, &ds, &opts, &mut warm).unwrap();
        let b = gradient_data_fidelity(&bundle, &f2, &ds, &opts).unwrap();
        let scale = b.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.gradient.iter().zip(&b.gradient) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn lipschitz_is_positive_and_deterministic() {
        let (bundle, ds, _) = scene();
        let bounds = BoxConstraint::new(0.0, 1.0).unwrap();
        let opts = KrylovOptions::default();
        let a = lipschitz_estimate(&bundle, &ds, bounds, 2, 7, &opts).unwrap();
        let b = lipschitz_estimate(&bundle, &ds, bounds, 2, 7, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.value > 0.0 && a.born_floor > 0.0);
        assert_eq!(a.value, LIPSCHITZ_SAFETY * a.sampled.max(a.born_floor));
        let c = lipschitz_estimate(&bundle, &ds.scaled(3.0), bounds, 2, 7, &opts).unwrap();
        assert_eq!(c.born_floor, a.born_floor);
        assert!(c.value > 0.0);
        assert!(lipschitz_estimate(&bundle, &ds, bounds, 1, 7, &opts).is_err());
    }
}
