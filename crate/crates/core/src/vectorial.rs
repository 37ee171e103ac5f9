//! Vectorial 3D scattering: `Ẽ = Ẽ_in + (k²I + ∇∇·)(I₃ ⊗ G̃)(f ⊙ Ẽ)` with finite-difference
//! grad-div, z-polarised receivers and the matching adjoint-state gradient.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::convolution::Convolution;
use crate::error::{check_len, Error, Result};
use crate::forward::{add_noise, upsample, ScatteringDataset, SimulationOptions, TotalFieldSolution};
use crate::geometry::{incident_field, sub, Grid, IncidentMode, Layout, PhysicsConfig};
use crate::gradient::{sampled_quotient, wrap, GradientResult, LipschitzEstimate, TransmitterTelemetry, WarmStart, LIPSCHITZ_SAFETY};
use crate::krylov::{self, Adjoint, KrylovOptions, LinearMap};
use crate::operators::BoxConstraint;
use crate::optim::{
    relaxed_fista, FistaParams, Method, ProxState, Reconstruction, Slot, SmoothTerm, SolverConfig,
};
use crate::special::{dyadic_green, scalar_green, self_term};
use crate::tv::Shape;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Three stacked `N`-blocks `(E⁽¹⁾, E⁽²⁾, E⁽³⁾)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    values: Vec<Complex64>,
}

impl VectorField {
    pub fn new(values: Vec<Complex64>, n: usize) -> Result<Self> {
        check_len(3 * n, values.len())?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("vector field has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![ZERO; 3 * n] }
    }

    /// Samples per component.
    pub fn points(&self) -> usize {
        self.values.len() / 3
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        let n = self.points();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

/// Finite-difference `∇∇·` on a 3D grid with zero padding outside the domain.
///
/// `(Db)⁽ⁱ⁾ = Σ_j ∂ᵢ∂ⱼ b⁽ʲ⁾` with `(1, -2, 1)/δ²` on the diagonal and the
/// `(+1, -1, -1, +1)/4δ²` corner stencil for mixed derivatives. The matrix is real symmetric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradDivOperator {
    grid: Grid,
}

impl GradDivOperator {
    pub fn new(grid: &Grid) -> Result<Self> {
        if grid.dim() != 3 {
            return Err(Error::InvalidArgument(format!(
                "grad-div needs a 3D grid, got dimension {}",
                grid.dim()
            )));
        }
        Ok(Self { grid: *grid })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.grid.len();
        check_len(3 * n, b.len())?;
        let j = self.grid.side() as isize;
        let d2 = self.grid.pitch().powi(2);
        let at = |c: usize, idx: [isize; 3]| -> Complex64 {
            if idx.iter().all(|&x| (0..j).contains(&x)) {
                b[c * n + (idx[0] + j * (idx[1] + j * idx[2])) as usize]
            } else {
                ZERO
            }
        };
        let mut out = vec![ZERO; 3 * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, block)| {
            for (m, o) in block.iter_mut().enumerate() {
                let u = self.grid.unravel(m);
                let p = [u[0] as isize, u[1] as isize, u[2] as isize];
                let shift = |d: &[(usize, isize)]| {
                    let mut q = p;
                    for &(axis, s) in d {
                        q[axis] += s;
                    }
                    q
                };
                let mut acc = at(i, shift(&[(i, 1)])) - 2.0 * at(i, p) + at(i, shift(&[(i, -1)]));
                acc /= d2;
                for c in (0..3).filter(|&c| c != i) {
                    let mixed = at(c, shift(&[(i, 1), (c, 1)])) - at(c, shift(&[(i, 1), (c, -1)]))
                        - at(c, shift(&[(i, -1), (c, 1)]))
                        + at(c, shift(&[(i, -1), (c, -1)]));
                    acc += mixed / (4.0 * d2);
                }
                *o = acc;
            }
        });
        Ok(out)
    }

    /// `Dᴴ b`; `D` is real symmetric so this equals `D b`.
    pub fn apply_adjoint(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(b)
    }
}

/// Operators, incident fields and receiver rows of one vectorial scene.
#[derive(Clone, Debug)]
pub struct VectorBundle {
    grid: Grid,
    physics: PhysicsConfig,
    layout: Layout,
    k2: f64,
    green: Convolution,
    graddiv: GradDivOperator,
    /// `M × 3N`, row `m` holds `δ³ [G̃(r_m - r_n)]_{3,:}` for every `n`.
    h: Vec<Complex64>,
    incident: Vec<Vec<Complex64>>,
    active: Vec<Vec<usize>>,
}

impl VectorBundle {
    pub fn new(grid: &Grid, physics: &PhysicsConfig, layout: &Layout, incident: IncidentMode) -> Result<Self> {
        let graddiv = GradDivOperator::new(grid)?;
        layout.validate(grid)?;
        let vol = grid.cell_measure();
        let pitch = grid.pitch();
        let diag = vol * self_term(grid, physics);
        let green = Convolution::new(grid, |o| {
            if o == [0, 0, 0] {
                diag
            } else {
                let r = [o[0] as f64 * pitch, o[1] as f64 * pitch, o[2] as f64 * pitch];
                vol * scalar_green(&r, physics, 3).expect("nonzero offset")
            }
        });
        let n = grid.len();
        let points = grid.points();
        let mut h = vec![ZERO; layout.num_receivers() * 3 * n];
        h.par_chunks_mut(3 * n)
            .zip(layout.receivers.par_iter())
            .try_for_each(|(row, rm)| -> Result<()> {
                for (i, r) in points.iter().enumerate() {
                    let g = dyadic_green(&sub(rm, r), physics)?;
                    for c in 0..3 {
                        row[c * n + i] = vol * g[2][c];
                    }
                }
                Ok(())
            })?;
        let incident = layout
            .transmitters
            .iter()
            .map(|s| incident_field(grid, s, physics, incident).map(|u| u.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: *grid,
            physics: *physics,
            layout: layout.clone(),
            k2: physics.dyadic_k().powi(2),
            green,
            graddiv,
            h,
            incident,
            active: (0..layout.num_transmitters())
                .map(|p| layout.active_receivers(p))
                .collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn physics(&self) -> &PhysicsConfig {
        &self.physics
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Number of grid samples `N` (the contrast length).
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_transmitters(&self) -> usize {
        self.incident.len()
    }

    pub fn incident(&self, p: usize) -> &[Complex64] {
        &self.incident[p]
    }

    pub fn active_receivers(&self, p: usize) -> &[usize] {
        &self.active[p]
    }

    pub fn graddiv(&self) -> &GradDivOperator {
        &self.graddiv
    }

    fn blockwise(&self, x: &[Complex64], adjoint: bool) -> Result<Vec<Complex64>> {
        let n = self.len();
        check_len(3 * n, x.len())?;
        let mut out = vec![ZERO; 3 * n];
        out.par_chunks_mut(n)
            .zip(x.par_chunks(n))
            .for_each(|(o, b)| self.green.apply_into(b, o, adjoint));
        Ok(out)
    }

    /// `(I₃ ⊗ G̃) x`.
    pub fn apply_green(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.blockwise(x, false)
    }

    pub fn apply_green_adjoint(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.blockwise(x, true)
    }

    /// `(k²I + D) x`.
    pub fn apply_k(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut d = self.graddiv.apply(x)?;
        d.iter_mut().zip(x).for_each(|(a, b)| *a += b * self.k2);
        Ok(d)
    }

    pub fn apply_k_adjoint(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut d = self.graddiv.apply_adjoint(x)?;
        d.iter_mut().zip(x).for_each(|(a, b)| *a += b * self.k2);
        Ok(d)
    }

    fn times_f(&self, f: &[f64], x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.len();
        check_len(n, f.len())?;
        check_len(3 * n, x.len())?;
        Ok(x.iter().enumerate().map(|(i, v)| v * f[i % n]).collect())
    }

    /// `Ã u = u - (k²I + D)(I₃ ⊗ G̃)(f ⊙ u)`.
    pub fn apply_a(&self, f: &[f64], u: &[Complex64]) -> Result<Vec<Complex64>> {
        let kg = self.apply_k(&self.apply_green(&self.times_f(f, u)?)?)?;
        Ok(u.iter().zip(kg).map(|(a, b)| a - b).collect())
    }

    /// `Ãᴴ v = v - f ⊙ (I₃ ⊗ G̃ᴴ)(k²I + D)ᴴ v`.
    pub fn apply_a_adjoint(&self, f: &[f64], v: &[Complex64]) -> Result<Vec<Complex64>> {
        let gk = self.times_f(f, &self.apply_green_adjoint(&self.apply_k_adjoint(v)?)?)?;
        Ok(v.iter().zip(gk).map(|(a, b)| a - b).collect())
    }

    pub fn system<'a>(&'a self, f: &'a [f64]) -> VectorSystem<'a> {
        VectorSystem { bundle: self, f }
    }

    /// `H̃ x` at the receivers active for transmitter `p`.
    pub fn apply_h(&self, p: usize, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_h_rows(&self.active[p], x)
    }

    pub fn apply_h_adjoint(&self, p: usize, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_h_rows_adjoint(&self.active[p], y)
    }

    pub fn apply_h_rows(&self, rows: &[usize], x: &[Complex64]) -> Result<Vec<Complex64>> {
        let w = 3 * self.len();
        check_len(w, x.len())?;
        Ok(rows
            .iter()
            .map(|&m| self.h[m * w..(m + 1) * w].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn apply_h_rows_adjoint(&self, rows: &[usize], y: &[Complex64]) -> Result<Vec<Complex64>> {
        let w = 3 * self.len();
        check_len(rows.len(), y.len())?;
        let mut out = vec![ZERO; w];
        for (&m, &ym) in rows.iter().zip(y) {
            for (o, a) in out.iter_mut().zip(&self.h[m * w..(m + 1) * w]) {
                *o += a.conj() * ym;
            }
        }
        Ok(out)
    }
}

/// `Ã(f)` bound to a contrast.
pub struct VectorSystem<'a> {
    bundle: &'a VectorBundle,
    f: &'a [f64],
}

impl LinearMap for VectorSystem<'_> {
    fn dim(&self) -> usize {
        3 * self.bundle.len()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.bundle.apply_a(self.f, x).expect("length checked by solver")
    }
    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.bundle.apply_a_adjoint(self.f, x).expect("length checked by solver")
    }
}

pub fn solve_total_field_3d(
    bundle: &VectorBundle,
    f: &[f64],
    incident: &[Complex64],
    opts: &KrylovOptions,
    warm: Option<&[Complex64]>,
) -> Result<TotalFieldSolution> {
    check_len(bundle.len(), f.len())?;
    check_len(3 * bundle.len(), incident.len())?;
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

/// Clean measurements `H̃(f ⊙ ũ_p)` for all transmitters.
pub fn predict_3d(bundle: &VectorBundle, f: &[f64], opts: &KrylovOptions) -> Result<Vec<Vec<Complex64>>> {
    (0..bundle.num_transmitters())
        .into_par_iter()
        .map(|p| {
            let sol = solve_total_field_3d(bundle, f, bundle.incident(p), opts, None).map_err(wrap(p))?;
            bundle.apply_h(p, &bundle.times_f(f, &sol.field)?)
        })
        .collect()
}

/// `½ Σ_p ‖y_p - H̃(f ⊙ ũ_p)‖²`.
pub fn data_fidelity_3d(
    bundle: &VectorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    opts: &KrylovOptions,
) -> Result<f64> {
    check_len(bundle.num_transmitters(), dataset.measurements.len())?;
    let z = predict_3d(bundle, f, opts)?;
    Ok(crate::forward::residual_energy(&z, &dataset.measurements))
}

/// Vectorial counterpart of [`crate::forward::simulate_measurements`].
pub fn simulate_measurements_3d(
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
    let bundle = VectorBundle::new(&sim_grid, physics, layout, opts.incident)?;
    let clean = predict_3d(&bundle, &sim_f, &opts.krylov)?;
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

struct Part {
    gradient: Vec<f64>,
    value: f64,
    residual: Vec<Complex64>,
    telemetry: TransmitterTelemetry,
}

/// `Re Σᵢ conj(u⁽ⁱ⁾) ⊙ x⁽ⁱ⁾`.
fn fold_components(u: &[Complex64], x: &[Complex64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|m| (0..3).map(|i| (u[i * n + m].conj() * x[i * n + m]).re).sum())
        .collect()
}

fn part_3d(
    bundle: &VectorBundle,
    p: usize,
    f: &[f64],
    y: &[Complex64],
    opts: &KrylovOptions,
    warm_u: &mut Option<Vec<Complex64>>,
    warm_v: &mut Option<Vec<Complex64>>,
) -> Result<Part> {
    let n = bundle.len();
    let fwd = solve_total_field_3d(bundle, f, bundle.incident(p), opts, warm_u.as_deref()).map_err(wrap(p))?;
    let u = fwd.field;
    let z = bundle.apply_h(p, &bundle.times_f(f, &u)?)?;
    check_len(z.len(), y.len())?;
    let w: Vec<Complex64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
    let value = 0.5 * w.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let hw = bundle.apply_h_adjoint(p, &w)?;
    let rhs = bundle.times_f(f, &hw)?;
    let adj = krylov::solve(&Adjoint(&bundle.system(f)), &rhs, warm_v.as_deref(), opts).map_err(wrap(p))?;
    let kv = bundle.apply_green_adjoint(&bundle.apply_k_adjoint(&adj.x)?)?;
    let total: Vec<Complex64> = hw.iter().zip(&kv).map(|(a, b)| a + b).collect();
    let gradient = fold_components(&u, &total, n);
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
    Ok(Part {
        gradient,
        value,
        residual: w,
        telemetry,
    })
}

fn reduce(n: usize, parts: Vec<Result<Part>>) -> Result<GradientResult> {
    let mut gradient = vec![0.0; n];
    let mut value = 0.0;
    let mut residuals = Vec::with_capacity(parts.len());
    let mut telemetry = Vec::with_capacity(parts.len());
    for part in parts {
        let c = part?;
        gradient.iter_mut().zip(&c.gradient).for_each(|(g, v)| *g += v);
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

/// `∇D = Re Σ_p Σᵢ [diag(ũ_p)ᴴ(H̃ᴴw̃_p + (I₃⊗G̃ᴴ)(k²I + Dᴴ)ṽ_p)]⁽ⁱ⁾`
/// with `Ãũ_p = ũ_in,p` and `Ãᴴṽ_p = (I₃⊗diag f) H̃ᴴw̃_p`.
pub fn gradient_3d(
    bundle: &VectorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    opts: &KrylovOptions,
) -> Result<GradientResult> {
    gradient_3d_warm(bundle, f, dataset, opts, &mut WarmStart::default())
}

pub fn gradient_3d_warm(
    bundle: &VectorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    opts: &KrylovOptions,
    warm: &mut WarmStart,
) -> Result<GradientResult> {
    let np = bundle.num_transmitters();
    check_len(bundle.len(), f.len())?;
    check_len(np, dataset.measurements.len())?;
    warm.ensure(np);
    let parts: Vec<Result<Part>> = warm
        .forward
        .par_iter_mut()
        .zip(warm.adjoint.par_iter_mut())
        .enumerate()
        .map(|(p, (wu, wv))| part_3d(bundle, p, f, &dataset.measurements[p], opts, wu, wv))
        .collect();
    reduce(bundle.len(), parts)
}

/// Gradient of the linear model `½ Σ_p ‖y_p - H̃(f ⊙ û_p)‖²` with frozen fields `û_p`.
pub fn linearized_gradient_3d(
    bundle: &VectorBundle,
    f: &[f64],
    dataset: &ScatteringDataset,
    fields: &[Vec<Complex64>],
) -> Result<GradientResult> {
    let n = bundle.len();
    check_len(n, f.len())?;
    check_len(bundle.num_transmitters(), fields.len())?;
    check_len(bundle.num_transmitters(), dataset.measurements.len())?;
    let parts = fields
        .par_iter()
        .enumerate()
        .map(|(p, u)| {
            let z = bundle.apply_h(p, &bundle.times_f(f, u)?)?;
            let y = &dataset.measurements[p];
            check_len(z.len(), y.len())?;
            let w: Vec<Complex64> = z.iter().zip(y).map(|(a, b)| a - b).collect();
            let hw = bundle.apply_h_adjoint(p, &w)?;
            Ok(Part {
                gradient: fold_components(u, &hw, n),
                value: 0.5 * w.iter().map(|v| v.norm_sqr()).sum::<f64>(),
                residual: w,
                telemetry: TransmitterTelemetry::default(),
            })
        })
        .collect();
    reduce(n, parts)
}

/// Largest eigenvalue of `Σ_p B_pᴴB_p`, `B_p x = H̃(x ⊙ û_p)` (x broadcast over the three
/// components), by power iteration over complex `x`. This bounds the curvature of the linear
/// data term over real images.
pub fn linearized_operator_norm_3d(bundle: &VectorBundle, fields: &[Vec<Complex64>], seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let n = bundle.len();
    check_len(bundle.num_transmitters(), fields.len())?;
    for u in fields {
        check_len(3 * n, u.len())?;
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let nx = krylov::norm2(&x);
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let parts: Vec<Result<Vec<Complex64>>> = fields
            .par_iter()
            .enumerate()
            .map(|(p, u)| {
                let bx: Vec<Complex64> = u.iter().enumerate().map(|(i, v)| v * x[i % n]).collect();
                let back = bundle.apply_h_adjoint(p, &bundle.apply_h(p, &bx)?)?;
                Ok((0..n)
                    .map(|m| (0..3).map(|i| u[i * n + m].conj() * back[i * n + m]).sum())
                    .collect())
            })
            .collect();
        let mut y = vec![ZERO; n];
        for part in parts {
            y.iter_mut().zip(part?).for_each(|(a, b)| *a += b);
        }
        let next = krylov::norm2(&y);
        let done = (next - lambda).abs() <= 1e-9 * next;
        lambda = next;
        x = y;
        if done {
            break;
        }
    }
    Ok(lambda)
}

/// Empirical Lipschitz constant of the vectorial data term (see [`crate::gradient::lipschitz_estimate`]).
pub fn lipschitz_estimate_3d(
    bundle: &VectorBundle,
    dataset: &ScatteringDataset,
    bounds: BoxConstraint,
    n_samples: usize,
    seed: u64,
    opts: &KrylovOptions,
) -> Result<LipschitzEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 Lipschitz samples".into()));
    }
    let born_floor = linearized_operator_norm_3d(bundle, &bundle.incident, seed)?;
    let sampled = sampled_quotient(bundle.len(), bounds, n_samples, seed, |f| {
        gradient_3d(bundle, f, dataset, opts).map(|g| g.gradient)
    })?;
    Ok(LipschitzEstimate {
        value: LIPSCHITZ_SAFETY * sampled.max(born_floor),
        sampled,
        born_floor,
    })
}

/// The vectorial data term for the optimisers: nonlinear, or linear in `f` when fields are frozen.
pub struct VectorialTerm<'a> {
    bundle: &'a VectorBundle,
    dataset: &'a ScatteringDataset,
    krylov: KrylovOptions,
    frozen: Option<Vec<Vec<Complex64>>>,
    warm: [WarmStart; 2],
}

impl<'a> VectorialTerm<'a> {
    pub fn new(bundle: &'a VectorBundle, dataset: &'a ScatteringDataset, krylov: KrylovOptions) -> Self {
        Self {
            bundle,
            dataset,
            krylov,
            frozen: None,
            warm: [WarmStart::default(), WarmStart::default()],
        }
    }

    /// First-Born model, `û_p = ũ_in,p`.
    pub fn born(bundle: &'a VectorBundle, dataset: &'a ScatteringDataset) -> Self {
        let mut t = Self::new(bundle, dataset, KrylovOptions::default());
        t.frozen = Some(bundle.incident.clone());
        t
    }
}

impl SmoothTerm for VectorialTerm<'_> {
    fn len(&self) -> usize {
        self.bundle.len()
    }

    fn evaluate(&mut self, f: &[f64], slot: Slot) -> Result<(f64, Vec<f64>)> {
        let g = match &self.frozen {
            Some(fields) => linearized_gradient_3d(self.bundle, f, self.dataset, fields)?,
            None => gradient_3d_warm(self.bundle, f, self.dataset, &self.krylov, &mut self.warm[slot as usize])?,
        };
        Ok((g.value, g.gradient))
    }
}

/// Reconstructs a 3D contrast. Supports the relaxed-FISTA family and the first-Born baseline.
pub fn reconstruct_3d(
    bundle: &VectorBundle,
    dataset: &ScatteringDataset,
    config: &SolverConfig,
    method: Method,
) -> Result<Reconstruction> {
    config.validate()?;
    let shape = Shape::of(bundle.grid());
    let f0 = vec![config.bounds.clip(0.0); bundle.len()];
    let (alpha, mut term, gamma) = match method {
        Method::Cisor | Method::Ista | Method::Fista => {
            let alpha = match method {
                Method::Ista => 0.0,
                Method::Fista => 1.0,
                _ => config.alpha,
            };
            let cfg = SolverConfig { alpha, ..*config };
            let gamma = match config.step {
                crate::optim::StepRule::Fixed { gamma } => gamma,
                crate::optim::StepRule::Auto => {
                    let l = lipschitz_estimate_3d(
                        bundle,
                        dataset,
                        config.bounds,
                        config.lipschitz_samples,
                        config.seed,
                        &config.krylov,
                    )?;
                    cfg.auto_step(l.value)
                }
                crate::optim::StepRule::Born { factor } => {
                    factor / linearized_operator_norm_3d(bundle, &bundle.incident, config.seed)?
                }
            };
            (alpha, VectorialTerm::new(bundle, dataset, config.krylov), gamma)
        }
        Method::Fb => {
            let l = linearized_operator_norm_3d(bundle, &bundle.incident, config.seed)?;
            (1.0, VectorialTerm::born(bundle, dataset), 1.0 / (1.05 * l.max(f64::MIN_POSITIVE)))
        }
        Method::Il => {
            return Err(Error::InvalidArgument(
                "iterative linearisation is only available for 2D scenes".into(),
            ))
        }
    };
    let cfg = SolverConfig { alpha, ..*config };
    relaxed_fista(
        &mut term,
        &shape,
        &FistaParams::from_config(&cfg, gamma),
        &f0,
        &mut ProxState::new(&shape),
    )
}

/// `‖∇D_B(0)‖_∞` for the vectorial model (see [`crate::optim::regularization_scale`]).
pub fn regularization_scale_3d(bundle: &VectorBundle, dataset: &ScatteringDataset) -> Result<f64> {
    let zero = vec![0.0; bundle.len()];
    let g = linearized_gradient_3d(bundle, &zero, dataset, &bundle.incident)?.gradient;
    Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}
