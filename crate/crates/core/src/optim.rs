//! Relaxed FISTA for `F(f) = D(f) + τ·TV(f) + χ_C(f)`, gradient-mapping diagnostics and the
//! first-Born / iterative-linearisation baselines.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::forward::{solve_total_field, ScatteringDataset};
use crate::gradient::{born_operator_norm, gradient_warm, linearized_operator_norm, lipschitz_estimate, WarmStart};
use crate::krylov::KrylovOptions;
use crate::operators::{BoxConstraint, ContrastImage, OperatorBundle};
use crate::tv::{tv_value_shape, Shape, TvProx};

/// A differentiable data term evaluated by the optimiser.
pub trait SmoothTerm {
    fn len(&self) -> usize;

    /// `(D(f), ∇D(f))`. `slot` tells the term which sequence `f` belongs to so that it can
    /// keep separate warm starts for the extrapolated points and the iterates.
    fn evaluate(&mut self, f: &[f64], slot: Slot) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Extrapolated,
    Iterate,
}

/// The nonlinear data term `½ Σ_p ‖y_p - H(u_p ⊙ f)‖²`.
pub struct NonlinearTerm<'a> {
    bundle: &'a OperatorBundle,
    dataset: &'a ScatteringDataset,
    krylov: KrylovOptions,
    warm: [WarmStart; 2],
}

impl<'a> NonlinearTerm<'a> {
    pub fn new(bundle: &'a OperatorBundle, dataset: &'a ScatteringDataset, krylov: KrylovOptions) -> Self {
        Self {
            bundle,
            dataset,
            krylov,
            warm: [WarmStart::default(), WarmStart::default()],
        }
    }
}

impl SmoothTerm for NonlinearTerm<'_> {
    fn len(&self) -> usize {
        self.bundle.len()
    }

    fn evaluate(&mut self, f: &[f64], slot: Slot) -> Result<(f64, Vec<f64>)> {
        let warm = &mut self.warm[slot as usize];
        let g = gradient_warm(self.bundle, f, self.dataset, &self.krylov, warm)?;
        Ok((g.value, g.gradient))
    }
}

/// The linear data term `½ Σ_p ‖y_p - H diag(û_p) f‖²` with frozen fields `û_p`.
pub struct LinearizedTerm<'a> {
    bundle: &'a OperatorBundle,
    dataset: &'a ScatteringDataset,
    fields: Vec<Vec<Complex64>>,
}

impl<'a> LinearizedTerm<'a> {
    pub fn new(bundle: &'a OperatorBundle, dataset: &'a ScatteringDataset, fields: Vec<Vec<Complex64>>) -> Result<Self> {
        check_len(bundle.num_transmitters(), fields.len())?;
        check_len(bundle.num_transmitters(), dataset.measurements.len())?;
        for u in &fields {
            check_len(bundle.len(), u.len())?;
        }
        Ok(Self { bundle, dataset, fields })
    }

    /// First-Born model: `û_p = u_in,p`.
    pub fn born(bundle: &'a OperatorBundle, dataset: &'a ScatteringDataset) -> Result<Self> {
        let fields = (0..bundle.num_transmitters())
            .map(|p| bundle.incident(p).to_vec())
            .collect();
        Self::new(bundle, dataset, fields)
    }

    /// Exact Lipschitz constant of the gradient (largest eigenvalue of `Σ BᴴB`).
    pub fn lipschitz(&self, seed: u64) -> Result<f64> {
        let refs: Vec<&[Complex64]> = self.fields.iter().map(|v| v.as_slice()).collect();
        linearized_operator_norm(self.bundle, &refs, seed)
    }
}

impl SmoothTerm for LinearizedTerm<'_> {
    fn len(&self) -> usize {
        self.bundle.len()
    }

    fn evaluate(&mut self, f: &[f64], _slot: Slot) -> Result<(f64, Vec<f64>)> {
        check_len(self.len(), f.len())?;
        let parts: Vec<Result<(f64, Vec<f64>)>> = self
            .fields
            .par_iter()
            .enumerate()
            .map(|(p, u)| {
                let fu: Vec<Complex64> = u.iter().zip(f).map(|(a, b)| a * b).collect();
                let z = self.bundle.apply_h(p, &fu)?;
                let w: Vec<Complex64> = z.iter().zip(&self.dataset.measurements[p]).map(|(a, b)| a - b).collect();
                let value = 0.5 * w.iter().map(|v| v.norm_sqr()).sum::<f64>();
                let hw = self.bundle.apply_h_adjoint(p, &w)?;
                Ok((value, u.iter().zip(&hw).map(|(a, b)| (a.conj() * b).re).collect()))
            })
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; self.len()];
        for part in parts {
            let (v, g) = part?;
            value += v;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok((value, grad))
    }
}

/// One row of convergence telemetry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub k: usize,
    /// `F = D + τ·TV`.
    pub objective: f64,
    pub data: f64,
    /// `τ·TV`.
    pub regularization: f64,
    /// `‖G_γ‖`.
    pub grad_map_norm: f64,
    pub seconds: f64,
    /// `‖f_k - f_{k-1}‖`, kept for the descent monitor.
    pub step_norm: f64,
}

/// How the step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum StepRule {
    Fixed { gamma: f64 },
    /// `γ = (1 - α²) / (2L̂)` (or `1/(2L̂)` when `α = 1`).
    Auto,
    /// `γ = factor / L_B` with `L_B` the Lipschitz constant of the first-Born data term;
    /// a cheap, contrast-independent scale for hand tuning.
    Born { factor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub step: StepRule,
    /// Absolute regularisation weight.
    pub tau: f64,
    pub bounds: BoxConstraint,
    pub max_iter: usize,
    /// Stop when `‖G_γ(f_k)‖ ≤ tol · ‖G_γ(f₁)‖`.
    pub tol: f64,
    pub krylov: KrylovOptions,
    pub prox_iters: usize,
    pub prox_tol: f64,
    /// Evaluate `F` and `G_γ` at every iterate (one extra gradient per iteration when `α > 0`).
    /// Without it, telemetry reports the extrapolated point and the run stops only at `max_iter`.
    pub monitor: bool,
    pub lipschitz_samples: usize,
    pub seed: u64,
    pub il_rounds: usize,
    pub il_inner_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.96,
            step: StepRule::Auto,
            tau: 0.0,
            bounds: BoxConstraint { lower: 0.0, upper: 1.0 },
            max_iter: 200,
            tol: 1e-4,
            krylov: KrylovOptions::default(),
            prox_iters: 20,
            prox_tol: 1e-8,
            monitor: true,
            lipschitz_samples: 2,
            seed: 0,
            il_rounds: 5,
            il_inner_iters: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("solver.alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        match self.step {
            StepRule::Fixed { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                return Err(Error::config("solver.step.gamma", format!("must be positive, got {gamma}")));
            }
            StepRule::Born { factor } if !(factor > 0.0 && factor.is_finite()) => {
                return Err(Error::config("solver.step.factor", format!("must be positive, got {factor}")));
            }
            _ => {}
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config("solver.tau", format!("must be >= 0, got {}", self.tau)));
        }
        if !(self.bounds.lower <= self.bounds.upper) {
            return Err(Error::config("solver.bounds", "lower must not exceed upper"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::config("solver.tol", "must be >= 0"));
        }
        if !(self.krylov.tol > 0.0) {
            return Err(Error::config("solver.krylov.tol", "must be positive"));
        }
        if self.lipschitz_samples < 2 {
            return Err(Error::config("solver.lipschitz_samples", "must be at least 2"));
        }
        if self.il_rounds == 0 {
            return Err(Error::config("solver.il_rounds", "must be at least 1"));
        }
        Ok(())
    }

    /// `γ = (1 - α²)/(2L)`, or `1/(2L)` for plain FISTA.
    pub fn auto_step(&self, lipschitz: f64) -> f64 {
        let num = if self.alpha < 1.0 { 1.0 - self.alpha * self.alpha } else { 1.0 };
        num / (2.0 * lipschitz)
    }
}

/// Result of a reconstruction.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: ContrastImage,
    pub telemetry: Vec<TelemetryRow>,
    pub gamma: f64,
    /// True if the gradient-mapping criterion stopped the run before `max_iter`.
    pub converged: bool,
}

/// `t_{k+1} = (√(4t_k² + 1) + 1)/2`.
pub fn next_t(t: f64) -> f64 {
    ((4.0 * t * t + 1.0).sqrt() + 1.0) / 2.0
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Parameters of one proximal-gradient run, independent of the data term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FistaParams {
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub bounds: BoxConstraint,
    pub max_iter: usize,
    pub tol: f64,
    pub prox_iters: usize,
    pub prox_tol: f64,
    pub monitor: bool,
}

impl FistaParams {
    pub fn from_config(config: &SolverConfig, gamma: f64) -> Self {
        Self {
            alpha: config.alpha,
            gamma,
            tau: config.tau,
            bounds: config.bounds,
            max_iter: config.max_iter,
            tol: config.tol,
            prox_iters: config.prox_iters,
            prox_tol: config.prox_tol,
            monitor: config.monitor,
        }
    }
}

/// Reusable prox state for the main step and for the gradient-mapping evaluation.
pub struct ProxState {
    step: TvProx,
    mapping: TvProx,
}

impl ProxState {
    pub fn new(shape: &Shape) -> Self {
        Self {
            step: TvProx::for_shape(shape.clone()),
            mapping: TvProx::for_shape(shape.clone()),
        }
    }
}

/// `G_γ(f) = (f - prox_{γR}(f - γ g)) / γ` for a precomputed gradient `g`.
fn mapping_from_gradient(
    prox: &mut TvProx,
    f: &[f64],
    g: &[f64],
    p: &FistaParams,
) -> Result<Vec<f64>> {
    let z: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - p.gamma * b).collect();
    let x = prox.apply(&z, p.gamma * p.tau, p.bounds, p.prox_iters, p.prox_tol)?.x;
    Ok(f.iter().zip(&x).map(|(a, b)| (a - b) / p.gamma).collect())
}

/// The gradient mapping `G_γ(f)` of a data term and its norm.
pub fn gradient_mapping(
    term: &mut dyn SmoothTerm,
    shape: &Shape,
    f: &[f64],
    params: &FistaParams,
) -> Result<(Vec<f64>, f64)> {
    let (_, g) = term.evaluate(f, Slot::Iterate)?;
    let mut prox = TvProx::for_shape(shape.clone());
    let gm = mapping_from_gradient(&mut prox, f, &g, params)?;
    let n = norm(&gm);
    Ok((gm, n))
}

/// Relaxed FISTA on an arbitrary data term.
///
/// `f_k = prox_{γR}(s_k - γ∇D(s_k))`, `s_{k+1} = f_k + α (t_k - 1)/t_{k+1} (f_k - f_{k-1})`
/// with `s₁ = f₀` and `t₀ = 1`.
pub fn relaxed_fista(
    term: &mut dyn SmoothTerm,
    shape: &Shape,
    params: &FistaParams,
    f0: &[f64],
    prox: &mut ProxState,
) -> Result<Reconstruction> {
    let n = term.len();
    check_len(n, f0.len())?;
    check_len(n, shape.len())?;
    if !(params.gamma > 0.0) || !(0.0..=1.0).contains(&params.alpha) {
        return Err(Error::InvalidArgument(format!(
            "need γ > 0 and α in [0, 1], got γ = {}, α = {}",
            params.gamma, params.alpha
        )));
    }
    if let Some(v) = f0.iter().find(|v| !params.bounds.contains(**v)) {
        return Err(Error::InvalidArgument(format!("initial value {v} outside the box")));
    }
    let start = Instant::now();
    let mut telemetry: Vec<TelemetryRow> = Vec::new();
    let mut f_prev = f0.to_vec();
    let mut s = f0.to_vec();
    let mut t = next_t(1.0);
    // (point, D, ∇D) of the latest iterate evaluation, reused when s_{k+1} = f_k
    let mut cached: Option<(Vec<f64>, f64, Vec<f64>)> = None;
    let mut first_norm: Option<f64> = None;
    let mut converged = false;
    let scratch_tv = |x: &[f64]| tv_value_shape(x, shape).map(|v| params.tau * v);

    for k in 1..=params.max_iter {
        let abort = |e: Error, telemetry: &Vec<TelemetryRow>| Error::Aborted {
            iteration: k,
            telemetry: telemetry.clone(),
            source: Box::new(e),
        };
        let (d_s, g_s) = match cached.take() {
            Some((point, d, g)) if point == s => (d, g),
            _ => term
                .evaluate(&s, Slot::Extrapolated)
                .map_err(|e| abort(e, &telemetry))?,
        };
        let z: Vec<f64> = s.iter().zip(&g_s).map(|(a, b)| a - params.gamma * b).collect();
        let f = prox
            .step
            .apply(&z, params.gamma * params.tau, params.bounds, params.prox_iters, params.prox_tol)
            .map_err(|e| abort(e, &telemetry))?
            .x;
        let step_norm = f.iter().zip(&f_prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (data, reg, gm_norm) = if params.monitor {
            let (d_f, g_f) = term.evaluate(&f, Slot::Iterate).map_err(|e| abort(e, &telemetry))?;
            let gm = mapping_from_gradient(&mut prox.mapping, &f, &g_f, params).map_err(|e| abort(e, &telemetry))?;
            let reg = scratch_tv(&f)?;
            cached = Some((f.clone(), d_f, g_f));
            (d_f, reg, norm(&gm))
        } else {
            let gm: Vec<f64> = s.iter().zip(&f).map(|(a, b)| (a - b) / params.gamma).collect();
            (d_s, scratch_tv(&s)?, norm(&gm))
        };
        let objective = data + reg;
        if !objective.is_finite() {
            return Err(abort(Error::InvalidArgument("non-finite objective".into()), &telemetry));
        }
        telemetry.push(TelemetryRow {
            k,
            objective,
            data,
            regularization: reg,
            grad_map_norm: gm_norm,
            seconds: start.elapsed().as_secs_f64(),
            step_norm,
        });
        let t_next = next_t(t);
        let w = params.alpha * (t - 1.0) / t_next;
        s = f.iter().zip(&f_prev).map(|(a, b)| a + w * (a - b)).collect();
        f_prev = f;
        t = t_next;
        let g1 = *first_norm.get_or_insert(gm_norm);
        if params.monitor && gm_norm <= params.tol * g1 {
            converged = true;
            break;
        }
    }
    let image = ContrastImage::new(f_prev, params.bounds)?;
    Ok(Reconstruction {
        image,
        telemetry,
        gamma: params.gamma,
        converged,
    })
}

/// Step size for the nonlinear problem: the fixed value, or from the Lipschitz estimate.
pub fn resolve_step(bundle: &OperatorBundle, dataset: &ScatteringDataset, config: &SolverConfig) -> Result<f64> {
    match config.step {
        StepRule::Fixed { gamma } => Ok(gamma),
        StepRule::Auto => {
            let l = lipschitz_estimate(
                bundle,
                dataset,
                config.bounds,
                config.lipschitz_samples,
                config.seed,
                &config.krylov,
            )?;
            Ok(config.auto_step(l.value))
        }
        StepRule::Born { factor } => Ok(factor / born_operator_norm(bundle, config.seed)?),
    }
}

/// `‖∇D_B(0)‖_∞ = ‖Re Σ_p conj(u_in,p) ⊙ H_pᴴ y_p‖_∞`, the natural scale of `τ`.
///
/// Any `τ` at or above this value makes `f = 0` a minimiser of the first-Born problem.
pub fn regularization_scale(bundle: &OperatorBundle, dataset: &ScatteringDataset) -> Result<f64> {
    let zero = vec![0.0; bundle.len()];
    let (_, g) = LinearizedTerm::born(bundle, dataset)?.evaluate(&zero, Slot::Iterate)?;
    Ok(g.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Relaxed FISTA on the nonlinear data term (the CISOR method when `α < 1`).
pub fn relaxed_fista_run(
    bundle: &OperatorBundle,
    dataset: &ScatteringDataset,
    config: &SolverConfig,
    f0: Option<&[f64]>,
) -> Result<Reconstruction> {
    config.validate()?;
    let gamma = resolve_step(bundle, dataset, config)?;
    let zeros;
    let f0 = match f0 {
        Some(f) => f,
        None => {
            zeros = vec![config.bounds.clip(0.0); bundle.len()];
            &zeros
        }
    };
    let shape = Shape::of(bundle.grid());
    let mut term = NonlinearTerm::new(bundle, dataset, config.krylov);
    relaxed_fista(
        &mut term,
        &shape,
        &FistaParams::from_config(config, gamma),
        f0,
        &mut ProxState::new(&shape),
    )
}

fn linear_params(config: &SolverConfig, lipschitz: f64, max_iter: usize) -> FistaParams {
    FistaParams {
        alpha: 1.0,
        // the convex problem tolerates 1/L; keep a small margin for the power-iteration estimate
        gamma: 1.0 / (1.05 * lipschitz.max(f64::MIN_POSITIVE)),
        max_iter,
        ..FistaParams::from_config(config, 1.0)
    }
}

/// FISTA on the first-Born linearisation (`u = u_in`).
pub fn first_born_reconstruct(
    bundle: &OperatorBundle,
    dataset: &ScatteringDataset,
    config: &SolverConfig,
) -> Result<Reconstruction> {
    config.validate()?;
    let mut term = LinearizedTerm::born(bundle, dataset)?;
    let l = term.lipschitz(config.seed)?;
    let shape = Shape::of(bundle.grid());
    let f0 = vec![config.bounds.clip(0.0); bundle.len()];
    relaxed_fista(
        &mut term,
        &shape,
        &linear_params(config, l, config.max_iter),
        &f0,
        &mut ProxState::new(&shape),
    )
}

/// Iterative linearisation: alternate total-field solves at the current estimate with
/// convex TV-FISTA solves of the linearised problem.
pub fn iterative_linearization_reconstruct(
    bundle: &OperatorBundle,
    dataset: &ScatteringDataset,
    config: &SolverConfig,
    outer_rounds: usize,
    inner_iters: usize,
) -> Result<Reconstruction> {
    config.validate()?;
    if outer_rounds == 0 {
        return Err(Error::InvalidArgument("need at least one outer round".into()));
    }
    let shape = Shape::of(bundle.grid());
    let mut prox = ProxState::new(&shape);
    let mut f = vec![config.bounds.clip(0.0); bundle.len()];
    let mut fields: Vec<Vec<Complex64>> = (0..bundle.num_transmitters())
        .map(|p| bundle.incident(p).to_vec())
        .collect();
    let mut telemetry = Vec::new();
    let mut last = None;
    for round in 0..outer_rounds {
        if round > 0 {
            fields = fields
                .par_iter()
                .enumerate()
                .map(|(p, warm)| {
                    solve_total_field(bundle, &f, bundle.incident(p), &config.krylov, Some(warm))
                        .map(|s| s.field)
                        .map_err(|e| Error::Transmitter {
                            transmitter: p,
                            source: Box::new(e),
                        })
                })
                .collect::<Result<Vec<_>>>()?;
        }
        let mut term = LinearizedTerm::new(bundle, dataset, fields.clone())?;
        let l = term.lipschitz(config.seed)?;
        let offset = telemetry.len();
        let rec = relaxed_fista(&mut term, &shape, &linear_params(config, l, inner_iters), &f, &mut prox)?;
        telemetry.extend(rec.telemetry.iter().map(|r| TelemetryRow { k: r.k + offset, ..*r }));
        f = rec.image.values().to_vec();
        last = Some(rec);
    }
    let last = last.expect("at least one round");
    Ok(Reconstruction {
        image: last.image,
        telemetry,
        gamma: last.gamma,
        converged: last.converged,
    })
}

/// Reconstruction methods exposed to the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Relaxed FISTA with the configured `α`.
    Cisor,
    /// `α = 0`.
    Ista,
    /// `α = 1`.
    Fista,
    /// First Born.
    Fb,
    /// Iterative linearisation.
    Il,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cisor" => Ok(Method::Cisor),
            "ista" => Ok(Method::Ista),
            "fista" => Ok(Method::Fista),
            "fb" => Ok(Method::Fb),
            "il" => Ok(Method::Il),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Cisor => "cisor",
            Method::Ista => "ista",
            Method::Fista => "fista",
            Method::Fb => "fb",
            Method::Il => "il",
        };
        f.write_str(s)
    }
}

/// Dispatches to the selected method.
pub fn reconstruct(
    bundle: &OperatorBundle,
    dataset: &ScatteringDataset,
    config: &SolverConfig,
    method: Method,
) -> Result<Reconstruction> {
    match method {
        Method::Cisor => relaxed_fista_run(bundle, dataset, config, None),
        Method::Ista => relaxed_fista_run(bundle, dataset, &SolverConfig { alpha: 0.0, ..*config }, None),
        Method::Fista => relaxed_fista_run(bundle, dataset, &SolverConfig { alpha: 1.0, ..*config }, None),
        Method::Fb => first_born_reconstruct(bundle, dataset, config),
        Method::Il => iterative_linearization_reconstruct(bundle, dataset, config, config.il_rounds, config.il_inner_iters),
    }
}

/// `F(f_k) + (1/(2γ) - L)‖f_k - f_{k-1}‖²` along a run; non-increasing when `γ ≤ (1-α²)/(2L)`.
pub fn lyapunov_sequence(telemetry: &[TelemetryRow], gamma: f64, lipschitz: f64) -> Vec<f64> {
    telemetry
        .iter()
        .map(|r| r.objective + (1.0 / (2.0 * gamma) - lipschitz) * r.step_norm * r.step_norm)
        .collect()
}
