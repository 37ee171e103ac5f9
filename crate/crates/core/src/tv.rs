//! Isotropic total variation and the proximal map of `λ·TV + χ_C` by dual fast gradient
//! projection.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::Grid;
use crate::operators::BoxConstraint;

/// Regularisation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    pub tau: f64,
    pub bounds: BoxConstraint,
    pub inner_iters: usize,
    /// Stop once the duality gap falls below this fraction of the primal objective.
    pub inner_tol: f64,
}

impl TvConfig {
    pub fn new(tau: f64, bounds: BoxConstraint) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
        }
        Ok(Self {
            tau,
            bounds,
            inner_iters: 20,
            inner_tol: 1e-8,
        })
    }
}

/// Axis lengths of an image, fastest-varying first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(axes: &[usize]) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|&a| a == 0) {
            return Err(Error::InvalidArgument(format!("bad image shape {axes:?}")));
        }
        Ok(Self(axes.to_vec()))
    }

    pub fn of(grid: &Grid) -> Self {
        Self(vec![grid.side(); grid.dim()])
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.0.len());
        let mut acc = 1;
        for &a in &self.0 {
            s.push(acc);
            acc *= a;
        }
        s
    }

    /// Forward differences, zero at the last index of each axis; `out` holds `ndim` blocks.
    fn grad(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for (d, (&len, stride)) in self.0.iter().zip(self.strides()).enumerate() {
            let block = &mut out[d * n..(d + 1) * n];
            for i in 0..n {
                let idx = (i / stride) % len;
                block[i] = if idx + 1 < len { x[i + stride] - x[i] } else { 0.0 };
            }
        }
    }

    /// Transpose of [`Shape::grad`].
    fn grad_t(&self, q: &[f64], out: &mut [f64]) {
        let n = self.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (d, (&len, stride)) in self.0.iter().zip(self.strides()).enumerate() {
            let block = &q[d * n..(d + 1) * n];
            for i in 0..n {
                let idx = (i / stride) % len;
                if idx + 1 < len {
                    out[i] -= block[i];
                }
                if idx > 0 {
                    out[i] += block[i - stride];
                }
            }
        }
    }

    fn tv(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        self.grad(x, scratch);
        let n = self.len();
        (0..n)
            .map(|i| {
                (0..self.ndim())
                    .map(|d| scratch[d * n + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}

/// `Σ_n ‖(∇f)_n‖₂` with forward differences and zero difference past the last sample.
pub fn tv_value(f: &[f64], grid: &Grid) -> Result<f64> {
    tv_value_shape(f, &Shape::of(grid))
}

pub fn tv_value_shape(f: &[f64], shape: &Shape) -> Result<f64> {
    check_len(shape.len(), f.len())?;
    let mut scratch = vec![0.0; shape.len() * shape.ndim()];
    Ok(shape.tv(f, &mut scratch))
}

#[derive(Clone, Debug)]
pub struct ProxOutput {
    pub x: Vec<f64>,
    /// Duality gap bound `P(x) - P*` at the returned point.
    pub gap: f64,
    pub iterations: usize,
}

/// Solver for `argmin_{x∈C} ½‖x - z‖² + λ TV(x)` that keeps its dual variable between calls.
#[derive(Clone, Debug)]
pub struct TvProx {
    shape: Shape,
    dual: Vec<f64>,
}

impl TvProx {
    pub fn new(grid: &Grid) -> Self {
        Self::for_shape(Shape::of(grid))
    }

    pub fn for_shape(shape: Shape) -> Self {
        let dual = vec![0.0; shape.len() * shape.ndim()];
        Self { shape, dual }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn reset(&mut self) {
        self.dual.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Runs at most `iters` dual iterations from the stored dual state.
    pub fn apply(&mut self, z: &[f64], lambda: f64, bounds: BoxConstraint, iters: usize, tol: f64) -> Result<ProxOutput> {
        let n = self.shape.len();
        check_len(n, z.len())?;
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("prox weight must be >= 0, got {lambda}")));
        }
        let clip: Vec<f64> = z.iter().map(|&v| bounds.clip(v)).collect();
        if lambda == 0.0 {
            return Ok(ProxOutput {
                x: clip,
                gap: 0.0,
                iterations: 0,
            });
        }
        let nd = n * self.shape.ndim();
        let ndim = self.shape.ndim();
        let mut scratch = vec![0.0; nd];
        let mut dtq = vec![0.0; n];
        let primal = |x: &[f64], scratch: &mut [f64]| -> f64 {
            0.5 * x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + lambda * self.shape.tv(x, scratch)
        };
        let mut best_x = clip.clone();
        let mut best_obj = primal(&clip, &mut scratch);
        let mut best_gap = f64::INFINITY;

        // x(q) = P_C(z - λ Dᵀq)
        let primal_of = |q: &[f64], dtq: &mut [f64], x: &mut [f64]| {
            self.shape.grad_t(q, dtq);
            for ((xi, zi), gi) in x.iter_mut().zip(z).zip(dtq.iter()) {
                *xi = bounds.clip(zi - lambda * gi);
            }
        };
        let project = |q: &mut [f64]| {
            for i in 0..n {
                let s: f64 = (0..ndim).map(|d| q[d * n + i].powi(2)).sum::<f64>().sqrt();
                if s > 1.0 {
                    for d in 0..ndim {
                        q[d * n + i] /= s;
                    }
                }
            }
        };

        let mut p = self.dual.clone();
        project(&mut p);
        let mut r = p.clone();
        let mut x = vec![0.0; n];
        let mut t: f64 = 1.0;
        let step = 1.0 / (4.0 * ndim as f64 * lambda);
        let mut iterations = 0;
        let gap_of = |p: &[f64], x: &mut Vec<f64>, scratch: &mut Vec<f64>, dtq: &mut Vec<f64>| -> (f64, f64) {
            primal_of(p, dtq, x);
            self.shape.grad(x, scratch);
            let inner: f64 = scratch.iter().zip(p).map(|(a, b)| a * b).sum();
            let obj = primal(x, scratch);
            let tv = (obj - 0.5 * x.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>()) / lambda;
            (obj, (lambda * (tv - inner)).max(0.0))
        };
        for _ in 0..iters {
            iterations += 1;
            primal_of(&r, &mut dtq, &mut x);
            self.shape.grad(&x, &mut scratch);
            let mut next: Vec<f64> = r.iter().zip(&scratch).map(|(a, b)| a + step * b).collect();
            project(&mut next);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let w = (t - 1.0) / t_next;
            for i in 0..nd {
                r[i] = next[i] + w * (next[i] - p[i]);
            }
            p = next;
            t = t_next;
            let (obj, gap) = gap_of(&p, &mut x, &mut scratch, &mut dtq);
            if obj < best_obj {
                best_obj = obj;
                best_x.copy_from_slice(&x);
                best_gap = gap;
            }
            if gap <= tol * obj.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        self.dual = p;
        if !best_gap.is_finite() {
            // the clipped input won; bound its suboptimality with the current dual point
            let (obj, gap) = gap_of(&self.dual, &mut x, &mut scratch, &mut dtq);
            best_gap = gap + (best_obj - obj).max(0.0);
        }
        Ok(ProxOutput {
            x: best_x,
            gap: best_gap,
            iterations,
        })
    }
}

/// One-shot prox of `λ·TV + χ_C` from a zero dual start.
pub fn prox_tv_box(grid: &Grid, z: &[f64], lambda: f64, bounds: BoxConstraint, inner_iters: usize) -> Result<Vec<f64>> {
    Ok(TvProx::new(grid).apply(z, lambda, bounds, inner_iters, 0.0)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    fn unit_box() -> BoxConstraint {
        BoxConstraint::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn tv_examples() {
        let g = build_grid(2, 2, 1.0).unwrap();
        assert_eq!(tv_value(&[0.3; 4], &g).unwrap(), 0.0);
        // rows [0,1] and [0,1]: index n = l + 2 s
        assert_eq!(tv_value(&[0.0, 1.0, 0.0, 1.0], &g).unwrap(), 2.0);
        let s = Shape::new(&[3]).unwrap();
        assert_eq!(tv_value_shape(&[0.0, 2.0, -1.0], &s).unwrap(), 5.0);
    }

    #[test]
    fn grad_transpose_is_adjoint() {
        let s = Shape::new(&[4, 3, 5]).unwrap();
        let n = s.len();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let q: Vec<f64> = (0..3 * n).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut dx = vec![0.0; 3 * n];
        s.grad(&x, &mut dx);
        let mut dtq = vec![0.0; n];
        s.grad_t(&q, &mut dtq);
        let lhs: f64 = dx.iter().zip(&q).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dtq).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn zero_weight_clips() {
        let g = build_grid(2, 2, 1.0).unwrap();
        let x = prox_tv_box(&g, &[-0.5, 0.2, 1.7, 0.9], 0.0, unit_box(), 20).unwrap();
        assert_eq!(x, vec![0.0, 0.2, 1.0, 0.9]);
    }

    #[test]
    fn constant_inside_box_is_fixed() {
        let g = build_grid(2, 6, 1.0).unwrap();
        let z = vec![0.4; g.len()];
        let x = prox_tv_box(&g, &z, 3.0, unit_box(), 50).unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn feasible_and_not_worse_than_clipping() {
        let g = build_grid(2, 10, 1.0).unwrap();
        let z: Vec<f64> = (0..g.len()).map(|i| 1.5 * ((i * 37 % 17) as f64 / 16.0) - 0.2).collect();
        let lambda = 0.1;
        let mut prox = TvProx::new(&g);
        let out = prox.apply(&z, lambda, unit_box(), 20, 0.0).unwrap();
        assert!(out.x.iter().all(|v| (0.0..=1.0).contains(v)));
        let obj = |x: &[f64]| {
            0.5 * x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + lambda * tv_value(x, &g).unwrap()
        };
        let clip: Vec<f64> = z.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        assert!(obj(&out.x) <= obj(&clip));
        // warm restart continues to improve
        let again = prox.apply(&z, lambda, unit_box(), 200, 1e-12).unwrap();
        assert!(obj(&again.x) <= obj(&out.x) + 1e-12);
        assert!(again.gap <= 1e-6 * obj(&again.x), "{}", again.gap);
    }

    #[test]
    fn step_signal_is_shrunk() {
        // 1D step of height 1 with weight λ: the exact solution moves each side by λ/len
        let s = Shape::new(&[8]).unwrap();
        let z: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let mut prox = TvProx::for_shape(s);
        let b = BoxConstraint::new(-1.0, 2.0).unwrap();
        let out = prox.apply(&z, 0.2, b, 5000, 1e-14).unwrap();
        for (i, v) in out.x.iter().enumerate() {
            let expect = if i < 4 { 0.05 } else { 0.95 };
            assert!((v - expect).abs() < 1e-6, "{i}: {v}");
        }
    }

    #[test]
    fn rejects_negative_weight() {
        assert!(TvConfig::new(-1.0, unit_box()).is_err());
        let g = build_grid(2, 2, 1.0).unwrap();
        assert!(prox_tv_box(&g, &[0.0; 4], -0.1, unit_box(), 1).is_err());
    }
}
