//! Krylov solvers for the non-Hermitian complex systems of the forward model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A square complex linear operator with its conjugate transpose.
pub trait LinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64>;
}

/// Swaps the roles of an operator and its adjoint.
pub struct Adjoint<'a, M: LinearMap + ?Sized>(pub &'a M);

impl<M: LinearMap + ?Sized> LinearMap for Adjoint<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.0.apply_adjoint(x)
    }
    fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.0.apply(x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KrylovMethod {
    #[default]
    Bicgstab,
    /// Conjugate gradients on the normal equations `AᴴA x = Aᴴ b`.
    CgNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovOptions {
    /// Target relative residual `‖b - Ax‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: KrylovMethod,
    /// Retry with CG on the normal equations when BiCGSTAB fails.
    pub fallback: bool,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            method: KrylovMethod::Bicgstab,
            fallback: true,
        }
    }
}

impl KrylovOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn residual(map: &dyn LinearMap, b: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let ax = map.apply(x);
    b.iter().zip(&ax).map(|(p, q)| p - q).collect()
}

/// Solves `A x = b`, starting from `x0` (or from `b`, the exact answer when `A = I`).
pub fn solve(
    map: &dyn LinearMap,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    crate::error::check_len(map.dim(), b.len())?;
    if let Some(x0) = x0 {
        crate::error::check_len(map.dim(), x0.len())?;
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![Complex64::new(0.0, 0.0); b.len()],
            iterations: 0,
            residual: 0.0,
        });
    }
    let x0 = x0.map(|v| v.to_vec()).unwrap_or_else(|| b.to_vec());
    let first = match opts.method {
        KrylovMethod::Bicgstab => bicgstab(map, b, x0.clone(), bnorm, opts),
        KrylovMethod::CgNormal => cg_normal(map, b, x0.clone(), bnorm, opts),
    };
    match first {
        Err(e) if opts.fallback && opts.method == KrylovMethod::Bicgstab => {
            cg_normal(map, b, x0, bnorm, opts).map_err(|_| e)
        }
        other => other,
    }
}

fn bicgstab(
    map: &dyn LinearMap,
    b: &[Complex64],
    mut x: Vec<Complex64>,
    bnorm: f64,
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut r = residual(map, b, &x);
    let mut rel = norm2(&r) / bnorm;
    let mut iterations = 0;
    if rel <= opts.tol {
        return Ok(KrylovOutcome {
            x,
            iterations,
            residual: rel,
        });
    }
    // restarts refresh the shadow residual after breakdown or residual drift
    'restart: while iterations < opts.max_iter {
        let shadow = r.clone();
        let mut rho = Complex64::new(1.0, 0.0);
        let mut alpha = Complex64::new(1.0, 0.0);
        let mut omega = Complex64::new(1.0, 0.0);
        let mut v = vec![zero; n];
        let mut p = vec![zero; n];
        while iterations < opts.max_iter {
            iterations += 1;
            let rho_next = dotc(&shadow, &r);
            if rho_next.norm() < 1e-300 || omega.norm() < 1e-300 {
                r = residual(map, b, &x);
                continue 'restart;
            }
            let beta = (rho_next / rho) * (alpha / omega);
            rho = rho_next;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            v = map.apply(&p);
            let sv = dotc(&shadow, &v);
            if sv.norm() < 1e-300 {
                r = residual(map, b, &x);
                continue 'restart;
            }
            alpha = rho / sv;
            let s: Vec<Complex64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
            if norm2(&s) / bnorm <= opts.tol {
                for i in 0..n {
                    x[i] += alpha * p[i];
                }
                r = residual(map, b, &x);
                rel = norm2(&r) / bnorm;
                if rel <= opts.tol {
                    return Ok(KrylovOutcome {
                        x,
                        iterations,
                        residual: rel,
                    });
                }
                continue 'restart;
            }
            let t = map.apply(&s);
            let tt = dotc(&t, &t).re;
            omega = if tt > 0.0 {
                dotc(&t, &s) / tt
            } else {
                Complex64::new(0.0, 0.0)
            };
            for i in 0..n {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            rel = norm2(&r) / bnorm;
            if !rel.is_finite() {
                break 'restart;
            }
            if rel <= opts.tol {
                r = residual(map, b, &x);
                rel = norm2(&r) / bnorm;
                if rel <= opts.tol {
                    return Ok(KrylovOutcome {
                        x,
                        iterations,
                        residual: rel,
                    });
                }
                continue 'restart;
            }
        }
    }
    Err(Error::NotConverged {
        solver: "BiCGSTAB",
        iterations,
        residual: rel,
    })
}

fn cg_normal(
    map: &dyn LinearMap,
    b: &[Complex64],
    mut x: Vec<Complex64>,
    bnorm: f64,
    opts: &KrylovOptions,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let mut r = residual(map, b, &x);
    let mut rel = norm2(&r) / bnorm;
    let mut iterations = 0;
    if rel <= opts.tol {
        return Ok(KrylovOutcome {
            x,
            iterations,
            residual: rel,
        });
    }
    let mut z = map.apply_adjoint(&r);
    let mut p = z.clone();
    let mut zz = dotc(&z, &z).re;
    while iterations < opts.max_iter {
        iterations += 1;
        let w = map.apply(&p);
        let ww = dotc(&w, &w).re;
        if ww <= 0.0 {
            break;
        }
        let a = zz / ww;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * w[i];
        }
        rel = norm2(&r) / bnorm;
        if rel <= opts.tol {
            let true_r = residual(map, b, &x);
            rel = norm2(&true_r) / bnorm;
            if rel <= opts.tol {
                return Ok(KrylovOutcome {
                    x,
                    iterations,
                    residual: rel,
                });
            }
            r = true_r;
        }
        z = map.apply_adjoint(&r);
        let zz_next = dotc(&z, &z).re;
        let beta = zz_next / zz;
        zz = zz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        solver: "CG on normal equations",
        iterations,
        residual: rel,
    })
}
