//! Dense reference assemblies shared by the integration tests.
#![allow(dead_code)]

use diffract::geometry::{sub, Grid, Layout, PhysicsConfig};
use diffract::special::{scalar_green, self_term};
use diffract::Complex64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

pub fn random_contrast(n: usize, c: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..c)).collect()
}

pub fn random_complex(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// `G_ij = k²δᵈ g(r_i - r_j)` with the cell-averaged self term on the diagonal.
pub fn dense_green(grid: &Grid, phys: &PhysicsConfig, weight: f64) -> DMatrix<Complex64> {
    let n = grid.len();
    let pts = grid.points();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            weight * self_term(grid, phys)
        } else {
            weight * scalar_green(&sub(&pts[i], &pts[j]), phys, grid.dim()).unwrap()
        }
    })
}

/// `D_{(i,n),(j,m)}` from the printed stencil coefficients.
pub fn stencil(i: usize, j: usize, offset: [isize; 3], d2: f64) -> f64 {
    let ei = |a: usize, s: isize| {
        let mut o = [0; 3];
        o[a] = s;
        o
    };
    if i == j {
        if offset == [0, 0, 0] {
            -2.0 / d2
        } else if offset == ei(i, 1) || offset == ei(i, -1) {
            1.0 / d2
        } else {
            0.0
        }
    } else {
        for si in [-1isize, 1] {
            for sj in [-1isize, 1] {
                let mut o = [0; 3];
                o[i] = si;
                o[j] = sj;
                if offset == o {
                    return (si * sj) as f64 / (4.0 * d2);
                }
            }
        }
        0.0
    }
}

pub fn dense_graddiv(grid: &Grid) -> DMatrix<Complex64> {
    let n = grid.len();
    let d2 = grid.pitch().powi(2);
    DMatrix::from_fn(3 * n, 3 * n, |r, c| {
        let (i, a) = (r / n, r % n);
        let (j, b) = (c / n, c % n);
        let (ua, ub) = (grid.unravel(a), grid.unravel(b));
        let off = [
            ub[0] as isize - ua[0] as isize,
            ub[1] as isize - ua[1] as isize,
            ub[2] as isize - ua[2] as isize,
        ];
        Complex64::new(stencil(i, j, off, d2), 0.0)
    })
}

pub fn block_diag3(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(3 * n, 3 * n);
    for b in 0..3 {
        out.view_mut((b * n, b * n), (n, n)).copy_from(m);
    }
    out
}

pub fn sphere_layout() -> Layout {
    let r = 0.5;
    let tx = vec![[r, 0.0, 0.1], [0.0, -r, -0.2], [-0.3, 0.3, 0.25]];
    let rx = (0..8)
        .map(|m| {
            let a = m as f64 * std::f64::consts::PI / 4.0;
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect();
    Layout::all_active(tx, rx)
}

/// `I - G diag(f)` in 2D.
pub fn dense_system_2d(grid: &Grid, phys: &PhysicsConfig, f: &[f64]) -> DMatrix<Complex64> {
    let n = grid.len();
    let k = phys.k();
    let g = dense_green(grid, phys, k * k * grid.cell_measure());
    DMatrix::<Complex64>::identity(n, n) - g * real_diag(f.iter().copied())
}

/// `I - (k²I + D)(I₃⊗G) F` in 3D, with `k` the dyadic wavenumber.
pub fn dense_system_3d(grid: &Grid, phys: &PhysicsConfig, f: &[f64]) -> DMatrix<Complex64> {
    let n = grid.len();
    let k2 = phys.dyadic_k().powi(2);
    let g3 = block_diag3(&dense_green(grid, phys, grid.cell_measure()));
    let kd = DMatrix::<Complex64>::identity(3 * n, 3 * n) * Complex64::new(k2, 0.0) + dense_graddiv(grid);
    DMatrix::<Complex64>::identity(3 * n, 3 * n) - kd * g3 * real_diag((0..3 * n).map(|i| f[i % n]))
}

pub fn real_diag(v: impl ExactSizeIterator<Item = f64>) -> DMatrix<Complex64> {
    let n = v.len();
    DMatrix::from_diagonal(&DVector::from_iterator(n, v.map(|x| Complex64::new(x, 0.0))))
}

/// `|⟨Ax, y⟩ - ⟨x, Aᴴy⟩|`, relative to the larger of `‖Ax‖‖y‖` and `‖x‖‖Aᴴy‖`.
pub fn adjoint_mismatch(ax: &[Complex64], y: &[Complex64], x: &[Complex64], ahy: &[Complex64]) -> f64 {
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(p, q)| p * q.conj()).sum() };
    let norm = |a: &[Complex64]| a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    (dot(ax, y) - dot(x, ahy)).norm() / (norm(ax) * norm(y)).max(norm(x) * norm(ahy))
}
