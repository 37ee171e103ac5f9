//! Bessel kernels and the free-space Green's functions built from them.
//!
//! `J0, J1, Y0, Y1` come from Miller's backward recurrence (normalised with
//! `J0 + 2ΣJ_2k = 1`) and Neumann series for `x ≤ 25`, and from Hankel's asymptotic
//! expansion beyond that, where its smallest term is below double precision.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Grid, PhysicsConfig, Point};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const ASYMPTOTIC_FROM: f64 = 25.0;

/// `(J0, J1, Y0, Y1)` at `x > 0`.
pub fn bessel_01(x: f64) -> Result<(f64, f64, f64, f64)> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(x));
    }
    if x > ASYMPTOTIC_FROM {
        let (j0, y0) = hankel_asymptotic(0, x);
        let (j1, y1) = hankel_asymptotic(1, x);
        return Ok((j0, j1, y0, y1));
    }
    Ok(miller(x))
}

fn miller(x: f64) -> (f64, f64, f64, f64) {
    let start = (x + 30.0 + 6.0 * x.sqrt()).ceil() as usize;
    let top = start + (start % 2);
    let mut j = vec![0.0_f64; top + 2];
    j[top] = 1e-30;
    for n in (1..=top).rev() {
        j[n - 1] = 2.0 * n as f64 / x * j[n] - j[n + 1];
        if j[n - 1].abs() > 1e250 {
            for v in j[n - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for v in j.iter_mut() {
        *v /= norm;
    }
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let mut sum0 = 0.0;
    let mut sum1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 <= top + 1 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum0 += sign * j[2 * k] / k as f64;
        sum1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = 2.0 / PI * log_term * j[0] - 4.0 / PI * sum0;
    let y1 = -2.0 / (PI * x) * j[0] + 2.0 / PI * log_term * j[1] + 2.0 / PI * sum1;
    (j[0], j[1], y0, y1)
}

/// Hankel's expansion; returns `(J_ν, Y_ν)` for ν ∈ {0, 1}.
fn hankel_asymptotic(order: u32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        // term = a_k(ν) / x^k
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        }
        if term.abs() > last {
            break;
        }
        last = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if term.abs() < 1e-18 * p.abs().max(1e-300) {
            break;
        }
    }
    // chi = x - (ν/2 + 1/4)π, expanded so the phase of large x stays exact
    let (sx, cx) = x.sin_cos();
    let (cos_chi, sin_chi) = if order == 0 {
        ((cx + sx) * FRAC_1_SQRT_2, (sx - cx) * FRAC_1_SQRT_2)
    } else {
        ((sx - cx) * FRAC_1_SQRT_2, -(cx + sx) * FRAC_1_SQRT_2)
    };
    let amp = (2.0 / (PI * x)).sqrt();
    (
        amp * (p * cos_chi - q * sin_chi),
        amp * (p * sin_chi + q * cos_chi),
    )
}

/// `H0⁽¹⁾(x) = J0(x) + jY0(x)` for `x > 0`.
pub fn hankel_h0_first_kind(x: f64) -> Result<Complex64> {
    let (j0, _, y0, _) = bessel_01(x)?;
    Ok(Complex64::new(j0, y0))
}

/// `H1⁽¹⁾(x) = J1(x) + jY1(x)` for `x > 0`.
pub fn hankel_h1_first_kind(x: f64) -> Result<Complex64> {
    let (_, j1, _, y1) = bessel_01(x)?;
    Ok(Complex64::new(j1, y1))
}

/// Free-space scalar Green's function of the background medium.
///
/// 2D: `-(j/4) H0⁽¹⁾(k_b‖r‖)`; 3D: `exp(j k_b‖r‖) / (4π‖r‖)`.
pub fn scalar_green(r: &Point, physics: &PhysicsConfig, dim: usize) -> Result<Complex64> {
    let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !(d > 0.0) {
        return Err(Error::Domain(d));
    }
    let kb = physics.kb();
    match dim {
        2 => Ok(Complex64::new(0.0, -0.25) * hankel_h0_first_kind(kb * d)?),
        3 => Ok(Complex64::from_polar(1.0 / (4.0 * PI * d), kb * d)),
        _ => Err(Error::InvalidArgument(format!("dimension {dim}"))),
    }
}

/// 3×3 free-space dyadic Green's function `(k²I + ∇∇)g` in closed form.
pub fn dyadic_green(r: &Point, physics: &PhysicsConfig) -> Result<[[Complex64; 3]; 3]> {
    let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !(d > 0.0) {
        return Err(Error::Domain(d));
    }
    let k = physics.dyadic_k();
    let g = scalar_green(r, physics, 3)?;
    let kd = k * d;
    let outer = Complex64::new(3.0 / (kd * kd) - 1.0, -3.0 / kd);
    let diag = Complex64::new(1.0 - 1.0 / (kd * kd), 1.0 / kd);
    let rh = [r[0] / d, r[1] / d, r[2] / d];
    let mut out = [[Complex64::new(0.0, 0.0); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut v = outer * rh[a] * rh[b];
            if a == b {
                v += diag;
            }
            out[a][b] = v * g * (k * k);
        }
    }
    Ok(out)
}

/// Cell-averaged scalar Green's function for the singular self-interaction.
///
/// Integrates `g` analytically over the disk (2D) or ball (3D) with the pixel's area or
/// volume and divides by that measure.
pub fn self_term(grid: &Grid, physics: &PhysicsConfig) -> Complex64 {
    let kb = physics.kb();
    let measure = grid.cell_measure();
    let j = Complex64::new(0.0, 1.0);
    if grid.dim() == 2 {
        let a = grid.pitch() / PI.sqrt();
        // ∫_disk -(j/4) H0(kb ρ) dA = 1/kb² - (jπa / 2kb) H1(kb a)
        let h1 = hankel_h1_first_kind(kb * a).expect("positive radius");
        let integral = 1.0 / (kb * kb) - j * (PI * a / (2.0 * kb)) * h1;
        integral / measure
    } else {
        let a = grid.pitch() * (3.0 / (4.0 * PI)).cbrt();
        // ∫_ball e^{jkr}/(4πr) dV = ((1 - j kb a) e^{j kb a} - 1) / kb²
        let e = Complex64::from_polar(1.0, kb * a);
        let integral = ((1.0 - j * (kb * a)) * e - 1.0) / (kb * kb);
        integral / measure
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    /// Reference values of H0⁽¹⁾ and H1⁽¹⁾ computed at 40 significant digits.
    const REFERENCE: &[(f64, f64, f64, f64, f64)] = &[
        (1e-06, 0.99999999999975, -8.86903148165944373, 4.99999999999937477e-7, -636619.772372175043),
        (0.001, 0.999999750000015625, -4.47141661137592326, 0.000499999937500002615, -636.622167231139415),
        (0.1, 0.997501562066040032, -1.53423865135036681, 0.0499375260362420003, -6.45895109470202664),
        (0.5, 0.938469807240812904, -0.444518733506706557, 0.242268457674873886, -1.47147239267024307),
        (1.0, 0.765197686557966551, 0.088256964215676958, 0.440050585744933516, -0.781212821300288717),
        (2.0, 0.223890779141235668, 0.51037567264974512, 0.576724807756873387, -0.107032431540937547),
        (2.404825557695773, -6.1087652597367304e-17, 0.509924383448479065, 0.519147497289466763, 0.102746682438259595),
        (5.0, -0.177596771314338304, -0.30851762524903378, -0.327579137591465222, 0.147863143391226845),
        (7.9, 0.19436184484127824, 0.206520948144375769, 0.219179399921751203, -0.181721077280573128),
        (8.0, 0.171650807137553906, 0.223521489387566221, 0.234636346853914624, -0.158060461731247494),
        (8.1, 0.14751745404437767, 0.238091328702234809, 0.247607766981592877, -0.133148795952495926),
        (10.0, -0.245935764451348335, 0.0556711672835993914, 0.0434727461688614367, 0.249015424206953884),
        (12.5, 0.146884054700421102, -0.171214306844669287, -0.165483804614759718, -0.15383825653750118),
        (20.0, 0.167024664340583155, 0.0626405968093838312, 0.0668331241758500456, -0.165511614362521296),
        (24.9, 0.0832459683530154901, -0.136499183996765235, -0.134855699531408869, -0.0860025575955542525),
        (25.0, 0.0962667832759581162, -0.127249432268006138, -0.125350249580289905, -0.0988299647832374101),
        (25.1, 0.108275671499949452, -0.116767707638036947, -0.114634784134422567, -0.110622233227830988),
        (30.0, -0.0863679835810402113, -0.117295731686664025, -0.118751062616622937, 0.0844255706617472349),
        (50.0, 0.055812327669251815, -0.098064995470077079, -0.0975118281251751377, -0.0567956685620147679),
        (100.0, 0.0199858503042231224, -0.0772443133650831523, -0.077145352014112158, -0.0203723120027597933),
        (1000.0, 0.0247866861524201746, 0.0047159179776228134, 0.00472831190708952392, -0.0247843312923517789),
        (10000.0, -0.00709616035338880148, 0.00364780555898660589, 0.00364745075552958034, 0.00709634275253649514),
    ];

    /// Power series for J0 and Y0, summed until terms vanish.
    fn series_j0_y0(x: f64) -> (f64, f64) {
        let q = 0.25 * x * x;
        let (mut j0, mut term, mut harmonic, mut ysum) = (1.0, 1.0, 0.0, 0.0);
        for k in 1..200 {
            term *= -q / (k * k) as f64;
            harmonic += 1.0 / k as f64;
            j0 += term;
            ysum -= term * harmonic;
            if term.abs() < 1e-20 {
                break;
            }
        }
        let y0 = 2.0 / PI * (((0.5 * x).ln() + EULER_GAMMA) * j0 + ysum);
        (j0, y0)
    }

    #[test]
    fn h0_matches_reference_table() {
        for &(x, re, im, _, _) in REFERENCE {
            let h = hankel_h0_first_kind(x).unwrap();
            let exact = Complex64::new(re, im);
            let rel = (h - exact).norm() / exact.norm();
            assert!(rel <= 1e-10, "x={x}: rel {rel:e}");
        }
    }

    #[test]
    fn h1_matches_reference_table() {
        for &(x, _, _, re, im) in REFERENCE {
            let h = hankel_h1_first_kind(x).unwrap();
            let exact = Complex64::new(re, im);
            let rel = (h - exact).norm() / exact.norm();
            assert!(rel <= 1e-10, "x={x}: rel {rel:e}");
        }
    }

    #[test]
    fn h0_at_one_matches_power_series() {
        let (j0, y0) = series_j0_y0(1.0);
        let h = hankel_h0_first_kind(1.0).unwrap();
        assert!((h.re - j0).abs() < 1e-15);
        assert!((h.im - y0).abs() < 1e-15);
    }

    #[test]
    fn h0_at_fifty_near_asymptote() {
        let x: f64 = 50.0;
        let h = hankel_h0_first_kind(x).unwrap();
        let asym = Complex64::from_polar((2.0 / (PI * x)).sqrt(), x - PI / 4.0);
        assert!((h - asym).norm() / asym.norm() < 0.01);
    }

    #[test]
    fn nonpositive_argument_rejected() {
        assert!(hankel_h0_first_kind(0.0).is_err());
        assert!(hankel_h0_first_kind(-1.0).is_err());
        assert!(hankel_h0_first_kind(f64::NAN).is_err());
    }

    #[test]
    fn wronskian_with_numerical_derivatives() {
        for i in 0..400 {
            let x = 0.05 * 1.02_f64.powi(i);
            if x > 1e3 {
                break;
            }
            let h = 1e-5 * x.min(1.0);
            let (jp, _, yp, _) = bessel_01(x + h).unwrap();
            let (jm, _, ym, _) = bessel_01(x - h).unwrap();
            let (j0, _, y0, _) = bessel_01(x).unwrap();
            let dj = (jp - jm) / (2.0 * h);
            let dy = (yp - ym) / (2.0 * h);
            let w = j0 * dy - dj * y0;
            let exact = 2.0 / (PI * x);
            assert!((w - exact).abs() <= 1e-8 * exact, "x={x}: {w} vs {exact}");
        }
    }

    #[test]
    fn branch_switch_is_continuous() {
        let below = bessel_01(ASYMPTOTIC_FROM).unwrap();
        let above = bessel_01(ASYMPTOTIC_FROM * (1.0 + 1e-15)).unwrap();
        assert!((below.0 - above.0).abs() < 1e-12);
        assert!((below.2 - above.2).abs() < 1e-12);
    }

    #[test]
    fn scalar_green_3d_at_one_wavelength() {
        let phys = PhysicsConfig::new(0.3, 2.25).unwrap();
        let lb = 0.3 / 1.5;
        let g = scalar_green(&[0.0, lb, 0.0], &phys, 3).unwrap();
        let mag = 1.0 / (4.0 * PI * lb);
        assert!((g - Complex64::new(mag, 0.0)).norm() < 1e-12 * mag);
    }

    #[test]
    fn scalar_green_is_even() {
        let phys = PhysicsConfig::new(0.1, 1.7).unwrap();
        let r = [0.031, -0.017, 0.004];
        let m = [-0.031, 0.017, -0.004];
        for d in [2, 3] {
            assert_eq!(
                scalar_green(&r, &phys, d).unwrap(),
                scalar_green(&m, &phys, d).unwrap()
            );
        }
        assert!(scalar_green(&[0.0; 3], &phys, 2).is_err());
    }

    #[test]
    fn scalar_green_2d_at_unit_argument() {
        let phys = PhysicsConfig::new(2.0 * PI, 1.0).unwrap();
        let g = scalar_green(&[1.0, 0.0, 0.0], &phys, 2).unwrap();
        let (j0, y0) = series_j0_y0(1.0);
        let expect = Complex64::new(0.0, -0.25) * Complex64::new(j0, y0);
        assert!((g - expect).norm() < 1e-15);
    }

    #[test]
    fn dyadic_symmetric_and_even() {
        let phys = PhysicsConfig::new(0.05, 1.0).unwrap();
        let r = [0.03, -0.02, 0.011];
        let g = dyadic_green(&r, &phys).unwrap();
        let gm = dyadic_green(&[-0.03, 0.02, -0.011], &phys).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(g[a][b], g[b][a]);
                assert!((g[a][b] - gm[a][b]).norm() <= 1e-15 * g[a][b].norm().max(1e-300));
            }
        }
        assert!(dyadic_green(&[0.0; 3], &phys).is_err());
    }

    #[test]
    fn dyadic_far_field() {
        let phys = PhysicsConfig::new(1.0, 1.0).unwrap();
        let k = phys.k();
        let d = 1e3 / k;
        let rh = [0.48, 0.6, 0.64];
        let r = [rh[0] * d, rh[1] * d, rh[2] * d];
        let g = dyadic_green(&r, &phys).unwrap();
        let s = scalar_green(&r, &phys, 3).unwrap();
        let scale = (k * k) * s.norm();
        for a in 0..3 {
            for b in 0..3 {
                let far = (if a == b { 1.0 } else { 0.0 } - rh[a] * rh[b]) * k * k * s;
                assert!((g[a][b] - far).norm() <= 5e-3 * scale);
            }
        }
    }

    #[test]
    fn dyadic_equals_hessian_of_scalar() {
        let phys = PhysicsConfig::new(1.0, 1.0).unwrap();
        let k = phys.k();
        for kd in [1.0, 2.5, 10.0] {
            let d = kd / k;
            let dir = [0.3, -0.5, 0.81];
            let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2] as f64).sqrt();
            let r = [dir[0] / n * d, dir[1] / n * d, dir[2] / n * d];
            let h = 1e-4 * d;
            let g = |p: Point| scalar_green(&p, &phys, 3).unwrap();
            let exact = dyadic_green(&r, &phys).unwrap();
            let scale = exact
                .iter()
                .flat_map(|row| row.iter())
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            for a in 0..3 {
                for b in 0..3 {
                    let shift = |p: Point, i: usize, s: f64| {
                        let mut q = p;
                        q[i] += s;
                        q
                    };
                    let second = if a == b {
                        (g(shift(r, a, h)) - 2.0 * g(r) + g(shift(r, a, -h))) / (h * h)
                    } else {
                        (g(shift(shift(r, a, h), b, h)) - g(shift(shift(r, a, h), b, -h))
                            - g(shift(shift(r, a, -h), b, h))
                            + g(shift(shift(r, a, -h), b, -h)))
                            / (4.0 * h * h)
                    };
                    let fd = second + if a == b { k * k * g(r) } else { 0.0.into() };
                    assert!(
                        (fd - exact[a][b]).norm() <= 1e-4 * scale,
                        "kd={kd} ({a},{b}): {fd} vs {}",
                        exact[a][b]
                    );
                }
            }
        }
    }

    #[test]
    fn self_term_vanishes_with_cell() {
        let phys = PhysicsConfig::new(1.0, 1.0).unwrap();
        for d in [2, 3] {
            let mut last = f64::INFINITY;
            for p in [1e-1, 1e-2, 1e-3, 1e-4] {
                let g = build_grid(d, 4, p).unwrap();
                let v = self_term(&g, &phys).norm() * g.cell_measure();
                assert!(v < last);
                last = v;
            }
            assert!(last < 1e-6);
        }
    }

    #[test]
    fn self_term_2d_small_cell_log_dominated() {
        let phys = PhysicsConfig::new(1.0, 1.0).unwrap();
        let g = build_grid(2, 4, 1e-4).unwrap();
        let kb = phys.kb();
        let a = g.pitch() / PI.sqrt();
        // small-argument expansion of the disk average of -(j/4) H0
        let x = kb * a;
        let expect = Complex64::new(0.0, -0.25)
            * Complex64::new(1.0, 2.0 / PI * ((0.5 * x).ln() + EULER_GAMMA - 0.5));
        let v = self_term(&g, &phys);
        assert!((v - expect).norm() / expect.norm() < 1e-6);
        // the logarithmic term lands in the real part and dominates
        assert!(v.re.abs() > 4.0 * v.im.abs());
    }

    #[test]
    fn self_term_3d_matches_quadrature() {
        let phys = PhysicsConfig::new(1.0, 1.0).unwrap();
        let g = build_grid(3, 4, 0.05).unwrap();
        let kb = phys.kb();
        let a = g.pitch() * (3.0 / (4.0 * PI)).cbrt();
        // ∫_0^a r e^{jkr} dr by composite Simpson
        let n = 2000;
        let h = a / n as f64;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..=n {
            let r = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * r * Complex64::from_polar(1.0, kb * r);
        }
        s *= h / 3.0;
        let expect = s / g.cell_measure();
        assert!((self_term(&g, &phys) - expect).norm() / expect.norm() < 1e-10);
    }
}
