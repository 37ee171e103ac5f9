//! Linear (non-circular) convolution of grid samples with a translation-invariant kernel,
//! evaluated by zero-padding each axis to `2J` and using FFTs.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::geometry::Grid;

thread_local! {
    static SCRATCH: RefCell<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> =
        const { RefCell::new((Vec::new(), Vec::new(), Vec::new())) };
}

/// Toeplitz (block-Toeplitz) operator `y_n = Σ_m K(r_n - r_m) x_m` on a grid.
///
/// The kernel must be even, `K(o) = K(-o)`, which holds for every Green's function here;
/// the adjoint then reduces to conjugating input and output.
#[derive(Clone)]
pub struct Convolution {
    dim: usize,
    side: usize,
    padded: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolution")
            .field("dim", &self.dim)
            .field("side", &self.side)
            .field("padded", &self.padded)
            .finish()
    }
}

impl Convolution {
    /// Builds the operator from `kernel(offset)` where `offset` is in grid steps,
    /// each component in `-(J-1)..=J-1` (third component zero in 2D).
    pub fn new(grid: &Grid, kernel: impl Fn([isize; 3]) -> Complex64) -> Self {
        let dim = grid.dim();
        let side = grid.side();
        let padded = 2 * side;
        let total = padded.pow(dim as u32);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(padded);
        let inverse = planner.plan_fft_inverse(padded);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); total];
        let j = side as isize;
        let wrap = |o: isize| o.rem_euclid(padded as isize) as usize;
        let zs: Vec<isize> = if dim == 3 {
            (-(j - 1)..j).collect()
        } else {
            vec![0]
        };
        for &oz in &zs {
            for oy in -(j - 1)..j {
                for ox in -(j - 1)..j {
                    let idx = wrap(ox) + padded * (wrap(oy) + padded * wrap(oz));
                    spectrum[idx] = kernel([ox, oy, oz]);
                }
            }
        }
        let mut conv = Self {
            dim,
            side,
            padded,
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        let mut scratch = vec![Complex64::new(0.0, 0.0); conv.scratch_len()];
        let mut line = vec![Complex64::new(0.0, 0.0); padded];
        conv.transform(&mut spectrum, &mut line, &mut scratch, false, false);
        // fold the 1/P^d inverse normalisation into the stored spectrum
        let scale = 1.0 / total as f64;
        for v in spectrum.iter_mut() {
            *v *= scale;
        }
        conv.spectrum = spectrum;
        conv
    }

    pub fn len(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// FFT over all axes of a padded buffer. With `pruned`, lines that are identically zero
    /// (forward, zero-padded input) or never read back (inverse) are skipped.
    fn transform(
        &self,
        buf: &mut [Complex64],
        line: &mut [Complex64],
        scratch: &mut [Complex64],
        inverse: bool,
        pruned: bool,
    ) {
        let p = self.padded;
        let j = self.side;
        let fft = if inverse { &self.inverse } else { &self.forward };
        let planes = if self.dim == 3 { p } else { 1 };
        // forward: x-axis, then y, then z; inverse: z, then y, then x
        let order: &[usize] = match (self.dim, inverse) {
            (2, false) => &[0, 1],
            (2, true) => &[1, 0],
            (_, false) => &[0, 1, 2],
            (_, true) => &[2, 1, 0],
        };
        for &axis in order {
            match axis {
                0 => {
                    for z in 0..planes {
                        if pruned && z >= j && self.dim == 3 {
                            continue;
                        }
                        for y in 0..p {
                            if pruned && y >= j {
                                continue;
                            }
                            let start = p * (y + p * z);
                            fft.process_with_scratch(&mut buf[start..start + p], scratch);
                        }
                    }
                }
                1 => {
                    for z in 0..planes {
                        if pruned && z >= j && self.dim == 3 {
                            continue;
                        }
                        // every x column is nonzero after (forward) or needed by (inverse)
                        // the x-axis pass, so only z planes can be skipped
                        for x in 0..p {
                            let base = x + p * p * z;
                            for y in 0..p {
                                line[y] = buf[base + p * y];
                            }
                            fft.process_with_scratch(line, scratch);
                            for y in 0..p {
                                buf[base + p * y] = line[y];
                            }
                        }
                    }
                }
                _ => {
                    let plane = p * p;
                    for xy in 0..plane {
                        for z in 0..p {
                            line[z] = buf[xy + plane * z];
                        }
                        fft.process_with_scratch(line, scratch);
                        for z in 0..p {
                            buf[xy + plane * z] = line[z];
                        }
                    }
                }
            }
        }
    }

    /// `y = K * x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        self.apply_into(x, &mut out, false);
        out
    }

    /// `y = Kᴴ x`.
    pub fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        self.apply_into(x, &mut out, true);
        out
    }

    pub fn apply_into(&self, x: &[Complex64], out: &mut [Complex64], adjoint: bool) {
        assert_eq!(x.len(), self.len(), "convolution input length");
        assert_eq!(out.len(), self.len(), "convolution output length");
        let p = self.padded;
        let j = self.side;
        let total = p.pow(self.dim as u32);
        let zs = if self.dim == 3 { j } else { 1 };
        SCRATCH.with(|cell| {
            let mut guard = cell.borrow_mut();
            let (buf, line, scratch) = &mut *guard;
            buf.clear();
            buf.resize(total, Complex64::new(0.0, 0.0));
            line.resize(p, Complex64::new(0.0, 0.0));
            scratch.resize(self.scratch_len(), Complex64::new(0.0, 0.0));
            for z in 0..zs {
                for y in 0..j {
                    let src = j * (y + j * z);
                    let dst = p * (y + p * z);
                    for i in 0..j {
                        let v = x[src + i];
                        buf[dst + i] = if adjoint { v.conj() } else { v };
                    }
                }
            }
            self.transform(buf, line, scratch, false, true);
            for (b, s) in buf.iter_mut().zip(&self.spectrum) {
                *b *= s;
            }
            self.transform(buf, line, scratch, true, true);
            for z in 0..zs {
                for y in 0..j {
                    let dst = j * (y + j * z);
                    let src = p * (y + p * z);
                    for i in 0..j {
                        let v = buf[src + i];
                        out[dst + i] = if adjoint { v.conj() } else { v };
                    }
                }
            }
        });
    }
}
