//! Valid-region 2-D cross-correlation through a zero-padded FFT.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

/// Precomputed spectrum of a fixed `R x C` kernel `K`.
///
/// [`Correlator::correlate`] evaluates
/// `out(i, j) = Σ_{p,q} K(i+p, j+q) x(p, q)` for an input `x` of size
/// `h x w` and output `oh x ow` with `oh + h - 1 <= R`, `ow + w - 1 <= C`.
/// Under that bound the circular correlation on the `R x C` torus never
/// wraps, so the result equals the direct sum.
pub(crate) struct Correlator {
    rows: usize,
    cols: usize,
    // Spectrum stored transposed: index [v * rows + u].
    kernel_hat: Vec<Complex64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Correlator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Correlator {
    pub(crate) fn new(kernel: &Grid) -> Self {
        let (rows, cols) = kernel.dims();
        let mut planner = FftPlanner::new();
        let mut c = Correlator {
            rows,
            cols,
            kernel_hat: Vec::new(),
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        };
        c.kernel_hat = c.forward_2d(kernel.as_slice(), rows, cols);
        c
    }

    /// 2-D forward DFT of a real `h x w` block placed at the origin of the
    /// `rows x cols` domain; returns the transposed spectrum.
    fn forward_2d(&self, x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
        let (rows, cols) = (self.rows, self.cols);
        let mut buf = vec![Complex64::new(0.0, 0.0); h * cols];
        for i in 0..h {
            for j in 0..w {
                buf[i * cols + j] = Complex64::new(x[i * w + j], 0.0);
            }
        }
        self.row_fwd.process(&mut buf);
        // Rows h..rows are zero, so their row transforms are zero too.
        let mut t = vec![Complex64::new(0.0, 0.0); rows * cols];
        for i in 0..h {
            for v in 0..cols {
                t[v * rows + i] = buf[i * cols + v];
            }
        }
        self.col_fwd.process(&mut t);
        t
    }

    pub(crate) fn correlate(&self, x: &[f64], in_dims: (usize, usize), out_dims: (usize, usize)) -> Vec<f64> {
        let (h, w) = in_dims;
        let (oh, ow) = out_dims;
        assert_eq!(x.len(), h * w);
        assert!(oh + h <= self.rows + 1 && ow + w <= self.cols + 1, "correlation would wrap");
        let (rows, cols) = (self.rows, self.cols);

        let mut t = self.forward_2d(x, h, w);
        for (s, k) in t.iter_mut().zip(&self.kernel_hat) {
            *s = k * s.conj();
        }
        self.col_inv.process(&mut t);
        let mut buf = vec![Complex64::new(0.0, 0.0); oh * cols];
        for i in 0..oh {
            for v in 0..cols {
                buf[i * cols + v] = t[v * rows + i];
            }
        }
        self.row_inv.process(&mut buf);
        let scale = 1.0 / (rows * cols) as f64;
        let mut out = Vec::with_capacity(oh * ow);
        for i in 0..oh {
            for j in 0..ow {
                out.push(buf[i * cols + j].re * scale);
            }
        }
        out
    }
}

/// Direct-sum reference for the same quantity.
#[cfg(test)]
pub(crate) fn correlate_direct(kernel: &Grid, x: &Grid, out_dims: (usize, usize)) -> Grid {
    Grid::from_fn(out_dims.0, out_dims.1, |i, j| {
        let mut s = 0.0;
        for p in 0..x.rows() {
            for q in 0..x.cols() {
                s += kernel[(i + p, j + q)] * x[(p, q)];
            }
        }
        s
    })
}
