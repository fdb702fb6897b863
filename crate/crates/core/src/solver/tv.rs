//! Discrete isotropic total variation with forward differences.
//!
//! Differences that would reach past the last row or column are zero, so
//! `TV(x) = Σ_{i,j} sqrt(dx(i,j)² + dy(i,j)²)` drops exactly the terms
//! whose neighbour lies outside the image.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `(dx, dy)`: `dx(i,j) = x(i+1,j) - x(i,j)`, `dy(i,j) = x(i,j+1) - x(i,j)`.
pub(crate) fn grad_into(x: &[f64], rows: usize, cols: usize, dx: &mut [f64], dy: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            dx[k] = if i + 1 < rows { x[k + cols] - x[k] } else { 0.0 };
            dy[k] = if j + 1 < cols { x[k + 1] - x[k] } else { 0.0 };
        }
    }
}

/// Negative adjoint of [`grad_into`].
pub(crate) fn div_into(wx: &[f64], wy: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut v = 0.0;
            if i + 1 < rows {
                v += wx[k];
            }
            if i > 0 {
                v -= wx[k - cols];
            }
            if j + 1 < cols {
                v += wy[k];
            }
            if j > 0 {
                v -= wy[k - 1];
            }
            out[k] = v;
        }
    }
}

pub(crate) fn tv_of(x: &[f64], rows: usize, cols: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let dx = if i + 1 < rows { x[k + cols] - x[k] } else { 0.0 };
            let dy = if j + 1 < cols { x[k + 1] - x[k] } else { 0.0 };
            s += (dx * dx + dy * dy).sqrt();
        }
    }
    s
}

/// Isotropic TV norm.
pub fn tv_norm(img: &Grid) -> Result<f64> {
    let (m, n) = img.dims();
    if m < 2 || n < 2 {
        return Err(Error::Dimension(format!("TV needs at least 2x2, got {m}x{n}")));
    }
    Ok(tv_of(img.as_slice(), m, n))
}

/// Forward-difference gradient as a pair of grids `(dx, dy)`.
pub fn grad(img: &Grid) -> (Grid, Grid) {
    let (m, n) = img.dims();
    let mut dx = vec![0.0; m * n];
    let mut dy = vec![0.0; m * n];
    grad_into(img.as_slice(), m, n, &mut dx, &mut dy);
    (
        Grid::new(m, n, dx).expect("finite"),
        Grid::new(m, n, dy).expect("finite"),
    )
}

/// Divergence, the exact negative adjoint of [`grad`].
pub fn div(wx: &Grid, wy: &Grid) -> Result<Grid> {
    if wx.dims() != wy.dims() {
        return Err(Error::Dimension("divergence of mismatched fields".into()));
    }
    let (m, n) = wx.dims();
    let mut out = vec![0.0; m * n];
    div_into(wx.as_slice(), wy.as_slice(), m, n, &mut out);
    Grid::new(m, n, out)
}

/// Per-pixel isotropic shrinkage of a 2-vector field:
/// `v · max(|v| - t, 0) / |v|`, zero where `|v| = 0`.
pub(crate) fn shrink2_into(vx: &[f64], vy: &[f64], t: f64, ox: &mut [f64], oy: &mut [f64]) {
    for k in 0..vx.len() {
        let s = (vx[k] * vx[k] + vy[k] * vy[k]).sqrt();
        if s > t {
            let f = (s - t) / s;
            ox[k] = vx[k] * f;
            oy[k] = vy[k] * f;
        } else {
            ox[k] = 0.0;
            oy[k] = 0.0;
        }
    }
}

pub fn shrink2(vx: &Grid, vy: &Grid, t: f64) -> Result<(Grid, Grid)> {
    if vx.dims() != vy.dims() {
        return Err(Error::Dimension("shrinkage of mismatched fields".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {t}")));
    }
    let (m, n) = vx.dims();
    let mut ox = vec![0.0; m * n];
    let mut oy = vec![0.0; m * n];
    if t == 0.0 {
        return Ok((vx.clone(), vy.clone()));
    }
    shrink2_into(vx.as_slice(), vy.as_slice(), t, &mut ox, &mut oy);
    Ok((Grid::new(m, n, ox)?, Grid::new(m, n, oy)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::{make_phantom, PhantomKind};

    #[test]
    fn tv_examples() {
        assert_eq!(tv_norm(&Grid::filled(5, 4, 0.7)).unwrap(), 0.0);
        let g = Grid::new(2, 2, vec![0., 1., 0., 1.]).unwrap();
        assert_eq!(tv_norm(&g).unwrap(), 2.0);
        let x = Grid::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 4) as f64);
        let t = tv_norm(&x).unwrap();
        assert!((tv_norm(&x.scaled(2.5)).unwrap() - 2.5 * t).abs() < 1e-12);
        assert!(tv_norm(&Grid::zeros(1, 4)).is_err());
    }

    #[test]
    fn quadrants_tv_by_boundary_hand_sum() {
        // Row 3 (last row of the top half) has a vertical jump of 2/3 at
        // every column, column 3 a horizontal jump of 1/3 at every row; the
        // corner pixel (3,3) carries both.
        let q = make_phantom(PhantomKind::Quadrants, 8, 8).unwrap();
        let expect = 7.0 * (2.0 / 3.0) + 7.0 * (1.0 / 3.0) + (5.0f64).sqrt() / 3.0;
        assert!((tv_norm(&q).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn grad_div_basics() {
        let (dx, dy) = grad(&Grid::filled(4, 4, 3.0));
        assert!(dx.as_slice().iter().chain(dy.as_slice()).all(|&v| v == 0.0));
        let z = div(&Grid::zeros(4, 4), &Grid::zeros(4, 4)).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert!(div(&Grid::zeros(4, 4), &Grid::zeros(3, 4)).is_err());
    }

    #[test]
    fn shrink_examples() {
        let vx = Grid::new(1, 2, vec![3.0, 0.0]).unwrap();
        let vy = Grid::new(1, 2, vec![4.0, 0.0]).unwrap();
        let (ox, oy) = shrink2(&vx, &vy, 0.0).unwrap();
        assert_eq!((ox, oy), (vx.clone(), vy.clone()));
        let (ox, oy) = shrink2(&vx, &vy, 5.0).unwrap();
        assert_eq!((ox[(0, 0)], oy[(0, 0)]), (0.0, 0.0));
        let (ox, oy) = shrink2(&vx, &vy, 2.5).unwrap();
        assert!((ox[(0, 0)] - 1.5).abs() < 1e-15 && (oy[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!((ox[(0, 1)], oy[(0, 1)]), (0.0, 0.0));
        assert!(shrink2(&vx, &vy, -1.0).is_err());
    }
}
