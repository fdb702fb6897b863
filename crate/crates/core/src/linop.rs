//! Matrix-free linear maps from an image to a measurement vector.

use rayon::prelude::*;

/// A linear map `A: R^(rows*cols) -> R^len` given by its action and the
/// action of its transpose. Images are vectorized row-major.
pub trait LinearOperator: Sync {
    fn image_dims(&self) -> (usize, usize);

    fn num_measurements(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Vec<f64>;

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;

    fn num_pixels(&self) -> usize {
        let (r, c) = self.image_dims();
        r * c
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn image_dims(&self) -> (usize, usize) {
        (**self).image_dims()
    }
    fn num_measurements(&self) -> usize {
        (**self).num_measurements()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        (**self).apply_adjoint(y)
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    image_dims: (usize, usize),
}

impl DenseMatrix {
    pub fn new(rows: usize, image_dims: (usize, usize), data: Vec<f64>) -> Self {
        let cols = image_dims.0 * image_dims.1;
        assert_eq!(data.len(), rows * cols, "matrix data length");
        DenseMatrix {
            rows,
            cols,
            data,
            image_dims,
        }
    }

    pub fn zeros(rows: usize, image_dims: (usize, usize)) -> Self {
        let cols = image_dims.0 * image_dims.1;
        Self::new(rows, image_dims, vec![0.0; rows * cols])
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix::new(rows.len(), self.image_dims, data)
    }
}

impl LinearOperator for DenseMatrix {
    fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    fn num_measurements(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        self.data
            .par_chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
        out
    }
}

/// Dense ±1 matrix, bit-packed (bit set means +1).
///
/// Products use byte lookup tables: for every group of eight columns the
/// 256 possible signed sums of the matching `x` entries are tabulated once,
/// after which each row costs one lookup per group. The transpose does the
/// same over groups of eight rows. Two layouts are kept, one per direction.
/// Summation order is fixed, so results do not depend on the thread count.
#[derive(Debug, Clone)]
pub struct SignMatrix {
    rows: usize,
    cols: usize,
    image_dims: (usize, usize),
    /// byte `g * rows + r`: columns `8g..8g+8` of row `r`
    by_row: Vec<u8>,
    /// byte `g * cols + c`: rows `8g..8g+8` of column `c`
    by_col: Vec<u8>,
}

/// Rows (or columns) per parallel work item.
const SIGN_BLOCK: usize = 256;

impl SignMatrix {
    /// From row-major entries, each `1` or `-1`.
    pub fn new(rows: usize, image_dims: (usize, usize), data: Vec<i8>) -> Self {
        let cols = image_dims.0 * image_dims.1;
        assert_eq!(data.len(), rows * cols, "matrix data length");
        assert!(data.iter().all(|&s| s == 1 || s == -1), "entries must be ±1");
        Self::from_fn(rows, image_dims, |r, c| data[r * cols + c] > 0)
    }

    /// `positive(r, c)` is called once per entry in row-major order.
    pub fn from_fn(rows: usize, image_dims: (usize, usize), mut positive: impl FnMut(usize, usize) -> bool) -> Self {
        let cols = image_dims.0 * image_dims.1;
        let (cg, rg) = (cols.div_ceil(8), rows.div_ceil(8));
        let mut by_row = vec![0u8; cg * rows];
        let mut by_col = vec![0u8; rg * cols];
        for r in 0..rows {
            for c in 0..cols {
                if positive(r, c) {
                    by_row[(c / 8) * rows + r] |= 1 << (c % 8);
                    by_col[(r / 8) * cols + c] |= 1 << (r % 8);
                }
            }
        }
        SignMatrix {
            rows,
            cols,
            image_dims,
            by_row,
            by_col,
        }
    }

    pub fn at(&self, r: usize, c: usize) -> i8 {
        if self.by_row[(c / 8) * self.rows + r] >> (c % 8) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                data.push(self.at(r, c) as f64);
            }
        }
        DenseMatrix::new(self.rows, self.image_dims, data)
    }
}

/// `table[g * 256 + b] = Σ_k ±v[8g + k]`, sign `+` where bit `k` of `b` is
/// set; entries past the end of `v` count as zero.
fn sign_tables(v: &[f64]) -> Vec<f64> {
    let groups = v.len().div_ceil(8);
    let mut t = vec![0.0; groups * 256];
    for g in 0..groups {
        let part = &v[8 * g..(8 * g + 8).min(v.len())];
        let tab = &mut t[g * 256..(g + 1) * 256];
        tab[0] = -part.iter().sum::<f64>();
        for b in 1..256usize {
            let k = b.trailing_zeros() as usize;
            tab[b] = tab[b & (b - 1)] + if k < part.len() { 2.0 * part[k] } else { 0.0 };
        }
    }
    t
}

/// `out[i] = Σ_g tables[g][bytes[g * len + i]]` for `i` in `out`'s range
/// starting at `offset`.
fn lookup_sum(tables: &[f64], bytes: &[u8], len: usize, offset: usize, out: &mut [f64]) {
    let groups = tables.len() / 256;
    for g in 0..groups {
        let tab = &tables[g * 256..(g + 1) * 256];
        let row = &bytes[g * len + offset..g * len + offset + out.len()];
        for (o, &b) in out.iter_mut().zip(row) {
            *o += tab[b as usize];
        }
    }
}

impl LinearOperator for SignMatrix {
    fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    fn num_measurements(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let tables = sign_tables(x);
        let mut out = vec![0.0; self.rows];
        out.par_chunks_mut(SIGN_BLOCK).enumerate().for_each(|(k, chunk)| {
            lookup_sum(&tables, &self.by_row, self.rows, k * SIGN_BLOCK, chunk);
        });
        out
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let tables = sign_tables(y);
        let mut out = vec![0.0; self.cols];
        out.par_chunks_mut(SIGN_BLOCK).enumerate().for_each(|(k, chunk)| {
            lookup_sum(&tables, &self.by_col, self.cols, k * SIGN_BLOCK, chunk);
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_sign_agree() {
        // 13 rows x 15 columns: neither is a multiple of the byte width.
        let data: Vec<i8> = (0..13 * 15).map(|k| if (k * 7) % 3 == 0 { 1 } else { -1 }).collect();
        let s = SignMatrix::new(13, (3, 5), data);
        let d = s.to_dense();
        let x: Vec<f64> = (0..15).map(|k| k as f64 * 0.5 - 2.0).collect();
        let y: Vec<f64> = (0..13).map(|k| 1.0 - k as f64).collect();
        for (a, b) in s.apply(&x).iter().zip(d.apply(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in s.apply_adjoint(&y).iter().zip(d.apply_adjoint(&y)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.at(0, 0), 1);
        assert_eq!(s.at(0, 1), -1);
        let lhs: f64 = d.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = d.apply_adjoint(&y).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
