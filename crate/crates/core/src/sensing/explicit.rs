use crate::error::{Error, Result};
use crate::linop::{DenseMatrix, LinearOperator};
use crate::sensing::measurement::Architecture;
use crate::sensing::operator::SensingOperator;

/// Largest `m·n` for which the dense matrix is built.
pub const EXPLICIT_MAX_PIXELS: usize = 4096;

/// Dense sensing matrix of `op`, built entry by entry.
///
/// Full read-out: the row of detector `(i, j)` (row-major) is the
/// `m x n` pattern window at `(i, j)` vectorized row-major, so
/// `matrix · vec(img) = vec(forward_full(img))`. Architecture A keeps the
/// rows whose window starts at an odd 1-based `(i, j)`; B sums the four
/// rows of each 2x2 detector block.
pub fn build_explicit_matrix(op: &SensingOperator) -> Result<DenseMatrix> {
    let (m, n) = op.image_dims();
    if m * n > EXPLICIT_MAX_PIXELS {
        return Err(Error::InvalidArgument(format!(
            "explicit matrix limited to {EXPLICIT_MAX_PIXELS} pixels, got {m}x{n}"
        )));
    }
    let pattern = op.pattern();
    let cols = m * n;
    let full_row = |i: usize, j: usize, out: &mut [f64]| {
        for p in 0..m {
            for q in 0..n {
                out[p * n + q] += pattern[(i + p, j + q)];
            }
        }
    };
    let rows = op.num_measurements();
    let mut mat = DenseMatrix::zeros(rows, (m, n));
    let mut r = 0;
    match op.architecture() {
        Architecture::Full => {
            for i in 0..m {
                for j in 0..n {
                    full_row(i, j, &mut mat.data[r * cols..(r + 1) * cols]);
                    r += 1;
                }
            }
        }
        Architecture::A => {
            for i in (0..m).step_by(2) {
                for j in (0..n).step_by(2) {
                    full_row(i, j, &mut mat.data[r * cols..(r + 1) * cols]);
                    r += 1;
                }
            }
        }
        Architecture::B => {
            for i in (0..m).step_by(2) {
                for j in (0..n).step_by(2) {
                    let row = &mut mat.data[r * cols..(r + 1) * cols];
                    for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        full_row(i + di, j + dj, row);
                    }
                    r += 1;
                }
            }
        }
    }
    Ok(mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::sensing::operator::{make_operator, Mode};
    use crate::sensing::pattern::ModulatorPattern;

    #[test]
    fn two_by_two_by_hand() {
        // base [[1,0],[0,1]] tiled to 4x4
        let base = Grid::new(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let p = ModulatorPattern::from_base(&base).unwrap();
        let op = make_operator(&p, None, Mode::Raw01, Architecture::Full).unwrap();
        let mat = build_explicit_matrix(&op).unwrap();
        // grid rows: [1 0 1 0], [0 1 0 1], [1 0 1 0], [0 1 0 1]
        let expect = [
            [1., 0., 0., 1.], // window (0,0): M11 M12 M21 M22
            [0., 1., 1., 0.], // window (0,1)
            [0., 1., 1., 0.], // window (1,0)
            [1., 0., 0., 1.], // window (1,1)
        ];
        for (r, row) in expect.iter().enumerate() {
            assert_eq!(mat.row(r), row);
        }
    }

    #[test]
    fn size_guard() {
        let p = ModulatorPattern::generate(66, 64, 1).unwrap();
        let op = make_operator(&p, None, Mode::Raw01, Architecture::Full).unwrap();
        assert!(build_explicit_matrix(&op).is_err());
    }
}
