//! Dense sensing matrices built entry by entry, for comparison with the
//! FFT-based operator.

/// Tile an `m x n` 0/1 base into the `2m x 2n` modulator.
pub fn tile(base: &[f64], m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..2 * m)
        .map(|i| (0..2 * n).map(|j| base[(i % m) * n + (j % n)]).collect())
        .collect()
}

/// Same-size zero-padded convolution with an odd square kernel.
pub fn convolve(p: &[Vec<f64>], k: &[f64], r: usize) -> Vec<Vec<f64>> {
    let (h, w) = (p.len() as isize, p[0].len() as isize);
    let s = 2 * r + 1;
    let r = r as isize;
    let mut out = vec![vec![0.0; w as usize]; h as usize];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for a in -r..=r {
                for b in -r..=r {
                    let (u, v) = (i - a, j - b);
                    if u >= 0 && u < h && v >= 0 && v < w {
                        acc += k[((a + r) as usize) * s + (b + r) as usize] * p[u as usize][v as usize];
                    }
                }
            }
            out[i as usize][j as usize] = acc;
        }
    }
    out
}

/// Rows of the full read-out: detector `(i, j)` sees the `m x n` window
/// of `p` starting at `(i, j)`.
pub fn full_rows(p: &[Vec<f64>], m: usize, n: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let mut row = Vec::with_capacity(m * n);
            for a in 0..m {
                for b in 0..n {
                    row.push(p[i + a][j + b]);
                }
            }
            rows.push(row);
        }
    }
    rows
}

/// `arch` is "full", "a" (keep even-indexed detectors) or "b" (sum 2x2).
pub fn matrix(p: &[Vec<f64>], m: usize, n: usize, arch: &str) -> Vec<Vec<f64>> {
    let full = full_rows(p, m, n);
    match arch {
        "full" => full,
        "a" => (0..m)
            .step_by(2)
            .flat_map(|i| (0..n).step_by(2).map(move |j| (i, j)))
            .map(|(i, j)| full[i * n + j].clone())
            .collect(),
        "b" => (0..m)
            .step_by(2)
            .flat_map(|i| (0..n).step_by(2).map(move |j| (i, j)))
            .map(|(i, j)| {
                let mut row = vec![0.0; m * n];
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    for (o, v) in row.iter_mut().zip(&full[(i + di) * n + j + dj]) {
                        *o += v;
                    }
                }
                row
            })
            .collect(),
        _ => panic!("unknown architecture {arch}"),
    }
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}
