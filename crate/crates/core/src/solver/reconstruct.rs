//! Equality-constrained TV minimization, `min TV(x) s.t. A x = b`, by an
//! augmented Lagrangian with the splitting `w = ∇x`:
//!
//! ```text
//! L(x, w) = Σ|w_i| - νᵀ(∇x - w) + β/2 |∇x - w|² - λᵀ(Ax - b) + μ/2 |Ax - b|²
//! ```
//!
//! Each inner iteration updates `w` by isotropic shrinkage and takes one
//! Barzilai-Borwein gradient step in `x` (exact line search on the
//! quadratic, optional projection onto `x >= 0`). After the inner loop the
//! multipliers `ν`, `λ` are updated and the penalties continued. Only the
//! operator's forward and adjoint products are used.

use crate::error::{Error, Result};
use crate::grid::{dot, norm2, Grid};
use crate::linop::LinearOperator;
use crate::sensing::{MeasurementSet, Stage};
use crate::solver::tv::{div_into, grad_into, shrink2_into, tv_of};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// β, weight of `|∇x - w|²` once continuation is complete
    pub penalty_tv: f64,
    /// μ, weight of `|Ax - b|²` once continuation is complete (operator
    /// scaled to unit norm)
    pub penalty_fidelity: f64,
    /// β and μ start at `penalty / factor^steps` and are multiplied by the
    /// factor after each of the first `continuation_steps` outer iterations.
    pub continuation_factor: f64,
    pub continuation_steps: usize,
    pub tol_rel_change: f64,
    /// stopping also requires `|Ax - b| / |b|` at or below this
    pub tol_residual: f64,
    pub nonneg: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 40,
            max_inner_iters: 20,
            penalty_tv: 32.0,
            penalty_fidelity: 256.0,
            continuation_factor: 2.0,
            continuation_steps: 4,
            tol_rel_change: 1e-4,
            tol_residual: 1e-3,
            nonneg: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver.{what}")));
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return bad("iteration caps must be >= 1");
        }
        if !(self.penalty_tv > 0.0 && self.penalty_fidelity > 0.0) {
            return bad("penalties must be > 0");
        }
        if !(self.continuation_factor > 1.0 && self.continuation_factor.is_finite()) {
            return bad("continuation_factor must be > 1");
        }
        if !(self.tol_rel_change > 0.0 && self.tol_rel_change < 1.0) {
            return bad("tol_rel_change must lie in (0, 1)");
        }
        if !(self.tol_residual > 0.0) {
            return bad("tol_residual must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub image: Grid,
    /// outer iterations performed
    pub iterations: usize,
    pub inner_iterations: usize,
    /// `|Ax - b| / |b|`
    pub final_residual: f64,
    /// `TV(x) + μ/2 |Âx - b̂|²` after every outer iteration, with the final
    /// fidelity weight on the unit-norm scaled problem
    pub objective_trace: Vec<f64>,
    pub trace: Vec<TraceEntry>,
}

/// Reconstruct from converted (±1-equivalent) measurements.
pub fn reconstruct<A: LinearOperator + ?Sized>(
    op: &A,
    meas: &MeasurementSet,
    cfg: &SolverConfig,
) -> Result<ReconResult> {
    if meas.stage != Stage::Converted {
        return Err(Error::WrongMeasurements {
            expected: "converted".into(),
            got: meas.stage.name().into(),
        });
    }
    solve_tv(op, &meas.values, cfg)
}

/// Largest singular value of `A` by power iteration on `AᵀA`.
pub fn operator_norm<A: LinearOperator + ?Sized>(op: &A, iters: usize) -> f64 {
    let npix = op.num_pixels();
    let mut v: Vec<f64> = (0..npix).map(|k| 1.0 + 0.5 * ((k * 7919) % 13) as f64 / 13.0).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let w = op.apply_adjoint(&op.apply(&v));
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        sigma = nw.sqrt();
        v = w.into_iter().map(|e| e / nw).collect();
    }
    sigma
}

const NORM_ITERS: usize = 30;

/// Solve `min TV(x) s.t. A x = y` for an arbitrary measurement vector.
pub fn solve_tv<A: LinearOperator + ?Sized>(op: &A, y: &[f64], cfg: &SolverConfig) -> Result<ReconResult> {
    cfg.validate()?;
    let (rows, cols) = op.image_dims();
    let npix = rows * cols;
    if y.is_empty() {
        return Err(Error::InvalidArgument("no measurements".into()));
    }
    if y.len() != op.num_measurements() {
        return Err(Error::Dimension(format!(
            "{} measurements for an operator producing {}",
            y.len(),
            op.num_measurements()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite measurement".into()));
    }
    let y_norm = norm2(y);
    if y_norm == 0.0 {
        return Ok(ReconResult {
            image: Grid::zeros(rows, cols),
            iterations: 0,
            inner_iterations: 0,
            final_residual: 0.0,
            objective_trace: vec![0.0],
            trace: vec![TraceEntry {
                iteration: 0,
                objective: 0.0,
                residual: 0.0,
            }],
        });
    }

    let scale = operator_norm(op, NORM_ITERS);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Numerical(format!("operator norm {scale}")));
    }
    let inv = 1.0 / scale;
    let fwd = |x: &[f64]| -> Vec<f64> { op.apply(x).into_iter().map(|v| v * inv).collect() };
    let adj = |r: &[f64]| -> Vec<f64> { op.apply_adjoint(r).into_iter().map(|v| v * inv).collect() };
    let b: Vec<f64> = y.iter().map(|v| v * inv).collect();
    let nm = b.len();

    let ramp = cfg.continuation_factor.powi(cfg.continuation_steps as i32);
    let mut beta = cfg.penalty_tv / ramp;
    let mut mu = cfg.penalty_fidelity / ramp;
    let mu_final = cfg.penalty_fidelity;

    let mut x = vec![0.0; npix];
    let mut ax = vec![0.0; nm];
    let mut nu_x = vec![0.0; npix];
    let mut nu_y = vec![0.0; npix];
    let mut lam = vec![0.0; nm];
    let mut gx = vec![0.0; npix];
    let mut gy = vec![0.0; npix];
    let mut wx = vec![0.0; npix];
    let mut wy = vec![0.0; npix];
    let mut tx = vec![0.0; npix];
    let mut ty = vec![0.0; npix];
    let mut grad_d = vec![0.0; npix];
    let mut dgx = vec![0.0; npix];
    let mut dgy = vec![0.0; npix];

    let mut prev_x: Option<Vec<f64>> = None;
    let mut prev_g: Vec<f64> = vec![0.0; npix];
    // 1 / Lipschitz bound of the x-subproblem gradient (|∇|² <= 8, |Â| = 1).
    let mut tau = 1.0 / (8.0 * beta + mu);

    let mut trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut inner_total = 0;
    let mut outer_done = 0;

    for outer in 0..cfg.max_outer_iters {
        let x_start = x.clone();
        for _ in 0..cfg.max_inner_iters {
            inner_total += 1;
            // w-update
            grad_into(&x, rows, cols, &mut gx, &mut gy);
            for k in 0..npix {
                tx[k] = gx[k] - nu_x[k] / beta;
                ty[k] = gy[k] - nu_y[k] / beta;
            }
            shrink2_into(&tx, &ty, 1.0 / beta, &mut wx, &mut wy);

            // gradient of the x-subproblem
            for k in 0..npix {
                tx[k] = beta * (gx[k] - wx[k]) - nu_x[k];
                ty[k] = beta * (gy[k] - wy[k]) - nu_y[k];
            }
            div_into(&tx, &ty, rows, cols, &mut grad_d);
            let r: Vec<f64> = ax.iter().zip(&b).zip(&lam).map(|((a, bb), l)| mu * (a - bb) - l).collect();
            let grad_a = adj(&r);
            let g: Vec<f64> = grad_a.iter().zip(&grad_d).map(|(a, d)| a - d).collect();

            // Barzilai-Borwein step length
            if let Some(px) = &prev_x {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for k in 0..npix {
                    let s = x[k] - px[k];
                    ss += s * s;
                    sy += s * (g[k] - prev_g[k]);
                }
                if sy > 0.0 && ss > 0.0 {
                    tau = ss / sy;
                }
            }

            let mut d: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - tau * gi).collect();
            if cfg.nonneg {
                d.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            for (dk, xk) in d.iter_mut().zip(&x) {
                *dk -= xk;
            }
            let gd = dot(&g, &d);
            if !(gd < 0.0) {
                break;
            }
            grad_into(&d, rows, cols, &mut dgx, &mut dgy);
            let ad = fwd(&d);
            let curv = beta * (dot(&dgx, &dgx) + dot(&dgy, &dgy)) + mu * dot(&ad, &ad);
            let mut alpha = if curv > 0.0 { -gd / curv } else { 1.0 };
            if cfg.nonneg {
                alpha = alpha.min(1.0);
            }

            prev_x = Some(x.clone());
            prev_g = g;
            for k in 0..npix {
                x[k] += alpha * d[k];
            }
            for k in 0..nm {
                ax[k] += alpha * ad[k];
            }
            let step = alpha * norm2(&d);
            if step <= cfg.tol_rel_change * norm2(&x).max(f64::MIN_POSITIVE) {
                break;
            }
        }

        // Re-synchronize Ax to avoid drift from the incremental updates.
        ax = fwd(&x);
        grad_into(&x, rows, cols, &mut gx, &mut gy);
        for k in 0..npix {
            nu_x[k] -= beta * (gx[k] - wx[k]);
            nu_y[k] -= beta * (gy[k] - wy[k]);
        }
        for k in 0..nm {
            lam[k] -= mu * (ax[k] - b[k]);
        }

        let misfit: f64 = ax.iter().zip(&b).map(|(a, bb)| (a - bb) * (a - bb)).sum();
        let residual = misfit.sqrt() / norm2(&b);
        let objective = tv_of(&x, rows, cols) + 0.5 * mu_final * misfit;
        outer_done = outer + 1;
        if !(objective.is_finite() && residual.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            let tail: Vec<String> = trace
                .iter()
                .rev()
                .take(5)
                .map(|t: &TraceEntry| format!("#{} obj={:.4e} res={:.4e}", t.iteration, t.objective, t.residual))
                .collect();
            return Err(Error::Numerical(format!(
                "diverged at outer iteration {outer_done}; last trace: [{}]",
                tail.join(", ")
            )));
        }
        trace.push(TraceEntry {
            iteration: outer_done,
            objective,
            residual,
        });
        objective_trace.push(objective);

        if outer < cfg.continuation_steps {
            beta *= cfg.continuation_factor;
            mu *= cfg.continuation_factor;
        }
        let change = x
            .iter()
            .zip(&x_start)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if outer >= cfg.continuation_steps
            && residual <= cfg.tol_residual
            && change <= cfg.tol_rel_change * norm2(&x).max(f64::MIN_POSITIVE)
        {
            break;
        }
    }

    let final_residual = trace.last().map_or(0.0, |t| t.residual);
    Ok(ReconResult {
        image: Grid::new(rows, cols, x)?,
        iterations: outer_done,
        inner_iterations: inner_total,
        final_residual,
        objective_trace,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::{make_phantom, PhantomKind};
    use crate::linop::DenseMatrix;
    use crate::sensing::{
        acquire_raw, build_explicit_matrix, convert_measurements, i_total_in_band, make_operator, Architecture, Mode,
        ModulatorPattern,
    };
    use num_complex::Complex64;

    fn rel_err(a: &Grid, b: &Grid) -> f64 {
        let d: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
        norm2(&d) / norm2(b.as_slice())
    }

    /// Smallest singular value of the full tiled operator: the smallest
    /// DFT magnitude of the bipolar base quadrant.
    fn min_dft(p: &ModulatorPattern) -> f64 {
        let base = p.base().map(|v| 2.0 * v - 1.0);
        let (m, n) = base.dims();
        let mut best = f64::INFINITY;
        for u in 0..m {
            for v in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    for j in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((u * i) as f64 / m as f64 + (v * j) as f64 / n as f64);
                        acc += Complex64::from_polar(base[(i, j)], ph);
                    }
                }
                best = best.min(acc.norm());
            }
        }
        best
    }

    #[test]
    fn determined_system_is_recovered() {
        let p = (0..300u64)
            .map(|s| ModulatorPattern::generate(16, 16, s).unwrap())
            .max_by(|a, b| min_dft(a).total_cmp(&min_dft(b)))
            .unwrap();
        assert!(min_dft(&p) > 1.0);
        let op = make_operator(&p, None, Mode::Bipolar, Architecture::Full).unwrap();
        let truth = Grid::from_fn(16, 16, |i, j| (((i * 31 + j * 17) % 11) as f64 / 10.0 - 0.3).sin());
        let y = op.apply(truth.as_slice());
        let cfg = SolverConfig {
            max_outer_iters: 200,
            nonneg: false,
            tol_rel_change: 1e-7,
            tol_residual: 1e-8,
            ..SolverConfig::default()
        };
        let res = solve_tv(&op, &y, &cfg).unwrap();
        assert!(rel_err(&res.image, &truth) <= 1e-3, "{}", rel_err(&res.image, &truth));
    }

    #[test]
    fn zero_measurements_give_zero_image() {
        let p = ModulatorPattern::generate(8, 8, 4).unwrap();
        let op = make_operator(&p, None, Mode::Bipolar, Architecture::B).unwrap();
        let res = solve_tv(&op, &[0.0; 16], &SolverConfig::default()).unwrap();
        assert!(res.image.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(res.final_residual, 0.0);
    }

    #[test]
    fn bad_inputs() {
        let p = ModulatorPattern::generate(8, 8, 4).unwrap();
        let op = make_operator(&p, None, Mode::Bipolar, Architecture::B).unwrap();
        let cfg = SolverConfig::default();
        assert!(matches!(solve_tv(&op, &[], &cfg), Err(Error::InvalidArgument(_))));
        assert!(matches!(solve_tv(&op, &[1.0; 3], &cfg), Err(Error::Dimension(_))));
        assert!(matches!(solve_tv(&op, &[f64::NAN; 16], &cfg), Err(Error::Numerical(_))));
        let bad = SolverConfig { tol_rel_change: 1.5, ..cfg.clone() };
        assert!(solve_tv(&op, &[1.0; 16], &bad).is_err());
        let bad = SolverConfig { penalty_tv: 0.0, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let raw = acquire_raw(&p, None, &Grid::filled(8, 8, 0.5), Architecture::B).unwrap();
        assert!(matches!(reconstruct(&op, &raw, &cfg), Err(Error::WrongMeasurements { .. })));
    }

    fn phantom_case(kind: PhantomKind, s: usize, seed: u64) -> (Grid, ReconResult, Vec<f64>) {
        let img = make_phantom(kind, s, s).unwrap();
        let p = ModulatorPattern::generate(s, s, seed).unwrap();
        let raw = acquire_raw(&p, None, &img, Architecture::B).unwrap();
        let conv = convert_measurements(&raw, i_total_in_band(&raw, &p).unwrap()).unwrap();
        let op = make_operator(&p, None, Mode::Bipolar, Architecture::B).unwrap();
        let res = reconstruct(&op, &conv, &SolverConfig::default()).unwrap();
        (img, res, conv.values)
    }

    #[test]
    fn quadrants_phantom_b() {
        let (img, res, _) = phantom_case(PhantomKind::Quadrants, 64, 1);
        assert!(rel_err(&res.image, &img) <= 0.05);
        assert!(res.final_residual <= 1e-3);
    }

    #[test]
    fn objective_decreases_across_stages() {
        let cfg = SolverConfig::default();
        for kind in [PhantomKind::Quadrants, PhantomKind::Disk] {
            let (_, res, _) = phantom_case(kind, 32, 7);
            // Stage ends: each continuation step, then the last iteration.
            let mut ends: Vec<f64> = res.objective_trace.iter().take(cfg.continuation_steps).copied().collect();
            ends.push(*res.objective_trace.last().unwrap());
            for w in ends.windows(2) {
                assert!(w[1] <= 1.01 * w[0], "{:?}", res.objective_trace);
            }
            assert_eq!(res.objective_trace.len(), res.iterations);
        }
    }

    #[test]
    fn row_permutation_does_not_change_solution() {
        let p = ModulatorPattern::generate(16, 16, 11).unwrap();
        let op = make_operator(&p, None, Mode::Bipolar, Architecture::B).unwrap();
        let mat = build_explicit_matrix(&op).unwrap();
        let img = make_phantom(PhantomKind::Disk, 16, 16).unwrap();
        let y = mat.apply(img.as_slice());
        let k = y.len();
        let perm: Vec<usize> = (0..k).map(|i| (i * 37 + 5) % k).collect();
        let pmat: DenseMatrix = mat.select_rows(&perm);
        let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let cfg = SolverConfig {
            max_outer_iters: 300,
            tol_rel_change: 1e-9,
            tol_residual: 1e-9,
            ..SolverConfig::default()
        };
        let a = solve_tv(&mat, &y, &cfg).unwrap();
        let b = solve_tv(&pmat, &py, &cfg).unwrap();
        let diff = a.image.as_slice().iter().zip(b.image.as_slice()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn iteration_cap_is_honoured() {
        let p = ModulatorPattern::generate(16, 16, 2).unwrap();
        let op = make_operator(&p, None, Mode::Bipolar, Architecture::B).unwrap();
        let y = op.apply(make_phantom(PhantomKind::Quadrants, 16, 16).unwrap().as_slice());
        let cfg = SolverConfig { max_outer_iters: 1, ..SolverConfig::default() };
        let res = solve_tv(&op, &y, &cfg).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.final_residual.is_finite() && res.final_residual > 0.0);
    }
}
