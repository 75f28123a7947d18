//! The m-point Hamiltonian
//!
//! `H(x_1..x_m) = ½ Σ R(x_i) + Σ_{i<j} G(x_i, x_j) + (1/8π) Σ log V(x_i)`,
//! its critical points, the matrix `h` and the eigenvalue predictions built
//! from them. All derivatives are central differences of `H`, so the same
//! code serves the exact disk oracle and the grid oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::green::{GreenError, GreenOracle};
use crate::vexpr::{EvalError, VExpr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Coefficient(#[from] EvalError),
    #[error("point configuration violates margin {margin}: {reason}")]
    Margin { margin: f64, reason: String },
    #[error("critical point search escaped to boundary/collision after {iterations} iterations: {reason}")]
    Escaped { iterations: usize, reason: String },
    #[error("critical point search did not converge in {iterations} iterations (|grad H| = {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),
    #[error("matrix h violates the concentration structure: {0}")]
    Structure(String),
    #[error("{0}")]
    OutOfRange(String),
}

/// `3 log 2 - 1`
pub const LOG8_MINUS_1: f64 = 1.079_441_541_679_836;

pub type Point = [f64; 2];

fn pair_distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// `H` itself.
pub fn eval_h(points: &[Point], oracle: &GreenOracle, v: &VExpr) -> Result<f64, HamiltonianError> {
    let mut h = 0.0;
    for (i, &p) in points.iter().enumerate() {
        h += 0.5 * oracle.r(p)? + v.log_eval(p)? / (8.0 * PI);
        for &q in &points[i + 1..] {
            h += oracle.g(p, q)?;
        }
    }
    Ok(h)
}

fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| p.iter().copied()).collect()
}

fn unflatten(z: &[f64]) -> Vec<Point> {
    z.chunks(2).map(|c| [c[0], c[1]]).collect()
}

fn eval_flat(z: &[f64], oracle: &GreenOracle, v: &VExpr) -> Result<f64, HamiltonianError> {
    eval_h(&unflatten(z), oracle, v)
}

/// Central-difference gradient, laid out `[x_1, y_1, x_2, y_2, ...]`.
pub fn grad_h(points: &[Point], oracle: &GreenOracle, v: &VExpr, step: f64) -> Result<Vec<f64>, HamiltonianError> {
    let z = flatten(points);
    let mut g = vec![0.0; z.len()];
    for (i, gi) in g.iter_mut().enumerate() {
        let (mut zp, mut zm) = (z.clone(), z.clone());
        zp[i] += step;
        zm[i] -= step;
        *gi = (eval_flat(&zp, oracle, v)? - eval_flat(&zm, oracle, v)?) / (2.0 * step);
    }
    Ok(g)
}

/// Central-difference Hessian, symmetrized as `(A + Aᵀ)/2`.
pub fn hess_h(points: &[Point], oracle: &GreenOracle, v: &VExpr, step: f64) -> Result<DMatrix<f64>, HamiltonianError> {
    let z = flatten(points);
    let n = z.len();
    let f0 = eval_flat(&z, oracle, v)?;
    let at = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut w = z.clone();
        w[di] += si * step;
        w[dj] += sj * step;
        eval_flat(&w, oracle, v)
    };
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j {
                let mut wp = z.clone();
                let mut wm = z.clone();
                wp[i] += step;
                wm[i] -= step;
                (eval_flat(&wp, oracle, v)? - 2.0 * f0 + eval_flat(&wm, oracle, v)?) / (step * step)
            } else {
                (at(i, 1.0, j, 1.0)? - at(i, 1.0, j, -1.0)? - at(i, -1.0, j, 1.0)? + at(i, -1.0, j, -1.0)?)
                    / (4.0 * step * step)
            };
        }
    }
    Ok((&a + a.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalOptions {
    /// Stop once `|grad H|_inf` is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Distance kept from the boundary and between points; `None` means
    /// `0.05 * diameter`.
    pub margin: Option<f64>,
    /// Finite-difference step; `None` means `1e-4 * diameter`.
    pub step: Option<f64>,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions {
            tol: 1e-8,
            max_iter: 100,
            margin: None,
            step: None,
        }
    }
}

impl CriticalOptions {
    pub fn margin_for(&self, oracle: &GreenOracle) -> f64 {
        self.margin.unwrap_or(0.05 * oracle.domain().diameter())
    }

    pub fn step_for(&self, oracle: &GreenOracle) -> f64 {
        self.step.unwrap_or(1e-4 * oracle.domain().diameter())
    }
}

/// Checks distance to the boundary and pairwise separation.
pub fn check_margins(points: &[Point], oracle: &GreenOracle, margin: f64) -> Result<(), HamiltonianError> {
    let dom = oracle.domain();
    for (i, &p) in points.iter().enumerate() {
        let d = dom.boundary_distance(p);
        if !(d >= margin) {
            return Err(HamiltonianError::Margin {
                margin,
                reason: format!("point {i} at ({:.6}, {:.6}) is {d:.3e} from the boundary", p[0], p[1]),
            });
        }
        for (j, &q) in points.iter().enumerate().skip(i + 1) {
            let r = pair_distance(p, q);
            if !(r >= margin) {
                return Err(HamiltonianError::Margin {
                    margin,
                    reason: format!("points {i} and {j} are {r:.3e} apart"),
                });
            }
        }
    }
    Ok(())
}

/// Everything the asymptotic formulas need at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSystem {
    pub points: Vec<Point>,
    #[serde(rename = "H")]
    pub h_value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
    /// Hessian eigenvalue below `1e-12` in magnitude.
    pub hess_degenerate: bool,
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "Lambda")]
    pub lambda: Vec<f64>,
    /// Column `n` of the matrix is `c^n`; stored as `c[n][j]`.
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    /// Some eigenvalue gap of `h` is below `1e-9`.
    pub lambda_degenerate: bool,
    pub d: Vec<f64>,
    pub eta: Vec<f64>,
}

fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// Ascending eigenpairs of a symmetric matrix, each eigenvector signed so
/// its largest-magnitude entry is positive (the first such entry on ties).
pub fn sorted_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>), HamiltonianError> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(HamiltonianError::Eigen("non-finite matrix entry".into()));
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let big = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let lead = col.iter().find(|x| x.abs() >= big * (1.0 - 1e-9)).copied().unwrap_or(1.0);
            if lead < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    Ok((values, vectors))
}

/// The matrix `h`: diagonal `R(x_i) + 2 Σ_{k≠i} G(x_k, x_i) + (1/4π) log V(x_i)`,
/// off-diagonal `-G(x_i, x_j)`.
pub fn h_matrix(points: &[Point], oracle: &GreenOracle, v: &VExpr) -> Result<DMatrix<f64>, HamiltonianError> {
    let m = points.len();
    let mut h = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut diag = oracle.r(points[i])? + v.log_eval(points[i])? / (4.0 * PI);
        for j in 0..m {
            if j != i {
                let g = oracle.g(points[i], points[j])?;
                diag += 2.0 * g;
                h[(i, j)] = -g;
            }
        }
        h[(i, i)] = diag;
    }
    // the numeric oracle is symmetric only to grid accuracy
    Ok((&h + h.transpose()) * 0.5)
}

/// `d_j = (1/8) exp{4π R(x_j) + 4π Σ_{i≠j} G(x_j, x_i) + ½ log V(x_j)}`
pub fn d_constants(points: &[Point], oracle: &GreenOracle, v: &VExpr) -> Result<Vec<f64>, HamiltonianError> {
    points
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let mut e = 4.0 * PI * oracle.r(p)? + 0.5 * v.log_eval(p)?;
            for (i, &q) in points.iter().enumerate() {
                if i != j {
                    e += 4.0 * PI * oracle.g(p, q)?;
                }
            }
            Ok(0.125 * e.exp())
        })
        .collect()
}

/// The two matrix-level consequences of strictly negative off-diagonals:
/// the lowest eigenvector has one strict sign, and for `m >= 2` no
/// eigenvector is supported on a single entry.
pub fn check_structure(c: &[Vec<f64>]) -> Result<(), HamiltonianError> {
    const ZERO: f64 = 1e-12;
    let Some(first) = c.first() else { return Ok(()) };
    if !(first.iter().all(|&x| x > ZERO) || first.iter().all(|&x| x < -ZERO)) {
        return Err(HamiltonianError::Structure(format!(
            "lowest eigenvector {first:?} is not of one strict sign"
        )));
    }
    if first.len() >= 2 {
        for (n, col) in c.iter().enumerate() {
            if col.iter().filter(|x| x.abs() > ZERO).count() == 1 {
                return Err(HamiltonianError::Structure(format!(
                    "eigenvector {} is supported on a single point",
                    n + 1
                )));
            }
        }
    }
    Ok(())
}

impl PeakSystem {
    /// Populates every derived quantity at `points` without searching.
    pub fn at(points: &[Point], oracle: &GreenOracle, v: &VExpr, opts: &CriticalOptions) -> Result<PeakSystem, HamiltonianError> {
        check_margins(points, oracle, opts.margin_for(oracle))?;
        let step = opts.step_for(oracle);
        let h_value = eval_h(points, oracle, v)?;
        let grad = grad_h(points, oracle, v, step)?;
        let hess = hess_h(points, oracle, v, step)?;
        let (hess_eigs, _) = sorted_eigen(&hess)?;
        let h = h_matrix(points, oracle, v)?;
        let (lambda, c) = sorted_eigen(&h)?;
        check_structure(&c)?;
        let lambda_degenerate = lambda.windows(2).any(|w| w[1] - w[0] < 1e-9);
        let d = d_constants(points, oracle, v)?;
        let dd = DMatrix::from_diagonal(&DVector::from_iterator(
            2 * d.len(),
            d.iter().flat_map(|&x| [x, x]),
        ));
        let (eta, _) = sorted_eigen(&(&dd * &hess * &dd))?;
        Ok(PeakSystem {
            points: points.to_vec(),
            h_value,
            grad,
            hess: to_rows(&hess),
            hess_degenerate: hess_eigs.iter().any(|e| e.abs() < 1e-12),
            h: to_rows(&h),
            lambda,
            c,
            lambda_degenerate,
            d,
            eta,
        })
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    /// `|grad H|_inf`
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, m, |i, j| self.h[i][j])
    }

    /// Mid-band prediction for eigenvalue index `n` in `m+1 ..= 3m`.
    pub fn predict_mid(&self, lambda: f64, n: usize) -> Result<f64, HamiltonianError> {
        predict_mid(lambda, &self.eta, n)
    }
}

/// Damped Newton on `grad H` with a backtracking line search on
/// `|grad H|^2`, falling back to gradient descent on that merit function
/// when the Newton direction makes no progress.
pub fn find_critical(
    points0: &[Point],
    oracle: &GreenOracle,
    v: &VExpr,
    opts: &CriticalOptions,
) -> Result<PeakSystem, HamiltonianError> {
    let margin = opts.margin_for(oracle);
    let step = opts.step_for(oracle);
    check_margins(points0, oracle, margin)?;
    let mut z = flatten(points0);
    let merit = |z: &[f64]| -> Result<(f64, Vec<f64>), HamiltonianError> {
        let pts = unflatten(z);
        check_margins(&pts, oracle, margin)?;
        let g = grad_h(&pts, oracle, v, step)?;
        Ok((g.iter().map(|x| x * x).sum(), g))
    };
    let (mut phi, mut g) = merit(&z)?;
    for iter in 0..opts.max_iter {
        let gnorm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm <= opts.tol {
            return PeakSystem::at(&unflatten(&z), oracle, v, opts);
        }
        let hess = hess_h(&unflatten(&z), oracle, v, step)?;
        let gv = DVector::from_vec(g.clone());
        let newton = hess.clone().svd(true, true).solve(&(-&gv), 1e-14).ok();
        let descent = -(&hess * &gv);
        let mut accepted = false;
        for dir in newton.iter().chain(std::iter::once(&descent)) {
            // cap the step at a quarter margin so one step cannot jump walls
            let len = dir.amax();
            let mut alpha = if len > 0.25 * margin { 0.25 * margin / len } else { 1.0 };
            for _ in 0..40 {
                let trial: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, b)| a + alpha * b).collect();
                if let Ok((phi_t, g_t)) = merit(&trial) {
                    if phi_t < (1.0 - 1e-4 * alpha) * phi || phi_t < phi && dir == &descent {
                        z = trial;
                        phi = phi_t;
                        g = g_t;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            let pts = unflatten(&z);
            return match check_margins(&pts, oracle, margin) {
                Err(e) => Err(HamiltonianError::Escaped {
                    iterations: iter,
                    reason: e.to_string(),
                }),
                Ok(()) => Err(HamiltonianError::NoConvergence {
                    iterations: iter,
                    grad_norm: gnorm,
                }),
            };
        }
    }
    let grad_norm = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if grad_norm <= opts.tol {
        return PeakSystem::at(&unflatten(&z), oracle, v, opts);
    }
    Err(HamiltonianError::NoConvergence {
        iterations: opts.max_iter,
        grad_norm,
    })
}

/// Brute-force scan of `t ↦ H((t, 0), (-t, 0))` on `n` samples of
/// `(lo, hi)`. Returns the sampled interior extremum closest to `guess`,
/// refined by a parabola through its neighbours.
pub fn scan_symmetric_pair(
    oracle: &GreenOracle,
    v: &VExpr,
    lo: f64,
    hi: f64,
    n: usize,
    guess: f64,
) -> Result<f64, HamiltonianError> {
    if !(lo < hi) || n < 3 {
        return Err(HamiltonianError::OutOfRange(format!("scan window ({lo}, {hi}) with {n} samples")));
    }
    let dt = (hi - lo) / n as f64;
    let ts: Vec<f64> = (0..=n).map(|k| lo + dt * k as f64).collect();
    let hs = ts
        .iter()
        .map(|&t| eval_h(&[[t, 0.0], [-t, 0.0]], oracle, v))
        .collect::<Result<Vec<_>, _>>()?;
    let k = (1..n)
        .filter(|&k| (hs[k] - hs[k - 1]) * (hs[k + 1] - hs[k]) <= 0.0)
        .min_by(|&a, &b| (ts[a] - guess).abs().total_cmp(&(ts[b] - guess).abs()))
        .ok_or_else(|| HamiltonianError::OutOfRange(format!("no extremum of the pair Hamiltonian in ({lo}, {hi})")))?;
    let (a, c, e) = (hs[k - 1], hs[k], hs[k + 1]);
    Ok(ts[k] + 0.5 * dt * (a - e) / (a - 2.0 * c + e))
}

/// First-order, second-order and inverse-form predictions of a low
/// eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowBand {
    pub first: f64,
    pub second: f64,
    pub inverse: f64,
}

pub fn predict_low(lambda: f64, big_lambda: f64) -> Result<LowBand, HamiltonianError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(HamiltonianError::OutOfRange(format!("predictions need 0 < lambda < 1, got {lambda}")));
    }
    let l = lambda.ln();
    let first = -1.0 / (2.0 * l);
    Ok(LowBand {
        first,
        second: first + (2.0 * PI * big_lambda - 0.5 * LOG8_MINUS_1) / (l * l),
        inverse: 1.0 / (-2.0 * l - 8.0 * PI * big_lambda + 2.0 * LOG8_MINUS_1),
    })
}

/// `1 - 48π η^{2m-(n-m)+1} λ` with `η` ascending and 1-based indices.
pub fn predict_mid(lambda: f64, eta: &[f64], n: usize) -> Result<f64, HamiltonianError> {
    let m = eta.len() / 2;
    if m == 0 || n <= m || n > 3 * m {
        return Err(HamiltonianError::OutOfRange(format!(
            "mid-band index must lie in {}..={}, got {n}",
            m + 1,
            3 * m
        )));
    }
    let k = 2 * m + m + 1 - n;
    Ok(1.0 - 48.0 * PI * eta[k - 1] * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> VExpr {
        VExpr::constant(1.0)
    }

    #[test]
    fn h_examples() {
        let o = GreenOracle::Exact;
        assert_eq!(eval_h(&[[0.0, 0.0]], &o, &one()).unwrap(), 0.0);
        let h = eval_h(&[[0.5, 0.0]], &o, &one()).unwrap();
        assert!((h + 0.022893).abs() < 1e-6, "{h}");
    }

    #[test]
    fn constant_rescaling_of_v_shifts_h() {
        let o = GreenOracle::Exact;
        let pts = [[0.2, 0.1], [-0.3, 0.4], [0.1, -0.5]];
        let v = VExpr::parse("exp(x1)").unwrap();
        let cv = VExpr::parse("3*exp(x1)").unwrap();
        let shift = eval_h(&pts, &o, &cv).unwrap() - eval_h(&pts, &o, &v).unwrap();
        assert!((shift - 3.0 * 3f64.ln() / (8.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn center_derivatives() {
        let o = GreenOracle::Exact;
        let g = grad_h(&[[0.0, 0.0]], &o, &one(), 2e-4).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-9));
        let hs = hess_h(&[[0.0, 0.0]], &o, &one(), 2e-4).unwrap();
        assert!((hs[(0, 0)] + 0.5 / PI).abs() < 1e-6 && (hs[(1, 1)] + 0.5 / PI).abs() < 1e-6);
        assert!(hs[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn low_band_examples() {
        let p = predict_low(1e-6, 0.0).unwrap();
        assert!((p.first - 0.0361912).abs() < 1e-7);
        assert!((p.second - 0.0333631).abs() < 1e-6);
        assert!((p.second - p.inverse).abs() <= 3e-4);
        let q = predict_low(1e-6, 2.0 / (4.0 * PI)).unwrap();
        assert!((q.second - 0.0386023).abs() < 1e-6);
        assert!(predict_low(1.0, 0.0).is_err());
    }

    #[test]
    fn mid_band_indices() {
        let eta = [-1.0 / (128.0 * PI); 2];
        assert!((predict_mid(0.01, &eta, 2).unwrap() - 1.00375).abs() < 1e-12);
        assert_eq!(predict_mid(0.0, &eta, 3).unwrap(), 1.0);
        assert!(predict_mid(0.01, &eta, 1).is_err());
        assert!(predict_mid(0.01, &eta, 4).is_err());
    }

    #[test]
    fn sign_convention() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        let (vals, vecs) = sorted_eigen(&a).unwrap();
        assert!(vals[0] < vals[1]);
        assert!(vecs[0].iter().all(|&x| x > 0.0));
        assert!(vecs[1][0] > 0.0 && vecs[1][1] < 0.0);
        assert!(check_structure(&[vec![1.0, 0.0]]).is_err());
    }
}
