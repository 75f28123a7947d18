//! Finite-difference solver on rectangles and the masked disk.
//!
//! The unknowns are the interior grid nodes of a [`Grid2D`]; `A` is its
//! symmetric negative Laplacian. A branch point solves
//! `A v = λ V e^v` with `v(anchor) = s` by Newton on the bordered system,
//! and the linearized spectrum `A w = μ λ V e^v w` comes from shift-invert
//! subspace iteration checked by an inertia count.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::{BranchPoint, Eigenpair, Peak, Space};
use crate::green::{GreenError, GreenOracle};
use crate::grid2d::Grid2D;
use crate::hamiltonian::Point;
use crate::solver1d::sup_normalize;
use crate::sparse::{CholeskySolver, SparseError, SparseMatrix, TripletMatrix};
use crate::vexpr::{EvalError, VExpr};

#[derive(Debug, Error)]
pub enum Solver2dError {
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Coefficient(#[from] EvalError),
    #[error("Newton diverged at s = {s} after {iterations} iterations (residual {residual:e})")]
    Divergence { s: f64, iterations: usize, residual: f64 },
    #[error("lambda drifted to {lambda} at s = {s}")]
    NonPositiveLambda { s: f64, lambda: f64 },
    #[error("found {found} maxima, wanted {wanted}")]
    Peaks { found: usize, wanted: usize },
    #[error("eigen solve failed: {0}")]
    Eigen(String),
    #[error("inertia count {counted} disagrees with {expected} computed eigenvalues below {shift}")]
    MissedEigenvalue { expected: usize, counted: usize, shift: f64 },
    #[error("bubble under-resolved at s = {s}: δ = {delta:.3e} < 4h = {limit:.3e}")]
    Unresolved { s: f64, delta: f64, limit: f64 },
}

/// A grid together with its factorized Laplacian.
pub struct Planar {
    pub grid: Arc<Grid2D>,
    pub a: SparseMatrix,
    chol: CholeskySolver,
}

impl std::fmt::Debug for Planar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Planar").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl Planar {
    pub fn new(grid: Arc<Grid2D>) -> Result<Planar, Solver2dError> {
        let a = grid.laplacian().build()?;
        let chol = a.cholesky()?;
        Ok(Planar { grid, a, chol })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.chol.solve_in_place(&mut x);
        x
    }

    fn coef_nodes(&self, vexpr: &VExpr) -> Result<Vec<f64>, Solver2dError> {
        (0..self.len())
            .map(|u| {
                let p = self.grid.point(u);
                let c = vexpr.eval(p)?;
                if c <= 1e-12 {
                    return Err(EvalError::NonPositive { x: p[0], y: p[1], value: c }.into());
                }
                Ok(c)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Newton2dOptions {
    /// Stop at `max |F_u| / A_uu` below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Newton2dOptions {
    fn default() -> Self {
        Newton2dOptions { tol: 1e-12, max_iter: 30 }
    }
}

/// A converged planar solution.
#[derive(Debug, Clone)]
pub struct Solution2d {
    pub v: Vec<f64>,
    pub lambda: f64,
    pub s: f64,
    pub anchor: usize,
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Residual after each Newton iteration, starting with the initial one.
    pub history: Vec<f64>,
    /// `λ` after each Newton iteration, starting with the initial one.
    pub lambda_history: Vec<f64>,
}

impl Solution2d {
    pub fn density(&self) -> Vec<f64> {
        self.v.iter().zip(&self.coef).map(|(v, c)| self.lambda * c * v.exp()).collect()
    }
}

fn residual2d(a: &SparseMatrix, diag: &[f64], coef: &[f64], v: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let mut f = a.mul_vec(v);
    let mut worst: f64 = 0.0;
    for u in 0..f.len() {
        f[u] -= lambda * coef[u] * v[u].exp();
        worst = worst.max((f[u] / diag[u]).abs());
    }
    (f, worst)
}

/// Solves `{A v = λ V e^v, v(anchor) = s}` for `(v, λ)` from `(v0, lambda0)`.
pub fn newton2d_constrained(
    planar: &Planar,
    vexpr: &VExpr,
    s: f64,
    anchor: usize,
    v0: Vec<f64>,
    lambda0: f64,
    opts: &Newton2dOptions,
) -> Result<Solution2d, Solver2dError> {
    let n = planar.len();
    let coef = planar.coef_nodes(vexpr)?;
    let lap = planar.grid.laplacian();
    let diag = lap_diagonal(&lap, n);
    let mut v = v0;
    v[anchor] = s;
    let mut lambda = lambda0;
    let (mut f, mut res) = residual2d(&planar.a, &diag, &coef, &v, lambda);
    let mut history = vec![res];
    let mut lambda_history = vec![lambda];
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter || !res.is_finite() {
            return Err(Solver2dError::Divergence { s, iterations, residual: res });
        }
        iterations += 1;
        // bordered Jacobian: rows 0..n are the PDE, row n pins v(anchor)
        let mut jac = TripletMatrix::new(n + 1);
        for (r, c, val) in lap.iter() {
            jac.push(r, c, val);
        }
        for u in 0..n {
            let e = coef[u] * v[u].exp();
            jac.push(u, u, -lambda * e);
            jac.push(u, n, -e);
        }
        jac.push(n, anchor, 1.0);
        let lu = jac.build()?.lu()?;
        let mut step: Vec<f64> = f.iter().map(|x| -x).collect();
        step.push(s - v[anchor]);
        lu.solve_in_place(&mut step);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let lt = lambda + t * step[n];
            let (ft, rt) = residual2d(&planar.a, &diag, &coef, &trial, lt);
            if lt > 0.0 && rt.is_finite() && (rt < res || t < 1.0 / 64.0) {
                v = trial;
                lambda = lt;
                f = ft;
                res = rt;
                break;
            }
            t *= 0.5;
            if t < 1.0 / 1024.0 {
                return Err(Solver2dError::Divergence { s, iterations, residual: res });
            }
        }
        history.push(res);
        lambda_history.push(lambda);
        if lambda <= 0.0 {
            return Err(Solver2dError::NonPositiveLambda { s, lambda });
        }
    }
    Ok(Solution2d {
        v,
        lambda,
        s,
        anchor,
        coef,
        iterations,
        residual: res,
        history,
        lambda_history,
    })
}

fn lap_diagonal(t: &TripletMatrix, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for (r, c, val) in t.iter() {
        if r == c {
            d[r] += val;
        }
    }
    d
}

/// Initial guess from the singular limit: at each `x_j` a bubble of width
/// `δ_j = d_j λ^{1/2}` glued to `8π G(·, x_j)`,
/// `v₀ = Σ_j {8π K(·, x_j) - 2 log(|· - x_j|² + 8δ_j²)}`,
/// with `λ` chosen so that the first peak has height `s`.
pub fn singular_limit_seed(
    planar: &Planar,
    oracle: &GreenOracle,
    vexpr: &VExpr,
    points: &[Point],
    s: f64,
) -> Result<(Vec<f64>, f64), Solver2dError> {
    let m = points.len();
    let mut hsum = Vec::with_capacity(m);
    for j in 0..m {
        let mut h = oracle.r(points[j])?;
        for (i, p) in points.iter().enumerate() {
            if i != j {
                h += oracle.g(points[j], *p)?;
            }
        }
        hsum.push(h);
    }
    // d_j² = V(x_j) e^{8π H_j} / 64 and s = 8π H_0 - log 64 - 2 log(λ d_0²)
    let d2: Vec<f64> = (0..m)
        .map(|j| Ok(vexpr.eval(points[j])? * (8.0 * PI * hsum[j]).exp() / 64.0))
        .collect::<Result<_, EvalError>>()?;
    let lambda = ((8.0 * PI * hsum[0] - 64f64.ln() - s) / 2.0).exp() / d2[0];
    let mut v = vec![0.0; planar.len()];
    for (u, val) in v.iter_mut().enumerate() {
        let x = planar.grid.point(u);
        for (j, p) in points.iter().enumerate() {
            let r2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
            *val += 8.0 * PI * oracle.k(x, *p)? - 2.0 * (r2 + 8.0 * lambda * d2[j]).ln();
        }
    }
    Ok((v, lambda))
}

/// Local maxima of a nodal field, strongest first, at least `min_sep`
/// apart, with the location and height refined by a parabola along each
/// axis. Returns `(x, height)` pairs.
pub fn detect_peaks(grid: &Grid2D, v: &[f64], m: usize, min_sep: f64) -> Result<Vec<([f64; 2], f64)>, Solver2dError> {
    let n = grid.n();
    let h = grid.spacing();
    let mut cands: Vec<(usize, f64)> = Vec::new();
    for u in 0..grid.len() {
        let node = grid.node_of(u);
        let (ix, iy) = ((node % n) as isize, (node / n) as isize);
        let mut strict = true;
        let mut any = false;
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (jx, jy) = (ix + dx, iy + dy);
                let nb = if jx < 0 || jy < 0 || jx >= n as isize || jy >= n as isize {
                    None
                } else {
                    grid.unknown_at(jx as usize, jy as usize)
                };
                // boundary values are zero
                let val = nb.map_or(0.0, |w| v[w]);
                any |= nb.is_some();
                if val >= v[u] {
                    strict = false;
                }
            }
        }
        if strict && any {
            cands.push((u, v[u]));
        }
    }
    cands.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out: Vec<([f64; 2], f64)> = Vec::new();
    for (u, _) in cands {
        let node = grid.node_of(u);
        let (ix, iy) = (node % n, node / n);
        let p = grid.point(u);
        let mut x = p;
        let mut height = v[u];
        for axis in 0..2 {
            let (lo, hi) = if axis == 0 {
                (ix.checked_sub(1).and_then(|i| grid.unknown_at(i, iy)), grid.unknown_at(ix + 1, iy))
            } else {
                (iy.checked_sub(1).and_then(|i| grid.unknown_at(ix, i)), grid.unknown_at(ix, iy + 1))
            };
            if let (Some(lo), Some(hi)) = (lo, hi) {
                let (fm, f0, fp) = (v[lo], v[u], v[hi]);
                let curv = fm - 2.0 * f0 + fp;
                if curv < 0.0 {
                    x[axis] += 0.5 * h[axis] * (fm - fp) / curv;
                    height -= (fp - fm).powi(2) / (8.0 * curv);
                }
            }
        }
        if out.iter().all(|(q, _)| (q[0] - x[0]).hypot(q[1] - x[1]) >= min_sep) {
            out.push((x, height));
        }
        if out.len() == m {
            return Ok(out);
        }
    }
    Err(Solver2dError::Peaks { found: out.len(), wanted: m })
}

/// Eigenpairs of `A w = μ ρ w`, ascending.
#[derive(Debug, Clone)]
pub struct Eig2d {
    pub pairs: Vec<Eigenpair>,
    /// Largest relative `H¹₀` cross product.
    pub orthogonality: f64,
    pub iterations: usize,
    /// Eigenvalue count below the separating shift, from the inertia of
    /// `A - shift ρ`.
    pub inertia: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eig2dOptions {
    /// Extra block vectors beyond the requested count.
    pub guard: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for Eig2dOptions {
    fn default() -> Self {
        Eig2dOptions {
            guard: 6,
            tol: 1e-10,
            max_iter: 400,
            seed: 7,
        }
    }
}

/// Ritz values closer than this (relative) are treated as one cluster.
const CLUSTER: f64 = 1e-6;

/// The `count` smallest eigenpairs of `A w = μ ρ w` (more if the last one
/// belongs to a cluster), by subspace iteration on `A⁻¹ ρ` with
/// Rayleigh-Ritz, optionally warm-started from `start`.
pub fn eig2d(
    planar: &Planar,
    rho: &[f64],
    count: usize,
    start: Option<&[Vec<f64>]>,
    opts: &Eig2dOptions,
) -> Result<Eig2d, Solver2dError> {
    let n = planar.len();
    let b = count + opts.guard;
    if b > n {
        return Err(Solver2dError::Eigen(format!("block of {b} exceeds {n} unknowns")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..b)
        .map(|k| match start.and_then(|s| s.get(k)) {
            Some(w) if w.len() == n => w.clone(),
            _ => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let dot_rho = |a: &[f64], c: &[f64]| a.iter().zip(c).zip(rho).map(|((p, q), r)| p * q * r).sum::<f64>();
    let mut theta = vec![0.0; b];
    let mut iterations = 0;
    loop {
        iterations += 1;
        // y = A⁻¹ ρ x
        let mut y: Vec<Vec<f64>> = x
            .iter()
            .map(|col| {
                let mut z: Vec<f64> = col.iter().zip(rho).map(|(a, r)| a * r).collect();
                planar.chol.solve_in_place(&mut z);
                z
            })
            .collect();
        // ρ-orthonormalize by modified Gram-Schmidt, twice
        for _ in 0..2 {
            for k in 0..b {
                for i in 0..k {
                    let c = dot_rho(&y[k], &y[i]);
                    let (head, tail) = y.split_at_mut(k);
                    tail[0].iter_mut().zip(&head[i]).for_each(|(a, q)| *a -= c * q);
                }
                let norm = dot_rho(&y[k], &y[k]).sqrt();
                if !(norm > 0.0) {
                    return Err(Solver2dError::Eigen("subspace collapsed".into()));
                }
                y[k].iter_mut().for_each(|a| *a /= norm);
            }
        }
        let ay: Vec<Vec<f64>> = y.iter().map(|col| planar.a.mul_vec(col)).collect();
        let mut t = DMatrix::<f64>::zeros(b, b);
        for i in 0..b {
            for j in 0..=i {
                let val: f64 = y[i].iter().zip(&ay[j]).map(|(p, q)| p * q).sum();
                t[(i, j)] = val;
                t[(j, i)] = val;
            }
        }
        let eig = SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        theta = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        x = order
            .iter()
            .map(|&i| {
                let mut col = vec![0.0; n];
                for k in 0..b {
                    let c = eig.eigenvectors[(k, i)];
                    col.iter_mut().zip(&y[k]).for_each(|(a, q)| *a += c * q);
                }
                col
            })
            .collect();
        // residual of the wanted pairs, relative to ‖A x‖
        let mut worst: f64 = 0.0;
        for k in 0..count.min(b) {
            let ax = planar.a.mul_vec(&x[k]);
            let num: f64 = ax.iter().zip(&x[k]).zip(rho).map(|((a, w), r)| (a - theta[k] * r * w).powi(2)).sum();
            let den: f64 = ax.iter().map(|a| a * a).sum();
            worst = worst.max((num / den).sqrt());
        }
        if worst <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Solver2dError::Eigen(format!("subspace iteration stalled at residual {worst:.3e}")));
        }
    }
    // widen to whole clusters
    let mut keep = count;
    while keep < b - 1 && (theta[keep] - theta[keep - 1]).abs() <= CLUSTER * theta[keep - 1].abs() {
        keep += 1;
    }
    if keep >= b - 1 {
        return Err(Solver2dError::Eigen("cluster reaches the guard vectors".into()));
    }
    let shift = 0.5 * (theta[keep - 1] + theta[keep]);
    let inertia = planar.a.minus_diagonal(&rho.iter().map(|r| shift * r).collect::<Vec<_>>()).negative_inertia()?;
    if inertia != keep {
        return Err(Solver2dError::MissedEigenvalue {
            expected: keep,
            counted: inertia,
            shift,
        });
    }
    let mut pairs: Vec<Eigenpair> = Vec::with_capacity(keep);
    for k in 0..keep {
        let mut w = x[k].clone();
        sup_normalize(&mut w);
        pairs.push(Eigenpair {
            mu: theta[k],
            w,
            label: None,
            multiplicity: 1,
        });
    }
    let h2 = planar.grid.weight();
    let mut orthogonality: f64 = 0.0;
    let aw: Vec<Vec<f64>> = pairs.iter().map(|p| planar.a.mul_vec(&p.w)).collect();
    for i in 0..keep {
        for j in 0..i {
            let ij: f64 = pairs[i].w.iter().zip(&aw[j]).map(|(p, q)| p * q).sum::<f64>() * h2;
            let ii: f64 = pairs[i].w.iter().zip(&aw[i]).map(|(p, q)| p * q).sum::<f64>() * h2;
            let jj: f64 = pairs[j].w.iter().zip(&aw[j]).map(|(p, q)| p * q).sum::<f64>() * h2;
            orthogonality = orthogonality.max(ij.abs() / (ii * jj).sqrt());
        }
    }
    Ok(Eig2d {
        pairs,
        orthogonality,
        iterations,
        inertia,
        shift,
    })
}

/// Settings for a planar continuation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Branch2dOptions {
    pub newton: Newton2dOptions,
    pub eig: Eig2dOptions,
    /// Eigenpairs per branch point.
    pub count: usize,
    /// Minimum distance between distinct peaks.
    pub min_separation: f64,
    /// Stop once `δ < depth_limit · h`.
    pub depth_limit: f64,
}

impl Default for Branch2dOptions {
    fn default() -> Self {
        Branch2dOptions {
            newton: Newton2dOptions::default(),
            eig: Eig2dOptions::default(),
            count: 4,
            min_separation: 0.2,
            depth_limit: 4.0,
        }
    }
}

/// One planar branch point with its spectrum.
#[derive(Debug, Clone)]
pub struct PlanarStep {
    pub point: BranchPoint,
    pub eigen: Eig2d,
    pub solution: Solution2d,
}

/// How a planar run ended before its schedule was exhausted.
#[derive(Debug)]
pub enum Truncation {
    /// The bubble became narrower than the grid resolves.
    Depth { s: f64, delta: f64, limit: f64 },
    Failed(Solver2dError),
}

/// Builds a [`BranchPoint`] from a converged solution, ordering the peaks
/// like `points`.
pub fn planar_branch_point(
    planar: &Planar,
    vexpr: &VExpr,
    sol: &Solution2d,
    points: &[Point],
    min_sep: f64,
) -> Result<BranchPoint, Solver2dError> {
    let found = detect_peaks(&planar.grid, &sol.v, points.len(), min_sep)?;
    let mut peaks = Vec::with_capacity(points.len());
    let mut used = vec![false; found.len()];
    for p in points {
        let (k, _) = found
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .min_by(|a, b| {
                let da = (a.1 .0[0] - p[0]).hypot(a.1 .0[1] - p[1]);
                let db = (b.1 .0[0] - p[0]).hypot(b.1 .0[1] - p[1]);
                da.total_cmp(&db)
            })
            .expect("as many peaks as points");
        used[k] = true;
        let (x, height) = found[k];
        let delta = 1.0 / (sol.lambda * vexpr.eval(x)? * height.exp()).sqrt();
        peaks.push(Peak { x, height, delta });
    }
    let dens = sol.density();
    Ok(BranchPoint {
        s: sol.s,
        lambda: sol.lambda,
        lambda_raw: sol.lambda,
        lambda_levels: vec![sol.lambda],
        space: Space::Planar(planar.grid.clone()),
        v: sol.v.clone(),
        coef: vexpr.clone(),
        coef_nodes: sol.coef.clone(),
        peaks,
        total_mass: planar.grid.weight() * dens.iter().sum::<f64>(),
        ball_masses: Vec::new(),
        newton_iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Amplitude continuation on a fixed grid from the singular-limit seed at
/// `points`. Each solution is anchored at the grid node nearest the peak
/// closest to `points[0]` in the previous step.
pub fn continue_planar(
    planar: &Planar,
    oracle: &GreenOracle,
    vexpr: &VExpr,
    points: &[Point],
    schedule: &[f64],
    opts: &Branch2dOptions,
    mut visit: impl FnMut(&PlanarStep),
) -> (Vec<PlanarStep>, Option<Truncation>) {
    let mut out: Vec<PlanarStep> = Vec::new();
    for &s in schedule {
        let attempt = (|| -> Result<PlanarStep, Solver2dError> {
            let (v0, l0, anchor) = match out.as_slice() {
                [] => {
                    let (v0, l0) = singular_limit_seed(planar, oracle, vexpr, points, s)?;
                    let anchor = planar
                        .grid
                        .nearest_unknown(points[0])
                        .ok_or(Solver2dError::Green(GreenError::OutsideDomain { x: points[0][0], y: points[0][1] }))?;
                    (v0, l0, anchor)
                }
                [.., prev] => {
                    let anchor = planar
                        .grid
                        .nearest_unknown(prev.point.peaks[0].x)
                        .unwrap_or(prev.solution.anchor);
                    let p = &prev.solution;
                    // secant predictor in s when two points are known
                    let (v0, l0) = if out.len() >= 2 {
                        let q = &out[out.len() - 2].solution;
                        let t = (s - p.s) / (p.s - q.s);
                        (
                            p.v.iter().zip(&q.v).map(|(a, b)| a + t * (a - b)).collect(),
                            (p.lambda.ln() + t * (p.lambda.ln() - q.lambda.ln())).exp(),
                        )
                    } else {
                        // deep in the branch log λ falls like -s/2
                        (p.v.clone(), p.lambda * (-(s - p.s) / 2.0).exp())
                    };
                    (v0, l0, anchor)
                }
            };
            let sol = newton2d_constrained(planar, vexpr, s, anchor, v0, l0, &opts.newton)?;
            let point = planar_branch_point(planar, vexpr, &sol, points, opts.min_separation)?;
            let start: Option<Vec<Vec<f64>>> = out.last().map(|p| p.eigen.pairs.iter().map(|e| e.w.clone()).collect());
            let eigen = eig2d(planar, &sol.density(), opts.count, start.as_deref(), &opts.eig)?;
            Ok(PlanarStep { point, eigen, solution: sol })
        })();
        match attempt {
            Ok(step) => {
                let delta = step.point.peaks.iter().map(|p| p.delta).fold(f64::INFINITY, f64::min);
                let limit = opts.depth_limit * planar.grid.cell();
                if delta < limit {
                    return (out, Some(Truncation::Depth { s, delta, limit }));
                }
                visit(&step);
                out.push(step);
            }
            Err(e) => return (out, Some(Truncation::Failed(e))),
        }
    }
    (out, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::Domain;

    #[test]
    fn constant_field_has_no_peaks() {
        let g = Grid2D::new(Domain::unit_square(), 17).unwrap();
        let v = vec![1.0; g.len()];
        assert!(matches!(detect_peaks(&g, &v, 1, 0.1), Err(Solver2dError::Peaks { found: 0, wanted: 1 })));
    }
}
