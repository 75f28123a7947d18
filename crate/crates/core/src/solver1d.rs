//! Radial solver on the unit disk.
//!
//! For radial `V` the problem reduces to `-(r v')'/r = λ V e^v` on `(0, 1)`.
//! It is discretized by finite volumes on the exponentially graded grid
//! `r(ξ) = (e^{βξ} - 1)/(e^β - 1)`, `ξ = i/N`, which packs nodes into the
//! bubble core. Cell `i` spans `[r_{i-½}, r_{i+½}]` with half points taken
//! from the same map, so the stiffness matrix is symmetric tridiagonal and
//! the mass matrix diagonal. Summing the discrete equation over cells
//! `0..=k` gives the discrete flux through `r_{k+½}` exactly.
//!
//! The branch is parametrized by the peak height `s = v(0)`; Newton solves
//! for the interior values and `λ` together.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::{BallMass, BranchPoint, Eigenpair, Peak, Space};
use crate::vexpr::{EvalError, VExpr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Solver1dError {
    #[error(transparent)]
    Coefficient(#[from] EvalError),
    #[error("V must be radial for the radial solver (`{0}` is not)")]
    NotRadial(String),
    #[error("Newton diverged at s = {s} after {iterations} iterations (residual {residual:e})")]
    Divergence { s: f64, iterations: usize, residual: f64 },
    #[error("lambda drifted to {lambda} at s = {s}")]
    NonPositiveLambda { s: f64, lambda: f64 },
    #[error("eigen solve failed: {0}")]
    Eigen(String),
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// Graded radial grid with its finite-volume geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub beta: f64,
    /// Nodes `r_0 = 0 < ... < r_N = 1`.
    pub r: Vec<f64>,
    /// Half points `r_{i+½}`, `i = 0..N`.
    pub half: Vec<f64>,
    /// Cell areas `π (r_{i+½}^2 - r_{i-½}^2)`; the boundary node has none.
    pub area: Vec<f64>,
    /// Edge conductances `2π r_{i+½} / (r_{i+1} - r_i)`.
    pub cond: Vec<f64>,
}

impl RadialGrid {
    pub fn with_beta(n: usize, beta: f64) -> Result<RadialGrid, Solver1dError> {
        if n < 8 || !(beta >= 0.0) || !beta.is_finite() {
            return Err(Solver1dError::Grid(format!("need n >= 8 and finite beta >= 0 (n={n}, beta={beta})")));
        }
        let map = |xi: f64| {
            if beta < 1e-8 {
                xi
            } else {
                (beta * xi).exp_m1() / beta.exp_m1()
            }
        };
        let nf = n as f64;
        let mut r: Vec<f64> = (0..=n).map(|i| map(i as f64 / nf)).collect();
        r[n] = 1.0;
        let half: Vec<f64> = (0..n).map(|i| map((i as f64 + 0.5) / nf)).collect();
        let mut area = vec![0.0; n + 1];
        for i in 0..n {
            let inner = if i == 0 { 0.0 } else { half[i - 1] };
            area[i] = PI * (half[i] * half[i] - inner * inner);
        }
        let cond = (0..n).map(|i| 2.0 * PI * half[i] / (r[i + 1] - r[i])).collect();
        Ok(RadialGrid { beta, r, half, area, cond })
    }

    /// Grid resolving a bubble of width `delta`: about `0.7 N / β` nodes
    /// fall inside `r < delta`.
    pub fn graded(n: usize, delta: f64) -> Result<RadialGrid, Solver1dError> {
        let beta = if delta > 0.0 { (1.0 + 1.0 / delta).ln() } else { 0.0 };
        RadialGrid::with_beta(n, beta)
    }

    /// Number of cells.
    pub fn n(&self) -> usize {
        self.r.len() - 1
    }

    /// Ratio of consecutive spacings (constant for this map).
    pub fn grading_ratio(&self) -> f64 {
        (self.beta / self.n() as f64).exp()
    }

    pub fn nodes_inside(&self, radius: f64) -> usize {
        self.r.iter().filter(|&&x| x < radius).count()
    }

    /// Stiffness diagonal for Fourier mode `l` (index 0 is the axis node).
    fn stiffness_diag(&self, l: usize) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let left = if i == 0 { 0.0 } else { self.cond[i - 1] };
                let angular = if l > 0 && i > 0 {
                    2.0 * PI * (l * l) as f64 * (self.half[i] / self.half[i - 1]).ln()
                } else {
                    0.0
                };
                left + self.cond[i] + angular
            })
            .collect()
    }

    /// Linear interpolation of nodal values `f` at radius `x`.
    pub fn interpolate_linear(&self, f: &[f64], x: f64) -> f64 {
        let n = self.n();
        if x <= 0.0 {
            return f[0];
        }
        if x >= 1.0 {
            return f[n];
        }
        let k = self.r.partition_point(|&ri| ri <= x).saturating_sub(1).min(n - 1);
        let t = (x - self.r[k]) / (self.r[k + 1] - self.r[k]);
        f[k] * (1.0 - t) + f[k + 1] * t
    }
}

/// Solution of the radial problem on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    pub grid: RadialGrid,
    /// Values at every node, `v[N] = 0`.
    pub v: Vec<f64>,
    pub lambda: f64,
    pub s: f64,
    /// `V(r_i)` at the nodes.
    pub coef: Vec<f64>,
    pub iterations: usize,
    /// Max of `|F_i| / K_ii` at the final iterate.
    pub residual: f64,
}

impl RadialSolution {
    /// Scaling parameter: `λ V(0) e^{v(0)} δ^2 = 1`.
    pub fn delta(&self) -> f64 {
        1.0 / (self.lambda * self.coef[0] * self.s.exp()).sqrt()
    }

    /// `λ V e^v` at the nodes.
    pub fn density(&self) -> Vec<f64> {
        self.v
            .iter()
            .zip(&self.coef)
            .map(|(v, c)| self.lambda * c * v.exp())
            .collect()
    }

    /// `∫_Ω λ V e^v`
    pub fn total_mass(&self) -> f64 {
        self.ball_mass(1.0)
    }

    /// `∫_{B_R(0)} λ V e^v`: cumulative discrete flux at the half points,
    /// interpolated to `R` by a cubic through the four nearest half points.
    pub fn ball_mass(&self, radius: f64) -> f64 {
        cumulative_at(&self.grid, &self.density(), radius)
    }
}

/// `∫_{B_R(0)} g` for a radial nodal function `g`.
pub fn cumulative_at(grid: &RadialGrid, g: &[f64], radius: f64) -> f64 {
    let n = grid.n();
    let mut cum = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    cum.push(0.0);
    xs.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        acc += grid.area[i] * g[i];
        cum.push(acc);
        xs.push(grid.half[i]);
    }
    if radius >= grid.half[n - 1] {
        // last half cell up to the boundary, trapezoid in r
        let (a, b) = (grid.half[n - 1], radius.min(1.0));
        let gb = g[n - 1] + (g[n] - g[n - 1]) * (b - grid.r[n - 1]) / (1.0 - grid.r[n - 1]);
        let ga = g[n - 1] + (g[n] - g[n - 1]) * (a - grid.r[n - 1]) / (1.0 - grid.r[n - 1]);
        return acc + PI * (b - a) * (a * ga + b * gb);
    }
    let k = xs.partition_point(|&x| x <= radius).saturating_sub(1);
    let lo = k.saturating_sub(1).min(xs.len() - 4);
    lagrange(&xs[lo..lo + 4], &cum[lo..lo + 4], radius)
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut w = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if j != i {
                w *= (x - xj) / (xi - xj);
            }
        }
        total += w * yi;
    }
    total
}

/// Tridiagonal solve with `off[i]` coupling rows `i` and `i+1`. Returns
/// `None` on a zero pivot.
fn thomas(diag: &[f64], off: &[f64], rhs: &mut [f64]) -> Option<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = diag[0];
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    rhs[0] /= d;
    for i in 1..n {
        c[i - 1] = off[i - 1] / d;
        d = diag[i] - off[i - 1] * c[i - 1];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / d;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Some(())
}

/// Options for the amplitude-constrained Newton solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Cells in the radial grid.
    pub n: usize,
    /// Stop at `max |F_i| / K_ii` below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            n: 4096,
            tol: 1e-11,
            max_iter: 30,
        }
    }
}

fn nodal_coef(grid: &RadialGrid, v: &VExpr) -> Result<Vec<f64>, Solver1dError> {
    grid.r
        .iter()
        .map(|&r| {
            let c = v.eval([r, 0.0])?;
            if c <= 1e-12 {
                return Err(Solver1dError::Coefficient(EvalError::NonPositive { x: r, y: 0.0, value: c }));
            }
            Ok(c)
        })
        .collect()
}

fn scaled_residual(grid: &RadialGrid, coef: &[f64], v: &[f64], lambda: f64, kdiag: &[f64]) -> (Vec<f64>, f64) {
    let n = grid.n();
    let mut f = vec![0.0; n];
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut kv = kdiag[i] * v[i] - grid.cond[i] * v[i + 1];
        if i > 0 {
            kv -= grid.cond[i - 1] * v[i - 1];
        }
        f[i] = kv - lambda * grid.area[i] * coef[i] * v[i].exp();
        worst = worst.max((f[i] / kdiag[i]).abs());
    }
    (f, worst)
}

/// Solves `{ -Δv = λ V e^v, v(1) = 0, v(0) = s }` for `(v, λ)` on `grid`
/// starting from `(v0, lambda0)` given at the grid nodes.
pub fn newton_on_grid(
    grid: &RadialGrid,
    vexpr: &VExpr,
    s: f64,
    v0: Vec<f64>,
    lambda0: f64,
    opts: &NewtonOptions,
) -> Result<RadialSolution, Solver1dError> {
    let n = grid.n();
    let coef = nodal_coef(grid, vexpr)?;
    let kdiag = grid.stiffness_diag(0);
    let mut v = v0;
    v[0] = s;
    v[n] = 0.0;
    let mut lambda = lambda0;
    let (mut f, mut res) = scaled_residual(grid, &coef, &v, lambda, &kdiag);
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter || !res.is_finite() {
            return Err(Solver1dError::Divergence { s, iterations, residual: res });
        }
        iterations += 1;
        // rows 1..n-1 in unknowns v_1..v_{n-1}, plus the λ column
        let m = n - 1;
        let mut diag = Vec::with_capacity(m);
        let mut col = Vec::with_capacity(m);
        for i in 1..n {
            let e = grid.area[i] * coef[i] * v[i].exp();
            diag.push(kdiag[i] - lambda * e);
            col.push(-e);
        }
        let off: Vec<f64> = (1..n - 1).map(|i| -grid.cond[i]).collect();
        let mut x: Vec<f64> = f[1..].iter().map(|r| -r).collect();
        let mut y = col.clone();
        thomas(&diag, &off, &mut x).ok_or(Solver1dError::Divergence { s, iterations, residual: res })?;
        thomas(&diag, &off, &mut y).ok_or(Solver1dError::Divergence { s, iterations, residual: res })?;
        // row 0: -c_½ Δv_1 - A_0 V_0 e^{s} Δλ = -F_0
        let a = -grid.cond[0];
        let b0 = -grid.area[0] * coef[0] * v[0].exp();
        let dlambda = (-f[0] - a * x[0]) / (b0 - a * y[0]);
        let step: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| xi - dlambda * yi).collect();
        // damped update: halve until the residual decreases
        let mut t = 1.0;
        loop {
            let mut trial = v.clone();
            for i in 1..n {
                trial[i] += t * step[i - 1];
            }
            let lt = lambda + t * dlambda;
            let (ft, rt) = scaled_residual(grid, &coef, &trial, lt, &kdiag);
            if lt > 0.0 && rt.is_finite() && (rt < res || t < 1.0 / 64.0) {
                v = trial;
                lambda = lt;
                f = ft;
                res = rt;
                break;
            }
            t *= 0.5;
            if t < 1.0 / 1024.0 {
                return Err(Solver1dError::Divergence { s, iterations, residual: res });
            }
        }
        if lambda <= 0.0 {
            return Err(Solver1dError::NonPositiveLambda { s, lambda });
        }
    }
    Ok(RadialSolution {
        grid: grid.clone(),
        v,
        lambda,
        s,
        coef,
        iterations,
        residual: res,
    })
}

/// Solution at peak height `s`, seeded by `init` (a solution near `s`) or,
/// without one, by a parabola.
/// Initial `(v, λ)` on a given grid.
type Seed = Box<dyn Fn(&RadialGrid) -> (Vec<f64>, f64)>;

pub fn radial_newton_constrained(
    s: f64,
    vexpr: &VExpr,
    init: Option<&RadialSolution>,
    opts: &NewtonOptions,
) -> Result<RadialSolution, Solver1dError> {
    if !vexpr.is_radial() {
        return Err(Solver1dError::NotRadial(vexpr.source().to_string()));
    }
    let v00 = vexpr.eval([0.0, 0.0])?;
    let (delta_guess, seed): (f64, Seed) = match init {
        Some(prev) => {
            let ds = s - prev.s;
            let p = prev.clone();
            // δ scales like e^{-s/2} at fixed λ
            (
                prev.delta() * (-0.5 * ds).exp(),
                Box::new(move |g: &RadialGrid| {
                    // dv/ds along the V≡1 family, (1 - r²)/(1 + r²/(8δ²)) to leading order
                    let w = 8.0 * p.delta() * p.delta();
                    let v = g
                        .r
                        .iter()
                        .map(|&r| p.grid.interpolate_linear(&p.v, r) + ds * (1.0 - r * r) / (1.0 + r * r / w))
                        .collect();
                    (v, p.lambda)
                }),
            )
        }
        None => {
            // the V ≡ 1 member of the same height, rescaled by V(0)
            let e = ExactBranch::from_height(s);
            let lambda0 = e.lambda() / v00;
            (
                e.scaling(),
                Box::new(move |g: &RadialGrid| (g.r.iter().map(|&r| e.v(r)).collect(), lambda0)),
            )
        }
    };
    let grid = RadialGrid::graded(opts.n, delta_guess)?;
    let (v0, l0) = seed(&grid);
    let first = newton_on_grid(&grid, vexpr, s, v0, l0, opts)?;
    // regrid on the converged δ and re-solve once
    let grid = RadialGrid::graded(opts.n, first.delta())?;
    let v0 = grid.r.iter().map(|&r| first.grid.interpolate_linear(&first.v, r)).collect();
    let mut second = newton_on_grid(&grid, vexpr, s, v0, first.lambda, opts)?;
    second.iterations += first.iterations;
    Ok(second)
}

/// Exact radial family for `V ≡ 1`, parametrized by `delta > 0`:
/// `λ = 8δ²/(1+δ²)²`, `v = 2 log((1+δ²)/(1+δ²r²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactBranch {
    pub delta: f64,
}

impl ExactBranch {
    /// Member with peak height `s`.
    pub fn from_height(s: f64) -> ExactBranch {
        ExactBranch {
            delta: (0.5 * s).exp_m1().sqrt(),
        }
    }

    pub fn lambda(&self) -> f64 {
        let d2 = self.delta * self.delta;
        8.0 * d2 / ((1.0 + d2) * (1.0 + d2))
    }

    pub fn v(&self, r: f64) -> f64 {
        let d2 = self.delta * self.delta;
        2.0 * ((1.0 + d2) / (1.0 + d2 * r * r)).ln()
    }

    pub fn v_prime(&self, r: f64) -> f64 {
        let d2 = self.delta * self.delta;
        -4.0 * d2 * r / (1.0 + d2 * r * r)
    }

    pub fn height(&self) -> f64 {
        2.0 * (self.delta * self.delta).ln_1p()
    }

    /// `∫_{B_R} λ e^v = 8π δ² R² / (1 + δ² R²)`
    pub fn ball_mass(&self, radius: f64) -> f64 {
        let d2r2 = self.delta * self.delta * radius * radius;
        8.0 * PI * d2r2 / (1.0 + d2r2)
    }

    pub fn total_mass(&self) -> f64 {
        self.ball_mass(1.0)
    }

    /// Scaling parameter `1/√(λ e^{v(0)})`, equal to `1/(√8 δ)`.
    pub fn scaling(&self) -> f64 {
        1.0 / (8f64.sqrt() * self.delta)
    }
}

/// One eigenpair of a Fourier mode: `w(r) cos(lθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePair {
    pub l: usize,
    /// 1-based index within the mode.
    pub radial_index: usize,
    pub mu: f64,
    /// Nodal values, sup-normalized with positive maximum; zero at `r = 1`
    /// and, for `l >= 1`, at the axis.
    pub w: Vec<f64>,
}

struct Pencil {
    /// First unknown node (0 for `l = 0`, 1 otherwise).
    offset: usize,
    diag: Vec<f64>,
    off: Vec<f64>,
    mass: Vec<f64>,
}

impl Pencil {
    fn new(sol: &RadialSolution, l: usize) -> Pencil {
        let grid = &sol.grid;
        let n = grid.n();
        let offset = usize::from(l > 0);
        let kd = grid.stiffness_diag(l);
        let dens = sol.density();
        Pencil {
            offset,
            diag: kd[offset..n].to_vec(),
            off: (offset..n - 1).map(|i| -grid.cond[i]).collect(),
            mass: (offset..n).map(|i| grid.area[i] * dens[i]).collect(),
        }
    }

    /// Eigenvalues below `sigma`, from the signs of the `LDLᵀ` pivots.
    fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut d = 0.0f64;
        for i in 0..self.diag.len() {
            let a = self.diag[i] - sigma * self.mass[i];
            d = if i == 0 { a } else { a - self.off[i - 1] * self.off[i - 1] / d };
            if d == 0.0 {
                d = -f64::EPSILON * a.abs().max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn apply_k(&self, w: &[f64]) -> Vec<f64> {
        let m = w.len();
        (0..m)
            .map(|i| {
                let mut y = self.diag[i] * w[i];
                if i > 0 {
                    y += self.off[i - 1] * w[i - 1];
                }
                if i + 1 < m {
                    y += self.off[i] * w[i + 1];
                }
                y
            })
            .collect()
    }

    fn b_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.mass).map(|((x, y), m)| x * y * m).sum()
    }
}

/// The `count` smallest eigenpairs of Fourier mode `l`:
/// `-w'' - w'/r + (l²/r²) w = μ λ V e^v w`, `w(1) = 0`.
pub fn mode_eigs(sol: &RadialSolution, l: usize, count: usize) -> Result<Vec<ModePair>, Solver1dError> {
    let p = Pencil::new(sol, l);
    let mut hi = 1.0;
    while p.count_below(hi) < count {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Solver1dError::Eigen(format!("fewer than {count} eigenvalues below 1e12 in mode {l}")));
        }
    }
    let mut pairs: Vec<ModePair> = Vec::with_capacity(count);
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(count);
    for j in 1..=count {
        // bisect for the j-th eigenvalue
        let (mut lo, mut up) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + up);
            if p.count_below(mid) >= j {
                up = mid;
            } else {
                lo = mid;
            }
            if up - lo <= 1e-9 * up {
                break;
            }
        }
        // shift slightly off the bracket so the factorization stays regular
        let shift = 0.5 * (lo + up) * (1.0 - 1e-7);
        let diag: Vec<f64> = p.diag.iter().zip(&p.mass).map(|(a, m)| a - shift * m).collect();
        let mut w: Vec<f64> = vec![1.0; p.diag.len()];
        let mut mu = shift;
        for _ in 0..20 {
            let mut y: Vec<f64> = w.iter().zip(&p.mass).map(|(x, m)| x * m).collect();
            thomas(&diag, &p.off, &mut y).ok_or_else(|| Solver1dError::Eigen("singular shifted pencil".into()))?;
            for prev in &vecs {
                let c = p.b_dot(&y, prev) / p.b_dot(prev, prev);
                y.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
            }
            let norm = p.b_dot(&y, &y).sqrt();
            y.iter_mut().for_each(|x| *x /= norm);
            let ky = p.apply_k(&y);
            let rq = y.iter().zip(&ky).map(|(a, b)| a * b).sum::<f64>();
            let done = (rq - mu).abs() <= 1e-15 * rq.abs();
            mu = rq;
            w = y;
            if done {
                break;
            }
        }
        if !(mu > lo * (1.0 - 1e-6) && mu < up * (1.0 + 1e-6)) {
            return Err(Solver1dError::Eigen(format!(
                "inverse iteration left the bracket [{lo}, {up}] (got {mu}) in mode {l}"
            )));
        }
        vecs.push(w.clone());
        let n = sol.grid.n();
        let mut full = vec![0.0; n + 1];
        full[p.offset..n].copy_from_slice(&w);
        sup_normalize(&mut full);
        pairs.push(ModePair {
            l,
            radial_index: j,
            mu,
            w: full,
        });
    }
    Ok(pairs)
}

/// Scales to sup-norm one with a positive maximum.
pub fn sup_normalize(w: &mut [f64]) {
    let (mut big, mut sign) = (0.0f64, 1.0);
    for &x in w.iter() {
        if x.abs() > big * (1.0 + 1e-12) {
            big = x.abs();
            sign = x.signum();
        }
    }
    if big > 0.0 {
        w.iter_mut().for_each(|x| *x *= sign / big);
    }
}

/// Discrete Dirichlet form `∫ ∇a·∇b` of two mode-`l` fields (the angular
/// factor integrates to `π` for `l >= 1`; the mode-0 normalization is used
/// for both so ratios are comparable).
pub fn dirichlet_form(grid: &RadialGrid, l: usize, a: &[f64], b: &[f64]) -> f64 {
    let n = grid.n();
    let kd = grid.stiffness_diag(l);
    let mut total = 0.0;
    for i in 0..n {
        let mut ka = kd[i] * a[i] - grid.cond[i] * a[i + 1];
        if i > 0 {
            ka -= grid.cond[i - 1] * a[i - 1];
        }
        if l > 0 && i == 0 {
            continue;
        }
        total += ka * b[i];
    }
    total
}

/// A merged eigenvalue with its Fourier label; `l >= 1` modes come in
/// `cos`/`sin` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub mu: f64,
    pub l: usize,
    pub radial_index: usize,
    pub multiplicity: usize,
}

/// Merges per-mode eigenvalues into the ascending spectrum of the disk
/// problem. Each entry carries its multiplicity; entries are kept until
/// `nmax` eigenvalues are covered.
pub fn assemble_spectrum(modes: &[Vec<ModePair>], nmax: usize) -> Vec<SpectrumEntry> {
    let mut all: Vec<SpectrumEntry> = modes
        .iter()
        .flatten()
        .map(|p| SpectrumEntry {
            mu: p.mu,
            l: p.l,
            radial_index: p.radial_index,
            multiplicity: if p.l == 0 { 1 } else { 2 },
        })
        .collect();
    all.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(a.l.cmp(&b.l)));
    let mut out = Vec::new();
    let mut counted = 0;
    for e in all {
        if counted >= nmax {
            break;
        }
        counted += e.multiplicity;
        out.push(e);
    }
    out
}

/// `μ^n` for the 1-based eigenvalue index `n`, counting multiplicity.
pub fn nth_eigenvalue(spectrum: &[SpectrumEntry], n: usize) -> Option<&SpectrumEntry> {
    let mut seen = 0;
    spectrum.iter().find(|e| {
        seen += e.multiplicity;
        seen >= n
    })
}

/// Settings for a radial continuation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Branch1dOptions {
    /// Cells on the coarse grid; the fine grid has twice as many.
    pub n: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Largest Fourier mode solved.
    pub lmax: usize,
    /// Eigenpairs per Fourier mode.
    pub per_mode: usize,
    /// Eigenvalues kept after merging, counting multiplicity.
    pub nmax: usize,
    /// Ball radii whose masses are extrapolated.
    pub radii: Vec<f64>,
}

impl Default for Branch1dOptions {
    fn default() -> Self {
        Branch1dOptions {
            n: 2048,
            tol: 1e-11,
            max_iter: 30,
            lmax: 4,
            per_mode: 2,
            nmax: 6,
            radii: vec![0.2, 0.3, 0.4],
        }
    }
}

/// One branch point with its spectrum; scalar quantities are Richardson
/// extrapolated from grids with `n` and `2n` cells on the same map.
#[derive(Debug, Clone)]
pub struct RadialStep {
    pub point: BranchPoint,
    pub eigen: Vec<Eigenpair>,
    pub spectrum: Vec<SpectrumEntry>,
    /// Largest relative `H¹₀` cross product within a Fourier mode.
    pub orthogonality: f64,
    /// Converged solution on the coarse grid (seeds the next step).
    pub coarse: RadialSolution,
}

fn extrapolate(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Solves at `s` on both grids and assembles the step.
pub fn radial_step(
    s: f64,
    vexpr: &VExpr,
    init: Option<&RadialSolution>,
    opts: &Branch1dOptions,
) -> Result<RadialStep, Solver1dError> {
    let nopts = NewtonOptions {
        n: opts.n,
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let coarse = radial_newton_constrained(s, vexpr, init, &nopts)?;
    let grid = RadialGrid::with_beta(2 * opts.n, coarse.grid.beta)?;
    let v0 = grid.r.iter().map(|&r| coarse.grid.interpolate_linear(&coarse.v, r)).collect();
    let fine = newton_on_grid(&grid, vexpr, s, v0, coarse.lambda, &NewtonOptions { n: 2 * opts.n, ..nopts })?;

    let lambda = extrapolate(coarse.lambda, fine.lambda);
    let mut ball_masses: Vec<BallMass> = opts
        .radii
        .iter()
        .map(|&radius| BallMass {
            peak: 0,
            radius,
            value: extrapolate(coarse.ball_mass(radius), fine.ball_mass(radius)),
        })
        .collect();
    let total_mass = extrapolate(coarse.total_mass(), fine.total_mass());
    ball_masses.push(BallMass { peak: 0, radius: 1.0, value: total_mass });

    let mut modes = Vec::with_capacity(opts.lmax + 1);
    let mut eigen = Vec::new();
    let mut orthogonality: f64 = 0.0;
    for l in 0..=opts.lmax {
        let c = mode_eigs(&coarse, l, opts.per_mode)?;
        let mut f = mode_eigs(&fine, l, opts.per_mode)?;
        for (i, a) in f.iter().enumerate() {
            for b in &f[i + 1..] {
                let ab = dirichlet_form(&fine.grid, l, &a.w, &b.w);
                let aa = dirichlet_form(&fine.grid, l, &a.w, &a.w);
                let bb = dirichlet_form(&fine.grid, l, &b.w, &b.w);
                orthogonality = orthogonality.max(ab.abs() / (aa * bb).sqrt());
            }
        }
        for (a, b) in f.iter_mut().zip(&c) {
            a.mu = extrapolate(b.mu, a.mu);
        }
        for p in &f {
            eigen.push(Eigenpair {
                mu: p.mu,
                w: p.w.clone(),
                label: Some((p.l, p.radial_index)),
                multiplicity: if l == 0 { 1 } else { 2 },
            });
        }
        modes.push(f);
    }
    let spectrum = assemble_spectrum(&modes, opts.nmax);
    eigen.sort_by(|a, b| a.mu.total_cmp(&b.mu).then(a.label.cmp(&b.label)));
    // keep the pairs that made it into the merged spectrum
    eigen.retain(|p| spectrum.iter().any(|e| Some((e.l, e.radial_index)) == p.label));

    let v00 = fine.coef[0];
    let point = BranchPoint {
        s,
        lambda,
        lambda_raw: fine.lambda,
        lambda_levels: vec![coarse.lambda, fine.lambda],
        peaks: vec![Peak {
            x: [0.0, 0.0],
            height: s,
            delta: 1.0 / (lambda * v00 * s.exp()).sqrt(),
        }],
        total_mass,
        ball_masses,
        newton_iterations: coarse.iterations + fine.iterations,
        residual: fine.residual,
        coef: vexpr.clone(),
        coef_nodes: fine.coef.clone(),
        v: fine.v.clone(),
        space: Space::Radial(fine.grid.clone()),
    };
    Ok(RadialStep {
        point,
        eigen,
        spectrum,
        orthogonality,
        coarse,
    })
}

/// Amplitude continuation over `schedule` (strictly increasing). Each step
/// is handed to `visit` as soon as it is solved; a failure ends the run and
/// is returned alongside the steps completed before it.
pub fn continue_radial(
    vexpr: &VExpr,
    schedule: &[f64],
    opts: &Branch1dOptions,
    mut visit: impl FnMut(&RadialStep),
) -> (Vec<RadialStep>, Option<Solver1dError>) {
    let mut out: Vec<RadialStep> = Vec::with_capacity(schedule.len());
    for &s in schedule {
        let init = out.last().map(|st| &st.coarse);
        match radial_step(s, vexpr, init, opts) {
            Ok(step) => {
                visit(&step);
                out.push(step);
            }
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

/// `start, start + step, ...` up to and including `end`.
pub fn amplitude_schedule(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| start + step * k as f64).collect()
}
