//! Solver-independent view of computed solutions and eigenpairs.
//!
//! Both solvers hand their results to the diagnostics through [`Space`],
//! which knows how to integrate, interpolate and differentiate nodal fields
//! on its discretization.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::green::{GreenError, GreenOracle};

use crate::grid2d::Grid2D;
use crate::solver1d::{cumulative_at, dirichlet_form, RadialGrid};
use crate::vexpr::VExpr;

/// The discretization a field lives on.
#[derive(Debug, Clone)]
pub enum Space {
    /// Radial profiles on the unit disk; node `i` sits at `(r_i, 0)`.
    Radial(RadialGrid),
    /// Unknown (interior) nodes of a Cartesian grid; zero elsewhere.
    Planar(Arc<Grid2D>),
}

fn lagrange_with_derivative(xs: &[f64], ys: &[f64], x: f64) -> (f64, f64) {
    let k = xs.len();
    let (mut val, mut der) = (0.0, 0.0);
    for i in 0..k {
        let mut w = 1.0;
        let mut dw = 0.0;
        for j in 0..k {
            if j == i {
                continue;
            }
            let den = xs[i] - xs[j];
            dw = dw * (x - xs[j]) / den + w / den;
            w *= (x - xs[j]) / den;
        }
        val += w * ys[i];
        der += dw * ys[i];
    }
    (val, der)
}

impl Space {
    pub fn len(&self) -> usize {
        match self {
            Space::Radial(g) => g.r.len(),
            Space::Planar(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        match self {
            Space::Radial(g) => [g.r[i], 0.0],
            Space::Planar(g) => g.point(i),
        }
    }

    /// Distance from `p` to the outer boundary.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        match self {
            Space::Radial(_) => 1.0 - p[0].hypot(p[1]),
            Space::Planar(g) => g.domain().boundary_distance(p),
        }
    }

    /// Local mesh width near `p`.
    pub fn local_width(&self, p: [f64; 2]) -> f64 {
        match self {
            Space::Radial(g) => {
                let r = p[0].hypot(p[1]);
                let k = g.r.partition_point(|&x| x <= r).clamp(1, g.r.len() - 1);
                g.r[k] - g.r[k - 1]
            }
            Space::Planar(g) => g.cell(),
        }
    }

    /// Interpolated value and gradient of a nodal field.
    pub fn value_and_gradient(&self, f: &[f64], p: [f64; 2]) -> Option<(f64, [f64; 2])> {
        match self {
            Space::Radial(g) => {
                let r = p[0].hypot(p[1]);
                if r > 1.0 {
                    return None;
                }
                let n = g.r.len() - 1;
                let k = g.r.partition_point(|&x| x <= r).saturating_sub(1).min(n - 1);
                // four nodes around r, mirrored evenly through the axis
                let idx: [isize; 4] = [k as isize - 1, k as isize, k as isize + 1, k as isize + 2];
                let shift = if idx[3] > n as isize { idx[3] - n as isize } else { 0 };
                let mut xs = [0.0; 4];
                let mut ys = [0.0; 4];
                for (slot, &i) in idx.iter().enumerate() {
                    let i = i - shift;
                    let (x, y) = if i < 0 { (-g.r[(-i) as usize], f[(-i) as usize]) } else { (g.r[i as usize], f[i as usize]) };
                    xs[slot] = x;
                    ys[slot] = y;
                }
                let (val, der) = lagrange_with_derivative(&xs, &ys, r);
                let dir = if r > 0.0 { [p[0] / r, p[1] / r] } else { [0.0, 0.0] };
                Some((val, [der * dir[0], der * dir[1]]))
            }
            Space::Planar(g) => g.interpolate_unknowns(f, p),
        }
    }

    pub fn value(&self, f: &[f64], p: [f64; 2]) -> Option<f64> {
        self.value_and_gradient(f, p).map(|(v, _)| v)
    }

    /// `∫_{B_R(center)} g`. Radial spaces only support balls about the origin.
    pub fn ball_integral(&self, g: &[f64], center: [f64; 2], radius: f64) -> f64 {
        match self {
            Space::Radial(grid) => {
                debug_assert!(center[0].hypot(center[1]) < 1e-12, "radial balls are centred at the origin");
                cumulative_at(grid, g, radius)
            }
            Space::Planar(grid) => grid
                .ball_weights(center, radius)
                .into_iter()
                .map(|(u, w)| w * g[u])
                .sum(),
        }
    }

    /// `∫_Ω g`
    pub fn integral(&self, g: &[f64]) -> f64 {
        match self {
            Space::Radial(grid) => cumulative_at(grid, g, 1.0),
            Space::Planar(grid) => grid.weight() * g.iter().sum::<f64>(),
        }
    }

    /// Nodes outside every ball `B_R(c)` and at least two cells from the
    /// boundary, with their quadrature weights.
    pub fn far_nodes(&self, centers: &[[f64; 2]], radius: f64) -> Vec<(usize, f64)> {
        let outside = |p: [f64; 2]| centers.iter().all(|c| (p[0] - c[0]).hypot(p[1] - c[1]) > radius);
        match self {
            Space::Radial(g) => (1..g.r.len() - 1)
                .filter(|&i| outside([g.r[i], 0.0]) && 1.0 - g.r[i] >= 2.0 * (g.r[i + 1] - g.r[i]))
                .map(|i| (i, g.area[i]))
                .collect(),
            Space::Planar(g) => (0..g.len())
                .filter(|&u| outside(g.point(u)) && g.cells_from_boundary(g.point(u)) >= 2.0)
                .map(|u| (u, g.weight()))
                .collect(),
        }
    }

    /// Discrete `∫ ∇a · ∇b` with zero boundary values.
    pub fn dirichlet_form(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Space::Radial(g) => dirichlet_form(g, 0, a, b),
            Space::Planar(g) => {
                let mut total = 0.0;
                for u in 0..g.len() {
                    let mut la = 0.0;
                    for (k, nb) in g.neighbors(u).iter().enumerate() {
                        let h = g.spacing()[k / 2];
                        match *nb {
                            crate::grid2d::Neighbor::Unknown(v) => la += (a[u] - a[v]) / (h * h),
                            crate::grid2d::Neighbor::Boundary { theta, .. } => la += a[u] / (theta * h * h),
                        }
                    }
                    total += la * b[u];
                }
                total * g.weight()
            }
        }
    }

    /// `n` points evenly spaced on the circle `|x - c| = R`, with the
    /// quadrature weight of each (arc length).
    pub fn circle(&self, center: [f64; 2], radius: f64, n: usize) -> Vec<([f64; 2], [f64; 2], f64)> {
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                let nu = [t.cos(), t.sin()];
                ([center[0] + radius * nu[0], center[1] + radius * nu[1]], nu, 2.0 * PI * radius / n as f64)
            })
            .collect()
    }
}

/// A located maximum of `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: [f64; 2],
    pub height: f64,
    /// Scaling parameter `δ` with `λ V(x) e^{v(x)} δ² = 1`.
    pub delta: f64,
}

/// Ball mass around one peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub peak: usize,
    pub radius: f64,
    pub value: f64,
}

/// One computed solution.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// Amplitude parameter, the value at the anchor peak.
    pub s: f64,
    /// Best estimate (extrapolated when the solver supports it).
    pub lambda: f64,
    /// Value on the finest grid before extrapolation.
    pub lambda_raw: f64,
    /// Raw values on each grid level, coarse to fine.
    pub lambda_levels: Vec<f64>,
    pub space: Space,
    /// Nodal values of `v`.
    pub v: Vec<f64>,
    pub coef: VExpr,
    /// `V` at the nodes.
    pub coef_nodes: Vec<f64>,
    pub peaks: Vec<Peak>,
    /// `∫_Ω λ V e^v`.
    pub total_mass: f64,
    /// Ball masses the solver computed to higher accuracy than plain
    /// quadrature would.
    pub ball_masses: Vec<BallMass>,
    pub newton_iterations: usize,
    pub residual: f64,
}

impl BranchPoint {
    /// `λ V e^v` at the nodes (raw λ, consistent with the discrete field).
    pub fn density(&self) -> Vec<f64> {
        self.v
            .iter()
            .zip(&self.coef_nodes)
            .map(|(v, c)| self.lambda_raw * c * v.exp())
            .collect()
    }

    /// Solver-provided ball mass, if one was recorded for this radius.
    pub fn recorded_ball_mass(&self, peak: usize, radius: f64) -> Option<f64> {
        self.ball_masses
            .iter()
            .find(|b| b.peak == peak && (b.radius - radius).abs() < 1e-14)
            .map(|b| b.value)
    }

    /// Serializable summary.
    pub fn record(&self) -> BranchRecord {
        BranchRecord {
            s: self.s,
            lambda: self.lambda,
            lambda_raw: self.lambda_raw,
            peaks: self.peaks.clone(),
            total_mass: self.total_mass,
            ball_masses: self.ball_masses.clone(),
            newton_iterations: self.newton_iterations,
            residual: self.residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub s: f64,
    pub lambda: f64,
    pub lambda_raw: f64,
    pub peaks: Vec<Peak>,
    pub total_mass: f64,
    pub ball_masses: Vec<BallMass>,
    pub newton_iterations: usize,
    pub residual: f64,
}

/// One eigenpair of the linearized problem.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub mu: f64,
    /// Sup-normalized with positive maximum.
    pub w: Vec<f64>,
    /// Fourier label `(l, radial index)` for radial solves.
    pub label: Option<(usize, usize)>,
    /// 2 for a `cos`/`sin` pair stored once.
    pub multiplicity: usize,
}

/// Eigenpairs in ascending order with the concentration values measured
/// against one branch point.
#[derive(Debug, Clone)]
pub struct EigenSet {
    pub pairs: Vec<Eigenpair>,
    /// `ĉ^n_j = w^n(x_j)`, indexed `[n][j]`.
    pub c_hat: Vec<Vec<f64>>,
    /// Least-squares far-field coefficients, indexed `[n][j]`.
    pub c_far: Vec<Vec<f64>>,
    /// Relative residual of each far-field fit.
    pub far_fit_error: Vec<f64>,
    /// Largest relative discrete `H¹₀` cross product between distinct
    /// eigenfunctions.
    pub orthogonality: f64,
}

impl EigenSet {
    /// `μ^n`, 1-based, counting multiplicity.
    pub fn mu(&self, n: usize) -> Option<f64> {
        self.pair(n).map(|p| p.mu)
    }

    /// Entry holding the `n`-th eigenvalue (1-based, counting multiplicity).
    pub fn pair(&self, n: usize) -> Option<&Eigenpair> {
        let mut seen = 0;
        self.pairs.iter().find(|p| {
            seen += p.multiplicity;
            seen >= n
        })
    }

    /// Position in `pairs` of the `n`-th eigenvalue.
    pub fn index_of(&self, n: usize) -> Option<usize> {
        let mut seen = 0;
        self.pairs.iter().position(|p| {
            seen += p.multiplicity;
            seen >= n
        })
    }
}

/// Concentration values of one eigenfunction: `ĉ_j = w(x_j)` at the
/// measured peaks, and the least-squares coefficients `c̃` of
/// `w/μ ≈ 8π Σ c̃_j G(·, x*_j)` over the far nodes (outside every
/// `B_R(x*_j)`). Returns `(ĉ, c̃, relative fit residual)`.
pub fn extract_c(
    space: &Space,
    w: &[f64],
    mu: f64,
    peaks: &[Peak],
    centers: &[[f64; 2]],
    oracle: &GreenOracle,
    radius: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64), BranchError> {
    let c_hat = peaks
        .iter()
        .map(|p| space.value(w, p.x).ok_or(BranchError::Outside(p.x)))
        .collect::<Result<Vec<_>, _>>()?;
    let m = centers.len();
    let nodes = space.far_nodes(centers, radius);
    if nodes.len() < 4 * m {
        return Err(BranchError::IllConditioned(format!("only {} far-field nodes", nodes.len())));
    }
    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut atb = DVector::<f64>::zeros(m);
    let mut bb = 0.0;
    let mut row = vec![0.0; m];
    for &(u, wt) in &nodes {
        let x = space.point(u);
        for (j, c) in centers.iter().enumerate() {
            row[j] = 8.0 * PI * oracle.g(x, *c)?;
        }
        let b = w[u] / mu;
        bb += wt * b * b;
        for i in 0..m {
            atb[i] += wt * row[i] * b;
            for j in 0..m {
                ata[(i, j)] += wt * row[i] * row[j];
            }
        }
    }
    let sv = ata.clone().svd(false, false).singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    if !(lo > 1e-10 * hi) {
        return Err(BranchError::IllConditioned(format!("normal matrix condition {:.3e}", hi / lo)));
    }
    let c = ata
        .clone()
        .cholesky()
        .ok_or_else(|| BranchError::IllConditioned("normal matrix not positive definite".into()))?
        .solve(&atb);
    // ‖b - A c‖² = bᵀb - 2cᵀAᵀb + cᵀAᵀAc
    let res2 = (bb - 2.0 * c.dot(&atb) + c.dot(&(&ata * &c))).max(0.0);
    Ok((c_hat, c.iter().copied().collect(), (res2 / bb).sqrt()))
}

#[derive(Debug, Error)]
pub enum BranchError {
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error("point {0:?} lies outside the discretization")]
    Outside([f64; 2]),
    #[error("far-field fit is ill-conditioned: {0}")]
    IllConditioned(String),
}

impl EigenSet {
    /// Fills in `ĉ` and `c̃` for every pair against the peaks of `bp`.
    /// `centers` are the points the far field is fitted against.
    pub fn measure(
        pairs: Vec<Eigenpair>,
        bp: &BranchPoint,
        centers: &[[f64; 2]],
        oracle: &GreenOracle,
        radius: f64,
        orthogonality: f64,
    ) -> Result<EigenSet, BranchError> {
        let mut c_hat = Vec::with_capacity(pairs.len());
        let mut c_far = Vec::with_capacity(pairs.len());
        let mut far_fit_error = Vec::with_capacity(pairs.len());
        for p in &pairs {
            if matches!(p.label, Some((l, _)) if l > 0) {
                // cos(lθ) profiles vanish at the centre and are orthogonal
                // to every radial far field
                c_hat.push(vec![0.0; bp.peaks.len()]);
                c_far.push(vec![0.0; centers.len()]);
                far_fit_error.push(0.0);
                continue;
            }
            let (h, f, e) = extract_c(&bp.space, &p.w, p.mu, &bp.peaks, centers, oracle, radius)?;
            c_hat.push(h);
            c_far.push(f);
            far_fit_error.push(e);
        }
        Ok(EigenSet {
            pairs,
            c_hat,
            c_far,
            far_fit_error,
            orthogonality,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_interpolation_is_even_and_accurate() {
        let g = RadialGrid::graded(256, 0.05).unwrap();
        let f: Vec<f64> = g.r.iter().map(|r| (1.0 - r * r).powi(2)).collect();
        let sp = Space::Radial(g);
        for &r in &[0.0, 1e-3, 0.07, 0.5, 0.95, 1.0] {
            let (v, gr) = sp.value_and_gradient(&f, [r * 0.6, r * 0.8]).unwrap();
            assert!((v - (1.0 - r * r).powi(2)).abs() < 1e-7, "r={r}");
            let d = -4.0 * r * (1.0 - r * r);
            assert!((gr[0] - 0.6 * d).abs() < 1e-4 && (gr[1] - 0.8 * d).abs() < 1e-4, "r={r}");
        }
    }

    #[test]
    fn radial_ball_integral() {
        let g = RadialGrid::graded(512, 0.01).unwrap();
        let f: Vec<f64> = g.r.iter().map(|r| 1.0 - r * r).collect();
        let sp = Space::Radial(g);
        // ∫_{B_R} (1 - r²) = π R² - π R⁴/2
        for &radius in &[0.3, 0.4, 1.0] {
            let exact = PI * radius * radius - 0.5 * PI * radius.powi(4);
            let got = sp.ball_integral(&f, [0.0, 0.0], radius);
            assert!((got - exact).abs() < 1e-4, "R={radius}: {got} vs {exact}");
        }
    }
}
