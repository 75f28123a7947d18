//! Residuals of the asymptotic identities, measured on one branch point
//! and its eigenpairs.
//!
//! Every function here is a pure function of its inputs. Residuals are
//! signed as `measured - predicted`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch::{BranchError, BranchPoint, EigenSet, Eigenpair};
use crate::green::{GreenError, GreenOracle};
use crate::hamiltonian::{predict_low, LowBand, Point};
use crate::vexpr::EvalError;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("quadrature did not converge on [{a}, {b}]")]
    Quadrature { a: f64, b: f64 },
    #[error("balls of radius {radius} around peaks {i} and {j} overlap")]
    Overlap { radius: f64, i: usize, j: usize },
    #[error("ball of radius {radius} around peak {peak} leaves the domain")]
    NotInterior { radius: f64, peak: usize },
    #[error("point {0:?} is outside the discretization")]
    Outside([f64; 2]),
    #[error("bubble window of {window} under-resolved: δ = {delta:.3e}, local width {width:.3e}")]
    Unresolved { window: f64, delta: f64, width: f64 },
    #[error("peak index {0} out of range")]
    Peak(usize),
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error(transparent)]
    Coefficient(#[from] EvalError),
    #[error(transparent)]
    Branch(#[from] BranchError),
}

/// `U(x) = log 1/(1 + |x|²/8)²`
pub fn bubble_u(r: f64) -> f64 {
    -2.0 * (r * r / 8.0).ln_1p()
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> Option<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)? + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, DiagnosticsError> {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    adaptive(&f, a, b, fa, fm, fb, whole, tol, 48).ok_or(DiagnosticsError::Quadrature { a, b })
}

/// Composite Simpson rule with `n` (even) panels.
pub fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut total = f(a) + f(b);
    for k in 1..n {
        total += f(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    total * h / 3.0
}

/// The three plane integrals of the bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleConstants {
    /// `∫ e^U`
    pub i0: f64,
    /// `∫ e^U U`
    pub i1: f64,
    /// `(1/2π) ∫ e^U log|y|⁻¹`
    pub i2: f64,
}

/// Radial integrands of the bubble constants in `t = log r`, so the plane
/// integral `∫ f(|y|) dy` becomes `2π ∫ f(e^t) e^{2t} dt`.
pub fn bubble_integrands() -> [Box<dyn Fn(f64) -> f64>; 3] {
    let weight = |t: f64| {
        let r = t.exp();
        r * r / (1.0 + r * r / 8.0).powi(2)
    };
    [
        Box::new(move |t| 2.0 * PI * weight(t)),
        Box::new(move |t| 2.0 * PI * weight(t) * bubble_u(t.exp())),
        Box::new(move |t| -t * weight(t)),
    ]
}

/// Window in `t = log r` outside which every integrand is below 1e-20.
pub const BUBBLE_WINDOW: (f64, f64) = (-30.0, 30.0);

pub fn bubble_integrals() -> Result<BubbleConstants, DiagnosticsError> {
    let [f0, f1, f2] = bubble_integrands();
    let (a, b) = BUBBLE_WINDOW;
    Ok(BubbleConstants {
        i0: adaptive_simpson(f0, a, b, 1e-11)?,
        i1: adaptive_simpson(f1, a, b, 1e-11)?,
        i2: adaptive_simpson(f2, a, b, 1e-11)?,
    })
}

/// Global and per-peak masses of `λ V e^v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Masses {
    pub radius: f64,
    pub total: f64,
    pub balls: Vec<f64>,
}

fn check_balls(bp: &BranchPoint, radius: f64) -> Result<(), DiagnosticsError> {
    for (i, p) in bp.peaks.iter().enumerate() {
        if bp.space.boundary_distance(p.x) < radius - 1e-12 {
            return Err(DiagnosticsError::NotInterior { radius, peak: i });
        }
        for (j, q) in bp.peaks.iter().enumerate().skip(i + 1) {
            if (p.x[0] - q.x[0]).hypot(p.x[1] - q.x[1]) <= 2.0 * radius {
                return Err(DiagnosticsError::Overlap { radius, i, j });
            }
        }
    }
    Ok(())
}

/// `σ_j = ∫_{B_R(x_j)} λ V e^v`, preferring the solver's own value.
pub fn ball_mass(bp: &BranchPoint, j: usize, radius: f64) -> f64 {
    bp.recorded_ball_mass(j, radius)
        .unwrap_or_else(|| bp.space.ball_integral(&bp.density(), bp.peaks[j].x, radius))
}

pub fn masses(bp: &BranchPoint, radius: f64) -> Result<Masses, DiagnosticsError> {
    check_balls(bp, radius)?;
    Ok(Masses {
        radius,
        total: bp.total_mass,
        balls: (0..bp.peaks.len()).map(|j| ball_mass(bp, j, radius)).collect(),
    })
}

/// Terms of the local Pohozaev identity on `B_R(x_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pohozaev {
    /// `-2 ∮ ν·(x - x_j) λVe^v + 4σ`
    pub i1: f64,
    /// `2 ∫ (x - x_j)·∇V λ e^v`
    pub i2: f64,
    /// `R ∮ {2 (∂_ν v)² - |∇v|²}`
    pub rhs: f64,
    /// `i1 + i2 - rhs`
    pub residual: f64,
}

/// Points used on each quadrature circle.
const CIRCLE_POINTS: usize = 512;

pub fn pohozaev_residual(bp: &BranchPoint, j: usize, radius: f64) -> Result<Pohozaev, DiagnosticsError> {
    let peak = bp.peaks.get(j).ok_or(DiagnosticsError::Peak(j))?;
    check_balls(bp, radius)?;
    let xj = peak.x;
    let sigma = ball_mass(bp, j, radius);
    let mut flux = 0.0;
    let mut rhs = 0.0;
    for (p, nu, ds) in bp.space.circle(xj, radius, CIRCLE_POINTS) {
        let (v, g) = bp.space.value_and_gradient(&bp.v, p).ok_or(DiagnosticsError::Outside(p))?;
        flux += ds * radius * bp.lambda_raw * bp.coef.eval(p)? * v.exp();
        let dn = g[0] * nu[0] + g[1] * nu[1];
        rhs += ds * radius * (2.0 * dn * dn - g[0] * g[0] - g[1] * g[1]);
    }
    let dens = bp.density();
    let h = 1e-5;
    let mut moment = vec![0.0; dens.len()];
    for (u, m) in moment.iter_mut().enumerate() {
        let x = bp.space.point(u);
        if dens[u] != 0.0 {
            let gl = bp.coef.grad_log(x, h)?;
            *m = dens[u] * ((x[0] - xj[0]) * gl[0] + (x[1] - xj[1]) * gl[1]);
        }
    }
    let i1 = -2.0 * flux + 4.0 * sigma;
    let i2 = 2.0 * bp.space.ball_integral(&moment, xj, radius);
    Ok(Pohozaev {
        i1,
        i2,
        rhs,
        residual: i1 + i2 - rhs,
    })
}

/// Peak-height residuals: against the refined law (uses the measured `σ`)
/// and against `v = -2 log λ - 2 log d_j - log V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakHeight {
    pub refined: f64,
    pub leading: f64,
}

fn robin_sum(points: &[Point], j: usize, oracle: &GreenOracle) -> Result<f64, GreenError> {
    let mut total = oracle.r(points[j])?;
    for (i, p) in points.iter().enumerate() {
        if i != j {
            total += oracle.g(points[j], *p)?;
        }
    }
    Ok(total)
}

/// `points` and `d` describe the limiting configuration `x*`.
pub fn peak_height_residual(
    bp: &BranchPoint,
    j: usize,
    points: &[Point],
    d: &[f64],
    oracle: &GreenOracle,
    radius: f64,
) -> Result<PeakHeight, DiagnosticsError> {
    let peak = bp.peaks.get(j).ok_or(DiagnosticsError::Peak(j))?;
    let sigma = ball_mass(bp, j, radius);
    let log_lv = bp.lambda.ln() + bp.coef.log_eval(points[j])?;
    let refined = -sigma / (sigma - 4.0 * PI) * log_lv + 6.0 * 2f64.ln() - 8.0 * PI * robin_sum(points, j, oracle)?;
    let leading = -2.0 * bp.lambda.ln() - 2.0 * d[j].ln() - bp.coef.log_eval(peak.x)?;
    Ok(PeakHeight {
        refined: peak.height - refined,
        leading: peak.height - leading,
    })
}

/// `∫_{B_R(x_j)} λ V e^v f` for a nodal `f`.
fn weighted_ball(bp: &BranchPoint, f: &[f64], j: usize, radius: f64) -> f64 {
    let g: Vec<f64> = bp.density().iter().zip(f).map(|(a, b)| a * b).collect();
    bp.space.ball_integral(&g, bp.peaks[j].x, radius)
}

/// Green-formula identity for `{1/μ - v(x_j)} ∫_{B_R} λVe^v w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma31 {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `∫_{B_R} λVe^v w - 8π c_j`
    pub mass_residual: f64,
}

pub fn lemma31_residual(
    bp: &BranchPoint,
    pair: &Eigenpair,
    j: usize,
    c: &[f64],
    points: &[Point],
    oracle: &GreenOracle,
    radius: f64,
) -> Result<Lemma31, DiagnosticsError> {
    let peak = bp.peaks.get(j).ok_or(DiagnosticsError::Peak(j))?;
    let integral = weighted_ball(bp, &pair.w, j, radius);
    let lhs = (1.0 / pair.mu - peak.height) * integral;
    let mut rhs = -16.0 * PI * c[j];
    for (i, p) in points.iter().enumerate() {
        if i != j {
            rhs += 64.0 * PI * PI * (c[i] - c[j]) * oracle.g(points[j], *p)?;
        }
    }
    Ok(Lemma31 {
        lhs,
        rhs,
        residual: lhs - rhs,
        mass_residual: integral - 8.0 * PI * c[j],
    })
}

/// `w(x_j)/μ` against `{log λ + log V(x*_j) + v(x_j)} 2c_j - 6 c_j log 2
/// + 8π{c_j R(x*_j) + Σ c_i G(x*_j, x*_i)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma41 {
    pub measured: f64,
    pub predicted: f64,
    pub residual: f64,
    /// `residual / |predicted|`
    pub relative: f64,
}

pub fn lemma41_residual(
    bp: &BranchPoint,
    pair: &Eigenpair,
    j: usize,
    c: &[f64],
    points: &[Point],
    oracle: &GreenOracle,
) -> Result<Lemma41, DiagnosticsError> {
    let peak = bp.peaks.get(j).ok_or(DiagnosticsError::Peak(j))?;
    let wj = bp.space.value(&pair.w, peak.x).ok_or(DiagnosticsError::Outside(peak.x))?;
    let measured = wj / pair.mu;
    let log_term = bp.lambda.ln() + bp.coef.log_eval(points[j])? + peak.height;
    let mut green = c[j] * oracle.r(points[j])?;
    for (i, p) in points.iter().enumerate() {
        if i != j {
            green += c[i] * oracle.g(points[j], *p)?;
        }
    }
    let predicted = 2.0 * c[j] * log_term - 6.0 * c[j] * 2f64.ln() + 8.0 * PI * green;
    let residual = measured - predicted;
    Ok(Lemma41 {
        measured,
        predicted,
        residual,
        relative: residual / predicted.abs(),
    })
}

/// `∫_{B_R} λVe^v (w - w(x_j))/μ + 16π c_j`
pub fn lemma43_residual(bp: &BranchPoint, pair: &Eigenpair, j: usize, c: &[f64], radius: f64) -> Result<f64, DiagnosticsError> {
    let peak = bp.peaks.get(j).ok_or(DiagnosticsError::Peak(j))?;
    let wj = bp.space.value(&pair.w, peak.x).ok_or(DiagnosticsError::Outside(peak.x))?;
    let shifted: Vec<f64> = pair.w.iter().map(|w| (w - wj) / pair.mu).collect();
    Ok(weighted_ball(bp, &shifted, j, radius) + 16.0 * PI * c[j])
}

/// `μ` minus each low-band prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuResiduals {
    pub first: f64,
    pub second: f64,
    pub inverse: f64,
}

pub fn mu_residuals(lambda: f64, mu: f64, big_lambda: f64) -> Option<MuResiduals> {
    let LowBand { first, second, inverse } = predict_low(lambda, big_lambda).ok()?;
    Some(MuResiduals {
        first: mu - first,
        second: mu - second,
        inverse: mu - inverse,
    })
}

/// `sup_{|x̃| ≤ window} |w(δx̃ + x_j) - w(x_j) - μ c_j U(x̃)| / μ`
pub fn thm12_profile_error(bp: &BranchPoint, pair: &Eigenpair, j: usize, c_j: f64, window: f64) -> Result<f64, DiagnosticsError> {
    let peak = bp.peaks.get(j).ok_or(DiagnosticsError::Peak(j))?;
    let width = bp.space.local_width(peak.x);
    // at least four mesh widths across the window radius
    if window * peak.delta < 4.0 * width {
        return Err(DiagnosticsError::Unresolved {
            window,
            delta: peak.delta,
            width,
        });
    }
    let wj = bp.space.value(&pair.w, peak.x).ok_or(DiagnosticsError::Outside(peak.x))?;
    let (rings, spokes) = (64, 32);
    let mut worst: f64 = 0.0;
    for a in 1..=rings {
        let rt = window * a as f64 / rings as f64;
        for b in 0..spokes {
            let t = 2.0 * PI * b as f64 / spokes as f64;
            let x = [peak.x[0] + peak.delta * rt * t.cos(), peak.x[1] + peak.delta * rt * t.sin()];
            let w = bp.space.value(&pair.w, x).ok_or(DiagnosticsError::Outside(x))?;
            worst = worst.max((w - wj - pair.mu * c_j * bubble_u(rt)).abs() / pair.mu);
        }
    }
    Ok(worst)
}

/// Where each eigenfunction concentrates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub threshold: f64,
    /// Peaks with `|ĉ^n_j| ≥ threshold`, per eigen index.
    pub peaks: Vec<Vec<usize>>,
    /// Sign of `ĉ^n_j` (0 below the threshold), per eigen index.
    pub signs: Vec<Vec<i8>>,
    /// The first eigenfunction concentrates at every peak.
    pub first_everywhere: bool,
    /// For `m ≥ 2`, each of the first `m` eigenfunctions concentrates at two
    /// or more peaks.
    pub low_band_multi: bool,
    /// No eigenvector of `h` is supported on one point.
    pub matrix_structure: bool,
}

/// `c_h` holds the eigenvectors of the `h` matrix (`[n][j]`).
pub fn concentration_report(es: &EigenSet, m: usize, c_h: &[Vec<f64>], threshold: f64) -> Concentration {
    let count = es.c_hat.len().min(m);
    let mut peaks = Vec::with_capacity(count);
    let mut signs = Vec::with_capacity(count);
    for c in es.c_hat.iter().take(count) {
        peaks.push((0..c.len()).filter(|&j| c[j].abs() >= threshold).collect::<Vec<_>>());
        signs.push(c.iter().map(|&x| if x.abs() < threshold { 0 } else if x > 0.0 { 1 } else { -1 }).collect());
    }
    let first_everywhere = peaks.first().is_some_and(|p| p.len() == m);
    let low_band_multi = m < 2 || (peaks.len() == m && peaks.iter().all(|p| p.len() >= 2));
    let matrix_structure = m < 2 || crate::hamiltonian::check_structure(c_h).is_ok();
    Concentration {
        threshold,
        peaks,
        signs,
        first_everywhere,
        low_band_multi,
        matrix_structure,
    }
}

/// Per-peak part of a diagnostics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub x: [f64; 2],
    pub height: f64,
    pub delta: f64,
    pub sigma: f64,
    /// `δ / λ^{1/2}`, to compare with `d_j`.
    pub delta_ratio: f64,
    pub pohozaev: Option<Pohozaev>,
    pub peak_height: Option<PeakHeight>,
}

/// Per-eigenpair part of a diagnostics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub n: usize,
    pub mu: f64,
    pub label: Option<(usize, usize)>,
    pub c_hat: Vec<f64>,
    pub c_far: Vec<f64>,
    pub far_fit_error: f64,
    /// Against the low-band laws (only for `n ≤ m`).
    pub mu_residuals: Option<MuResiduals>,
    /// Against the mid-band law (only for `m < n ≤ 3m`).
    pub mid_residual: Option<f64>,
    /// Per peak, with `c` from the `h` matrix and then from `ĉ`.
    pub lemma31: Vec<[Lemma31; 2]>,
    pub lemma41: Vec<[Lemma41; 2]>,
    pub lemma43: Vec<[f64; 2]>,
    pub profile_error: Vec<Option<f64>>,
}

/// One row of the report: a branch point with everything measured on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub s: f64,
    pub lambda: f64,
    pub lambda_raw: f64,
    pub total_mass: f64,
    pub newton_iterations: usize,
    pub peaks: Vec<PeakRow>,
    pub eigen: Vec<EigenRow>,
    pub orthogonality: f64,
    pub concentration: Option<Concentration>,
}

/// Inputs that come from the limiting configuration.
#[derive(Debug, Clone, Copy)]
pub struct Limit<'a> {
    pub points: &'a [Point],
    pub d: &'a [f64],
    /// Ascending eigenvalues of `h`.
    pub big_lambda: &'a [f64],
    /// Eigenvectors of `h`, `[n][j]`.
    pub c: &'a [Vec<f64>],
    /// Ascending eigenvalues of `D Hess H D`.
    pub eta: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowOptions {
    pub radius: f64,
    pub window: f64,
    pub threshold: f64,
}

impl Default for RowOptions {
    fn default() -> Self {
        RowOptions {
            radius: 0.4,
            window: 4.0,
            threshold: 0.1,
        }
    }
}

/// Full diagnostics for one branch point. Identities that cannot be
/// evaluated (for instance an under-resolved bubble window) are recorded as
/// absent rather than failing the row.
pub fn diagnose(
    bp: &BranchPoint,
    es: &EigenSet,
    limit: &Limit<'_>,
    oracle: &GreenOracle,
    opts: &RowOptions,
) -> Result<DiagnosticsRow, DiagnosticsError> {
    let m = limit.points.len();
    let masses = masses(bp, opts.radius)?;
    let mut peaks = Vec::with_capacity(bp.peaks.len());
    for (j, p) in bp.peaks.iter().enumerate() {
        peaks.push(PeakRow {
            x: p.x,
            height: p.height,
            delta: p.delta,
            sigma: masses.balls[j],
            delta_ratio: p.delta / bp.lambda.sqrt(),
            pohozaev: pohozaev_residual(bp, j, opts.radius).ok(),
            peak_height: if j < m {
                peak_height_residual(bp, j, limit.points, limit.d, oracle, opts.radius).ok()
            } else {
                None
            },
        });
    }
    let mut eigen = Vec::with_capacity(es.pairs.len());
    let mut index = 0;
    for (k, pair) in es.pairs.iter().enumerate() {
        index += 1;
        let n = index;
        index += pair.multiplicity - 1;
        let low = n <= m && bp.peaks.len() == m;
        let mu_residuals = if n <= m { mu_residuals(bp.lambda, pair.mu, limit.big_lambda[n - 1]) } else { None };
        let mid_residual = if n > m && n <= 3 * m {
            crate::hamiltonian::predict_mid(bp.lambda, limit.eta, n).ok().map(|p| pair.mu - p)
        } else {
            None
        };
        let (mut l31, mut l41, mut l43, mut prof) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        if low {
            let cs = [limit.c[n - 1].clone(), es.c_hat[k].clone()];
            for j in 0..m {
                let a = lemma31_residual(bp, pair, j, &cs[0], limit.points, oracle, opts.radius)?;
                let b = lemma31_residual(bp, pair, j, &cs[1], limit.points, oracle, opts.radius)?;
                l31.push([a, b]);
                let a = lemma41_residual(bp, pair, j, &cs[0], limit.points, oracle)?;
                let b = lemma41_residual(bp, pair, j, &cs[1], limit.points, oracle)?;
                l41.push([a, b]);
                l43.push([
                    lemma43_residual(bp, pair, j, &cs[0], opts.radius)?,
                    lemma43_residual(bp, pair, j, &cs[1], opts.radius)?,
                ]);
                prof.push(thm12_profile_error(bp, pair, j, es.c_hat[k][j], opts.window).ok());
            }
        }
        eigen.push(EigenRow {
            n,
            mu: pair.mu,
            label: pair.label,
            c_hat: es.c_hat[k].clone(),
            c_far: es.c_far[k].clone(),
            far_fit_error: es.far_fit_error[k],
            mu_residuals,
            mid_residual,
            lemma31: l31,
            lemma41: l41,
            lemma43: l43,
            profile_error: prof,
        });
    }
    let concentration = (bp.peaks.len() == m).then(|| concentration_report(es, m, limit.c, opts.threshold));
    Ok(DiagnosticsRow {
        s: bp.s,
        lambda: bp.lambda,
        lambda_raw: bp.lambda_raw,
        total_mass: bp.total_mass,
        newton_iterations: bp.newton_iterations,
        peaks,
        eigen,
        orthogonality: es.orthogonality,
        concentration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bubble_profile() {
        assert_eq!(bubble_u(0.0), 0.0);
        assert!((bubble_u(8f64.sqrt()) + 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let v = composite_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 2);
        assert!((v - 0.0).abs() < 1e-14);
        let v = adaptive_simpson(f64::sin, 0.0, PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
    }
}
