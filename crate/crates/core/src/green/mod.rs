//! Dirichlet Green function `G`, its regular part `K` and the Robin function
//! `R(x) = K(x, x)`.
//!
//! Sign convention: `-Δ G(., y) = δ_y`, `G = K - (1/2π) log|x - y|`, so `K`
//! is the harmonic function with boundary data `(1/2π) log|x - y|`.
//! On the unit disk everything is closed form. On rectangles `K(., y)` is
//! solved with the 5-point Laplacian, one solve per source point, all
//! sharing a single Cholesky factorization.

mod domain;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::sync::{Arc, RwLock};

use thiserror::Error;

pub use domain::Domain;

use crate::grid2d::{Grid2D, NodeField};
use crate::sparse::CholeskySolver;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreenError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("point ({x}, {y}) is not strictly inside the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("coincident points ({x}, {y}): G is singular on the diagonal")]
    Coincident { x: f64, y: f64 },
    #[error("point ({x}, {y}) is within {cells:.2} cells of the boundary")]
    NearBoundary { x: f64, y: f64, cells: f64 },
    #[error("linear solve failed: {0}")]
    Solve(String),
}

const INV_2PI: f64 = 0.5 / PI;

fn check_disk(p: [f64; 2]) -> Result<(), GreenError> {
    if Domain::UnitDisk.contains(p) {
        Ok(())
    } else {
        Err(GreenError::OutsideDomain { x: p[0], y: p[1] })
    }
}

/// `K(x, y) = (1/4π) log(1 - 2 x.y + |x|^2 |y|^2)` on the unit disk.
pub fn disk_k(x: [f64; 2], y: [f64; 2]) -> Result<f64, GreenError> {
    check_disk(x)?;
    check_disk(y)?;
    let dot = x[0] * y[0] + x[1] * y[1];
    let xx = x[0] * x[0] + x[1] * x[1];
    let yy = y[0] * y[0] + y[1] * y[1];
    Ok(0.5 * INV_2PI * (1.0 - 2.0 * dot + xx * yy).ln())
}

pub fn disk_g(x: [f64; 2], y: [f64; 2]) -> Result<f64, GreenError> {
    let k = disk_k(x, y)?;
    let r = (x[0] - y[0]).hypot(x[1] - y[1]);
    if r == 0.0 {
        return Err(GreenError::Coincident { x: x[0], y: x[1] });
    }
    Ok(k - INV_2PI * r.ln())
}

/// `R(x) = (1/2π) log(1 - |x|^2)`
pub fn disk_r(x: [f64; 2]) -> Result<f64, GreenError> {
    check_disk(x)?;
    Ok(INV_2PI * (1.0 - x[0] * x[0] - x[1] * x[1]).ln())
}

/// The harmonic field `K(., y)` on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct RegularPartField {
    pub source: [f64; 2],
    grid: Arc<Grid2D>,
    /// Interior values are the discrete solution; every other node carries
    /// the Dirichlet data `(1/2π) log|x - y|`.
    pub field: NodeField,
    pub unknowns: Vec<f64>,
}

impl RegularPartField {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn value(&self, x: [f64; 2]) -> Result<f64, GreenError> {
        self.value_and_gradient(x).map(|(v, _)| v)
    }

    pub fn value_and_gradient(&self, x: [f64; 2]) -> Result<(f64, [f64; 2]), GreenError> {
        if !self.grid.domain().contains(x) {
            return Err(GreenError::OutsideDomain { x: x[0], y: x[1] });
        }
        self.grid
            .interpolate(&self.field, x)
            .ok_or(GreenError::OutsideDomain { x: x[0], y: x[1] })
    }

    /// Max interior residual of the discrete Laplace equation.
    pub fn harmonic_residual(&self) -> f64 {
        let a = self.grid.laplacian().build().expect("assembled laplacian");
        let y = self.source;
        let rhs = self.grid.boundary_rhs(|p| log_dist(p, y));
        a.mul_vec(&self.unknowns)
            .iter()
            .zip(&rhs)
            .map(|(l, r)| (l - r).abs())
            .fold(0.0, f64::max)
    }

    /// `x,y,K` rows for every node inside the closed domain.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,K\n");
        for (node, v) in self.field.data.iter().enumerate() {
            let p = self.grid.node_point(node);
            if self.grid.domain().boundary_distance(p) >= -1e-12 {
                let _ = writeln!(out, "{:.12e},{:.12e},{:.12e}", p[0], p[1], v);
            }
        }
        out
    }
}

fn log_dist(p: [f64; 2], y: [f64; 2]) -> f64 {
    INV_2PI * (p[0] - y[0]).hypot(p[1] - y[1]).ln()
}

/// Finite-difference derivatives probe many nearby sources; past this many
/// cached fields the cache starts over rather than growing without bound.
const CACHE_LIMIT: usize = 1024;

/// Grid-based evaluator with a cache of regular-part fields keyed by the
/// exact source coordinates.
pub struct NumericGreen {
    grid: Arc<Grid2D>,
    solver: CholeskySolver,
    cache: RwLock<HashMap<[u64; 2], Arc<RegularPartField>>>,
}

impl fmt::Debug for NumericGreen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericGreen")
            .field("domain", &self.grid.domain())
            .field("n", &self.grid.n())
            .field("cached_sources", &self.cache.read().map(|c| c.len()).unwrap_or(0))
            .finish()
    }
}

impl NumericGreen {
    pub fn new(domain: Domain, n: usize) -> Result<NumericGreen, GreenError> {
        if n < 32 {
            return Err(GreenError::InvalidDomain(format!("numeric Green needs n >= 32, got {n}")));
        }
        let grid = Grid2D::new(domain, n)?;
        let solver = grid
            .laplacian()
            .build()
            .and_then(|a| a.cholesky())
            .map_err(|e| GreenError::Solve(e.to_string()))?;
        Ok(NumericGreen {
            grid: Arc::new(grid),
            solver,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// `K(., y)`, solved once per source and cached.
    pub fn regular_part(&self, y: [f64; 2]) -> Result<Arc<RegularPartField>, GreenError> {
        let key = [y[0].to_bits(), y[1].to_bits()];
        if let Some(f) = self.cache.read().expect("green cache poisoned").get(&key) {
            return Ok(Arc::clone(f));
        }
        if !self.grid.domain().contains(y) {
            return Err(GreenError::OutsideDomain { x: y[0], y: y[1] });
        }
        let cells = self.grid.cells_from_boundary(y);
        if cells < 1.0 {
            return Err(GreenError::NearBoundary { x: y[0], y: y[1], cells });
        }
        let mut unknowns = self.grid.boundary_rhs(|p| log_dist(p, y));
        self.solver.solve_in_place(&mut unknowns);
        if unknowns.iter().any(|v| !v.is_finite()) {
            return Err(GreenError::Solve("non-finite regular part".into()));
        }
        let field = self.grid.full_field(&unknowns, |p| log_dist(p, y));
        let f = Arc::new(RegularPartField {
            source: y,
            grid: Arc::clone(&self.grid),
            field,
            unknowns,
        });
        let mut cache = self.cache.write().expect("green cache poisoned");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&f));
        Ok(f)
    }

    pub fn cached_sources(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }
}

/// Solves for `K(., y)` on a fresh `n x n` grid.
pub fn numeric_regular_part(dom: Domain, y: [f64; 2], n: usize) -> Result<Arc<RegularPartField>, GreenError> {
    NumericGreen::new(dom, n)?.regular_part(y)
}

/// Evaluator for `G`, `K`, `R` and their gradients on one domain.
#[derive(Debug, Clone)]
pub enum GreenOracle {
    /// Closed forms on the unit disk.
    Exact,
    Numeric(Arc<NumericGreen>),
}

impl GreenOracle {
    /// Exact oracle on the disk, numeric with `n` nodes per side otherwise.
    pub fn for_domain(domain: Domain, n: usize) -> Result<GreenOracle, GreenError> {
        match domain {
            Domain::UnitDisk => Ok(GreenOracle::Exact),
            Domain::Rect { .. } => Ok(GreenOracle::Numeric(Arc::new(NumericGreen::new(domain, n)?))),
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            GreenOracle::Exact => Domain::UnitDisk,
            GreenOracle::Numeric(g) => g.grid().domain(),
        }
    }

    /// Central-difference step used by the gradient helpers.
    pub fn fd_step(&self) -> f64 {
        match self {
            GreenOracle::Exact => 1e-6,
            GreenOracle::Numeric(g) => 0.5 * g.grid().cell(),
        }
    }

    pub fn k(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64, GreenError> {
        match self {
            GreenOracle::Exact => disk_k(x, y),
            GreenOracle::Numeric(g) => g.regular_part(y)?.value(x),
        }
    }

    pub fn g(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64, GreenError> {
        match self {
            GreenOracle::Exact => disk_g(x, y),
            GreenOracle::Numeric(g) => {
                let r = (x[0] - y[0]).hypot(x[1] - y[1]);
                if r == 0.0 {
                    return Err(GreenError::Coincident { x: x[0], y: x[1] });
                }
                Ok(g.regular_part(y)?.value(x)? - INV_2PI * r.ln())
            }
        }
    }

    pub fn r(&self, x: [f64; 2]) -> Result<f64, GreenError> {
        match self {
            GreenOracle::Exact => disk_r(x),
            GreenOracle::Numeric(_) => self.k(x, x),
        }
    }

    /// Central-difference `∇_x G(x, y)` with step `h`.
    pub fn grad_x_g(&self, x: [f64; 2], y: [f64; 2], h: f64) -> Result<[f64; 2], GreenError> {
        let mut out = [0.0; 2];
        for (i, slot) in out.iter_mut().enumerate() {
            let (mut p, mut m) = (x, x);
            p[i] += h;
            m[i] -= h;
            *slot = (self.g(p, y)? - self.g(m, y)?) / (2.0 * h);
        }
        Ok(out)
    }

    /// Central-difference `∇R(x)` with step `h`.
    pub fn grad_r(&self, x: [f64; 2], h: f64) -> Result<[f64; 2], GreenError> {
        let mut out = [0.0; 2];
        for (i, slot) in out.iter_mut().enumerate() {
            let (mut p, mut m) = (x, x);
            p[i] += h;
            m[i] -= h;
            *slot = (self.r(p)? - self.r(m)?) / (2.0 * h);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_closed_forms() {
        assert!((disk_g([0.5, 0.0], [0.0, 0.0]).unwrap() - 0.110318).abs() < 1e-6);
        assert!((disk_g([0.5, 0.0], [-0.5, 0.0]).unwrap() - 0.035514).abs() < 1e-6);
        assert_eq!(disk_r([0.0, 0.0]).unwrap(), 0.0);
        assert!((disk_r([0.5, 0.0]).unwrap() + 0.045786).abs() < 1e-6);
        assert!(disk_g([0.2, 0.1], [0.2, 0.1]).is_err());
        assert!(disk_r([1.0, 0.0]).is_err());
    }

    #[test]
    fn disk_k_matches_image_form() {
        // (1/2π) log(|x - y*| |y|) with y* = y / |y|^2
        let x: [f64; 2] = [0.31, -0.42];
        let y: [f64; 2] = [-0.27, 0.55];
        let yy = y[0] * y[0] + y[1] * y[1];
        let ys = [y[0] / yy, y[1] / yy];
        let image = INV_2PI * ((x[0] - ys[0]).hypot(x[1] - ys[1]) * yy.sqrt()).ln();
        assert!((disk_k(x, y).unwrap() - image).abs() < 1e-14);
    }

    #[test]
    fn exact_gradients() {
        let o = GreenOracle::Exact;
        let g0 = o.grad_r([0.0, 0.0], o.fd_step()).unwrap();
        assert!(g0[0].abs() < 1e-10 && g0[1].abs() < 1e-10);
        let g = o.grad_r([0.5, 0.0], o.fd_step()).unwrap();
        assert!((g[0] + 0.212207).abs() < 1e-6, "{g:?}");
        let a = o.grad_x_g([0.5, 0.0], [0.0, 0.0], 1e-4).unwrap();
        let b = o.grad_x_g([0.5, 0.0], [0.0, 0.0], 0.5e-4).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-6 && (a[1] - b[1]).abs() < 1e-6);
    }

    #[test]
    fn numeric_square_center_is_symmetric() {
        let o = GreenOracle::for_domain(Domain::unit_square(), 65).unwrap();
        let g = o.grad_r([0.5, 0.5], o.fd_step()).unwrap();
        assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10, "{g:?}");
        let f = numeric_regular_part(Domain::unit_square(), [0.5, 0.5], 65).unwrap();
        // boundary nodes carry the Dirichlet data exactly
        let corner = f.grid().node_point(0);
        assert_eq!(f.field.data[0], log_dist(corner, [0.5, 0.5]));
        assert!(f.harmonic_residual() <= 1e-10);
    }

    #[test]
    fn near_boundary_source_is_rejected() {
        let g = NumericGreen::new(Domain::unit_square(), 33).unwrap();
        assert!(matches!(g.regular_part([0.01, 0.5]), Err(GreenError::NearBoundary { .. })));
        assert!(matches!(g.regular_part([1.5, 0.5]), Err(GreenError::OutsideDomain { .. })));
    }
}
