//! Uniform Cartesian grids on a rectangle or on the unit disk embedded in
//! `[-1, 1]^2`.
//!
//! The negative Laplacian uses the 5-point stencil. Where a stencil arm
//! crosses the curved boundary, the arm is shortened to the exact boundary
//! intersection at fraction `theta` of a cell and the flux is divided by the
//! full cell width. This keeps the matrix symmetric while the solution stays
//! second-order accurate.

use serde::{Deserialize, Serialize};

use crate::green::{Domain, GreenError};
use crate::sparse::TripletMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighbor {
    Unknown(usize),
    /// Dirichlet value taken at `point`, a fraction `theta` of a cell away.
    Boundary { theta: f64, point: [f64; 2] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: Domain,
    /// Nodes per side.
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct Grid2D {
    domain: Domain,
    n: usize,
    origin: [f64; 2],
    h: [f64; 2],
    unknown_of_node: Vec<Option<usize>>,
    node_of_unknown: Vec<usize>,
    neighbors: Vec<[Neighbor; 4]>,
}

const DIRS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl Grid2D {
    /// `n` nodes per side spanning the bounding box of the domain.
    pub fn new(domain: Domain, n: usize) -> Result<Grid2D, GreenError> {
        if n < 5 {
            return Err(GreenError::InvalidDomain(format!("grid needs at least 5 nodes per side, got {n}")));
        }
        let [xa, xb, ya, yb] = domain.bounding_box();
        let h = [(xb - xa) / (n - 1) as f64, (yb - ya) / (n - 1) as f64];
        let origin = [xa, ya];
        let hmin = h[0].min(h[1]);
        let mut unknown_of_node = vec![None; n * n];
        let mut node_of_unknown = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                let p = [origin[0] + ix as f64 * h[0], origin[1] + iy as f64 * h[1]];
                let interior = match domain {
                    Domain::UnitDisk => domain.boundary_distance(p) > 1e-2 * hmin,
                    Domain::Rect { .. } => ix > 0 && iy > 0 && ix < n - 1 && iy < n - 1,
                };
                if interior {
                    unknown_of_node[iy * n + ix] = Some(node_of_unknown.len());
                    node_of_unknown.push(iy * n + ix);
                }
            }
        }
        let mut grid = Grid2D {
            domain,
            n,
            origin,
            h,
            unknown_of_node,
            node_of_unknown,
            neighbors: Vec::new(),
        };
        grid.neighbors = (0..grid.len()).map(|u| grid.compute_neighbors(u)).collect();
        Ok(grid)
    }

    fn compute_neighbors(&self, u: usize) -> [Neighbor; 4] {
        let node = self.node_of_unknown[u];
        let (ix, iy) = ((node % self.n) as isize, (node / self.n) as isize);
        let p = self.node_point(node);
        DIRS.map(|(dx, dy)| {
            let (jx, jy) = (ix + dx, iy + dy);
            let nb = (jy as usize) * self.n + jx as usize;
            if let Some(v) = self.unknown_of_node[nb] {
                return Neighbor::Unknown(v);
            }
            let q = self.node_point(nb);
            if let Domain::UnitDisk = self.domain {
                // |p + t (q - p)| = 1 for t in (0, 1]
                let d = [q[0] - p[0], q[1] - p[1]];
                let a = d[0] * d[0] + d[1] * d[1];
                let b = 2.0 * (p[0] * d[0] + p[1] * d[1]);
                let c = p[0] * p[0] + p[1] * p[1] - 1.0;
                let t = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
                if t > 0.0 && t < 1.0 {
                    return Neighbor::Boundary {
                        theta: t,
                        point: [p[0] + t * d[0], p[1] + t * d[1]],
                    };
                }
            }
            Neighbor::Boundary { theta: 1.0, point: q }
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Nodes per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.h
    }

    pub fn cell(&self) -> f64 {
        self.h[0].max(self.h[1])
    }

    /// Number of unknowns (interior nodes).
    pub fn len(&self) -> usize {
        self.node_of_unknown.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_of_unknown.is_empty()
    }

    pub fn node_point(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = (node % self.n, node / self.n);
        [
            self.origin[0] + ix as f64 * self.h[0],
            self.origin[1] + iy as f64 * self.h[1],
        ]
    }

    pub fn point(&self, u: usize) -> [f64; 2] {
        self.node_point(self.node_of_unknown[u])
    }

    pub fn node_of(&self, u: usize) -> usize {
        self.node_of_unknown[u]
    }

    pub fn unknown_at(&self, ix: usize, iy: usize) -> Option<usize> {
        self.unknown_of_node[iy * self.n + ix]
    }

    pub fn neighbors(&self, u: usize) -> &[Neighbor; 4] {
        &self.neighbors[u]
    }

    /// Quadrature weight of an unknown node.
    pub fn weight(&self) -> f64 {
        self.h[0] * self.h[1]
    }

    /// Unknown nearest to `p`.
    pub fn nearest_unknown(&self, p: [f64; 2]) -> Option<usize> {
        let ix = ((p[0] - self.origin[0]) / self.h[0]).round();
        let iy = ((p[1] - self.origin[1]) / self.h[1]).round();
        if ix < 0.0 || iy < 0.0 || ix >= self.n as f64 || iy >= self.n as f64 {
            return None;
        }
        self.unknown_at(ix as usize, iy as usize)
    }

    /// Symmetric negative Laplacian over the unknowns.
    pub fn laplacian(&self) -> TripletMatrix {
        let mut t = TripletMatrix::new(self.len());
        for u in 0..self.len() {
            let mut diag = 0.0;
            for (k, nb) in self.neighbors[u].iter().enumerate() {
                let h2 = if k < 2 { self.h[0] * self.h[0] } else { self.h[1] * self.h[1] };
                match *nb {
                    Neighbor::Unknown(v) => {
                        diag += 1.0 / h2;
                        t.push(u, v, -1.0 / h2);
                    }
                    Neighbor::Boundary { theta, .. } => diag += 1.0 / (theta * h2),
                }
            }
            t.push(u, u, diag);
        }
        t
    }

    /// Right-hand side contribution of Dirichlet data `g` to `-Δu = f`.
    pub fn boundary_rhs(&self, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|u| {
                self.neighbors[u]
                    .iter()
                    .enumerate()
                    .map(|(k, nb)| match *nb {
                        Neighbor::Unknown(_) => 0.0,
                        Neighbor::Boundary { theta, point } => {
                            let h2 = if k < 2 { self.h[0] * self.h[0] } else { self.h[1] * self.h[1] };
                            g(point) / (theta * h2)
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// Minimum number of cells between `p` and the boundary.
    pub fn cells_from_boundary(&self, p: [f64; 2]) -> f64 {
        self.domain.boundary_distance(p) / self.cell()
    }

    /// Expands unknown values to every node, filling non-unknown nodes with
    /// `outside(node_point)`.
    pub fn full_field(&self, values: &[f64], outside: impl Fn([f64; 2]) -> f64) -> NodeField {
        let mut data = vec![0.0; self.n * self.n];
        for (node, slot) in data.iter_mut().enumerate() {
            *slot = match self.unknown_of_node[node] {
                Some(u) => values[u],
                None => outside(self.node_point(node)),
            };
        }
        NodeField { data }
    }

    fn locate(&self, p: [f64; 2]) -> Option<(usize, usize, f64, f64)> {
        let fx = (p[0] - self.origin[0]) / self.h[0];
        let fy = (p[1] - self.origin[1]) / self.h[1];
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (self.n - 1) as f64 && fy <= (self.n - 1) as f64) {
            return None;
        }
        let ix = (fx.floor() as usize).min(self.n - 2);
        let iy = (fy.floor() as usize).min(self.n - 2);
        Some((ix, iy, fx - ix as f64, fy - iy as f64))
    }

    fn stencil_is_interior(&self, ix0: isize, iy0: isize, width: isize) -> bool {
        if ix0 < 0 || iy0 < 0 || ix0 + width > self.n as isize || iy0 + width > self.n as isize {
            return false;
        }
        for iy in iy0..iy0 + width {
            for ix in ix0..ix0 + width {
                if self.unknown_of_node[iy as usize * self.n + ix as usize].is_none() {
                    return false;
                }
            }
        }
        true
    }

    /// Interpolated value and gradient of a node field at `p`: tensor cubic
    /// Lagrange where the 4x4 stencil is interior, bilinear otherwise.
    pub fn interpolate(&self, field: &NodeField, p: [f64; 2]) -> Option<(f64, [f64; 2])> {
        self.interpolate_with(|node| field.data[node], p)
    }

    /// As [`Grid2D::interpolate`] for values given per unknown, with zero
    /// at every other node.
    pub fn interpolate_unknowns(&self, values: &[f64], p: [f64; 2]) -> Option<(f64, [f64; 2])> {
        self.interpolate_with(|node| self.unknown_of_node[node].map_or(0.0, |u| values[u]), p)
    }

    fn interpolate_with(&self, get: impl Fn(usize) -> f64, p: [f64; 2]) -> Option<(f64, [f64; 2])> {
        let (ix, iy, tx, ty) = self.locate(p)?;
        let f = |jx: usize, jy: usize| get(jy * self.n + jx);
        if self.stencil_is_interior(ix as isize - 1, iy as isize - 1, 4) {
            let (wx, dwx) = cubic_weights(tx);
            let (wy, dwy) = cubic_weights(ty);
            let (mut val, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for b in 0..4 {
                for a in 0..4 {
                    let fv = f(ix + a - 1, iy + b - 1);
                    val += wx[a] * wy[b] * fv;
                    gx += dwx[a] * wy[b] * fv;
                    gy += wx[a] * dwy[b] * fv;
                }
            }
            return Some((val, [gx / self.h[0], gy / self.h[1]]));
        }
        let (f00, f10, f01, f11) = (f(ix, iy), f(ix + 1, iy), f(ix, iy + 1), f(ix + 1, iy + 1));
        let val = f00 * (1.0 - tx) * (1.0 - ty) + f10 * tx * (1.0 - ty) + f01 * (1.0 - tx) * ty + f11 * tx * ty;
        let gx = ((f10 - f00) * (1.0 - ty) + (f11 - f01) * ty) / self.h[0];
        let gy = ((f01 - f00) * (1.0 - tx) + (f11 - f10) * tx) / self.h[1];
        Some((val, [gx, gy]))
    }

    /// Quadrature weights for `B_radius(center)` intersected with the unknown
    /// cells: each cell's covered fraction is estimated on an 8x8 sub-lattice.
    pub fn ball_weights(&self, center: [f64; 2], radius: f64) -> Vec<(usize, f64)> {
        const SUB: usize = 8;
        let w = self.weight();
        let reach_x = (radius / self.h[0]).ceil() as isize + 1;
        let reach_y = (radius / self.h[1]).ceil() as isize + 1;
        let cx = ((center[0] - self.origin[0]) / self.h[0]).round() as isize;
        let cy = ((center[1] - self.origin[1]) / self.h[1]).round() as isize;
        let mut out = Vec::new();
        for iy in (cy - reach_y).max(0)..=(cy + reach_y).min(self.n as isize - 1) {
            for ix in (cx - reach_x).max(0)..=(cx + reach_x).min(self.n as isize - 1) {
                let node = iy as usize * self.n + ix as usize;
                let Some(u) = self.unknown_of_node[node] else { continue };
                let p = self.node_point(node);
                let far = (p[0] - center[0]).abs() + 0.5 * self.h[0];
                let far_y = (p[1] - center[1]).abs() + 0.5 * self.h[1];
                if far * far + far_y * far_y <= radius * radius {
                    out.push((u, w));
                    continue;
                }
                let mut inside = 0usize;
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        let q = [
                            p[0] + ((sx as f64 + 0.5) / SUB as f64 - 0.5) * self.h[0],
                            p[1] + ((sy as f64 + 0.5) / SUB as f64 - 0.5) * self.h[1],
                        ];
                        let d = (q[0] - center[0]).hypot(q[1] - center[1]);
                        if d < radius {
                            inside += 1;
                        }
                    }
                }
                if inside > 0 {
                    out.push((u, w * inside as f64 / (SUB * SUB) as f64));
                }
            }
        }
        out
    }
}

/// Values at every node of a grid (row-major, `n * n`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    pub data: Vec<f64>,
}

/// Cubic Lagrange weights on nodes `-1, 0, 1, 2` at offset `t` in `[0, 1]`,
/// and their derivatives.
fn cubic_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let d = [
        -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
        (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
        (3.0 * t * t - 1.0) / 6.0,
    ];
    (w, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_weights_reproduce_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x;
        let df = |x: f64| -2.0 + x - 0.75 * x * x;
        for &t in &[0.0, 0.3, 0.71, 1.0] {
            let (w, d) = cubic_weights(t);
            let nodes = [-1.0, 0.0, 1.0, 2.0];
            let v: f64 = (0..4).map(|k| w[k] * f(nodes[k])).sum();
            let g: f64 = (0..4).map(|k| d[k] * f(nodes[k])).sum();
            assert!((v - f(t)).abs() < 1e-13);
            assert!((g - df(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn disk_laplacian_is_symmetric_and_solves_quadratic() {
        // u = 1 - |x|^2 solves -Δu = 4 with zero data; the cut-cell scheme
        // is exact for quadratics up to the boundary treatment.
        let grid = Grid2D::new(Domain::UnitDisk, 41).unwrap();
        let a = grid.laplacian().build().unwrap();
        for u in 0..grid.len() {
            for nb in grid.neighbors(u) {
                if let Neighbor::Unknown(v) = *nb {
                    assert!(grid.neighbors(v).contains(&Neighbor::Unknown(u)));
                }
            }
        }
        let mut rhs = vec![4.0; grid.len()];
        let bc = grid.boundary_rhs(|_| 0.0);
        for (r, b) in rhs.iter_mut().zip(&bc) {
            *r += b;
        }
        a.cholesky().unwrap().solve_in_place(&mut rhs);
        let err = (0..grid.len())
            .map(|u| {
                let p = grid.point(u);
                (rhs[u] - (1.0 - p[0] * p[0] - p[1] * p[1])).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "err {err}");
    }

    #[test]
    fn ball_weights_measure_area() {
        let grid = Grid2D::new(Domain::unit_square(), 101).unwrap();
        let area: f64 = grid.ball_weights([0.5, 0.5], 0.3).iter().map(|(_, w)| w).sum();
        assert!((area - std::f64::consts::PI * 0.09).abs() < 1e-4, "{area}");
    }

    #[test]
    fn interpolation_of_smooth_field() {
        let grid = Grid2D::new(Domain::unit_square(), 41).unwrap();
        let f = |p: [f64; 2]| (p[0] * 2.0).sin() * (p[1] + 0.3).exp();
        let vals: Vec<f64> = (0..grid.len()).map(|u| f(grid.point(u))).collect();
        let field = grid.full_field(&vals, f);
        let p = [0.437, 0.612];
        let (v, g) = grid.interpolate(&field, p).unwrap();
        assert!((v - f(p)).abs() < 1e-6);
        assert!((g[0] - 2.0 * (2.0 * p[0]).cos() * (p[1] + 0.3).exp()).abs() < 1e-4);
    }
}
