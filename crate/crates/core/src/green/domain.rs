use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GreenError;

/// The planar domain: the unit disk or an axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Domain {
    UnitDisk,
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Domain {
    pub fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Domain, GreenError> {
        if !(x1 > x0 && y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(GreenError::InvalidDomain(format!(
                "rectangle needs positive side lengths, got ({x0},{x1})x({y0},{y1})"
            )));
        }
        Ok(Domain::Rect { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Domain {
        Domain::Rect {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    /// Distance from `p` to the boundary; negative outside.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Domain::UnitDisk => 1.0 - (p[0] * p[0] + p[1] * p[1]).sqrt(),
            Domain::Rect { x0, x1, y0, y1 } => (p[0] - x0).min(x1 - p[0]).min(p[1] - y0).min(y1 - p[1]),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0].is_finite() && p[1].is_finite() && self.boundary_distance(p) > 0.0
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::UnitDisk => 2.0,
            Domain::Rect { x0, x1, y0, y1 } => (x1 - x0).hypot(y1 - y0),
        }
    }

    /// `[xmin, xmax, ymin, ymax]`
    pub fn bounding_box(&self) -> [f64; 4] {
        match *self {
            Domain::UnitDisk => [-1.0, 1.0, -1.0, 1.0],
            Domain::Rect { x0, x1, y0, y1 } => [x0, x1, y0, y1],
        }
    }

    /// Interior sample points on a `k x k` lattice, used for positivity checks.
    pub fn sample_points(&self, k: usize) -> Vec<[f64; 2]> {
        let [xa, xb, ya, yb] = self.bounding_box();
        let mut pts = Vec::new();
        for i in 0..=k {
            for j in 0..=k {
                let p = [
                    xa + (xb - xa) * i as f64 / k as f64,
                    ya + (yb - ya) * j as f64 / k as f64,
                ];
                if self.boundary_distance(p) >= 0.0 {
                    pts.push(p);
                }
            }
        }
        pts
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::UnitDisk => f.write_str("disk"),
            Domain::Rect { x0, x1, y0, y1 } => write!(f, "rect {x0} {x1} {y0} {y1}"),
        }
    }
}

impl FromStr for Domain {
    type Err = GreenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.as_slice() {
            ["disk"] => Ok(Domain::UnitDisk),
            ["rect", rest @ ..] if rest.len() == 4 => {
                let mut v = [0.0; 4];
                for (slot, w) in v.iter_mut().zip(rest) {
                    *slot = w
                        .parse()
                        .map_err(|_| GreenError::InvalidDomain(format!("bad number `{w}` in `{s}`")))?;
                }
                Domain::rect(v[0], v[1], v[2], v[3])
            }
            _ => Err(GreenError::InvalidDomain(format!(
                "expected `disk` or `rect x0 x1 y0 y1`, got `{s}`"
            ))),
        }
    }
}

impl From<Domain> for String {
    fn from(d: Domain) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Domain {
    type Error = GreenError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        assert_eq!("disk".parse::<Domain>().unwrap(), Domain::UnitDisk);
        let r: Domain = "rect 0 1 0 2".parse().unwrap();
        assert_eq!(r, Domain::rect(0.0, 1.0, 0.0, 2.0).unwrap());
        assert_eq!(r.to_string().parse::<Domain>().unwrap(), r);
        assert!("rect 0 0 0 1".parse::<Domain>().is_err());
        assert!("rect 0 1 0".parse::<Domain>().is_err());
        assert!("square".parse::<Domain>().is_err());
    }

    #[test]
    fn distances() {
        assert!((Domain::UnitDisk.boundary_distance([0.6, 0.0]) - 0.4).abs() < 1e-15);
        assert!(Domain::unit_square().contains([0.5, 0.5]));
        assert!(!Domain::unit_square().contains([1.0, 0.5]));
    }
}
