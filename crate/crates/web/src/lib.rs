//! Browser bindings. Every operation returns a JSON string so the page stays
//! framework-free; the plain functions are also callable from Rust.

use serde_json::json;
use wasm_bindgen::prelude::*;

use gelfand_core::green::{disk_g, disk_r, GreenOracle};
use gelfand_core::hamiltonian::{find_critical, scan_symmetric_pair, CriticalOptions};
use gelfand_core::solver1d::{radial_step, Branch1dOptions, ExactBranch};
use gelfand_core::vexpr::VExpr;

/// Radial cells used in the browser; coarser than the CLI default.
const BROWSER_N: usize = 512;

/// One point of the radial branch with amplitude `s = v(0)`.
pub fn branch_point_json(v: &str, s: f64) -> Result<String, String> {
    let vexpr = VExpr::parse(v).map_err(|e| e.to_string())?;
    if !vexpr.is_radial() {
        return Err(format!("V must be radial, got `{v}`"));
    }
    if !(s > 0.0 && s <= 40.0) {
        return Err(format!("s must lie in (0, 40], got {s}"));
    }
    let opts = Branch1dOptions {
        n: BROWSER_N,
        nmax: 6,
        ..Branch1dOptions::default()
    };
    let st = radial_step(s, &vexpr, None, &opts).map_err(|e| e.to_string())?;
    let bp = &st.point;
    let exact = (v.trim() == "1").then(|| ExactBranch::from_height(s).lambda());
    Ok(json!({
        "s": s,
        "lambda": bp.lambda,
        "lambda_exact": exact,
        "delta": bp.peaks[0].delta,
        "total_mass": bp.total_mass,
        "newton_iterations": bp.newton_iterations,
        "spectrum": st.spectrum,
    })
    .to_string())
}

/// Critical pair `(±t, 0)` of the two-point Hamiltonian on the disk.
pub fn symmetric_pair_json(v: &str, guess: f64) -> Result<String, String> {
    let vexpr = VExpr::parse(v).map_err(|e| e.to_string())?;
    let oracle = GreenOracle::Exact;
    let t = scan_symmetric_pair(&oracle, &vexpr, 0.02, 0.98, 20_000, guess).map_err(|e| e.to_string())?;
    let sys = find_critical(&[[t, 0.0], [-t, 0.0]], &oracle, &vexpr, &CriticalOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "scan_t": t,
        "points": sys.points,
        "H": sys.h_value,
        "Lambda": sys.lambda,
        "C": sys.c,
        "d": sys.d,
    })
    .to_string())
}

/// Green's function of the unit disk and the Robin function at both points.
pub fn disk_green_json(x: [f64; 2], y: [f64; 2]) -> Result<String, String> {
    let g = disk_g(x, y).map_err(|e| e.to_string())?;
    let rx = disk_r(x).map_err(|e| e.to_string())?;
    let ry = disk_r(y).map_err(|e| e.to_string())?;
    Ok(json!({"G": g, "R_x": rx, "R_y": ry}).to_string())
}

#[wasm_bindgen]
pub fn branch_point(v: &str, s: f64) -> Result<String, JsError> {
    branch_point_json(v, s).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn symmetric_pair(v: &str, guess: f64) -> Result<String, JsError> {
    symmetric_pair_json(v, guess).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn disk_green(x1: f64, x2: f64, y1: f64, y2: f64) -> Result<String, JsError> {
    disk_green_json([x1, x2], [y1, y2]).map_err(|e| JsError::new(&e))
}
