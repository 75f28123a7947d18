use std::f64::consts::PI;

use gelfand_core::branch::EigenSet;
use gelfand_core::diagnostics::*;
use gelfand_core::green::GreenOracle;
use gelfand_core::solver1d::*;
use gelfand_core::vexpr::VExpr;

const ORIGIN: [[f64; 2]; 1] = [[0.0, 0.0]];

fn one() -> VExpr {
    VExpr::parse("1").unwrap()
}

fn at_lambda(lambda: f64) -> ExactBranch {
    let b = 8.0 - 2.0 * lambda;
    let x = (b + (b * b - 4.0 * lambda * lambda).sqrt()) / (2.0 * lambda);
    ExactBranch { delta: x.sqrt() }
}

fn step(e: ExactBranch, opts: &Branch1dOptions) -> RadialStep {
    radial_step(e.height(), &one(), None, opts).unwrap()
}

fn measured(st: &RadialStep) -> EigenSet {
    EigenSet::measure(st.eigen.clone(), &st.point, &ORIGIN, &GreenOracle::Exact, 0.4, st.orthogonality).unwrap()
}

#[test]
fn bubble_constants() {
    let b = bubble_integrals().unwrap();
    assert!((b.i0 - 8.0 * PI).abs() < 1e-8 && (b.i0 - 25.13274123).abs() < 1e-8);
    assert!((b.i1 + 16.0 * PI).abs() < 1e-8 && (b.i1 + 50.26548246).abs() < 1e-8);
    assert!((b.i2 + 6.0 * 2f64.ln()).abs() < 1e-8 && (b.i2 + 4.15888308).abs() < 1e-8);
}

#[test]
fn bubble_quadrature_converges_at_fourth_order() {
    let [f0, _, _] = bubble_integrands();
    let (a, b) = BUBBLE_WINDOW;
    let errs: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| (composite_simpson(&f0, a, b, n) - 8.0 * PI).abs())
        .collect();
    assert!(errs[0] / errs[1] >= 4.0 && errs[1] / errs[2] >= 4.0, "{errs:?}");
}

#[test]
fn exact_disk_masses() {
    let st = step(ExactBranch { delta: 3.0 }, &Branch1dOptions::default());
    let m = masses(&st.point, 0.5).unwrap();
    assert!((m.total - 7.2 * PI).abs() < 1e-7);
    let half = 8.0 * PI * 2.25 / 3.25;
    assert!((ball_mass(&st.point, 0, 0.5) - half).abs() < 1e-6);
    assert!(masses(&st.point, 1.5).is_err());
}

#[test]
fn pohozaev_residual_is_second_order_on_exact_solutions() {
    for delta in [1.0, 3.0, 30.0] {
        let res: Vec<f64> = [512, 1024, 2048]
            .iter()
            .map(|&n| {
                let st = step(ExactBranch { delta }, &Branch1dOptions { n, ..Default::default() });
                let p = pohozaev_residual(&st.point, 0, 0.5).unwrap();
                assert_eq!(p.i2, 0.0);
                p.residual.abs()
            })
            .collect();
        assert!(res[0] / res[1] >= 3.0 && res[1] / res[2] >= 3.0, "δ={delta}: {res:?}");
    }
}

#[test]
fn tail_residuals() {
    let opts = Branch1dOptions::default();
    let o = GreenOracle::Exact;
    let rows: Vec<_> = [1e-6, 1e-8]
        .iter()
        .map(|&l| {
            let st = step(at_lambda(l), &opts);
            let es = measured(&st);
            let bp = &st.point;
            let pair = &es.pairs[0];
            let ph = peak_height_residual(bp, 0, &ORIGIN, &[0.125], &o, 0.4).unwrap();
            let l31 = lemma31_residual(bp, pair, 0, &[1.0], &ORIGIN, &o, 0.4).unwrap();
            let l41 = lemma41_residual(bp, pair, 0, &[1.0], &ORIGIN, &o).unwrap();
            let l43 = lemma43_residual(bp, pair, 0, &[1.0], 0.4).unwrap();
            let r = mu_residuals(bp.lambda, pair.mu, 0.0).unwrap();
            let prof = thm12_profile_error(bp, pair, 0, 1.0, 4.0).unwrap();
            let sigma = ball_mass(bp, 0, 0.4);
            (ph, l31, l41, l43, r, prof, 4.0 * sigma - sigma * sigma / (2.0 * PI))
        })
        .collect();
    let (ph, l31, l41, l43, r, prof, reduced) = rows[0];
    assert!(ph.refined.abs() <= 0.05 && ph.leading.abs() <= 1e-5);
    assert!((r.first / -0.00283 - 1.0).abs() <= 0.2, "{}", r.first);
    assert!(prof <= 0.1 && l43.abs() <= 2.0 && reduced.abs() < 1e-3);
    assert_eq!(l31.rhs, -16.0 * PI);
    let deep = rows[1];
    assert!(deep.3.abs() <= 1.0);
    // these close at the eigenvalue's 1/|log λ| pace, so only the trend is checked
    assert!(deep.1.residual.abs() < l31.residual.abs());
    assert!(deep.1.mass_residual.abs() < l31.mass_residual.abs());
    assert!(deep.2.relative.abs() < l41.relative.abs());
    assert!(deep.5 < prof && deep.6.abs() < reduced.abs());
    assert!((deep.4.second * 18.42f64.powi(2)).abs() < (r.second * 13.82f64.powi(2)).abs());
}

#[test]
fn profile_error_vanishes_at_the_centre() {
    let st = step(at_lambda(1e-4), &Branch1dOptions::default());
    let es = measured(&st);
    let pair = &es.pairs[0];
    // a window narrower than four mesh widths is refused
    let tiny = thm12_profile_error(&st.point, pair, 0, 1.0, 1e-9);
    assert!(matches!(tiny, Err(DiagnosticsError::Unresolved { .. })));
    // U < 0 away from the origin, so w dips below its centre value
    let x = [st.point.peaks[0].delta * 2.0, 0.0];
    let wc = st.point.space.value(&pair.w, [0.0, 0.0]).unwrap();
    assert!(st.point.space.value(&pair.w, x).unwrap() < wc);
    assert!(bubble_u(2.0) < 0.0 && bubble_u(0.0) == 0.0);
}

#[test]
fn concentration_for_a_single_peak() {
    let st = step(at_lambda(1e-4), &Branch1dOptions::default());
    let es = measured(&st);
    let c = concentration_report(&es, 1, &[vec![1.0]], 0.1);
    assert!(c.first_everywhere && c.low_band_multi && c.matrix_structure);
    assert_eq!(c.peaks[0], vec![0]);
}
