use std::sync::Arc;

use gelfand_core::green::{Domain, GreenOracle};
use gelfand_core::grid2d::Grid2D;
use gelfand_core::hamiltonian::{find_critical, CriticalOptions};
use gelfand_core::solver1d::{radial_step, Branch1dOptions, ExactBranch};
use gelfand_core::solver2d::*;
use gelfand_core::vexpr::VExpr;

fn disk(n: usize) -> Planar {
    Planar::new(Arc::new(Grid2D::new(Domain::UnitDisk, n).unwrap())).unwrap()
}

fn solve_m1(planar: &Planar, v: &VExpr, s: f64) -> Solution2d {
    let (v0, l0) = singular_limit_seed(planar, &GreenOracle::Exact, v, &[[0.0, 0.0]], s).unwrap();
    let anchor = planar.grid.nearest_unknown([0.0, 0.0]).unwrap();
    newton2d_constrained(planar, v, s, anchor, v0, l0, &Newton2dOptions::default()).unwrap()
}

fn mirror(grid: &Grid2D, u: usize) -> usize {
    let n = grid.n();
    let node = grid.node_of(u);
    grid.unknown_at(n - 1 - node % n, node / n).unwrap()
}

#[test]
fn masked_disk_matches_exact_branch_at_second_order() {
    let one = VExpr::parse("1").unwrap();
    let exact = ExactBranch { delta: 3.0 };
    let s = 2.0 * 10f64.ln();
    let mut errs = Vec::new();
    for n in [129, 257, 513] {
        let planar = disk(n);
        let sol = solve_m1(&planar, &one, s);
        assert!(sol.residual <= 1e-9);
        errs.push((sol.lambda / exact.lambda() - 1.0).abs());
        // Σ against 8πδ²/(1+δ²); the nodal sum is second order with constant ~2.4
        let sigma = planar.grid.weight() * sol.density().iter().sum::<f64>();
        let h = planar.grid.cell();
        assert!((sigma / exact.total_mass() - 1.0).abs() <= 3.0 * h * h, "n={n} Σ={sigma}");
    }
    assert!(errs[2] < 0.01, "{errs:?}");
    assert!(errs[0] / errs[1] >= 3.5 && errs[1] / errs[2] >= 3.5, "{errs:?}");
}

#[test]
fn small_amplitude_square_newton_is_quadratic() {
    let grid = Arc::new(Grid2D::new(Domain::unit_square(), 65).unwrap());
    let planar = Planar::new(grid.clone()).unwrap();
    let one = VExpr::parse("1").unwrap();
    let s = 0.5;
    let v0: Vec<f64> = (0..grid.len())
        .map(|u| {
            let p = grid.point(u);
            s * (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin()
        })
        .collect();
    let anchor = grid.nearest_unknown([0.5, 0.5]).unwrap();
    // λ ψ ≤ v ≤ e^s λ ψ with ψ the torsion function
    let psi_max = planar.solve(&vec![1.0; grid.len()]).into_iter().fold(0.0, f64::max);
    let estimate = s / psi_max;
    let sol = newton2d_constrained(&planar, &one, s, anchor, v0, 2.0 * estimate, &Newton2dOptions::default()).unwrap();
    assert!(sol.lambda <= estimate && sol.lambda >= estimate * (-s).exp(), "{} vs {estimate}", sol.lambda);
    let errs: Vec<f64> = sol.lambda_history.iter().map(|l| (l - sol.lambda).abs() / sol.lambda).collect();
    for w in errs.windows(2) {
        if w[1] > 1e-13 {
            assert!(w[1] <= 10.0 * w[0] * w[0], "{errs:?}");
        }
    }
}

#[test]
fn radial_field_has_single_peak_at_origin() {
    let grid = Grid2D::new(Domain::UnitDisk, 129).unwrap();
    let e = ExactBranch { delta: 3.0 };
    let v: Vec<f64> = (0..grid.len())
        .map(|u| {
            let p = grid.point(u);
            e.v(p[0].hypot(p[1]))
        })
        .collect();
    let peaks = detect_peaks(&grid, &v, 1, 0.2).unwrap();
    let h = grid.cell();
    assert!(peaks[0].0[0].hypot(peaks[0].0[1]) < 1e-12);
    assert!((peaks[0].1 - e.height()).abs() <= 40.0 * h * h);
    assert!(matches!(detect_peaks(&grid, &v, 2, 0.2), Err(Solver2dError::Peaks { found: 1, wanted: 2 })));
}

#[test]
fn first_eigenvalue_matches_radial_solver() {
    // the blow-up member of the V ≡ 1 family with λ = 0.1
    let x = (7.8 + (7.8f64 * 7.8 - 0.04).sqrt()) / 0.2;
    let exact = ExactBranch { delta: x.sqrt() };
    assert!((exact.lambda() - 0.1).abs() < 1e-12);
    let one = VExpr::parse("1").unwrap();
    let radial = radial_step(exact.height(), &one, None, &Branch1dOptions::default()).unwrap();
    let mu1 = radial.eigen[0].mu;
    let planar = disk(513);
    let sol = solve_m1(&planar, &one, exact.height());
    let eig = eig2d(&planar, &sol.density(), 4, None, &Eig2dOptions::default()).unwrap();
    assert!((eig.pairs[0].mu / mu1 - 1.0).abs() < 5e-3, "{} vs {mu1}", eig.pairs[0].mu);
    assert!(eig.orthogonality < 1e-8);
    assert_eq!(eig.inertia, eig.pairs.len());
}

#[test]
fn nonconstant_weight_matches_radial_solver() {
    let v = VExpr::parse("exp(1 - abs2(x))").unwrap();
    let s = 0.1;
    let radial = radial_step(s, &v, None, &Branch1dOptions::default()).unwrap();
    let planar = disk(257);
    let sol = solve_m1(&planar, &v, s);
    assert!((sol.lambda / radial.point.lambda - 1.0).abs() < 2e-3);
}

#[test]
fn symmetric_pair_has_even_and_odd_modes() {
    let v = VExpr::parse("exp(6*x1^2)").unwrap();
    let oracle = GreenOracle::Exact;
    let sys = find_critical(&[[0.4, 0.0], [-0.4, 0.0]], &oracle, &v, &CriticalOptions::default()).unwrap();
    let planar = disk(257);
    let opts = Branch2dOptions {
        count: 7,
        ..Branch2dOptions::default()
    };
    let (steps, trunc) = continue_planar(&planar, &oracle, &v, &sys.points, &[8.0, 8.5], &opts, |_| {});
    assert!(trunc.is_none());
    let grid = &planar.grid;
    for st in &steps {
        let peaks = &st.point.peaks;
        assert!((peaks[0].height - peaks[1].height).abs() <= 1e-8);
        assert!(st.eigen.pairs[6].mu > 1.0);
        let (w1, w2) = (&st.eigen.pairs[0].w, &st.eigen.pairs[1].w);
        for u in 0..grid.len() {
            let m = mirror(grid, u);
            assert!((w1[u] - w1[m]).abs() <= 1e-6);
            assert!((w2[u] + w2[m]).abs() <= 1e-6);
        }
    }
}
