use std::f64::consts::PI;

use gelfand_core::solver1d::*;
use gelfand_core::vexpr::VExpr;

/// Blow-up member of the `V ≡ 1` family with the given `λ`.
fn exact_at_lambda(lambda: f64) -> ExactBranch {
    let b = 8.0 - 2.0 * lambda;
    let x = (b + (b * b - 4.0 * lambda * lambda).sqrt()) / (2.0 * lambda);
    ExactBranch { delta: x.sqrt() }
}

fn one() -> VExpr {
    VExpr::parse("1").unwrap()
}

#[test]
fn reproduces_exact_branch_points() {
    let step = radial_step(2.0 * 10f64.ln(), &one(), None, &Branch1dOptions::default()).unwrap();
    assert!((step.point.lambda / 0.72 - 1.0).abs() < 1e-9);
    assert!((step.point.total_mass - 7.2 * PI).abs() < 1e-7);

    let s = 2.0 * 12f64.exp().ln_1p();
    let e12 = 12f64.exp();
    let step = radial_step(s, &one(), None, &Branch1dOptions::default()).unwrap();
    let lambda = 8.0 * e12 / ((1.0 + e12) * (1.0 + e12));
    assert!((step.point.lambda / lambda - 1.0).abs() < 1e-7);
}

#[test]
fn raw_scheme_is_second_order() {
    let s = 12.0;
    let exact = ExactBranch::from_height(s).lambda();
    let errs: Vec<f64> = [512, 1024, 2048]
        .iter()
        .map(|&n| {
            let opts = NewtonOptions { n, ..NewtonOptions::default() };
            let sol = radial_newton_constrained(s, &one(), None, &opts).unwrap();
            (sol.lambda / exact - 1.0).abs()
        })
        .collect();
    assert!(errs[0] / errs[1] >= 3.5 && errs[1] / errs[2] >= 3.5, "{errs:?}");
}

#[test]
fn continuation_invariants() {
    let schedule = amplitude_schedule(1.0, 20.0, 0.5);
    let (steps, err) = continue_radial(&one(), &schedule, &Branch1dOptions::default(), |_| {});
    assert!(err.is_none());
    assert_eq!(steps.len(), schedule.len());
    let mut last_mu1 = f64::INFINITY;
    for st in &steps {
        let bp = &st.point;
        assert!(bp.newton_iterations <= 8, "s={} took {}", bp.s, bp.newton_iterations);
        let delta = bp.peaks[0].delta;
        assert!((bp.lambda * bp.s.exp() * delta * delta - 1.0).abs() < 1e-12);
        assert!(bp.total_mass > 0.0 && bp.total_mass < 16.0 * PI);
        let exact = ExactBranch::from_height(bp.s);
        assert!((bp.lambda / exact.lambda() - 1.0).abs() < 1e-7);

        let grid = st.coarse.grid.clone();
        assert!(grid.grading_ratio() > 1.0 && grid.grading_ratio() <= 1.15);
        assert!(grid.nodes_inside(st.coarse.delta()) >= 12);

        // ℓ = 0 first, then the ℓ = 1 pair, then the rest above 1
        let sp = &st.spectrum;
        assert_eq!((sp[0].l, sp[0].multiplicity), (0, 1));
        assert_eq!((sp[1].l, sp[1].multiplicity), (1, 2));
        assert_eq!(nth_eigenvalue(sp, 3), Some(&sp[1]));
        assert!(nth_eigenvalue(sp, 4).unwrap().mu > 1.0);
        assert!(st.orthogonality <= 1e-8);

        if bp.s >= 16.0 {
            assert!((delta / bp.lambda.sqrt() / 0.125 - 1.0).abs() <= 0.02);
        }
        if bp.s >= 4.0 {
            assert!(sp[0].mu < last_mu1);
            last_mu1 = sp[0].mu;
        }
    }
}

#[test]
fn scaling_limit_for_weighted_problems() {
    for a in [1.0f64, 2.0] {
        let v = VExpr::parse(&format!("exp({a}*(1 - abs2(x)))")).unwrap();
        let schedule = amplitude_schedule(1.0, 19.0, 0.5);
        let (steps, err) = continue_radial(&v, &schedule, &Branch1dOptions::default(), |_| {});
        assert!(err.is_none());
        let d1 = (a / 2.0).exp() / 8.0;
        for st in steps.iter().filter(|st| st.point.s >= 18.0) {
            let ratio = st.point.peaks[0].delta / st.point.lambda.sqrt();
            assert!((ratio / d1 - 1.0).abs() <= 0.03, "a={a} s={} ratio={ratio}", st.point.s);
        }
    }
}

#[test]
fn mode_eigenvalue_examples() {
    let opts = Branch1dOptions::default();
    let at = |e: ExactBranch| radial_step(e.height(), &one(), None, &opts).unwrap();

    let shallow = at(ExactBranch { delta: 1.0 });
    // δ = 1 is the fold λ = 2. There λe^v = 8/(1+r²)² is the round metric, so
    // μ = k(k+1)/2 over harmonics odd across the equator: 1 (ℓ=0), 3 (ℓ=1), 6 (ℓ=0, 2)
    let sp = &shallow.spectrum;
    assert!((sp[0].mu - 1.0).abs() < 1e-8 && sp[0].l == 0);
    assert!((sp[1].mu - 3.0).abs() < 1e-7 && sp[1].l == 1);
    assert!((sp[2].mu - 6.0).abs() < 1e-7 && (sp[3].mu - 6.0).abs() < 1e-7);
    assert!(sp[0].mu < sp[1].mu);

    let deep = at(exact_at_lambda(1e-6));
    assert!((deep.point.lambda / 1e-6 - 1.0).abs() < 1e-6);
    let mu1 = deep.spectrum[0].mu;
    assert!((0.030..=0.037).contains(&mu1), "{mu1}");

    let mid = at(exact_at_lambda(0.01));
    let pair = &mid.spectrum[1];
    assert_eq!((pair.l, pair.multiplicity), (1, 2));
    assert!((pair.mu - (1.0 + 0.375 * 0.01)).abs() <= 5e-4, "{}", pair.mu);

    let modes = mode_eigs(&mid.coarse, 1, 2).unwrap();
    for m in &modes {
        let top = m.w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert!((top - 1.0).abs() < 1e-14);
        assert_eq!(*m.w.last().unwrap(), 0.0);
        assert_eq!(m.w[0], 0.0);
    }
}
