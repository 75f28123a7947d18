use gelfand_web::*;
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn branch_point_tracks_exact_lambda() {
    let v = parse(branch_point_json("1", 2.0 * 10f64.ln()).unwrap());
    assert!((v["lambda"].as_f64().unwrap() / 0.72 - 1.0).abs() < 1e-6);
    assert_eq!(v["spectrum"][1]["multiplicity"], 2);
    assert!(branch_point_json("exp(x1)", 2.0).is_err());
    assert!(branch_point_json("1", -1.0).is_err());
}

#[test]
fn symmetric_pair_locates_weighted_peaks() {
    let v = parse(symmetric_pair_json("exp(6*x1^2)", 0.4).unwrap());
    let t = v["scan_t"].as_f64().unwrap();
    assert!((t - 0.438467).abs() < 1e-4, "{t}");
    assert!((v["points"][0][0].as_f64().unwrap() - t).abs() < 1e-4);
}

#[test]
fn disk_green_closed_form() {
    let v = parse(disk_green_json([0.5, 0.0], [0.0, 0.0]).unwrap());
    let two_pi = 2.0 * std::f64::consts::PI;
    assert!((v["G"].as_f64().unwrap() - 2f64.ln() / two_pi).abs() < 1e-12);
    assert!((v["R_x"].as_f64().unwrap() - 0.75f64.ln() / two_pi).abs() < 1e-12);
    assert!(disk_green_json([1.5, 0.0], [0.0, 0.0]).is_err());
}
