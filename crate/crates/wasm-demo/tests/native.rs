use qdc_wasm_demo::{epsilon_curve_json, info_maps_json, survival_curves_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn epsilon_curve_hits_calibration() {
    let v = parse(epsilon_curve_json(1.0, 2.0, 3.0, 11).unwrap());
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 11);
    let at = pts.iter().find(|p| (p["omega"].as_f64().unwrap() - 2.6).abs() < 1e-9).unwrap();
    assert!((at["epsilon"].as_f64().unwrap() - 0.0093).abs() < 5e-4);
    assert!(epsilon_curve_json(1.0, 3.0, 2.0, 11).is_err());
    assert!(epsilon_curve_json(1.0, 2.0, 3.0, 1).is_err());
}

#[test]
fn survival_curves_match_cli_summary() {
    let v =
        parse(survival_curves_json(2.57, 69.0 / 70.0, 5e-7, 1, "ugqcm:0.05; ugqcm:0.5", 1e2, 1e7, 200, 0.01).unwrap());
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    let stolen = curves[0]["cutoff"]["stolen_bits"].as_f64().unwrap();
    assert!((stolen - 80.8).abs() < 0.5, "{stolen}");
    assert_eq!(curves[0]["survival"].as_array().unwrap().len(), 200);
    assert!(survival_curves_json(2.57, 0.5, 5e-7, 1, "", 1e2, 1e7, 20, 0.01).is_err());
    assert!(survival_curves_json(2.57, 0.5, 5e-7, 1, "warp:1", 1e2, 1e7, 20, 0.01).is_err());
    assert!(survival_curves_json(2.57, 0.5, 5e-7, 2, "ugqcm:0.1", 1e2, 1e7, 20, 0.01).is_err());
}

#[test]
fn info_maps_shape_and_argmax() {
    let v = parse(info_maps_json(35, 0.5, 2.5, 41, 0.01, 2.0, 60).unwrap());
    assert_eq!(v["mu"].as_array().unwrap().len(), 41 * 60);
    assert_eq!(v["integrated_d"].as_array().unwrap().len(), 41);
    let best = v["best_omega"].as_f64().unwrap();
    assert!((0.85..=1.15).contains(&best));
    assert!(info_maps_json(35, 0.5, 2.5, 1000, 0.01, 2.0, 1000).is_err());
}
