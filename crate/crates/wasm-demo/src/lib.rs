//! Browser bindings for three explorers: the lattice error curve, survival
//! versus stolen bits, and the information maps. Each operation is a plain
//! function returning JSON so it can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use qdc_core::adversary::AttackSpec;
use qdc_core::analysis::{
    best_separation_omega, integrated_separation, linspace, mutual_info_maps, stolen_at_cutoff,
    survival_vs_stolen_curve, RunGrid,
};
use qdc_core::lattice::{error_probability, LatticeParams};
use qdc_core::protocol::ProtocolConfig;

const MAX_POINTS: usize = 2000;
const MAX_MAP_CELLS: usize = 40_000;

fn check_points(points: usize, what: &str) -> Result<(), String> {
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("{what} needs between 2 and {MAX_POINTS} points, got {points}"));
    }
    Ok(())
}

fn check_range(lo: f64, hi: f64, what: &str) -> Result<(), String> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(format!("{what} range must satisfy 0 < min < max, got {lo}..{hi}"));
    }
    Ok(())
}

/// `ε(Ω)` for noise `delta` on a linear grid of `Ω`.
pub fn epsilon_curve_json(delta: f64, omega_min: f64, omega_max: f64, points: usize) -> Result<String, String> {
    check_points(points, "epsilon curve")?;
    check_range(omega_min, omega_max, "omega")?;
    let rows = linspace(omega_min, omega_max, points)
        .into_iter()
        .map(|o| {
            let eps = error_probability(&LatticeParams::new(o).map_err(|e| e.to_string())?, delta)
                .map_err(|e| e.to_string())?;
            Ok(json!({ "omega": o, "epsilon": eps }))
        })
        .collect::<Result<Vec<Value>, String>>()?;
    Ok(json!({ "delta": delta, "points": rows }).to_string())
}

/// Survival-vs-stolen curves for `;`-separated attacks such as
/// `ugqcm:0.05;intermittent:1/35:0.4`.
#[allow(clippy::too_many_arguments)]
pub fn survival_curves_json(
    omega: f64,
    control_prob: f64,
    confidence: f64,
    code_length: u32,
    attacks: &str,
    n_min: f64,
    n_max: f64,
    points: usize,
    cutoff: f64,
) -> Result<String, String> {
    check_points(points, "survival curve")?;
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(format!("cutoff must lie in (0, 1), got {cutoff}"));
    }
    let cfg = ProtocolConfig::new(omega, control_prob, confidence, code_length).map_err(|e| e.to_string())?;
    let grid = RunGrid { min: n_min, max: n_max, points };
    let mut curves = Vec::new();
    for spec in attacks.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let attack = AttackSpec::parse(spec).map_err(|e| format!("{spec}: {e}"))?;
        let curve = survival_vs_stolen_curve(&cfg, &attack, &grid).map_err(|e| format!("{spec}: {e}"))?;
        let cut = stolen_at_cutoff(&curve, cutoff);
        curves.push(json!({
            "label": attack.label(),
            "runs": curve.iter().map(|p| p.runs).collect::<Vec<_>>(),
            "stolen_bits": curve.iter().map(|p| p.stolen_bits).collect::<Vec<_>>(),
            "survival": curve.iter().map(|p| p.survival).collect::<Vec<_>>(),
            "cutoff": cut.map(|c| json!({ "runs": c.runs, "stolen_bits": c.stolen_bits, "clipped": c.clipped })),
        }));
    }
    if curves.is_empty() {
        return Err("no attack given".into());
    }
    Ok(json!({ "cutoff": cutoff, "curves": curves }).to_string())
}

/// `μ` and `D` maps on the `(Ω, σ²)` plane plus the `Ω` with the broadest
/// separation. Arrays are row-major with `σ²` varying fastest.
pub fn info_maps_json(
    code_length: u32,
    omega_min: f64,
    omega_max: f64,
    omega_points: usize,
    sigma2_min: f64,
    sigma2_max: f64,
    sigma2_points: usize,
) -> Result<String, String> {
    check_points(omega_points, "omega axis")?;
    check_points(sigma2_points, "sigma2 axis")?;
    if omega_points * sigma2_points > MAX_MAP_CELLS {
        return Err(format!("at most {MAX_MAP_CELLS} cells"));
    }
    check_range(omega_min, omega_max, "omega")?;
    check_range(sigma2_min, sigma2_max, "sigma2")?;
    let omegas = linspace(omega_min, omega_max, omega_points);
    let sigma2s = linspace(sigma2_min, sigma2_max, sigma2_points);
    let cells = mutual_info_maps(&omegas, &sigma2s, code_length as u64).map_err(|e| e.to_string())?;
    let best = best_separation_omega(&cells, sigma2s.len());
    Ok(json!({
        "omegas": omegas,
        "sigma2s": sigma2s,
        "mu": cells.iter().map(|c| c.mu).collect::<Vec<_>>(),
        "d": cells.iter().map(|c| c.d).collect::<Vec<_>>(),
        "integrated_d": integrated_separation(&cells, sigma2s.len()).into_iter().map(|(_, d)| d).collect::<Vec<_>>(),
        "best_omega": best.map(|(o, _)| o),
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = epsilonCurve)]
pub fn epsilon_curve(delta: f64, omega_min: f64, omega_max: f64, points: usize) -> Result<String, JsValue> {
    js(epsilon_curve_json(delta, omega_min, omega_max, points))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen(js_name = survivalCurves)]
pub fn survival_curves(
    omega: f64,
    control_prob: f64,
    confidence: f64,
    code_length: u32,
    attacks: &str,
    n_min: f64,
    n_max: f64,
    points: usize,
    cutoff: f64,
) -> Result<String, JsValue> {
    js(survival_curves_json(omega, control_prob, confidence, code_length, attacks, n_min, n_max, points, cutoff))
}

#[wasm_bindgen(js_name = infoMaps)]
pub fn info_maps(
    code_length: u32,
    omega_min: f64,
    omega_max: f64,
    omega_points: usize,
    sigma2_min: f64,
    sigma2_max: f64,
    sigma2_points: usize,
) -> Result<String, JsValue> {
    js(info_maps_json(code_length, omega_min, omega_max, omega_points, sigma2_min, sigma2_max, sigma2_points))
}
