//! Closed-form evaluators: survival probability, stolen information,
//! repetition-code error, survival-vs-stolen curves and information maps.

use serde::{Deserialize, Serialize};

use crate::adversary::AttackSpec;
use crate::channel::{check_sigma2, eve_clone_variance};
use crate::error::{domain, Result};
use crate::lattice::{error_probability, LatticeParams};
use crate::numerics::{binary_entropy, chi_squared_quantile, ln_gamma, regularized_gamma_p};
use crate::protocol::ProtocolConfig;

/// Total noise on Bob's heterodyne quadrature with a cloner of noise `sigma2`.
pub fn bob_total_noise(sigma2: f64) -> f64 {
    1.0 + sigma2
}

/// Total noise on Eve's heterodyne quadrature: clone noise plus detection.
pub fn eve_total_noise(sigma2: f64) -> f64 {
    1.0 + eve_clone_variance(sigma2)
}

fn check_confidence(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("confidence level must lie in (0, 1), got {r}"));
    }
    Ok(())
}

/// Acceptance threshold on the estimator after `m` heterodyne control modes.
pub fn acceptance_threshold(m: u64, r: f64) -> Result<f64> {
    check_confidence(r)?;
    chi_squared_quantile(2 * m, 1.0 - r)
}

/// CDF of the estimator `v` after `m` heterodyne control modes at noise
/// `sigma2`: `v / (1 + σ²)` is χ² with `2m` degrees of freedom.
pub fn estimator_cdf(m: u64, sigma2: f64, v: f64) -> Result<f64> {
    if m == 0 {
        return domain("estimator needs at least one control mode");
    }
    if v <= 0.0 {
        return Ok(0.0);
    }
    regularized_gamma_p(m as f64, v / (2.0 * bob_total_noise(sigma2)))
}

/// Probability that an eavesdropper adding `sigma2` passes the test after
/// `m` control modes: `P(m, 𝒱_{2m,1−r} / (2(1+σ²)))` in regularized form,
/// which stays finite for very large `m`.
pub fn survival_probability(m: u64, sigma2: f64, r: f64) -> Result<f64> {
    if m == 0 {
        return domain("survival needs at least one control mode");
    }
    if !(sigma2 >= 0.0) {
        return domain(format!("noise must be non-negative, got {sigma2}"));
    }
    if sigma2.is_infinite() {
        return Ok(0.0);
    }
    let threshold = acceptance_threshold(m, r)?;
    regularized_gamma_p(m as f64, threshold / (2.0 * bob_total_noise(sigma2)))
}

/// Information per message mode for an uncoded lattice: `2(1 − H(p(Δ_E)))`.
pub fn stolen_info_basic(sigma2: f64, lat: &LatticeParams) -> Result<f64> {
    stolen_info_coded(sigma2, lat, 1)
}

fn check_code_length(n: u64) -> Result<()> {
    if n == 0 || n.is_multiple_of(2) {
        return domain(format!("code length must be odd and positive, got {n}"));
    }
    Ok(())
}

/// Probability that more than half of `n` independent bits flip.
pub fn uncorrectable_error(n: u64, p: f64) -> Result<f64> {
    check_code_length(n)?;
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("flip probability must lie in [0, 1], got {p}"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    if n == 1 {
        return Ok(p);
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let nf = n as f64;
    let ln_n_fact = ln_gamma(nf + 1.0);
    let total: f64 = (n.div_ceil(2)..=n)
        .map(|k| {
            let kf = k as f64;
            let ln_binom = ln_n_fact - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0);
            (ln_binom + kf * lp + (nf - kf) * lq).exp()
        })
        .sum();
    Ok(total.min(1.0))
}

/// Eve's information per message mode when `n`-bit repetition codewords are
/// decoded by majority: `2(1 − H(P_n(p)))/n`.
pub fn stolen_info_coded(sigma2: f64, lat: &LatticeParams, n: u64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_code_length(n)?;
    let p = error_probability(lat, eve_total_noise(sigma2))?;
    let logical = uncorrectable_error(n, p)?;
    Ok(2.0 * (1.0 - binary_entropy(logical)?) / n as f64)
}

/// Odd attacked count `t = nω` of an intermittent attack.
pub fn attacked_positions(omega_freq: f64, n: u64) -> Result<u64> {
    let t = omega_freq * n as f64;
    let rounded = t.round();
    if (t - rounded).abs() > 1e-9 || rounded < 1.0 || rounded > n as f64 || (rounded as u64).is_multiple_of(2) {
        return domain(format!("n·ω = {t} must be an odd integer in [1, {n}]"));
    }
    Ok(rounded as u64)
}

/// Eve's information per message mode under an intermittent attack: she
/// takes the majority over the `t = nω` positions she attacked.
pub fn stolen_info_intermittent(sigma2: f64, omega_freq: f64, lat: &LatticeParams, n: u64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_code_length(n)?;
    let t = attacked_positions(omega_freq, n)?;
    let p = error_probability(lat, eve_total_noise(sigma2))?;
    let logical = uncorrectable_error(t, p)?;
    Ok(2.0 * (1.0 - binary_entropy(logical)?) / n as f64)
}

/// Bits per transmitted system, `2(1 − c)/n`.
pub fn efficiency(c: f64, n: u64) -> Result<f64> {
    check_code_length(n)?;
    if !(0.0..1.0).contains(&c) {
        return domain(format!("control probability must lie in [0, 1), got {c}"));
    }
    Ok(2.0 * (1.0 - c) / n as f64)
}

/// Expected logical bits Alice sends over `runs` systems.
pub fn alice_throughput(c: f64, n: u64, runs: f64) -> Result<f64> {
    Ok(efficiency(c, n)? * runs)
}

/// Rough session length bound `4(1 − c)/(n c r)`: about `1/r` tests can pass
/// before a false alarm.
pub fn max_session_bits(c: f64, r: f64, n: u64) -> Result<f64> {
    check_code_length(n)?;
    check_confidence(r)?;
    if !(c > 0.0 && c < 1.0) {
        return domain(format!("control probability must lie in (0, 1), got {c}"));
    }
    Ok(4.0 * (1.0 - c) / (n as f64 * c * r))
}

/// Literal bound for the 35-bit coded reference configuration and the figure
/// usually quoted for it. They disagree by a factor of ~65.
pub const CODED_BOUND_NOTE: &str = "max_session_bits is evaluated literally as 4(1-c)/(n c r); for n=35, c=1/2, \
r=5e-7 this gives ~2.29e5 bits, whereas ~3500 bits is the value usually quoted for that configuration. \
The two are not reconciled here.";

/// A point `(N, I, P)` of a survival-vs-stolen curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Transmitted systems.
    pub runs: f64,
    /// Control modes entering the survival probability.
    pub control_modes: u64,
    /// Expected stolen bits.
    pub stolen_bits: f64,
    pub survival: f64,
}

/// Log-spaced grid of session lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for RunGrid {
    fn default() -> Self {
        Self { min: 1e2, max: 1e7, points: 200 }
    }
}

impl RunGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max > self.min) || self.points < 2 {
            return domain(format!("invalid run grid {self:?}"));
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        let step = (b - a) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| (a + step * i as f64).exp()).collect())
    }
}

/// Per-message-mode stolen information and attacked fraction of the control
/// modes for a curve.
fn curve_rates(cfg: &ProtocolConfig, attack: &AttackSpec) -> Result<(f64, f64, f64)> {
    let n = cfg.code_length as u64;
    match *attack {
        AttackSpec::Ugqcm { sigma2 } => Ok((stolen_info_coded(sigma2, &cfg.lattice, n)?, 1.0, sigma2)),
        AttackSpec::Intermittent { omega_freq, sigma2 } => {
            Ok((stolen_info_intermittent(sigma2, omega_freq, &cfg.lattice, n)?, omega_freq, sigma2))
        }
        _ => domain(format!("curves are defined for cloner attacks, got {}", attack.label())),
    }
}

/// `I = (1−c) N I_AE` and `P = Π_{round(cNω)}(σ²)` over `grid`.
///
/// For intermittent attacks Bob is credited with knowing which control modes
/// were attacked and tests those alone, so the curve lower-bounds Eve.
pub fn survival_vs_stolen_curve(cfg: &ProtocolConfig, attack: &AttackSpec, grid: &RunGrid) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let rates = curve_rates(cfg, attack)?;
    grid.values()?.into_iter().map(|runs| point_at(cfg, rates, runs)).collect()
}

/// A single point of [`survival_vs_stolen_curve`] after `runs` systems.
pub fn curve_point(cfg: &ProtocolConfig, attack: &AttackSpec, runs: f64) -> Result<CurvePoint> {
    cfg.validate()?;
    if !(runs >= 0.0) || !runs.is_finite() {
        return domain(format!("run count must be finite and non-negative, got {runs}"));
    }
    point_at(cfg, curve_rates(cfg, attack)?, runs)
}

fn point_at(cfg: &ProtocolConfig, (info, tested_fraction, sigma2): (f64, f64, f64), runs: f64) -> Result<CurvePoint> {
    let c = cfg.control_prob;
    let m = (c * runs * tested_fraction).round() as u64;
    let survival = if m == 0 { 1.0 } else { survival_probability(m, sigma2, cfg.confidence)? };
    Ok(CurvePoint { runs, control_modes: m, stolen_bits: (1.0 - c) * runs * info, survival })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPoint {
    pub runs: f64,
    pub stolen_bits: f64,
    /// The curve already sat below the cutoff at its first point.
    pub clipped: bool,
}

/// Stolen bits at the point where the survival probability falls to
/// `cutoff`, interpolated in `ln N` (and `ln P`) between grid points.
pub fn stolen_at_cutoff(curve: &[CurvePoint], cutoff: f64) -> Option<CutoffPoint> {
    let first = curve.first()?;
    if first.survival < cutoff {
        return Some(CutoffPoint { runs: first.runs, stolen_bits: first.stolen_bits, clipped: true });
    }
    curve.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if !(a.survival >= cutoff && b.survival < cutoff) {
            return None;
        }
        let f = if b.survival > 0.0 {
            (a.survival.ln() - cutoff.ln()) / (a.survival.ln() - b.survival.ln())
        } else {
            (a.survival - cutoff) / (a.survival - b.survival)
        };
        let ln_runs = a.runs.ln() + f * (b.runs.ln() - a.runs.ln());
        let runs = ln_runs.exp();
        let g = (runs - a.runs) / (b.runs - a.runs);
        Some(CutoffPoint { runs, stolen_bits: a.stolen_bits + g * (b.stolen_bits - a.stolen_bits), clipped: false })
    })
}

/// One cell of the `(Ω, σ²)` information maps, per logical bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoMapCell {
    pub omega: f64,
    pub sigma2: f64,
    pub i_ab: f64,
    pub i_ae: f64,
    /// `I_AB + I_AE`
    pub mu: f64,
    /// `|I_AB − I_AE|`
    pub d: f64,
}

pub fn info_map_cell(omega: f64, sigma2: f64, n: u64) -> Result<InfoMapCell> {
    let lat = LatticeParams::new(omega)?;
    check_sigma2(sigma2)?;
    let p_bob = uncorrectable_error(n, error_probability(&lat, bob_total_noise(sigma2))?)?;
    let p_eve = uncorrectable_error(n, error_probability(&lat, eve_total_noise(sigma2))?)?;
    let i_ab = 1.0 - binary_entropy(p_bob)?;
    let i_ae = 1.0 - binary_entropy(p_eve)?;
    Ok(InfoMapCell { omega, sigma2, i_ab, i_ae, mu: i_ab + i_ae, d: (i_ab - i_ae).abs() })
}

/// Information maps over the grid, ordered omega-major, independent of the
/// number of worker threads.
pub fn mutual_info_maps(omegas: &[f64], sigma2s: &[f64], n: u64) -> Result<Vec<InfoMapCell>> {
    check_code_length(n)?;
    if omegas.is_empty() || sigma2s.is_empty() {
        return domain("information map grid must be non-empty");
    }
    let jobs: Vec<(f64, f64)> = omegas.iter().flat_map(|&o| sigma2s.iter().map(move |&s| (o, s))).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(|&(o, s)| info_map_cell(o, s, n)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(|&(o, s)| info_map_cell(o, s, n)).collect()
    }
}

/// `∫ D(Ω, σ²) dσ²` per Ω row (trapezoid rule), in grid order. Cells must be
/// omega-major with a common σ² axis, as produced by [`mutual_info_maps`].
pub fn integrated_separation(cells: &[InfoMapCell], sigma2_count: usize) -> Vec<(f64, f64)> {
    cells
        .chunks(sigma2_count)
        .map(|row| {
            let integral = row.windows(2).map(|w| 0.5 * (w[0].d + w[1].d) * (w[1].sigma2 - w[0].sigma2)).sum();
            (row[0].omega, integral)
        })
        .collect()
}

/// Ω with the largest σ²-integrated separation.
pub fn best_separation_omega(cells: &[InfoMapCell], sigma2_count: usize) -> Option<(f64, f64)> {
    integrated_separation(cells, sigma2_count).into_iter().max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Evenly spaced values over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
}
