//! Seeded Monte Carlo harness checking the simulator against the closed
//! forms of the analysis module.
//!
//! Seeding rule: work unit `i` of an experiment with master seed `s` draws
//! from `ChaCha12Rng::seed_from_u64(s)` switched to stream `i`. Work units
//! are sessions, or fixed-size chunks of independent trials, so results do
//! not depend on how many threads run them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::AttackSpec;
use crate::analysis::{alice_throughput, curve_point, estimator_cdf, uncorrectable_error};
use crate::channel::{measure, MeasurementKind, NoisyState};
use crate::error::{domain, QdcError, Result};
use crate::lattice::{cell_center, decode_quadrature, encode_bits, error_probability, BitPair, LatticeParams};
use crate::numerics::{binary_entropy, chi_squared_quantile, regularized_gamma_p, sample_gaussian, GaussianSpec};
use crate::protocol::{ProtocolConfig, SessionLimit, SessionReport, SessionRunner, TestSchedule, Variant};

pub const VALIDATION_SCHEMA_VERSION: u32 = 1;
/// Default acceptance band, in standard errors.
pub const DEFAULT_TOLERANCE_SE: f64 = 4.0;
/// Significance level of the KS checks.
pub const KS_LEVEL: f64 = 0.01;
const CHUNK: u64 = 4096;

/// Generator for work unit `index` under `seed`.
pub fn unit_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Map `f` over `0..count`, in parallel when enabled, keeping index order.
pub fn map_units<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Run `trials` independent trials in chunks; `f(rng, k)` performs `k`
/// trials and returns a per-chunk tally, which `merge` folds in chunk order.
fn chunked<T, F, M>(trials: u64, seed: u64, f: F, init: T, merge: M) -> T
where
    T: Send,
    F: Fn(&mut ChaCha12Rng, u64) -> T + Sync + Send,
    M: Fn(T, T) -> T,
{
    let chunks = trials.div_ceil(CHUNK);
    map_units(chunks, |i| {
        let k = CHUNK.min(trials - i * CHUNK);
        f(&mut unit_rng(seed, i), k)
    })
    .into_iter()
    .fold(init, merge)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub trials: u64,
    pub empirical: f64,
    pub analytic: f64,
    pub standard_error: f64,
    /// Set for distributional (KS) checks, which pass on the p-value.
    pub p_value: Option<f64>,
    pub tolerance_se: f64,
    pub pass: bool,
}

impl ValidationCheck {
    /// Pass iff `|empirical − analytic| ≤ k·SE`.
    pub fn banded(name: impl Into<String>, trials: u64, empirical: f64, analytic: f64, se: f64, k: f64) -> Self {
        let pass = (empirical - analytic).abs() <= k * se;
        Self {
            name: name.into(),
            trials,
            empirical,
            analytic,
            standard_error: se,
            p_value: None,
            tolerance_se: k,
            pass,
        }
    }

    pub fn deviation_se(&self) -> f64 {
        if self.standard_error > 0.0 {
            (self.empirical - self.analytic).abs() / self.standard_error
        } else if self.empirical == self.analytic {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub seed: u64,
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn new(seed: u64, checks: Vec<ValidationCheck>) -> Self {
        Self { schema_version: VALIDATION_SCHEMA_VERSION, seed, checks }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(QdcError::Precondition(msg.into()))
    }
}

/// Binomial standard error, with `p` kept at least one event away from 0
/// and 1. Without the floor a single rare event would sit at hundreds of SE.
fn binomial_se(p: f64, n: u64) -> f64 {
    let floor = 1.0 / n as f64;
    let p = p.clamp(floor, 1.0 - floor);
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Per-quadrature decoding error of lattice points under Gaussian noise of
/// variance `delta`.
pub fn validate_intrinsic_error(lat: &LatticeParams, delta: f64, trials: u64, seed: u64) -> Result<ValidationReport> {
    require(trials >= 1000, "intrinsic-error validation needs at least 10^3 trials")?;
    let analytic = error_probability(lat, delta)?;
    let noise = GaussianSpec::centered(delta)?;
    let errors = chunked(
        trials,
        seed,
        |rng, k| {
            let mut e = 0u64;
            for _ in 0..k {
                let bits = BitPair::new(rng.random(), rng.random());
                let center = cell_center(encode_bits(bits, rng, crate::lattice::DEFAULT_RANGE_M).expect("range"), lat);
                let q = decode_quadrature(center.q + sample_gaussian(rng, &noise), lat);
                let p = decode_quadrature(center.p + sample_gaussian(rng, &noise), lat);
                e += (q != bits.q) as u64 + (p != bits.p) as u64;
            }
            e
        },
        0,
        |a, b| a + b,
    );
    let n = 2 * trials;
    let name = format!("intrinsic_error(omega={}, delta={delta})", lat.omega());
    let check = ValidationCheck::banded(
        name,
        n,
        errors as f64 / n as f64,
        analytic,
        binomial_se(analytic, n),
        DEFAULT_TOLERANCE_SE,
    );
    Ok(ValidationReport::new(seed, vec![check]))
}

/// Analytic probability that a final test on `m` control modes accepts,
/// for the given variant and channel noise.
fn analytic_acceptance(cfg: &ProtocolConfig, m: u64, sigma2: f64) -> Result<f64> {
    let (dof_per_cm, noise_factor) = match cfg.variant {
        Variant::Standard => (2, 1.0),
        Variant::HomodyneVariant => (1, 2.0),
        Variant::UnifiedCmMm => (1, 1.0),
        Variant::Postponed => return domain("the postponed variant runs no χ² test"),
    };
    let dof = dof_per_cm * m;
    let threshold = chi_squared_quantile(dof, 1.0 - cfg.confidence)? * cfg.tolerance_scale();
    regularized_gamma_p(dof as f64 / 2.0, threshold / (2.0 * (1.0 + noise_factor * sigma2)))
}

fn tested_noise(cfg: &ProtocolConfig, attack: &AttackSpec) -> Result<f64> {
    match *attack {
        AttackSpec::None => Ok(0.0),
        AttackSpec::Ugqcm { sigma2 } => Ok(sigma2),
        AttackSpec::Intermittent { sigma2, .. } if cfg.genie_attacked_controls => Ok(sigma2),
        _ => domain(format!("no closed-form acceptance for attack {}", attack.label())),
    }
}

/// Frequency with which a session of exactly `m` tested control modes passes
/// a single final test, against `Π_M`.
pub fn validate_survival(
    cfg: &ProtocolConfig,
    attack: &AttackSpec,
    sessions: u64,
    m: u64,
    seed: u64,
) -> Result<ValidationReport> {
    require(sessions >= 1000, "survival validation needs at least 10^3 sessions")?;
    require(m >= 1, "survival validation needs at least one control mode")?;
    let cfg = ProtocolConfig { test_schedule: TestSchedule::AtEnd, record_transcript: false, ..*cfg };
    let sigma2 = tested_noise(&cfg, attack)?;
    let analytic = analytic_acceptance(&cfg, m, sigma2)?;
    SessionRunner::new(&cfg, attack)?;
    let accepted: Vec<Result<bool>> = map_units(sessions, |i| {
        let mut runner = SessionRunner::new(&cfg, attack)?;
        let rep = runner.run_for(SessionLimit::Controls(m), &mut unit_rng(seed, i))?;
        Ok(!rep.aborted)
    });
    let mut count = 0u64;
    for a in accepted {
        count += a? as u64;
    }
    let name = format!("survival(M={m}, attack={})", attack.label());
    let check = ValidationCheck::banded(
        name,
        sessions,
        count as f64 / sessions as f64,
        analytic,
        binomial_se(analytic, sessions),
        DEFAULT_TOLERANCE_SE,
    );
    Ok(ValidationReport::new(seed, vec![check]))
}

/// Sup distance between the empirical CDF of sorted `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Two-sample KS distance between sorted samples.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value of a one-sample KS distance `d` on `n` samples, with Stephens'
/// finite-sample correction.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

pub fn ks_two_sample_p_value(d: f64, n: usize, m: usize) -> f64 {
    ks_p_value(d, (n * m) / (n + m))
}

fn sample_estimators(m: u64, sigma2: f64, sessions: u64, seed: u64) -> Result<Vec<f64>> {
    let state = NoisyState { mean: crate::lattice::Amplitude::ZERO, added_variance: sigma2 };
    map_units(sessions, |i| {
        let mut rng = unit_rng(seed, i);
        let mut v = 0.0;
        for _ in 0..m {
            v += measure(&state, MeasurementKind::Heterodyne, &mut rng)?.values().iter().map(|x| x * x).sum::<f64>();
        }
        Ok(v)
    })
    .into_iter()
    .collect()
}

/// KS test of estimators sampled at `sample_sigma2` against the law implied
/// at `null_sigma2`. Passes when the KS p-value is above 1%. The banded
/// fields compare the sample mean with `2M(1 + σ²)`.
pub fn estimator_ks_check(
    m: u64,
    sample_sigma2: f64,
    null_sigma2: f64,
    sessions: u64,
    seed: u64,
) -> Result<ValidationCheck> {
    require(sessions >= 10_000, "estimator validation needs at least 10^4 sessions")?;
    require(m >= 1, "estimator validation needs at least one control mode")?;
    estimator_cdf(m, null_sigma2, 1.0)?;
    let mut v = sample_estimators(m, sample_sigma2, sessions, seed)?;
    let mean = v.iter().sum::<f64>() / sessions as f64;
    v.sort_by(f64::total_cmp);
    let d = ks_statistic(&v, |x| estimator_cdf(m, null_sigma2, x).expect("validated parameters"));
    let p = ks_p_value(d, v.len());
    let scale = 1.0 + null_sigma2;
    Ok(ValidationCheck {
        name: format!("estimator_ks(M={m}, sigma2={sample_sigma2}, null={null_sigma2})"),
        trials: sessions,
        empirical: mean,
        analytic: 2.0 * m as f64 * scale,
        standard_error: 2.0 * (m as f64).sqrt() * scale / (sessions as f64).sqrt(),
        p_value: Some(p),
        tolerance_se: DEFAULT_TOLERANCE_SE,
        pass: p > KS_LEVEL,
    })
}

pub fn validate_estimator_distribution(m: u64, sigma2: f64, sessions: u64, seed: u64) -> Result<ValidationReport> {
    Ok(ValidationReport::new(seed, vec![estimator_ks_check(m, sigma2, sigma2, sessions, seed)?]))
}

/// Negative control: estimators drawn at `sample_sigma2` must fail the KS test
/// against `null_sigma2`. The check passes when the null is rejected.
pub fn validate_estimator_power(
    m: u64,
    sample_sigma2: f64,
    null_sigma2: f64,
    sessions: u64,
    seed: u64,
) -> Result<ValidationReport> {
    let mut check = estimator_ks_check(m, sample_sigma2, null_sigma2, sessions, seed)?;
    check.name = format!("estimator_power(M={m}, sigma2={sample_sigma2}, null={null_sigma2})");
    check.pass = check.p_value.is_some_and(|p| p <= KS_LEVEL);
    Ok(ValidationReport::new(seed, vec![check]))
}

/// Simulated sessions of `runs` systems against one point of the analytic
/// survival-vs-stolen curve: survival frequency, Eve's stolen bits and
/// Alice's throughput.
///
/// Every session runs to the end with one final test, so Eve's decoding is
/// measured on all of them. Her stolen bits are scored from the pooled
/// logical error rate as `2(1 − H(p̂))` per codeword.
pub fn validate_curve_point(
    cfg: &ProtocolConfig,
    attack: &AttackSpec,
    runs: u64,
    sessions: u64,
    seed: u64,
) -> Result<ValidationReport> {
    require(sessions >= 1000, "curve-point validation needs at least 10^3 sessions")?;
    if cfg.variant != Variant::Standard {
        return domain("curve points are defined for the standard variant");
    }
    let genie = matches!(attack, AttackSpec::Intermittent { .. });
    let cfg = ProtocolConfig {
        test_schedule: TestSchedule::AtEnd,
        genie_attacked_controls: genie,
        record_transcript: false,
        ..*cfg
    };
    let point = curve_point(&cfg, attack, runs as f64)?;
    SessionRunner::new(&cfg, attack)?;
    let reports: Vec<Result<SessionReport>> = map_units(sessions, |i| {
        SessionRunner::new(&cfg, attack)?.run_for(SessionLimit::Runs(runs), &mut unit_rng(seed, i))
    });
    let (mut survived, mut eve_bits, mut eve_errors) = (0u64, 0u64, 0u64);
    let mut mm = Vec::with_capacity(sessions as usize);
    for r in reports {
        let r = r?;
        survived += !r.aborted as u64;
        eve_bits += r.eve_logical_bits;
        eve_errors += r.eve_logical_errors;
        mm.push(r.message_modes as f64);
    }
    let n = cfg.code_length as f64;
    let s = sessions as f64;
    let mm_mean = mm.iter().sum::<f64>() / s;
    let mm_sd = (mm.iter().map(|x| (x - mm_mean).powi(2)).sum::<f64>() / (s - 1.0)).sqrt();
    let label = format!("N={runs}, attack={}", attack.label());

    let mut checks = vec![ValidationCheck::banded(
        format!("curve_survival({label})"),
        sessions,
        survived as f64 / s,
        point.survival,
        binomial_se(point.survival, sessions),
        DEFAULT_TOLERANCE_SE,
    )];

    if eve_bits > 0 {
        let p_hat = eve_errors as f64 / eve_bits as f64;
        let per_codeword = 2.0 * (1.0 - binary_entropy(p_hat)?);
        let stolen = mm_mean / n * per_codeword;
        // Delta method on p̂, plus the spread of the message-mode count.
        let slope = if p_hat > 0.0 && p_hat < 1.0 { 2.0 * ((1.0 - p_hat) / p_hat).log2().abs() } else { 0.0 };
        let se_p = (p_hat.max(1.0 / eve_bits as f64) * (1.0 - p_hat) / eve_bits as f64).sqrt();
        let se = ((mm_mean / n * slope * se_p).powi(2) + (per_codeword / n * mm_sd / s.sqrt()).powi(2)).sqrt();
        checks.push(ValidationCheck::banded(
            format!("curve_stolen_bits({label})"),
            eve_bits,
            stolen,
            point.stolen_bits,
            se,
            DEFAULT_TOLERANCE_SE,
        ));
    }

    let payload = cfg.payload_bits() as f64;
    let throughput = payload * mm_mean / n;
    checks.push(ValidationCheck::banded(
        format!("alice_throughput({label})"),
        sessions,
        throughput,
        alice_throughput(cfg.control_prob, cfg.code_length as u64, runs as f64)?,
        payload / n * mm_sd / s.sqrt(),
        DEFAULT_TOLERANCE_SE,
    ));
    Ok(ValidationReport::new(seed, checks))
}

/// Majority decoding of `n`-bit repetition codewords through a binary
/// symmetric channel of flip probability `p`, against `P_n(p)`.
pub fn validate_repetition_code(n: u64, p: f64, trials: u64, seed: u64) -> Result<ValidationReport> {
    require(trials >= 1000, "repetition-code validation needs at least 10^3 trials")?;
    let analytic = uncorrectable_error(n, p)?;
    let errors = chunked(
        trials,
        seed,
        |rng, k| {
            let mut e = 0u64;
            for _ in 0..k {
                let flips = (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
                e += (2 * flips > n) as u64;
            }
            e
        },
        0,
        |a, b| a + b,
    );
    let check = ValidationCheck::banded(
        format!("repetition_code(n={n}, p={p})"),
        trials,
        errors as f64 / trials as f64,
        analytic,
        binomial_se(analytic, trials),
        DEFAULT_TOLERANCE_SE,
    );
    Ok(ValidationReport::new(seed, vec![check]))
}

/// Logical error rates of Bob and Eve decoding `n`-fold repeated lattice
/// bits through their cloner-induced noises, against `P_n(ε(Δ))`. These
/// are the rates behind the information maps.
pub fn validate_info_map_cell(omega: f64, sigma2: f64, n: u64, trials: u64, seed: u64) -> Result<ValidationReport> {
    require(trials >= 1000, "information-map validation needs at least 10^3 trials")?;
    let lat = LatticeParams::new(omega)?;
    crate::channel::check_sigma2(sigma2)?;
    let mut checks = Vec::new();
    for (who, delta) in [("bob", 1.0 + sigma2), ("eve", 1.0 + crate::channel::eve_clone_variance(sigma2))] {
        let analytic = uncorrectable_error(n, error_probability(&lat, delta)?)?;
        let noise = GaussianSpec::centered(delta)?;
        let errors = chunked(
            trials,
            seed ^ (who.len() as u64),
            |rng, k| {
                let mut e = 0u64;
                for _ in 0..k {
                    let bit: bool = rng.random();
                    let mut wrong = 0u64;
                    for _ in 0..n {
                        let c = cell_center(
                            encode_bits(BitPair::new(bit, bit), rng, crate::lattice::DEFAULT_RANGE_M).expect("range"),
                            &lat,
                        );
                        wrong += (decode_quadrature(c.q + sample_gaussian(rng, &noise), &lat) != bit) as u64;
                    }
                    e += (2 * wrong > n) as u64;
                }
                e
            },
            0,
            |a, b| a + b,
        );
        checks.push(ValidationCheck::banded(
            format!("info_map_{who}_error(omega={omega}, sigma2={sigma2}, n={n})"),
            trials,
            errors as f64 / trials as f64,
            analytic,
            binomial_se(analytic, trials),
            DEFAULT_TOLERANCE_SE,
        ));
    }
    Ok(ValidationReport::new(seed, checks))
}

/// Which suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Default,
    Full,
}

/// Runs every validation of a suite. With `canary` set, the analytic side of
/// the intrinsic-error check uses a lattice 5% wider than the simulated one,
/// a deliberately corrupted constant that must make the suite fail.
pub fn run_suite(suite: Suite, seed: u64, canary: bool) -> Result<ValidationReport> {
    let scale = match suite {
        Suite::Default => 1,
        Suite::Full => 10,
    };
    let mut report = ValidationReport::new(seed, Vec::new());
    let mut sub = 0u64;
    let mut next_seed = || {
        sub += 1;
        seed.wrapping_add(sub.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    };

    let calibration = LatticeParams::new(2.57)?;
    let mut intrinsic = validate_intrinsic_error(&calibration, 1.0, 100_000 * scale, next_seed())?;
    if canary {
        let corrupted = error_probability(&LatticeParams::new(2.57 * 1.05)?, 1.0)?;
        let c = &mut intrinsic.checks[0];
        *c = ValidationCheck::banded(
            c.name.clone(),
            c.trials,
            c.empirical,
            corrupted,
            binomial_se(corrupted, c.trials),
            c.tolerance_se,
        );
    }
    report.extend(intrinsic);
    report.extend(validate_intrinsic_error(&LatticeParams::new(10.0)?, 1.0, 10_000 * scale, next_seed())?);
    report.extend(validate_intrinsic_error(&LatticeParams::new(1.0)?, 6.0, 100_000 * scale, next_seed())?);

    let basic = ProtocolConfig::basic_reference();
    for (m, sigma2) in [(10, 0.1), (100, 1.0), (1000, 0.01)] {
        report.extend(validate_survival(&basic, &AttackSpec::Ugqcm { sigma2 }, 10_000 * scale, m, next_seed())?);
    }

    report.extend(validate_estimator_distribution(1, 0.0, 10_000 * scale, next_seed())?);
    report.extend(validate_estimator_distribution(50, 0.5, 10_000 * scale, next_seed())?);
    report.extend(validate_estimator_power(50, 1.0, 0.0, 10_000 * scale, next_seed())?);

    let coded = ProtocolConfig::coded_reference();
    report.extend(validate_curve_point(
        &basic,
        &AttackSpec::Ugqcm { sigma2: 0.05 },
        22_000,
        10_000 * scale,
        next_seed(),
    )?);
    report.extend(validate_curve_point(
        &coded,
        &AttackSpec::Ugqcm { sigma2: 0.1 },
        11_000,
        10_000 * scale,
        next_seed(),
    )?);

    report.extend(validate_repetition_code(35, 0.05, 100_000 * scale, next_seed())?);
    report.extend(validate_info_map_cell(1.0, 0.3, 35, 10_000 * scale, next_seed())?);
    Ok(report)
}

/// A batch of sessions described in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub config: ProtocolConfig,
    pub attack: AttackSpec,
    #[serde(default = "one")]
    pub sessions: u64,
    /// Session length; a `message` limit sends `message_bits` random bits.
    pub limit: SessionLimit,
    #[serde(default)]
    pub message_bits: u64,
    pub seed: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub sessions: u64,
    pub aborted: u64,
    pub mean_systems: f64,
    pub bob_logical_error: Option<f64>,
    pub eve_logical_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub schema_version: u32,
    pub plan: ExperimentPlan,
    pub summary: PlanSummary,
    pub sessions: Vec<SessionReport>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.attack.validate()?;
        require(self.sessions >= 1, "a plan needs at least one session")?;
        if self.limit == SessionLimit::Message {
            require(self.message_bits >= 1, "a message-limited plan needs message_bits >= 1")?;
        }
        Ok(())
    }

    /// Run every session; session `i` uses stream `i` of the plan seed.
    pub fn run(&self) -> Result<PlanOutcome> {
        self.validate()?;
        let reports: Vec<Result<SessionReport>> = map_units(self.sessions, |i| {
            let mut rng = unit_rng(self.seed, i);
            let mut runner = SessionRunner::new(&self.config, &self.attack)?;
            match self.limit {
                SessionLimit::Message => {
                    let msg: Vec<bool> = (0..self.message_bits).map(|_| rng.random()).collect();
                    runner.run_message(&msg, &mut rng)
                }
                limit => runner.run_for(limit, &mut rng),
            }
        });
        let sessions = reports.into_iter().collect::<Result<Vec<_>>>()?;
        let total = |f: fn(&SessionReport) -> u64| sessions.iter().map(f).sum::<u64>();
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let summary = PlanSummary {
            sessions: self.sessions,
            aborted: sessions.iter().filter(|r| r.aborted).count() as u64,
            mean_systems: total(|r| r.systems_used) as f64 / self.sessions as f64,
            bob_logical_error: ratio(total(|r| r.bits_delivered - r.bits_correct_bob), total(|r| r.bits_delivered)),
            eve_logical_error: ratio(total(|r| r.eve_logical_errors), total(|r| r.eve_logical_bits)),
        };
        Ok(PlanOutcome { schema_version: VALIDATION_SCHEMA_VERSION, plan: self.clone(), summary, sessions })
    }
}
