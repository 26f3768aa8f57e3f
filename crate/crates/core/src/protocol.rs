//! Alice/Bob session machinery: masking, message and control modes, the χ²
//! channel test, repetition coding and the protocol variants.
//!
//! Classical declarations happen in the order the state machine imposes:
//! Bob's detection always precedes the mask (message mode) or signal
//! (control mode) declaration, and in the postponed variant every
//! declaration waits for the end of the quantum phase.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{intercept_center_resend, AttackSpec, EveCodewordState};
use crate::analysis::{stolen_info_coded, uncorrectable_error};
use crate::channel::{measure, transmit, MeasurementKind, NoisyState, Outcome};
use crate::error::{domain, QdcError, Result};
use crate::lattice::{
    cell_center, decode_amplitude, decode_quadrature, encode_bits, error_probability, Amplitude, BitPair, CellAddress,
    LatticeParams, DEFAULT_RANGE_M,
};
use crate::numerics::{binary_entropy, chi_squared_quantile, ln_regularized_gamma_q, sample_gaussian, GaussianSpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Standard,
    /// One bit per system (`U = U′`), Bob homodynes a random quadrature and
    /// announces his choices at the end.
    HomodyneVariant,
    /// Every system carries a message on one random quadrature and a check
    /// on the other.
    UnifiedCmMm,
    /// Mode and amplitude declarations are withheld until the end.
    Postponed,
}

/// When Bob runs the χ² test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSchedule {
    /// After every control mode; the session stops at the first rejection.
    #[default]
    EveryControl,
    /// Once, on everything accumulated by the end of the session.
    AtEnd,
}

fn default_code_length() -> u32 {
    1
}
fn default_detection() -> MeasurementKind {
    MeasurementKind::Heterodyne
}
fn default_range_m() -> u32 {
    DEFAULT_RANGE_M
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    #[serde(rename = "omega")]
    pub lattice: LatticeParams,
    /// Probability `c` that a run is a control mode.
    pub control_prob: f64,
    /// False-alarm level `r` of the test.
    pub confidence: f64,
    /// Per-quadrature variance of the signal amplitude; defaults to
    /// `100 (2Ω)²`.
    #[serde(default)]
    pub signal_variance: Option<f64>,
    /// Odd repetition-code length; 1 means uncoded.
    #[serde(default = "default_code_length")]
    pub code_length: u32,
    #[serde(default = "default_detection")]
    pub detection: MeasurementKind,
    #[serde(default)]
    pub variant: Variant,
    /// Tolerated added noise; 0 is the zero-tolerance policy.
    #[serde(default)]
    pub tolerance_sigma2: f64,
    #[serde(default = "default_range_m")]
    pub range_m: u32,
    #[serde(default)]
    pub test_schedule: TestSchedule,
    /// Switching this off sends bare lattice centers. Only useful for
    /// showing what the mask protects against.
    #[serde(default = "default_true")]
    pub masking: bool,
    /// Bob is told which control modes were attacked and tests only those.
    #[serde(default)]
    pub genie_attacked_controls: bool,
    #[serde(default)]
    pub record_transcript: bool,
    /// Stolen-bit budget for the postponed variant.
    #[serde(default)]
    pub postponed_tolerance_bits: f64,
}

impl ProtocolConfig {
    pub fn new(omega: f64, control_prob: f64, confidence: f64, code_length: u32) -> Result<Self> {
        let cfg = Self {
            lattice: LatticeParams::new(omega)?,
            control_prob,
            confidence,
            signal_variance: None,
            code_length,
            detection: MeasurementKind::Heterodyne,
            variant: Variant::Standard,
            tolerance_sigma2: 0.0,
            range_m: DEFAULT_RANGE_M,
            test_schedule: TestSchedule::EveryControl,
            masking: true,
            genie_attacked_controls: false,
            record_transcript: false,
            postponed_tolerance_bits: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uncoded: `Ω = 2.57`, `c = 69/70`, `r = 5e-7`.
    pub fn basic_reference() -> Self {
        Self::new(2.57, 69.0 / 70.0, 5e-7, 1).expect("valid reference configuration")
    }

    /// 35-bit repetition code at the critical lattice: `Ω = 1`, `c = 1/2`.
    pub fn coded_reference() -> Self {
        Self::new(1.0, 0.5, 5e-7, 35).expect("valid reference configuration")
    }

    pub fn with_variant(mut self, variant: Variant) -> Result<Self> {
        self.variant = variant;
        match variant {
            Variant::HomodyneVariant => self.detection = MeasurementKind::HomodyneQ,
            Variant::UnifiedCmMm => {
                self.detection = MeasurementKind::Heterodyne;
                self.control_prob = 0.5;
            }
            _ => self.detection = MeasurementKind::Heterodyne,
        }
        self.validate()?;
        Ok(self)
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance.unwrap_or(100.0 * self.lattice.step().powi(2))
    }

    /// Logical bits carried by one codeword.
    pub fn payload_bits(&self) -> u32 {
        match self.variant {
            Variant::Standard | Variant::Postponed => 2,
            Variant::HomodyneVariant | Variant::UnifiedCmMm => 1,
        }
    }

    /// Factor applied to the χ² threshold when some added noise is tolerated.
    /// Homodyne test values are doubled before accumulation, which doubles
    /// their channel noise as well.
    pub fn tolerance_scale(&self) -> f64 {
        let per_unit = if self.variant == Variant::HomodyneVariant { 2.0 } else { 1.0 };
        1.0 + per_unit * self.tolerance_sigma2
    }

    pub fn validate(&self) -> Result<()> {
        if self.code_length == 0 || self.code_length.is_multiple_of(2) {
            return domain(format!("code length must be odd, got {}", self.code_length));
        }
        if !(0.0..1.0).contains(&self.control_prob) {
            return domain(format!("control probability must lie in [0, 1), got {}", self.control_prob));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return domain(format!("confidence level must lie in (0, 1), got {}", self.confidence));
        }
        let v = self.signal_variance();
        let min_v = 25.0 * self.lattice.step().powi(2);
        if !(v >= min_v) || !v.is_finite() {
            return domain(format!("signal variance {v} must be at least 25 (2Ω)² = {min_v}"));
        }
        if !(self.tolerance_sigma2 >= 0.0) {
            return domain("tolerated noise must be non-negative");
        }
        if self.range_m == 0 {
            return domain("range_m must be at least 1");
        }
        match self.variant {
            Variant::HomodyneVariant if !self.detection.is_homodyne() => {
                domain("the homodyne variant needs homodyne detection")
            }
            Variant::UnifiedCmMm if self.detection != MeasurementKind::Heterodyne => {
                domain("the unified variant needs heterodyne detection")
            }
            Variant::UnifiedCmMm if (self.control_prob - 0.5).abs() > 1e-12 => {
                domain("the unified variant runs at c = 1/2")
            }
            Variant::Standard | Variant::Postponed if self.detection != MeasurementKind::Heterodyne => {
                domain("this variant needs heterodyne detection")
            }
            _ => Ok(()),
        }
    }
}

/// Message amplitude, mask and transmitted signal of one message mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedRun {
    pub cell: CellAddress,
    pub message_amp: Amplitude,
    pub mask: Amplitude,
    /// Always exactly `mask + message_amp`.
    pub signal: Amplitude,
}

fn sample_signal<R: Rng + ?Sized>(cfg: &ProtocolConfig, rng: &mut R) -> Amplitude {
    let spec = GaussianSpec::centered(cfg.signal_variance()).expect("validated signal variance");
    Amplitude::new(sample_gaussian(rng, &spec), sample_gaussian(rng, &spec))
}

/// Encode `bits` into a random cell, draw a wide Gaussian signal and derive
/// the mask linking the two.
pub fn prepare_message_mode<R: Rng + ?Sized>(bits: BitPair, cfg: &ProtocolConfig, rng: &mut R) -> Result<MaskedRun> {
    let cell = encode_bits(bits, rng, cfg.range_m)?;
    let message_amp = cell_center(cell, &cfg.lattice);
    if !cfg.masking {
        return Ok(MaskedRun { cell, message_amp, mask: Amplitude::ZERO, signal: message_amp });
    }
    let drawn = sample_signal(cfg, rng);
    let mask = drawn - message_amp;
    Ok(MaskedRun { cell, message_amp, mask, signal: mask + message_amp })
}

/// Signal of a control mode: a wide Gaussian amplitude, or a bare lattice
/// center when masking is off.
pub fn prepare_control_mode<R: Rng + ?Sized>(cfg: &ProtocolConfig, rng: &mut R) -> Result<Amplitude> {
    if cfg.masking {
        Ok(sample_signal(cfg, rng))
    } else {
        let bits = BitPair::new(rng.random(), rng.random());
        Ok(cell_center(encode_bits(bits, rng, cfg.range_m)?, &cfg.lattice))
    }
}

pub fn unmask_and_decode(beta: Amplitude, mask: Amplitude, lat: &LatticeParams) -> BitPair {
    decode_amplitude(beta - mask, lat)
}

/// Running χ² estimator: sum of squared unit-variance test values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlState {
    pub v: f64,
    pub count: u64,
}

impl ControlState {
    /// Add one test value that already has unit variance under `H0`.
    pub fn push_unit(&mut self, x: f64) {
        self.v += x * x;
        self.count += 1;
    }

    /// Per-quadrature noise estimate `v / count`.
    pub fn mean_square(&self) -> Option<f64> {
        (self.count > 0).then(|| self.v / self.count as f64)
    }
}

/// Fold a test variable `τ = β − ᾱ` into the estimator. Heterodyne adds both
/// quadratures; a homodyne value (variance 1/2) is doubled first.
pub fn control_update(state: ControlState, tau: &Outcome) -> ControlState {
    let mut next = state;
    match *tau {
        Outcome::Joint { value } => {
            next.push_unit(value.q);
            next.push_unit(value.p);
        }
        Outcome::Q { value } | Outcome::P { value } => {
            next.v += 2.0 * value * value;
            next.count += 1;
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestDecision {
    AcceptH0,
    RejectH0,
}

/// Accept "no eavesdropper" iff `v < 𝒱_{count, 1−r}`.
pub fn hypothesis_test(state: &ControlState, r: f64) -> Result<TestDecision> {
    if state.count == 0 {
        return Err(QdcError::Precondition("no control data accumulated".into()));
    }
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("confidence level must lie in (0, 1), got {r}"));
    }
    let threshold = chi_squared_quantile(state.count, 1.0 - r)?;
    Ok(decide(state.v, threshold))
}

fn decide(v: f64, threshold: f64) -> TestDecision {
    if v < threshold {
        TestDecision::AcceptH0
    } else {
        TestDecision::RejectH0
    }
}

/// The χ² channel test at a fixed level and tolerance.
///
/// `v < scale·𝒱_{k,1−r}` is decided as `Q(k/2, v/(2·scale)) > r`, which
/// needs one incomplete-gamma evaluation instead of a quantile search for
/// every new degree-of-freedom count.
#[derive(Debug, Clone)]
pub struct ChiSquaredTest {
    ln_confidence: f64,
    confidence: f64,
    scale: f64,
}

impl ChiSquaredTest {
    pub fn new(confidence: f64, scale: f64) -> Self {
        Self { ln_confidence: confidence.ln(), confidence, scale }
    }

    /// Acceptance threshold on `v` after `count` unit-variance values.
    pub fn threshold(&self, count: u64) -> Result<f64> {
        Ok(chi_squared_quantile(count, 1.0 - self.confidence)? * self.scale)
    }

    pub fn test(&self, state: &ControlState) -> Result<TestDecision> {
        if state.count == 0 {
            return Err(QdcError::Precondition("no control data accumulated".into()));
        }
        let ln_q = ln_regularized_gamma_q(state.count as f64 / 2.0, state.v / (2.0 * self.scale))?;
        Ok(if ln_q > self.ln_confidence { TestDecision::AcceptH0 } else { TestDecision::RejectH0 })
    }
}

pub fn encode_codeword(bit: bool, n: u32) -> Vec<bool> {
    vec![bit; n as usize]
}

pub fn majority_decode(bits: &[bool]) -> Result<bool> {
    if bits.len().is_multiple_of(2) {
        return domain(format!("majority needs an odd number of bits, got {}", bits.len()));
    }
    Ok(2 * bits.iter().filter(|&&b| b).count() > bits.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostponedDecision {
    Unmask,
    Abort,
    DistillKey,
}

/// End-of-session choice of the postponed variant from the noise estimated
/// on the control modes.
pub fn postponed_decision(
    estimated_sigma2: f64,
    tolerance_bits: f64,
    cfg: &ProtocolConfig,
    planned_mms: u64,
) -> Result<PostponedDecision> {
    if !(estimated_sigma2 >= 0.0) {
        return domain(format!("noise estimate must be non-negative, got {estimated_sigma2}"));
    }
    if estimated_sigma2 == 0.0 {
        return Ok(if tolerance_bits >= 0.0 { PostponedDecision::Unmask } else { PostponedDecision::Abort });
    }
    let n = cfg.code_length as u64;
    let i_ae = stolen_info_coded(estimated_sigma2, &cfg.lattice, n)?;
    if planned_mms as f64 * i_ae <= tolerance_bits {
        return Ok(PostponedDecision::Unmask);
    }
    let p_bob = error_probability(&cfg.lattice, 1.0 + estimated_sigma2)?;
    let i_ab = 2.0 * (1.0 - binary_entropy(uncorrectable_error(n, p_bob)?)?) / n as f64;
    Ok(if i_ae < i_ab { PostponedDecision::DistillKey } else { PostponedDecision::Abort })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Message,
    Control,
    /// Message on one quadrature, check on the other.
    Unified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    pub mode: RunMode,
    pub attacked: bool,
    pub signal: Amplitude,
    pub outcome: Outcome,
    /// Mask (message modes) or signal (control modes) declared after Bob's
    /// detection.
    pub declared: Amplitude,
    pub sent_bits: Option<BitPair>,
    pub bob_bits: Option<BitPair>,
    pub statistic: f64,
    pub statistic_count: u64,
    pub decision: Option<TestDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostponedOutcome {
    pub estimated_sigma2: f64,
    pub decision: PostponedDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub schema_version: u32,
    pub variant: Variant,
    pub attack: AttackSpec,
    /// Length of the caller's message (0 for fixed-length sessions).
    pub message_bits: u64,
    pub padding_bits: u64,
    /// Logical bits whose codewords were fully transmitted.
    pub bits_sent: u64,
    /// Logical bits Bob decoded (0 if a postponed session did not unmask).
    pub bits_delivered: u64,
    pub bits_correct_bob: u64,
    pub bob_physical_bits: u64,
    pub bob_physical_errors: u64,
    pub eve_logical_bits: u64,
    pub eve_logical_errors: u64,
    pub eve_physical_bits: u64,
    pub eve_physical_errors: u64,
    pub aborted: bool,
    pub abort_at_run: Option<u64>,
    pub systems_used: u64,
    pub control_modes: u64,
    pub message_modes: u64,
    pub attacked_systems: u64,
    pub tested_controls: u64,
    pub statistic: f64,
    pub statistic_count: u64,
    pub postponed: Option<PostponedOutcome>,
    /// Bob's decoded logical message, as '0'/'1' characters; empty unless a
    /// transcript is recorded.
    pub decoded_message: String,
    pub transcript: Vec<RunRecord>,
}

impl SessionReport {
    /// Logical bits Bob decoded per transmitted system.
    pub fn efficiency(&self) -> f64 {
        if self.systems_used == 0 {
            0.0
        } else {
            self.bits_delivered as f64 / self.systems_used as f64
        }
    }

    pub fn bob_logical_error_rate(&self) -> Option<f64> {
        (self.bits_delivered > 0).then(|| 1.0 - self.bits_correct_bob as f64 / self.bits_delivered as f64)
    }
}

/// What bounds the session length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionLimit {
    /// Until the caller's message is sent.
    Message,
    /// Exactly this many systems, with a random message.
    Runs(u64),
    /// Until this many control modes enter the test, with a random message.
    Controls(u64),
}

/// Pad `message` with zeros to a whole number of codeword payloads.
pub fn pad_message(message: &[bool], payload: u32) -> (Vec<bool>, u64) {
    let p = payload as usize;
    let pad = (p - message.len() % p) % p;
    let mut out = message.to_vec();
    out.extend(std::iter::repeat_n(false, pad));
    (out, pad as u64)
}

/// Runs sessions for one configuration and attack, reusing the χ²
/// thresholds between sessions.
pub struct SessionRunner {
    cfg: ProtocolConfig,
    attack: AttackSpec,
    thresholds: ChiSquaredTest,
    eve_lattice: Option<LatticeParams>,
}

impl SessionRunner {
    pub fn new(cfg: &ProtocolConfig, attack: &AttackSpec) -> Result<Self> {
        cfg.validate()?;
        attack.validate()?;
        let eve_lattice = match *attack {
            AttackSpec::InterceptCenterResend { omega_guess } => Some(LatticeParams::new(omega_guess)?),
            _ => None,
        };
        Ok(Self {
            cfg: *cfg,
            attack: *attack,
            thresholds: ChiSquaredTest::new(cfg.confidence, cfg.tolerance_scale()),
            eve_lattice,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn run_message<R: Rng + ?Sized>(&mut self, message: &[bool], rng: &mut R) -> Result<SessionReport> {
        self.run(SessionLimit::Message, message, rng)
    }

    pub fn run_for<R: Rng + ?Sized>(&mut self, limit: SessionLimit, rng: &mut R) -> Result<SessionReport> {
        if limit == SessionLimit::Message {
            return domain("a message-limited session needs a message");
        }
        self.run(limit, &[], rng)
    }

    fn run<R: Rng + ?Sized>(&mut self, limit: SessionLimit, message: &[bool], rng: &mut R) -> Result<SessionReport> {
        let payload = self.cfg.payload_bits();
        let (padded, padding) = if limit == SessionLimit::Message {
            if message.is_empty() {
                return domain("message must not be empty");
            }
            pad_message(message, payload)
        } else {
            (Vec::new(), 0)
        };
        let mut s = Session::new(&self.cfg, self.attack, self.eve_lattice, padded, message.len() as u64, padding);
        loop {
            let done = match limit {
                SessionLimit::Message => s.message_exhausted(),
                SessionLimit::Runs(n) => s.report.systems_used >= n,
                SessionLimit::Controls(m) => s.report.tested_controls >= m,
            };
            if done || s.report.aborted {
                break;
            }
            s.step(&self.thresholds, rng)?;
        }
        s.finish(&self.thresholds, rng)
    }
}

/// Run one session delivering `message` under `attack`.
pub fn run_session<R: Rng + ?Sized>(
    cfg: &ProtocolConfig,
    attack: &AttackSpec,
    message: &[bool],
    rng: &mut R,
) -> Result<SessionReport> {
    SessionRunner::new(cfg, attack)?.run_message(message, rng)
}

/// Per-codeword accumulators for one payload bit.
#[derive(Debug, Clone, Default)]
struct CodewordSlot {
    sent: bool,
    bob_ones: u32,
    eve: EveCodewordState,
}

/// Counters for message-mode results that only become real once the masks
/// are declared (immediately, except in the postponed variant).
#[derive(Debug, Clone, Default)]
struct Tally {
    bits_delivered: u64,
    bits_correct_bob: u64,
    bob_physical_bits: u64,
    bob_physical_errors: u64,
    eve_logical_bits: u64,
    eve_logical_errors: u64,
    eve_physical_bits: u64,
    eve_physical_errors: u64,
    decoded: String,
}

/// What Eve holds after a run: an unmeasured clone or an outcome she
/// already measured while intercepting.
enum EveHolding {
    Nothing,
    Clone(NoisyState),
    Measured(Amplitude),
}

struct Session<'a> {
    cfg: &'a ProtocolConfig,
    attack: AttackSpec,
    eve_lattice: Option<LatticeParams>,
    message: Vec<bool>,
    next_logical: usize,
    slots: Vec<CodewordSlot>,
    position: u32,
    control: ControlState,
    tally: Tally,
    report: SessionReport,
}

impl<'a> Session<'a> {
    fn new(
        cfg: &'a ProtocolConfig,
        attack: AttackSpec,
        eve_lattice: Option<LatticeParams>,
        message: Vec<bool>,
        message_bits: u64,
        padding_bits: u64,
    ) -> Self {
        let report = SessionReport {
            schema_version: REPORT_SCHEMA_VERSION,
            variant: cfg.variant,
            attack,
            message_bits,
            padding_bits,
            bits_sent: 0,
            bits_delivered: 0,
            bits_correct_bob: 0,
            bob_physical_bits: 0,
            bob_physical_errors: 0,
            eve_logical_bits: 0,
            eve_logical_errors: 0,
            eve_physical_bits: 0,
            eve_physical_errors: 0,
            aborted: false,
            abort_at_run: None,
            systems_used: 0,
            control_modes: 0,
            message_modes: 0,
            attacked_systems: 0,
            tested_controls: 0,
            statistic: 0.0,
            statistic_count: 0,
            postponed: None,
            decoded_message: String::new(),
            transcript: Vec::new(),
        };
        Self {
            cfg,
            attack,
            eve_lattice,
            message,
            next_logical: 0,
            slots: vec![CodewordSlot::default(); cfg.payload_bits() as usize],
            position: 0,
            control: ControlState::default(),
            tally: Tally::default(),
            report,
        }
    }

    fn message_exhausted(&self) -> bool {
        self.position == 0 && self.next_logical >= self.message.len()
    }

    fn bob_kind<R: Rng + ?Sized>(&self, rng: &mut R) -> MeasurementKind {
        match self.cfg.variant {
            Variant::HomodyneVariant => {
                if rng.random() {
                    MeasurementKind::HomodyneQ
                } else {
                    MeasurementKind::HomodyneP
                }
            }
            _ => MeasurementKind::Heterodyne,
        }
    }

    /// Pass `signal` through the attack. Returns Bob's state, whether the
    /// system was touched, and what Eve keeps.
    fn channel<R: Rng + ?Sized>(&mut self, signal: Amplitude, rng: &mut R) -> Result<(NoisyState, bool, EveHolding)> {
        let out = match self.attack.channel_model() {
            Some(model) => {
                let rec = transmit(signal, &model, rng);
                let holding = rec.eve_clone.map_or(EveHolding::Nothing, EveHolding::Clone);
                (rec.bob_state(), rec.attacked, holding)
            }
            None => {
                let guess = self.eve_lattice.expect("intercept attack has a lattice guess");
                let gamma = match measure(&NoisyState::clean(signal), MeasurementKind::Heterodyne, rng)? {
                    Outcome::Joint { value } => value,
                    _ => unreachable!("heterodyne reports both quadratures"),
                };
                let resent = intercept_center_resend(gamma, &guess);
                (NoisyState::clean(resent), true, EveHolding::Measured(gamma))
            }
        };
        if out.1 {
            self.report.attacked_systems += 1;
        }
        Ok(out)
    }

    fn should_test(&self, attacked: bool) -> bool {
        !self.cfg.genie_attacked_controls || attacked
    }

    /// Run the test now if the schedule asks for it; returns the decision.
    fn maybe_test(&mut self, thresholds: &ChiSquaredTest) -> Result<Option<TestDecision>> {
        if self.cfg.test_schedule != TestSchedule::EveryControl
            || self.cfg.variant == Variant::Postponed
            || self.control.count == 0
        {
            return Ok(None);
        }
        let d = thresholds.test(&self.control)?;
        if d == TestDecision::RejectH0 {
            self.report.aborted = true;
            self.report.abort_at_run = Some(self.report.systems_used);
        }
        Ok(Some(d))
    }

    fn next_payload<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for slot in self.slots.iter_mut() {
            slot.sent = if self.message.is_empty() {
                rng.random()
            } else {
                let b = self.message[self.next_logical];
                self.next_logical += 1;
                b
            };
            slot.bob_ones = 0;
            slot.eve.clear();
        }
    }

    fn step<R: Rng + ?Sized>(&mut self, thresholds: &ChiSquaredTest, rng: &mut R) -> Result<()> {
        self.report.systems_used += 1;
        if self.cfg.variant == Variant::UnifiedCmMm {
            return self.unified_run(thresholds, rng);
        }
        if rng.random::<f64>() < self.cfg.control_prob {
            self.control_run(thresholds, rng)
        } else {
            self.message_run(rng)
        }
    }

    fn control_run<R: Rng + ?Sized>(&mut self, thresholds: &ChiSquaredTest, rng: &mut R) -> Result<()> {
        self.report.control_modes += 1;
        let signal = prepare_control_mode(self.cfg, rng)?;
        let (bob_state, attacked, _) = self.channel(signal, rng)?;
        let kind = self.bob_kind(rng);
        let outcome = measure(&bob_state, kind, rng)?;
        // Alice declares the signal only now.
        let tau = outcome.minus(signal);
        let mut decision = None;
        if self.should_test(attacked) {
            self.control = control_update(self.control, &tau);
            self.report.tested_controls += 1;
            decision = self.maybe_test(thresholds)?;
        }
        self.record(RunRecord {
            index: self.report.systems_used,
            mode: RunMode::Control,
            attacked,
            signal,
            outcome,
            declared: signal,
            sent_bits: None,
            bob_bits: None,
            statistic: self.control.v,
            statistic_count: self.control.count,
            decision,
        });
        Ok(())
    }

    fn eve_outcome<R: Rng + ?Sized>(
        &self,
        holding: EveHolding,
        kind: MeasurementKind,
        rng: &mut R,
    ) -> Result<Option<Outcome>> {
        Ok(match holding {
            EveHolding::Nothing => None,
            EveHolding::Clone(state) => Some(measure(&state, kind, rng)?),
            EveHolding::Measured(gamma) => Some(match kind {
                MeasurementKind::Heterodyne => Outcome::Joint { value: gamma },
                MeasurementKind::HomodyneQ => Outcome::Q { value: gamma.q },
                MeasurementKind::HomodyneP => Outcome::P { value: gamma.p },
            }),
        })
    }

    fn message_run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.report.message_modes += 1;
        if self.position == 0 {
            self.next_payload(rng);
        }
        let bits = if self.slots.len() == 2 {
            BitPair::new(self.slots[0].sent, self.slots[1].sent)
        } else {
            BitPair::new(self.slots[0].sent, self.slots[0].sent)
        };
        let run = prepare_message_mode(bits, self.cfg, rng)?;
        let (bob_state, attacked, holding) = self.channel(run.signal, rng)?;
        let kind = self.bob_kind(rng);
        let outcome = measure(&bob_state, kind, rng)?;
        // Bob has detected; the mask is declared. In the homodyne variant
        // Bob's quadrature choices are announced too, and a delayed-choice
        // Eve measures the same quadrature on her clone.
        let eve = self.eve_outcome(holding, kind, rng)?;
        let lat = self.cfg.lattice;
        let decode = |o: &Outcome| -> Vec<bool> {
            match *o {
                Outcome::Joint { value } => {
                    let b = unmask_and_decode(value, run.mask, &lat);
                    vec![b.q, b.p]
                }
                Outcome::Q { value } => vec![decode_quadrature(value - run.mask.q, &lat)],
                Outcome::P { value } => vec![decode_quadrature(value - run.mask.p, &lat)],
            }
        };
        let bob_bits = decode(&outcome);
        let eve_bits = eve.as_ref().map(decode);
        for (i, slot) in self.slots.iter_mut().enumerate() {
            let b = bob_bits[i.min(bob_bits.len() - 1)];
            slot.bob_ones += b as u32;
            self.tally.bob_physical_bits += 1;
            self.tally.bob_physical_errors += (b != slot.sent) as u64;
            if let Some(e) = &eve_bits {
                let eb = e[i.min(e.len() - 1)];
                slot.eve.push(eb);
                self.tally.eve_physical_bits += 1;
                self.tally.eve_physical_errors += (eb != slot.sent) as u64;
            }
        }
        self.record(RunRecord {
            index: self.report.systems_used,
            mode: RunMode::Message,
            attacked,
            signal: run.signal,
            outcome,
            declared: run.mask,
            sent_bits: Some(bits),
            bob_bits: Some(if bob_bits.len() == 2 {
                BitPair::new(bob_bits[0], bob_bits[1])
            } else {
                BitPair::new(bob_bits[0], bob_bits[0])
            }),
            statistic: self.control.v,
            statistic_count: self.control.count,
            decision: None,
        });
        self.advance_codeword(rng);
        Ok(())
    }

    fn unified_run<R: Rng + ?Sized>(&mut self, thresholds: &ChiSquaredTest, rng: &mut R) -> Result<()> {
        self.report.control_modes += 1;
        self.report.message_modes += 1;
        if self.position == 0 {
            self.next_payload(rng);
        }
        let bit = self.slots[0].sent;
        let encode_on_q: bool = rng.random();
        let run = prepare_message_mode(BitPair::new(bit, bit), self.cfg, rng)?;
        let (bob_state, attacked, holding) = self.channel(run.signal, rng)?;
        let outcome = measure(&bob_state, MeasurementKind::Heterodyne, rng)?;
        let beta = match outcome {
            Outcome::Joint { value } => value,
            _ => unreachable!("heterodyne reports both quadratures"),
        };
        // Declared after detection: which quadrature is the check, the signal
        // on it, and the mask on the other.
        let (check_x, check_signal, msg_x, mask_x) = if encode_on_q {
            (beta.p, run.signal.p, beta.q, run.mask.q)
        } else {
            (beta.q, run.signal.q, beta.p, run.mask.p)
        };
        let mut decision = None;
        if self.should_test(attacked) {
            self.control.push_unit(check_x - check_signal);
            self.report.tested_controls += 1;
            decision = self.maybe_test(thresholds)?;
        }
        let lat = self.cfg.lattice;
        let b = decode_quadrature(msg_x - mask_x, &lat);
        let slot = &mut self.slots[0];
        slot.bob_ones += b as u32;
        self.tally.bob_physical_bits += 1;
        self.tally.bob_physical_errors += (b != slot.sent) as u64;
        if let Some(Outcome::Joint { value: gamma }) = self.eve_outcome(holding, MeasurementKind::Heterodyne, rng)? {
            let gx = if encode_on_q { gamma.q } else { gamma.p };
            let eb = decode_quadrature(gx - mask_x, &lat);
            let slot = &mut self.slots[0];
            slot.eve.push(eb);
            self.tally.eve_physical_bits += 1;
            self.tally.eve_physical_errors += (eb != slot.sent) as u64;
        }
        let declared = if encode_on_q {
            Amplitude::new(run.mask.q, run.signal.p)
        } else {
            Amplitude::new(run.signal.q, run.mask.p)
        };
        self.record(RunRecord {
            index: self.report.systems_used,
            mode: RunMode::Unified,
            attacked,
            signal: run.signal,
            outcome,
            declared,
            sent_bits: Some(BitPair::new(bit, bit)),
            bob_bits: Some(BitPair::new(b, b)),
            statistic: self.control.v,
            statistic_count: self.control.count,
            decision,
        });
        self.advance_codeword(rng);
        Ok(())
    }

    fn advance_codeword<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.position += 1;
        if self.position < self.cfg.code_length {
            return;
        }
        self.position = 0;
        let n = self.cfg.code_length;
        for slot in &self.slots {
            let bob = 2 * slot.bob_ones > n;
            self.report.bits_sent += 1;
            self.tally.bits_delivered += 1;
            self.tally.bits_correct_bob += (bob == slot.sent) as u64;
            if self.cfg.record_transcript {
                self.tally.decoded.push(if bob { '1' } else { '0' });
            }
            if self.attack != AttackSpec::None {
                let eve = slot.eve.decide(rng);
                self.tally.eve_logical_bits += 1;
                self.tally.eve_logical_errors += (eve != slot.sent) as u64;
            }
        }
    }

    fn record(&mut self, rec: RunRecord) {
        if self.cfg.record_transcript {
            self.report.transcript.push(rec);
        }
    }

    fn finish<R: Rng + ?Sized>(mut self, thresholds: &ChiSquaredTest, _rng: &mut R) -> Result<SessionReport> {
        let mut commit = true;
        if self.cfg.variant == Variant::Postponed {
            let estimated_sigma2 = self.control.mean_square().map_or(0.0, |m| (m - 1.0).max(0.0));
            let decision = postponed_decision(
                estimated_sigma2,
                self.cfg.postponed_tolerance_bits,
                self.cfg,
                self.report.message_modes,
            )?;
            self.report.postponed = Some(PostponedOutcome { estimated_sigma2, decision });
            if decision != PostponedDecision::Unmask {
                commit = false;
                if decision == PostponedDecision::Abort {
                    self.report.aborted = true;
                    self.report.abort_at_run = Some(self.report.systems_used);
                }
            }
        } else if self.cfg.test_schedule == TestSchedule::AtEnd
            && self.control.count > 0
            && thresholds.test(&self.control)? == TestDecision::RejectH0
        {
            self.report.aborted = true;
            self.report.abort_at_run = Some(self.report.systems_used);
        }
        self.report.statistic = self.control.v;
        self.report.statistic_count = self.control.count;
        if commit {
            let t = std::mem::take(&mut self.tally);
            let r = &mut self.report;
            r.bits_delivered = t.bits_delivered;
            r.bits_correct_bob = t.bits_correct_bob;
            r.bob_physical_bits = t.bob_physical_bits;
            r.bob_physical_errors = t.bob_physical_errors;
            r.eve_logical_bits = t.eve_logical_bits;
            r.eve_logical_errors = t.eve_logical_errors;
            r.eve_physical_bits = t.eve_physical_bits;
            r.eve_physical_errors = t.eve_physical_errors;
            r.decoded_message = t.decoded;
        }
        Ok(self.report)
    }
}
