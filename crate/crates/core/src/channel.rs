//! Gaussian-statistics model of preparation, channel and detection.
//!
//! A coherent state is tracked as its mean amplitude plus the noise variance
//! accumulated per quadrature on the way. Cloning noise and detection noise
//! are Gaussian and independent, so an outcome is the mean plus one Gaussian
//! draw whose variance is the sum of both.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lattice::Amplitude;
use crate::numerics::{sample_gaussian, GaussianSpec};

/// Which quadratures a detector reports and how much noise it adds to each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// Joint measurement of `q` and `p`, unit noise on each.
    Heterodyne,
    HomodyneQ,
    HomodyneP,
}

impl MeasurementKind {
    pub fn detection_variance(&self) -> f64 {
        match self {
            MeasurementKind::Heterodyne => 1.0,
            MeasurementKind::HomodyneQ | MeasurementKind::HomodyneP => 0.5,
        }
    }

    pub fn is_homodyne(&self) -> bool {
        !matches!(self, MeasurementKind::Heterodyne)
    }
}

/// The channel between Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    Ideal,
    /// Universal Gaussian cloner on every system; Bob's copy gains `sigma2`.
    Ugqcm {
        sigma2: f64,
    },
    /// The same cloner applied to each system independently with
    /// probability `omega_freq`.
    Intermittent {
        omega_freq: f64,
        sigma2: f64,
    },
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::Ideal => Ok(()),
            ChannelModel::Ugqcm { sigma2 } => check_sigma2(sigma2),
            ChannelModel::Intermittent { omega_freq, sigma2 } => {
                if !(omega_freq > 0.0 && omega_freq <= 1.0) {
                    return domain(format!("attack frequency must lie in (0, 1], got {omega_freq}"));
                }
                check_sigma2(sigma2)
            }
        }
    }

    /// `(frequency, sigma2)`; the cloner is the intermittent one with
    /// frequency 1, the ideal channel has frequency 0.
    pub fn attack_parameters(&self) -> (f64, f64) {
        match *self {
            ChannelModel::Ideal => (0.0, 0.0),
            ChannelModel::Ugqcm { sigma2 } => (1.0, sigma2),
            ChannelModel::Intermittent { omega_freq, sigma2 } => (omega_freq, sigma2),
        }
    }
}

pub(crate) fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return domain(format!("cloning noise must be positive and finite, got {sigma2}"));
    }
    Ok(())
}

/// Eve's clone noise for a cloner adding `sigma2` on Bob's side: the pair
/// saturates `σ_B² σ_E² = 1/4`.
pub fn eve_clone_variance(sigma2: f64) -> f64 {
    1.0 / (4.0 * sigma2)
}

/// A Gaussian state seen by one party: mean amplitude plus added noise per
/// quadrature (on top of the detector's own noise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyState {
    pub mean: Amplitude,
    pub added_variance: f64,
}

impl NoisyState {
    pub fn clean(mean: Amplitude) -> Self {
        Self { mean, added_variance: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub sent: Amplitude,
    pub attacked: bool,
    pub bob_noise_added: f64,
    /// Eve's clone, kept unmeasured until she chooses how to measure it.
    pub eve_clone: Option<NoisyState>,
}

impl TransmissionRecord {
    pub fn bob_state(&self) -> NoisyState {
        NoisyState { mean: self.sent, added_variance: self.bob_noise_added }
    }
}

/// Send `alpha` through `model`. Ugqcm goes through the intermittent path
/// with frequency 1, so both draw the same attack decision.
pub fn transmit<R: Rng + ?Sized>(alpha: Amplitude, model: &ChannelModel, rng: &mut R) -> TransmissionRecord {
    let (freq, sigma2) = model.attack_parameters();
    let attacked = freq > 0.0 && (freq >= 1.0 || rng.random::<f64>() < freq);
    if !attacked {
        return TransmissionRecord { sent: alpha, attacked: false, bob_noise_added: 0.0, eve_clone: None };
    }
    TransmissionRecord {
        sent: alpha,
        attacked: true,
        bob_noise_added: sigma2,
        eve_clone: Some(NoisyState { mean: alpha, added_variance: eve_clone_variance(sigma2) }),
    }
}

/// A detector reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Joint { value: Amplitude },
    Q { value: f64 },
    P { value: f64 },
}

impl Outcome {
    /// Subtract a reference amplitude on the reported quadratures.
    pub fn minus(&self, reference: Amplitude) -> Outcome {
        match *self {
            Outcome::Joint { value } => Outcome::Joint { value: value - reference },
            Outcome::Q { value } => Outcome::Q { value: value - reference.q },
            Outcome::P { value } => Outcome::P { value: value - reference.p },
        }
    }

    /// Reported quadrature values in `(q, p)` order.
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Outcome::Joint { value } => vec![value.q, value.p],
            Outcome::Q { value } | Outcome::P { value } => vec![value],
        }
    }
}

pub fn measure<R: Rng + ?Sized>(state: &NoisyState, kind: MeasurementKind, rng: &mut R) -> Result<Outcome> {
    if !(state.added_variance >= 0.0) {
        return domain(format!("accumulated variance must be non-negative, got {}", state.added_variance));
    }
    let noise = GaussianSpec::centered(state.added_variance + kind.detection_variance())?;
    Ok(match kind {
        MeasurementKind::Heterodyne => {
            let q = state.mean.q + sample_gaussian(rng, &noise);
            let p = state.mean.p + sample_gaussian(rng, &noise);
            Outcome::Joint { value: Amplitude::new(q, p) }
        }
        MeasurementKind::HomodyneQ => Outcome::Q { value: state.mean.q + sample_gaussian(rng, &noise) },
        MeasurementKind::HomodyneP => Outcome::P { value: state.mean.p + sample_gaussian(rng, &noise) },
    })
}

/// CDF of the mixture `ω G_{1+σ²}(x) + (1−ω) G_1(x)` followed by Bob's heterodyne test
/// quadrature under an intermittent attack.
pub fn intermittent_mixture_cdf(x: f64, omega_freq: f64, sigma2: f64) -> f64 {
    use crate::numerics::std_normal_cdf;
    omega_freq * std_normal_cdf(x / (1.0 + sigma2).sqrt()) + (1.0 - omega_freq) * std_normal_cdf(x)
}
