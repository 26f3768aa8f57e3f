//! Eve's strategies and her decoding pipeline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{domain, QdcError, Result};
use crate::lattice::{cell_center, decode_amplitude, nearest_cell, Amplitude, BitPair, LatticeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    None,
    /// Cloner of added noise `sigma2` on every system.
    Ugqcm {
        sigma2: f64,
    },
    /// Cloner applied to each system with probability `omega_freq`.
    Intermittent {
        omega_freq: f64,
        sigma2: f64,
    },
    /// Heterodyne, snap to the nearest center of a lattice with half-step
    /// `omega_guess`, resend a coherent state there.
    InterceptCenterResend {
        omega_guess: f64,
    },
}

impl AttackSpec {
    /// Intermittent attack with frequency `t/n`, the grid used for coded
    /// analyses (`t` odd, `1 ≤ t ≤ n`).
    pub fn intermittent_preset(t: u32, n: u32, sigma2: f64) -> Result<Self> {
        if t == 0 || t > n || t.is_multiple_of(2) {
            return domain(format!("preset needs odd t in [1, n], got t={t}, n={n}"));
        }
        let spec = AttackSpec::Intermittent { omega_freq: t as f64 / n as f64, sigma2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackSpec::None => Ok(()),
            AttackSpec::InterceptCenterResend { omega_guess } => LatticeParams::new(omega_guess).map(|_| ()),
            _ => self.channel_model().expect("gaussian attack").validate(),
        }
    }

    /// The Gaussian channel this attack induces, if it is a cloner attack.
    pub fn channel_model(&self) -> Option<ChannelModel> {
        match *self {
            AttackSpec::None => Some(ChannelModel::Ideal),
            AttackSpec::Ugqcm { sigma2 } => Some(ChannelModel::Ugqcm { sigma2 }),
            AttackSpec::Intermittent { omega_freq, sigma2 } => Some(ChannelModel::Intermittent { omega_freq, sigma2 }),
            AttackSpec::InterceptCenterResend { .. } => None,
        }
    }

    /// Fraction of systems touched by the cloner.
    pub fn frequency(&self) -> f64 {
        match *self {
            AttackSpec::None => 0.0,
            AttackSpec::Ugqcm { .. } | AttackSpec::InterceptCenterResend { .. } => 1.0,
            AttackSpec::Intermittent { omega_freq, .. } => omega_freq,
        }
    }

    pub fn sigma2(&self) -> Option<f64> {
        match *self {
            AttackSpec::Ugqcm { sigma2 } | AttackSpec::Intermittent { sigma2, .. } => Some(sigma2),
            _ => None,
        }
    }

    /// Parse `none`, `ugqcm:<sigma2>`, `intermittent:<omega>:<sigma2>` or
    /// `icr:<omega_guess>`. The frequency may be written as a fraction `t/n`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let num = |s: &str| -> Result<f64> {
            if let Some((a, b)) = s.split_once('/') {
                let a: f64 = a.trim().parse().map_err(|_| QdcError::Domain(format!("bad number {s:?}")))?;
                let b: f64 = b.trim().parse().map_err(|_| QdcError::Domain(format!("bad number {s:?}")))?;
                return Ok(a / b);
            }
            s.trim().parse().map_err(|_| QdcError::Domain(format!("bad number {s:?}")))
        };
        let spec = match parts.as_slice() {
            ["none"] => AttackSpec::None,
            ["ugqcm", s2] => AttackSpec::Ugqcm { sigma2: num(s2)? },
            ["intermittent", w, s2] => AttackSpec::Intermittent { omega_freq: num(w)?, sigma2: num(s2)? },
            ["icr", g] | ["intercept_center_resend", g] => AttackSpec::InterceptCenterResend { omega_guess: num(g)? },
            _ => return domain(format!("unknown attack {text:?}")),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match *self {
            AttackSpec::None => "none".into(),
            AttackSpec::Ugqcm { sigma2 } => format!("ugqcm:{sigma2}"),
            AttackSpec::Intermittent { omega_freq, sigma2 } => format!("intermittent:{omega_freq}:{sigma2}"),
            AttackSpec::InterceptCenterResend { omega_guess } => format!("icr:{omega_guess}"),
        }
    }
}

/// Eve's estimate of the message bits once the mask is public.
///
/// `gamma` is her measurement of the clone; `attacked` guards against
/// decoding a run she never touched.
pub fn eve_decode_run(gamma: Option<Amplitude>, mask: Amplitude, lat: &LatticeParams) -> Result<BitPair> {
    let gamma = gamma.ok_or_else(|| QdcError::Precondition("Eve did not attack this run".into()))?;
    Ok(decode_amplitude(gamma - mask, lat))
}

/// Eve's bit estimates on the attacked positions of one codeword.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveCodewordState {
    pub estimates: Vec<bool>,
}

impl EveCodewordState {
    pub fn push(&mut self, bit: bool) {
        self.estimates.push(bit);
    }

    pub fn attacked(&self) -> usize {
        self.estimates.len()
    }

    fn ones(&self) -> usize {
        self.estimates.iter().filter(|&&b| b).count()
    }

    /// Majority with fair-coin tie break, including the empty case. Used by
    /// the simulator, where the attacked count is random.
    pub fn decide<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let ones = 2 * self.ones();
        let t = self.attacked();
        if ones == t {
            rng.random()
        } else {
            ones > t
        }
    }

    pub fn clear(&mut self) {
        self.estimates.clear();
    }
}

/// Strict majority over an odd number of attacked positions.
pub fn eve_logical_decode(state: &EveCodewordState) -> Result<bool> {
    let t = state.attacked();
    if t == 0 || t.is_multiple_of(2) {
        return domain(format!("majority needs an odd number of attacked positions, got {t}"));
    }
    Ok(2 * state.ones() > t)
}

/// Center of the cell nearest to Eve's heterodyne outcome under her lattice
/// hypothesis.
pub fn intercept_center_resend(beta_eve: Amplitude, lat_guess: &LatticeParams) -> Amplitude {
    cell_center(nearest_cell(beta_eve, lat_guess), lat_guess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::uncorrectable_error;
    use crate::channel::{measure, transmit, MeasurementKind, Outcome};
    use crate::lattice::{encode_bits, error_probability, CellAddress};
    use crate::numerics::{sample_gaussian, GaussianSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn lat(o: f64) -> LatticeParams {
        LatticeParams::new(o).unwrap()
    }

    #[test]
    fn parse_attacks() {
        assert_eq!(AttackSpec::parse("none").unwrap(), AttackSpec::None);
        assert_eq!(AttackSpec::parse("ugqcm:0.05").unwrap(), AttackSpec::Ugqcm { sigma2: 0.05 });
        assert_eq!(
            AttackSpec::parse("intermittent:1/35:0.4").unwrap(),
            AttackSpec::Intermittent { omega_freq: 1.0 / 35.0, sigma2: 0.4 }
        );
        assert!(AttackSpec::parse("laser").is_err());
        assert!(AttackSpec::parse("ugqcm:-1").is_err());
        assert!(AttackSpec::parse("intermittent:2:0.4").is_err());
        assert!(AttackSpec::intermittent_preset(2, 35, 0.4).is_err());
        assert!(AttackSpec::intermittent_preset(3, 35, 0.4).is_ok());
    }

    #[test]
    fn decode_requires_attack() {
        assert!(matches!(eve_decode_run(None, Amplitude::ZERO, &lat(1.0)), Err(QdcError::Precondition(_))));
    }

    /// Eve's per-bit error under a cloner of noise `sigma2`, by simulation.
    fn eve_bit_error(omega: f64, sigma2: f64, trials: usize, seed: u64) -> f64 {
        let l = lat(omega);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let model = ChannelModel::Ugqcm { sigma2 };
        let signal = GaussianSpec::centered(100.0 * l.step().powi(2)).unwrap();
        let mut errors = 0;
        for _ in 0..trials {
            let bits = BitPair::new(rng.random(), rng.random());
            let msg = cell_center(encode_bits(bits, &mut rng, 1000).unwrap(), &l);
            let sig = Amplitude::new(sample_gaussian(&mut rng, &signal), sample_gaussian(&mut rng, &signal));
            let mask = sig - msg;
            let rec = transmit(sig, &model, &mut rng);
            let gamma = match measure(&rec.eve_clone.unwrap(), MeasurementKind::Heterodyne, &mut rng).unwrap() {
                Outcome::Joint { value } => value,
                _ => unreachable!(),
            };
            errors += eve_decode_run(Some(gamma), mask, &l).unwrap().hamming(&bits);
        }
        errors as f64 / (2 * trials) as f64
    }

    #[test]
    fn eve_error_matches_formula() {
        let trials = 100_000;
        let emp = eve_bit_error(2.57, 0.05, trials, 1);
        let p = error_probability(&lat(2.57), 6.0).unwrap();
        let se = (p * (1.0 - p) / (2 * trials) as f64).sqrt();
        assert!((emp - p).abs() <= 4.0 * se, "{emp} vs {p}");
    }

    #[test]
    fn eve_error_limits() {
        // Huge sigma2: clone nearly noiseless, heterodyne floor remains.
        let floor = error_probability(&lat(2.57), 1.0).unwrap();
        let emp = eve_bit_error(2.57, 1e6, 50_000, 2);
        let se = (floor * (1.0 - floor) / 100_000.0).sqrt();
        assert!((emp - floor).abs() <= 4.0 * se);
        // Tiny sigma2: clone is noise.
        let emp = eve_bit_error(2.57, 1e-6, 50_000, 3);
        assert!((emp - 0.5).abs() <= 4.0 * (0.25f64 / 100_000.0).sqrt());
    }

    #[test]
    fn logical_decode_rules() {
        let state = EveCodewordState { estimates: vec![true, false, true] };
        assert!(eve_logical_decode(&state).unwrap());
        assert!(eve_logical_decode(&EveCodewordState { estimates: vec![true, false] }).is_err());
        assert!(eve_logical_decode(&EveCodewordState::default()).is_err());
    }

    fn logical_error_rate(t: usize, p: f64, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut errors = 0;
        for _ in 0..trials {
            let state = EveCodewordState { estimates: (0..t).map(|_| rng.random::<f64>() < p).collect() };
            // Sent bit is 0; an estimate of 1 is a flip.
            errors += eve_logical_decode(&state).unwrap() as usize;
        }
        errors as f64 / trials as f64
    }

    #[test]
    fn logical_error_single_position() {
        let emp = logical_error_rate(1, 0.2, 100_000, 4);
        assert!((emp - 0.2).abs() < 4.0 * (0.16f64 / 1e5).sqrt());
    }

    #[test]
    fn logical_error_three_positions() {
        let p: f64 = 0.2;
        let oracle = 3.0 * p * p * (1.0 - p) + p.powi(3);
        assert!((oracle - 0.104).abs() < 1e-12);
        assert!((uncorrectable_error(3, p).unwrap() - oracle).abs() < 1e-14);
        let emp = logical_error_rate(3, p, 100_000, 5);
        assert!((emp - oracle).abs() < 4.0 * (oracle * (1.0 - oracle) / 1e5).sqrt());
    }

    #[test]
    fn logical_error_full_codeword_near_critical_point() {
        let p = error_probability(&lat(1.0), 1.0).unwrap();
        let analytic = uncorrectable_error(35, p).unwrap();
        assert!((analytic - 0.01).abs() < 0.002);
        let emp = logical_error_rate(35, p, 100_000, 6);
        assert!((emp - analytic).abs() < 4.0 * (analytic * (1.0 - analytic) / 1e5).sqrt());
    }

    #[test]
    fn attacked_count_is_binomial() {
        let n = 35;
        let freq = 3.0 / 35.0;
        let model = ChannelModel::Intermittent { omega_freq: freq, sigma2: 0.39 };
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let codewords = 20_000;
        let counts: Vec<f64> = (0..codewords)
            .map(|_| (0..n).filter(|_| transmit(Amplitude::ZERO, &model, &mut rng).attacked).count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / codewords as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (codewords as f64 - 1.0);
        let expected_var = n as f64 * freq * (1.0 - freq);
        assert!((mean - 3.0).abs() < 4.0 * (expected_var / codewords as f64).sqrt());
        assert!((var / expected_var - 1.0).abs() < 0.05);
    }

    #[test]
    fn resend_is_identity_on_centers() {
        let l = lat(1.7);
        for (u, v) in [(0, 0), (3, -2), (-5, 11)] {
            let c = cell_center(CellAddress::new(u, v), &l);
            assert_eq!(intercept_center_resend(c, &l), c);
        }
    }

    #[test]
    fn tie_break_is_fair() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let state = EveCodewordState { estimates: vec![true, false] };
        let ones = (0..10_000).filter(|_| state.decide(&mut rng)).count() as f64;
        assert!((ones - 5000.0).abs() < 4.0 * 50.0);
        assert!(EveCodewordState { estimates: vec![true, true, false] }.decide(&mut rng));
    }
}
