//! Square phase-space lattice code.
//!
//! Cells have side `2Ω` and are centered at `(2Ωu, 2Ωu′)`. The parities of
//! the integer address `(u, u′)` carry two bits. Decoding snaps a point to
//! the nearest center, one quadrature at a time.

use std::ops::{Add, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, QdcError, Result};
use crate::numerics::{gaussian_tail_mass, GaussianSpec};

/// Default half-width of the range from which the random offsets `m`, `m′`
/// are drawn.
pub const DEFAULT_RANGE_M: u32 = 1 << 15;

const TERM_EPS: f64 = 1e-15;

/// Lattice with cell side `2 * omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LatticeParams {
    omega: f64,
}

impl LatticeParams {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return domain(format!("lattice half-step must be positive and finite, got {omega}"));
        }
        Ok(Self { omega })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn step(&self) -> f64 {
        2.0 * self.omega
    }
}

impl TryFrom<f64> for LatticeParams {
    type Error = QdcError;
    fn try_from(omega: f64) -> Result<Self> {
        Self::new(omega)
    }
}

impl From<LatticeParams> for f64 {
    fn from(lat: LatticeParams) -> f64 {
        lat.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellAddress {
    pub u: i64,
    pub u_prime: i64,
}

impl CellAddress {
    pub fn new(u: i64, u_prime: i64) -> Self {
        Self { u, u_prime }
    }

    pub fn parities(&self) -> BitPair {
        BitPair::new(parity(self.u), parity(self.u_prime))
    }
}

fn parity(k: i64) -> bool {
    k.rem_euclid(2) == 1
}

/// Two message bits, one per quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BitPair {
    pub q: bool,
    pub p: bool,
}

impl BitPair {
    pub fn new(q: bool, p: bool) -> Self {
        Self { q, p }
    }

    /// Number of positions in which `self` and `other` differ (0, 1 or 2).
    pub fn hamming(&self, other: &BitPair) -> u32 {
        (self.q != other.q) as u32 + (self.p != other.p) as u32
    }
}

/// A phase-space point `(q, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Amplitude {
    pub q: f64,
    pub p: f64,
}

impl Amplitude {
    pub const ZERO: Amplitude = Amplitude { q: 0.0, p: 0.0 };

    pub fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.q * self.q + self.p * self.p
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }
}

impl Add for Amplitude {
    type Output = Amplitude;
    fn add(self, rhs: Amplitude) -> Amplitude {
        Amplitude::new(self.q + rhs.q, self.p + rhs.p)
    }
}

impl Sub for Amplitude {
    type Output = Amplitude;
    fn sub(self, rhs: Amplitude) -> Amplitude {
        Amplitude::new(self.q - rhs.q, self.p - rhs.p)
    }
}

pub fn cell_center(addr: CellAddress, lat: &LatticeParams) -> Amplitude {
    Amplitude::new(lat.step() * addr.u as f64, lat.step() * addr.u_prime as f64)
}

/// Pick a random cell whose address parities equal `bits`.
///
/// `u = 2m + U`, `u′ = 2m′ + U′` with `m`, `m′` uniform on
/// `[-range_m, range_m]`.
pub fn encode_bits<R: Rng + ?Sized>(bits: BitPair, rng: &mut R, range_m: u32) -> Result<CellAddress> {
    if range_m == 0 {
        return domain("range_m must be at least 1");
    }
    let r = range_m as i64;
    let m = rng.random_range(-r..=r);
    let m_prime = rng.random_range(-r..=r);
    Ok(CellAddress::new(2 * m + bits.q as i64, 2 * m_prime + bits.p as i64))
}

/// Index of the nearest cell center along one axis. Ties round away from zero.
pub fn nearest_index(x: f64, lat: &LatticeParams) -> i64 {
    (x / lat.step()).round() as i64
}

pub fn nearest_cell(alpha: Amplitude, lat: &LatticeParams) -> CellAddress {
    CellAddress::new(nearest_index(alpha.q, lat), nearest_index(alpha.p, lat))
}

pub fn decode_quadrature(x: f64, lat: &LatticeParams) -> bool {
    parity(nearest_index(x, lat))
}

pub fn decode_amplitude(alpha: Amplitude, lat: &LatticeParams) -> BitPair {
    nearest_cell(alpha, lat).parities()
}

/// Per-quadrature probability that Gaussian noise of variance `delta` moves a
/// cell center into a cell of the opposite parity:
/// `2 Σ_{j≥0} ∫_{(4j+1)Ω}^{(4j+3)Ω} G_Δ(x) dx`.
///
/// With `delta = 1` this is the intrinsic heterodyne error; with Eve's total
/// noise it is her per-bit error. The value depends on `Ω/√Δ` only. When the
/// cells are narrow compared with the noise, the sum is evaluated through its
/// Fourier dual, which converges in a handful of terms there.
pub fn error_probability(lat: &LatticeParams, delta: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return domain(format!("noise variance must be positive and finite, got {delta}"));
    }
    let ratio = lat.omega / delta.sqrt();
    Ok(if ratio >= 0.25 { error_probability_direct(ratio) } else { error_probability_fourier(ratio) })
}

/// Sum of odd-cell masses for unit variance and half-step `ratio`.
pub(crate) fn error_probability_direct(ratio: f64) -> f64 {
    let unit = GaussianSpec::centered(1.0).expect("unit variance");
    let mut sum = 0.0;
    let mut j = 0u64;
    loop {
        let a = (4 * j + 1) as f64 * ratio;
        let b = (4 * j + 3) as f64 * ratio;
        let term = gaussian_tail_mass(a, b, &unit).expect("ordered limits");
        sum += term;
        // Terms decrease in j; stop once the term and everything beyond the
        // next interval are negligible.
        if term < TERM_EPS && crate::numerics::std_normal_sf(b) < TERM_EPS {
            break;
        }
        j += 1;
    }
    2.0 * sum
}

/// `1/2 − (2/π) Σ_k (−1)^k/(2k+1) exp(−((2k+1)π/(2Ω))² / 2)` for unit variance.
pub(crate) fn error_probability_fourier(ratio: f64) -> f64 {
    let base = std::f64::consts::PI / (2.0 * ratio);
    let mut sum = 0.0;
    for k in 0u64.. {
        let odd = (2 * k + 1) as f64;
        let term = (-(odd * base).powi(2) / 2.0).exp() / odd;
        sum += if k % 2 == 0 { term } else { -term };
        if term < TERM_EPS {
            break;
        }
    }
    0.5 - 2.0 / std::f64::consts::PI * sum
}

/// Half-step `Ω` at which [`error_probability`] equals `target_eps` for noise
/// `delta`, by bisection on the monotone map.
pub fn omega_for_error(target_eps: f64, delta: f64) -> Result<LatticeParams> {
    if !(target_eps > 0.0 && target_eps < 0.5) {
        return domain(format!("target error must lie in (0, 0.5), got {target_eps}"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return domain(format!("noise variance must be positive and finite, got {delta}"));
    }
    let eps = |ratio: f64| {
        if ratio >= 0.25 {
            error_probability_direct(ratio)
        } else {
            error_probability_fourier(ratio)
        }
    };
    let (mut lo, mut hi) = (1e-6, 1.0);
    while eps(hi) > target_eps {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eps(mid) > target_eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    LatticeParams::new(0.5 * (lo + hi) * delta.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::oracle::adaptive_simpson;
    use crate::numerics::{gaussian_pdf, sample_gaussian};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn lat(omega: f64) -> LatticeParams {
        LatticeParams::new(omega).unwrap()
    }

    /// Odd-cell mass by brute-force quadrature over many cells.
    fn quadrature_error(omega: f64, delta: f64) -> f64 {
        let g = GaussianSpec::centered(delta).unwrap();
        let mut total = 0.0;
        let mut j = 0;
        loop {
            let a = (4 * j + 1) as f64 * omega;
            if a > 40.0 * delta.sqrt() {
                break;
            }
            total += adaptive_simpson(&|x| gaussian_pdf(x, &g), a, a + 2.0 * omega, 1e-15);
            j += 1;
        }
        2.0 * total
    }

    #[test]
    fn centers() {
        assert_eq!(cell_center(CellAddress::new(0, 0), &lat(2.57)), Amplitude::ZERO);
        assert_eq!(cell_center(CellAddress::new(1, -2), &lat(1.0)), Amplitude::new(2.0, -4.0));
        let c = cell_center(CellAddress::new(3, 1), &lat(2.57));
        assert!((c.q - 15.42).abs() < 1e-12 && (c.p - 5.14).abs() < 1e-12);
    }

    #[test]
    fn invalid_omega() {
        assert!(LatticeParams::new(0.0).is_err());
        assert!(LatticeParams::new(-1.0).is_err());
        assert!(serde_json::from_str::<LatticeParams>("-2.0").is_err());
        assert_eq!(serde_json::from_str::<LatticeParams>("2.5").unwrap(), lat(2.5));
    }

    #[test]
    fn encoding_parities() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = encode_bits(BitPair::new(false, false), &mut rng, 50).unwrap();
            assert!(a.u % 2 == 0 && a.u_prime % 2 == 0);
            let a = encode_bits(BitPair::new(true, true), &mut rng, 50).unwrap();
            assert!(a.u.rem_euclid(2) == 1 && a.u_prime.rem_euclid(2) == 1);
        }
        assert!(encode_bits(BitPair::default(), &mut rng, 0).is_err());
    }

    #[test]
    fn encoding_offsets_uniform() {
        // χ² goodness of fit of m over [-5, 5] at the 1% level.
        let range = 5;
        let bins = 2 * range as usize + 1;
        let draws = 10_000;
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut counts = vec![0u64; bins];
        for _ in 0..draws {
            let a = encode_bits(BitPair::new(true, false), &mut rng, range).unwrap();
            let m = (a.u - 1) / 2;
            counts[(m + range as i64) as usize] += 1;
        }
        let expected = draws as f64 / bins as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let crit = crate::numerics::chi_squared_quantile(bins as u64 - 1, 0.99).unwrap();
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn decoding_examples() {
        let l = lat(2.57);
        assert_eq!(decode_amplitude(Amplitude::new(0.3, -0.2), &l), BitPair::new(false, false));
        for omega in [0.5, 1.0, 2.57, 7.0] {
            let l = lat(omega);
            let a = Amplitude::new(2.0 * omega * 3.0 + 0.1 * omega, -(2.0 * omega));
            assert_eq!(decode_amplitude(a, &l), BitPair::new(true, true));
        }
    }

    #[test]
    fn round_half_away_from_zero() {
        let l = lat(1.0);
        assert_eq!(nearest_index(1.0, &l), 1);
        assert_eq!(nearest_index(-1.0, &l), -1);
    }

    #[test]
    fn decode_center_fuzz() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let omega = rng.random_range(0.05..10.0);
            let l = lat(omega);
            let addr = CellAddress::new(rng.random_range(-70_000..70_000), rng.random_range(-70_000..70_000));
            assert_eq!(decode_amplitude(cell_center(addr, &l), &l), addr.parities());
        }
    }

    #[test]
    fn calibration_point() {
        let e = error_probability(&lat(2.57), 1.0).unwrap();
        assert!((e - 0.0100).abs() <= 3e-4, "{e}");
        assert!((e - quadrature_error(2.57, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn critical_point() {
        let quad = quadrature_error(1.0, 1.0);
        assert!((quad - 0.3147).abs() < 1e-4);
        assert!((error_probability(&lat(1.0), 1.0).unwrap() - quad).abs() < 1e-12);
    }

    #[test]
    fn large_cells_vanish() {
        assert!(error_probability(&lat(40.0), 1.0).unwrap() < 1e-300);
    }

    #[test]
    fn large_noise_tends_to_half() {
        let e = error_probability(&lat(2.57), 1e6).unwrap();
        assert!((e - 0.5).abs() < 1e-3);
    }

    #[test]
    fn direct_and_fourier_routes_agree() {
        for ratio in [0.1, 0.2, 0.25, 0.3, 0.5, 0.8, 1.0, 1.5] {
            let d = error_probability_direct(ratio);
            let f = error_probability_fourier(ratio);
            assert!((d - f).abs() < 1e-13, "ratio {ratio}: {d} vs {f}");
        }
    }

    #[test]
    fn matches_quadrature_on_grid() {
        for omega in [0.3, 1.0, 2.0, 2.57, 4.0] {
            for delta in [0.5, 1.0, 3.0, 6.0] {
                let e = error_probability(&lat(omega), delta).unwrap();
                assert!((e - quadrature_error(omega, delta)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn error_domain() {
        assert!(error_probability(&lat(1.0), 0.0).is_err());
        assert!(error_probability(&lat(1.0), -2.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let l = omega_for_error(0.01, 1.0).unwrap();
        assert!((l.omega() - 2.57).abs() < 0.01, "{}", l.omega());
        let l = omega_for_error(0.3147, 1.0).unwrap();
        assert!((l.omega() - 1.0).abs() < 1e-3, "{}", l.omega());
        assert!(omega_for_error(0.0, 1.0).is_err());
        assert!(omega_for_error(0.5, 1.0).is_err());
    }

    #[test]
    fn monte_carlo_bit_error_matches_formula() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let trials = 100_000;
        for (omega, delta) in [(0.7, 1.0), (1.0, 1.0), (2.57, 1.0), (1.0, 6.0), (2.0, 3.0)] {
            let l = lat(omega);
            let noise = GaussianSpec::centered(delta).unwrap();
            let p = error_probability(&l, delta).unwrap();
            let mut errors = 0u64;
            for _ in 0..trials {
                let bits = BitPair::new(rng.random(), rng.random());
                let addr = encode_bits(bits, &mut rng, 100).unwrap();
                let c = cell_center(addr, &l);
                let y =
                    Amplitude::new(c.q + sample_gaussian(&mut rng, &noise), c.p + sample_gaussian(&mut rng, &noise));
                errors += decode_amplitude(y, &l).hamming(&bits) as u64;
            }
            let n = 2.0 * trials as f64;
            let emp = errors as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((emp - p).abs() <= 4.0 * se, "omega {omega} delta {delta}: {emp} vs {p}");
        }
    }

    proptest! {
        #[test]
        fn decreasing_in_omega(omega in 0.05f64..6.0, d in 0.01f64..1.0, delta in 0.3f64..20.0) {
            let a = error_probability(&lat(omega), delta).unwrap();
            let b = error_probability(&lat(omega + d), delta).unwrap();
            // Saturation at 1/2 and underflow to 0 are the only ties.
            prop_assert!(b < a || (a < 1e-300 && b == 0.0) || 0.5 - b < 1e-15);
            prop_assert!(a > 0.0 || omega / delta.sqrt() > 10.0);
            prop_assert!(a <= 0.5 && (a < 0.5 || omega / delta.sqrt() < 0.2));
        }

        #[test]
        fn increasing_in_delta(omega in 0.1f64..5.0, delta in 0.2f64..30.0, d in 0.05f64..5.0) {
            let a = error_probability(&lat(omega), delta).unwrap();
            let b = error_probability(&lat(omega), delta + d).unwrap();
            prop_assert!(b > a || omega / delta.sqrt() > 9.0 || 0.5 - a < 1e-15);
        }

        #[test]
        fn inverse_round_trip(t in 1e-4f64..0.49, delta in 0.5f64..10.0) {
            let l = omega_for_error(t, delta).unwrap();
            prop_assert!((error_probability(&l, delta).unwrap() - t).abs() <= 1e-8);
        }

        #[test]
        fn noiseless_round_trip(q in any::<bool>(), p in any::<bool>(), omega in 0.1f64..10.0, seed in any::<u64>()) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let bits = BitPair::new(q, p);
            let l = lat(omega);
            let addr = encode_bits(bits, &mut rng, DEFAULT_RANGE_M).unwrap();
            prop_assert_eq!(decode_amplitude(cell_center(addr, &l), &l), bits);
        }
    }
}
