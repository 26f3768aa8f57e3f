//! Special functions and sampling primitives.
//!
//! Every quantity in this crate reduces to Gaussian tail masses, the
//! incomplete gamma function (through the χ² law of the control-mode
//! estimator) and the binary entropy. Information quantities are in bits.
//!
//! Complex amplitudes `α = (q + ip)/√2` drawn from a complex Gaussian of
//! variance `V` are sampled as two independent real quadratures `q`, `p`,
//! each with variance `V`. All modules use this convention.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const LN_2: f64 = std::f64::consts::LN_2;
const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SERIES_EPS: f64 = 1e-16;
const MAX_ITER: usize = 1_000_000;

/// Real Gaussian law with the given mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    mean: f64,
    variance: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return domain(format!("variance must be positive and finite, got {variance}"));
        }
        if !mean.is_finite() {
            return domain(format!("mean must be finite, got {mean}"));
        }
        Ok(Self { mean, variance })
    }

    /// Zero-mean law of variance `variance`.
    pub fn centered(variance: f64) -> Result<Self> {
        Self::new(0.0, variance)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn gaussian_pdf(x: f64, spec: &GaussianSpec) -> f64 {
    let d = x - spec.mean;
    (-(d * d) / (2.0 * spec.variance)).exp() / (2.0 * std::f64::consts::PI * spec.variance).sqrt()
}

/// Upper tail `P(Z > z)` of the standard normal law.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / SQRT_2)
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Probability mass of `[a, b]` under `spec`.
///
/// Both limits may be infinite. Tails are taken on the side away from the
/// mean so that masses far from the center keep full relative precision.
pub fn gaussian_tail_mass(a: f64, b: f64, spec: &GaussianSpec) -> Result<f64> {
    if a.is_nan() || b.is_nan() {
        return domain("integration limits must not be NaN");
    }
    if a > b {
        return domain(format!("lower limit {a} exceeds upper limit {b}"));
    }
    let sd = spec.std_dev();
    let za = (a - spec.mean) / sd;
    let zb = (b - spec.mean) / sd;
    let mass = if za >= 0.0 {
        std_normal_sf(za) - std_normal_sf(zb)
    } else if zb <= 0.0 {
        std_normal_cdf(zb) - std_normal_cdf(za)
    } else {
        1.0 - std_normal_sf(zb) - std_normal_cdf(za)
    };
    Ok(mass.max(0.0))
}

/// Standard normal quantile (Acklam's rational approximation, |rel err| < 1.2e-9).
///
/// Used as a starting point for root finding, not as a final answer.
pub fn std_normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -std_normal_quantile_approx(1.0 - p)
    }
}

pub fn ln_gamma(z: f64) -> f64 {
    libm::lgamma(z)
}

fn check_gamma_args(shape: f64, x: f64) -> Result<()> {
    if !(shape > 0.0) || !shape.is_finite() {
        return domain(format!("gamma shape must be positive and finite, got {shape}"));
    }
    if !(x >= 0.0) {
        return domain(format!("gamma argument must be non-negative, got {x}"));
    }
    Ok(())
}

/// ln of the series term prefactor `x^s e^{-x} / Γ(s)`.
fn ln_gamma_prefactor(shape: f64, x: f64) -> f64 {
    shape * x.ln() - x - ln_gamma(shape)
}

/// Lower regularized gamma by its power series; valid for `x < shape + 1`.
fn gamma_p_series(shape: f64, x: f64) -> f64 {
    let mut denom = shape;
    let mut term = 1.0 / shape;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * SERIES_EPS {
            break;
        }
    }
    (ln_gamma_prefactor(shape, x) + sum.ln()).exp()
}

/// ln of the upper regularized gamma by its continued fraction (modified
/// Lentz); valid for `x > shape + 1`.
fn ln_gamma_q_cf(shape: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - shape;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - shape);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < SERIES_EPS {
            break;
        }
    }
    ln_gamma_prefactor(shape, x) + h.ln()
}

/// Lower regularized incomplete gamma `P(shape, x) = γ(shape, x) / Γ(shape)`.
pub fn regularized_gamma_p(shape: f64, x: f64) -> Result<f64> {
    check_gamma_args(shape, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(if x < shape + 1.0 { gamma_p_series(shape, x) } else { 1.0 - ln_gamma_q_cf(shape, x).exp() })
}

/// Upper regularized incomplete gamma `Q(shape, x) = Γ(shape, x) / Γ(shape)`.
pub fn regularized_gamma_q(shape: f64, x: f64) -> Result<f64> {
    Ok(ln_regularized_gamma_q(shape, x)?.exp())
}

pub fn ln_regularized_gamma_q(shape: f64, x: f64) -> Result<f64> {
    check_gamma_args(shape, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(if x < shape + 1.0 { (-gamma_p_series(shape, x)).ln_1p() } else { ln_gamma_q_cf(shape, x) })
}

/// Unregularized upper incomplete gamma `Γ(z, a) = ∫_a^∞ t^{z-1} e^{-t} dt`.
///
/// Overflows to `+inf` once `Γ(z)` exceeds the `f64` range (z ≳ 171); use
/// [`ln_upper_incomplete_gamma`] or the regularized forms beyond that.
pub fn upper_incomplete_gamma(z: f64, a: f64) -> Result<f64> {
    Ok(ln_upper_incomplete_gamma(z, a)?.exp())
}

pub fn ln_upper_incomplete_gamma(z: f64, a: f64) -> Result<f64> {
    Ok(ln_regularized_gamma_q(z, a)? + ln_gamma(z))
}

fn check_dof(dof: u64) -> Result<()> {
    if dof == 0 {
        return domain("chi-squared degrees of freedom must be at least 1");
    }
    Ok(())
}

pub fn chi_squared_cdf(dof: u64, x: f64) -> Result<f64> {
    check_dof(dof)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    regularized_gamma_p(dof as f64 / 2.0, x / 2.0)
}

pub fn chi_squared_sf(dof: u64, x: f64) -> Result<f64> {
    check_dof(dof)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    regularized_gamma_q(dof as f64 / 2.0, x / 2.0)
}

pub fn chi_squared_pdf(dof: u64, x: f64) -> f64 {
    if x <= 0.0 {
        return if dof == 2 { 0.5 } else { 0.0 };
    }
    let k = dof as f64 / 2.0;
    ((k - 1.0) * (x / 2.0).ln() - x / 2.0 - ln_gamma(k)).exp() / 2.0
}

/// Value `x` with `CDF_{χ²,dof}(x) = prob`.
///
/// Wilson–Hilferty starting point, then Newton steps kept inside a shrinking
/// bracket with bisection whenever a step would leave it. For `prob > 1/2`
/// the residual is taken on the survival function so that quantiles near 1
/// keep full precision.
pub fn chi_squared_quantile(dof: u64, prob: f64) -> Result<f64> {
    check_dof(dof)?;
    if !(prob > 0.0 && prob < 1.0) {
        return domain(format!("quantile probability must lie in (0, 1), got {prob}"));
    }
    let upper = prob > 0.5;
    let target = if upper { 1.0 - prob } else { prob };
    // residual > 0 means the root lies to the right of x.
    let residual = |x: f64| -> Result<f64> {
        Ok(if upper { chi_squared_sf(dof, x)? - target } else { target - chi_squared_cdf(dof, x)? })
    };

    let k = dof as f64;
    let z = std_normal_quantile_approx(prob);
    let h = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - h + z * h.sqrt()).powi(3)).max(1e-8 * k);

    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while residual(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..500 {
        let f = residual(x)?;
        if f == 0.0 {
            return Ok(x);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = chi_squared_pdf(dof, x);
        let mut next = x + f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Binary entropy in bits, `H(0) = H(1) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("probability must lie in [0, 1], got {p}"));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-(p * p.ln() + (1.0 - p) * (-p).ln_1p()) / LN_2)
}

/// Draw one value from `spec`. Deterministic for a seeded generator.
pub fn sample_gaussian<R: Rng + ?Sized>(rng: &mut R, spec: &GaussianSpec) -> f64 {
    // GaussianSpec guarantees a finite positive variance.
    let normal = Normal::new(spec.mean, spec.std_dev()).expect("validated gaussian parameters");
    normal.sample(rng)
}
