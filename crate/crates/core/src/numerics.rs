//! Special functions and the seeded random-stream contract.
//!
//! Everything here is pure except [`RngStream`], which is a single-owner
//! generator. Independence between streams comes from distinct stream ids,
//! never from sharing one generator.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const GAMMA_MAX_ITER: usize = 1_000;
const GAMMA_EPS: f64 = 1e-16;
const GAMMA_TINY: f64 = 1e-300;

/// Upper limit on the shape argument accepted by the incomplete gamma functions.
pub const MAX_GAMMA_SHAPE: f64 = 100.0;

/// Quantile arguments must lie strictly inside `(Q_MIN, 1 - Q_MIN)`.
pub const QUANTILE_MIN: f64 = 1e-15;

/// `ln Γ(a)` for `a > 0`.
///
/// Lanczos approximation (g = 7, nine terms) with the reflection formula
/// below one half.
pub fn ln_gamma(a: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires a > 0, got {a}")));
    }
    Ok(ln_gamma_unchecked(a))
}

fn ln_gamma_unchecked(a: f64) -> f64 {
    if a < 0.5 {
        // Γ(a)Γ(1-a) = π / sin(πa); sin(πa) > 0 on (0, 0.5).
        let pi = std::f64::consts::PI;
        return (pi / (pi * a).sin()).ln() - ln_gamma_unchecked(1.0 - a);
    }
    let x = a - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0 && a <= MAX_GAMMA_SHAPE) {
        return Err(Error::domain(format!(
            "incomplete gamma shape must lie in (0, {MAX_GAMMA_SHAPE}], got {a}"
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!(
            "incomplete gamma argument must be >= 0, got {x}"
        )));
    }
    Ok(())
}

/// Regularized lower incomplete gamma `P(a, x) = γ(a, x) / Γ(a)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(incomplete_gamma_pair(a, x).0)
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
///
/// Computed directly rather than as `1 - P`, so deep tails keep their
/// relative accuracy.
pub fn reg_upper_gamma(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    Ok(incomplete_gamma_pair(a, x).1)
}

/// Returns `(P(a, x), Q(a, x))`. Series below `a + 1`, continued fraction above.
fn incomplete_gamma_pair(a: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma_unchecked(a);
    if x < a + 1.0 {
        let p = (lower_gamma_series(a, x) + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        let q = (upper_gamma_cf(a, x).ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

/// Log of `Σ_n x^n / (a (a+1) ... (a+n))`.
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum.ln()
}

/// Modified Lentz evaluation of the continued fraction for `Γ(a, x) e^x x^-a`.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / GAMMA_TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < GAMMA_TINY {
            d = GAMMA_TINY;
        }
        c = b + an / c;
        if c.abs() < GAMMA_TINY {
            c = GAMMA_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    h
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal CDF `Φ(x)`.
///
/// Uses `Φ(x) = Q(1/2, x²/2) / 2` for `x < 0`, which keeps the lower tail
/// accurate in relative terms; the upper half is the exact complement.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let half_tail = 0.5 * incomplete_gamma_pair(0.5, 0.5 * x * x).1;
    if x < 0.0 {
        half_tail
    } else {
        1.0 - half_tail
    }
}

/// Inverse of [`std_normal_cdf`].
///
/// Acklam's rational approximation followed by one Newton step on the CDF.
pub fn std_normal_quantile(q: f64) -> Result<f64> {
    if !(q > QUANTILE_MIN && q < 1.0 - QUANTILE_MIN) {
        return Err(Error::domain(format!(
            "normal quantile requires q in ({QUANTILE_MIN}, 1 - {QUANTILE_MIN}), got {q}"
        )));
    }
    if q > 0.5 {
        return Ok(-lower_quantile(1.0 - q));
    }
    Ok(lower_quantile(q))
}

fn lower_quantile(q: f64) -> f64 {
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
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const Q_LOW: f64 = 0.02425;

    let x0 = if q < Q_LOW {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    x0 - (std_normal_cdf(x0) - q) / std_normal_pdf(x0)
}

/// Binomial coefficient `C(n, k)` as a float.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// SplitMix64 finalizer, used to derive stream ids.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream selector gives independent
/// sequences for distinct ids under one key. The same pair always yields the
/// same sequence.
#[derive(Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for task `index`, a stable hash of this stream's id and the index.
    ///
    /// Does not consume any state, so children can be derived in any order.
    pub fn substream(&self, index: u64) -> RngStream {
        let id = mix64(self.stream_id ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RngStream::new(self.seed, id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    // Independent oracle: Maclaurin series of erf, fine for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn phi_oracle(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-14);
        // ln sqrt(pi)
        assert!((ln_gamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-13);
        assert!((ln_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
        // ln 99! from the factorial product
        let ln_fact: f64 = (1..100).map(|k| (k as f64).ln()).sum();
        assert!((ln_gamma(100.0).unwrap() / ln_fact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_rejects_nonpositive() {
        assert!(matches!(ln_gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(ln_gamma(-1.5), Err(Error::Domain(_))));
        assert!(ln_gamma(f64::NAN).is_err());
    }

    #[test]
    fn gamma_recurrence() {
        let mut a = 0.1;
        while a <= 50.0 {
            let lhs = ln_gamma(a + 1.0).unwrap() - ln_gamma(a).unwrap();
            assert!((lhs - a.ln()).abs() <= 1e-11, "a = {a}");
            a += 0.173;
        }
    }

    #[test]
    fn reg_lower_gamma_values() {
        assert!((reg_lower_gamma(1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-14);
        let erf1 = erf_series(1.0);
        assert!((reg_lower_gamma(0.5, 1.0).unwrap() - erf1).abs() < 1e-12);
        assert!((erf1 - 0.842_700_792_949_714_9).abs() < 1e-14);
        for a in [0.2, 1.0, 3.0, 99.0] {
            assert_eq!(reg_lower_gamma(a, 0.0).unwrap(), 0.0);
        }
        assert!((reg_lower_gamma(2.0, 1e4).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reg_gamma_matches_closed_forms() {
        // P(1, x) = 1 - e^-x ; P(2, x) = 1 - (1 + x) e^-x
        for &x in &[0.01, 0.5, 1.0, 2.5, 4.0, 10.0, 30.0] {
            let p1 = reg_lower_gamma(1.0, x).unwrap();
            assert!((p1 - (1.0 - (-x).exp())).abs() < 1e-13);
            let q2 = reg_upper_gamma(2.0, x).unwrap();
            let expect = (1.0 + x) * (-x).exp();
            assert!((q2 / expect - 1.0).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn reg_gamma_domain() {
        assert!(reg_lower_gamma(0.0, 1.0).is_err());
        assert!(reg_lower_gamma(101.0, 1.0).is_err());
        assert!(reg_lower_gamma(1.0, -0.1).is_err());
        assert!(reg_upper_gamma(1.0, f64::NAN).is_err());
    }

    #[test]
    fn reg_lower_gamma_monotone_on_random_grid() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..10_000 {
            let a = rng.random_range(0.05..100.0);
            let x1 = rng.random_range(0.0..150.0);
            let x2 = x1 + rng.random_range(0.0..10.0);
            let p1 = reg_lower_gamma(a, x1).unwrap();
            let p2 = reg_lower_gamma(a, x2).unwrap();
            assert!((0.0..=1.0).contains(&p1));
            assert!(p1 <= p2 + 1e-15, "a={a} x1={x1} x2={x2}");
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(-1.959_964_0) - 0.025).abs() < 1e-6);
        let v = std_normal_cdf(-std::f64::consts::SQRT_2);
        assert!((v - 0.078_649_603_525_142_57).abs() < 1e-13);
        assert!((2.0 * v - 0.157).abs() < 1e-3);
    }

    #[test]
    fn normal_cdf_against_series_oracle() {
        let mut x = -4.0;
        while x <= 4.0 {
            assert!(
                (std_normal_cdf(x) - phi_oracle(x)).abs() <= 1e-12,
                "x = {x}"
            );
            x += 0.01;
        }
    }

    #[test]
    fn normal_cdf_symmetry() {
        let mut x = 0.0;
        while x <= 8.0 {
            let s = std_normal_cdf(-x) - (1.0 - std_normal_cdf(x));
            assert!(s.abs() <= 1e-14, "x = {x}");
            x += 0.037;
        }
        // Deep tail reference value Φ(-8).
        assert!((std_normal_cdf(-8.0) / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normal_quantile_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        // Bisection oracle on the CDF.
        let (mut lo, mut hi) = (-10.0_f64, 0.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < 0.025 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = std_normal_quantile(0.025).unwrap();
        assert!((z - lo).abs() < 1e-12);
        assert!((z + 1.959_964_0).abs() < 1e-6);
        assert!((std_normal_cdf(std_normal_quantile(0.1).unwrap()) - 0.1).abs() < 1e-10);
    }

    #[test]
    fn normal_quantile_roundtrip_log_grid() {
        let n = 200;
        for i in 0..=n {
            let log_q = -10.0 + (i as f64) * (10.0 + 0.5f64.log10()) / n as f64;
            let q = 10f64.powf(log_q);
            let back = std_normal_cdf(std_normal_quantile(q).unwrap());
            assert!((back - q).abs() <= 1e-10, "q = {q}");
            let upper = std_normal_cdf(std_normal_quantile(1.0 - q).unwrap());
            assert!((upper - (1.0 - q)).abs() <= 1e-10);
        }
    }

    #[test]
    fn normal_quantile_domain() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(1e-16).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(3, 1), 3.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(10, 7), 120.0);
        assert_eq!(binomial(2, 3), 0.0);
    }

    #[test]
    fn streams_reproducible() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngStream::new(42, 8);
        let mut d = RngStream::new(42, 7);
        let same = (0..100).filter(|_| c.next_u64() == d.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn substreams_are_stable() {
        let root = RngStream::new(3, 0);
        assert_eq!(root.substream(5).stream_id(), root.substream(5).stream_id());
        assert_ne!(root.substream(5).stream_id(), root.substream(6).stream_id());
        assert_eq!(root.substream(5).seed(), 3);
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let n = 100_000;
        let root = RngStream::new(2024, 0);
        for pair in [(0u64, 1u64), (1, 2), (17, 1_000_003)] {
            let mut a = root.substream(pair.0);
            let mut b = root.substream(pair.1);
            let xs: Vec<f64> = (0..n).map(|_| a.random::<f64>()).collect();
            let ys: Vec<f64> = (0..n).map(|_| b.random::<f64>()).collect();
            let mx = xs.iter().sum::<f64>() / n as f64;
            let my = ys.iter().sum::<f64>() / n as f64;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (x, y) in xs.iter().zip(&ys) {
                sxy += (x - mx) * (y - my);
                sxx += (x - mx) * (x - mx);
                syy += (y - my) * (y - my);
            }
            let r = sxy / (sxx * syy).sqrt();
            assert!(r.abs() < 0.01, "pair {pair:?}: r = {r}");
        }
    }
}
