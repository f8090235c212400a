//! Noise-scale lower bounds.
//!
//! Closed forms cover the Laplace, truncated GG and Gaussian mechanisms. For
//! GG noise of order `p >= 2` under probabilistic DP the bound is the
//! smallest `b` with
//!
//! ```text
//! Pr( Σ_k Σ_{j=1}^{p-1} C(p,j) |e_k|^{p-j} Δ_{1,k}^j > b^p ε - Δ_p^p ) < δ,   e_k ~ GG(0, b, p)
//! ```
//!
//! Writing `e_k = b u_k` with unit-scale `u_k` turns this into a condition
//! whose left side only shrinks as `b` grows, so one batch of draws can be
//! bisected over directly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggdist::{GGParams, GGSampler};
use crate::mechanisms::MechanismKind;
use crate::numerics::{binomial, reg_upper_gamma, std_normal_cdf, std_normal_quantile, RngStream};
use crate::sensitivity::{effective_lp_gs, SensitivityProfile};

/// Draws per parallel chunk in the Monte-Carlo solver. Fixed so results do
/// not depend on the thread count.
const MC_CHUNK: usize = 8_192;
const DETERMINISTIC_TOL: f64 = 1e-10;
const MAX_BRACKET_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrivacy")]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

#[derive(Deserialize)]
struct RawPrivacy {
    epsilon: f64,
    #[serde(default)]
    delta: f64,
}

impl TryFrom<RawPrivacy> for PrivacyParams {
    type Error = Error;

    fn try_from(raw: RawPrivacy) -> Result<Self> {
        PrivacyParams::new(raw.epsilon, raw.delta)
    }
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::domain(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    fn require_positive_delta(&self, what: &str) -> Result<()> {
        if self.delta > 0.0 {
            Ok(())
        } else {
            Err(Error::config(format!(
                "{what} needs delta in (0, 1); pure epsilon-DP is unreachable this way"
            )))
        }
    }
}

/// Settings for the Monte-Carlo scale solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub draws: usize,
    /// Relative width on `b` at which bisection stops.
    pub bisection_tol: f64,
    /// The upper bracket may grow to this multiple of the starting guess.
    pub b_hi_factor: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            draws: 200_000,
            bisection_tol: 1e-4,
            b_hi_factor: 64.0,
        }
    }
}

impl McConfig {
    pub const MIN_DRAWS: usize = 10_000;

    pub fn validate(&self) -> Result<()> {
        if self.draws < Self::MIN_DRAWS {
            return Err(Error::config(format!(
                "Monte-Carlo calibration needs at least {} draws, got {}",
                Self::MIN_DRAWS,
                self.draws
            )));
        }
        if !(self.bisection_tol > 0.0 && self.bisection_tol < 1.0) {
            return Err(Error::config("bisection_tol must lie in (0, 1)"));
        }
        if !(self.b_hi_factor > 1.0 && self.b_hi_factor.is_finite()) {
            return Err(Error::config("b_hi_factor must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    ClosedForm,
    Mc,
    Deterministic,
}

/// A calibrated noise scale.
///
/// `sigma` is the standard deviation of the untruncated noise kernel,
/// `b · sqrt(Γ(3/p)/Γ(1/p))`; for the Gaussian mechanisms it is the usual σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mechanism: MechanismKind,
    pub p: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub b: f64,
    pub sigma: f64,
    pub method: CalibrationMethod,
    pub draws: Option<usize>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

/// Laplace scale `Δ_1 / ε`.
pub fn laplace_scale(delta1_total: f64, epsilon: f64) -> Result<f64> {
    check_positive("l1 sensitivity", delta1_total)?;
    check_positive("epsilon", epsilon)?;
    Ok(delta1_total / epsilon)
}

/// Scale for the truncated GG mechanism of pure ε-DP:
///
/// `b = (2/ε · (Σ_k Σ_{j=1}^{p-1} C(p,j) |c_{k1} - c_{k0}|^{p-j} Δ_{1,k}^j + Δ_p^p))^{1/p}`.
///
/// For a disjoint profile only one element can move, so the k-sum is
/// replaced by the worst single element.
pub fn tgg_scale(profile: &SensitivityProfile, p: u32, epsilon: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    if p == 0 {
        return Err(Error::domain("order p must be >= 1"));
    }
    let bounds = profile.require_bounds("the truncated GG mechanism")?;
    let cross = |width: f64, d: f64| -> f64 {
        (1..p)
            .map(|j| binomial(p, j) * width.powi((p - j) as i32) * d.powi(j as i32))
            .sum()
    };
    let pf = p as i32;
    let total = if profile.disjoint() {
        bounds
            .iter()
            .zip(profile.delta1())
            .map(|(&(lo, hi), &d)| cross(hi - lo, d) + d.powi(pf))
            .fold(0.0, f64::max)
    } else {
        let delta_p = effective_lp_gs(profile, p)?;
        bounds
            .iter()
            .zip(profile.delta1())
            .map(|(&(lo, hi), &d)| cross(hi - lo, d))
            .sum::<f64>()
            + delta_p.powi(pf)
    };
    if !(total > 0.0) {
        return Err(Error::domain("all-zero sensitivity profile"));
    }
    Ok((2.0 * total / epsilon).powf(1.0 / f64::from(p)))
}

/// Gaussian σ for (ε, δ)-probabilistic DP:
/// `σ = Δ_2 (sqrt(z² + 2ε) - z) / (2ε)` with `z = Φ^{-1}(δ/2)`.
pub fn gauss_pdp_sigma(delta2: f64, params: PrivacyParams) -> Result<f64> {
    check_positive("l2 sensitivity", delta2)?;
    params.require_positive_delta("the probabilistic-DP Gaussian bound")?;
    let eps = params.epsilon;
    let z = std_normal_quantile(params.delta / 2.0)?;
    Ok(delta2 * ((z * z + 2.0 * eps).sqrt() - z) / (2.0 * eps))
}

/// Classical approximate-DP Gaussian σ, `Δ_2 sqrt(2 ln(1.25/δ)) / ε`, valid for ε < 1.
pub fn gauss_adp_sigma(delta2: f64, params: PrivacyParams) -> Result<f64> {
    if params.epsilon >= 1.0 {
        return Err(Error::domain(format!(
            "the approximate-DP Gaussian bound requires epsilon < 1, got {}",
            params.epsilon
        )));
    }
    gauss_adp_sigma_extended(delta2, params)
}

/// The approximate-DP formula evaluated without the ε < 1 restriction.
///
/// Outside ε < 1 the formula carries no (ε, δ) guarantee; it exists so
/// histogram experiments can run the aDP sanitizer on the same ε grid as
/// the other mechanisms.
pub fn gauss_adp_sigma_extended(delta2: f64, params: PrivacyParams) -> Result<f64> {
    check_positive("l2 sensitivity", delta2)?;
    params.require_positive_delta("the approximate-DP Gaussian bound")?;
    Ok(delta2 * (2.0 * (1.25 / params.delta).ln()).sqrt() / params.epsilon)
}

/// Per-sample polynomial in `x = 1/b`: the loss bound is
/// `Σ_j coef[j-1] x^j + (Δ_p x)^p`.
struct LossSamples {
    order: usize,
    coefs: Vec<f64>,
    delta_p_pow: f64,
    pf: i32,
}

impl LossSamples {
    fn count(&self) -> usize {
        self.coefs.len().checked_div(self.order).unwrap_or(0)
    }

    /// Fraction of samples whose loss bound exceeds `epsilon` at scale `b`.
    fn exceed_fraction(&self, b: f64, epsilon: f64) -> f64 {
        let x = 1.0 / b;
        let fixed = self.delta_p_pow * x.powi(self.pf);
        let budget = epsilon - fixed;
        if budget <= 0.0 {
            return 1.0;
        }
        let hits: usize = self
            .coefs
            .par_chunks(self.order * MC_CHUNK)
            .map(|chunk| {
                chunk
                    .chunks_exact(self.order)
                    .filter(|c| {
                        // Horner in x; all coefficients are >= 0.
                        let poly = c.iter().rev().fold(0.0, |acc, a| (acc + a) * x);
                        poly > budget
                    })
                    .count()
            })
            .sum();
        hits as f64 / self.count() as f64
    }
}

/// Monte-Carlo lower bound on `b` for the GG mechanism of (ε, δ)-pDP, `p >= 2`.
///
/// Disjoint profiles reduce to the single worst element. All bisection
/// probes reuse the same draws, so the empirical exceedance probability is
/// monotone in `b`.
pub fn gg_pdp_scale_mc<R: Rng + ?Sized>(
    profile: &SensitivityProfile,
    p: u32,
    params: PrivacyParams,
    mc: &McConfig,
    rng: &mut R,
) -> Result<f64> {
    if p == 1 {
        return Err(Error::config(
            "p = 1 reaches pure epsilon-DP; use the Laplace scale instead",
        ));
    }
    if p == 0 {
        return Err(Error::domain("order p must be >= 1"));
    }
    params.require_positive_delta("the GG probabilistic-DP bound")?;
    mc.validate()?;

    let (deltas, delta_p) = if profile.disjoint() {
        let m = profile.max_delta1();
        (vec![m], m)
    } else {
        (profile.delta1().to_vec(), effective_lp_gs(profile, p)?)
    };
    if !(delta_p > 0.0) {
        return Err(Error::domain("all-zero sensitivity profile"));
    }
    let samples = draw_loss_samples(&deltas, delta_p, p, mc.draws, rng);
    let eps = params.epsilon;
    let delta = params.delta;

    let lo_start = delta_p / eps.powf(1.0 / f64::from(p));
    let gauss_seed = std::f64::consts::SQRT_2 * gauss_pdp_sigma(delta_p, params)?;
    let seed = lo_start.max(gauss_seed);
    let cap = mc.b_hi_factor * seed;

    let mut lo = lo_start;
    let mut hi = seed;
    while samples.exceed_fraction(hi, eps) >= delta {
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            return Err(Error::Convergence(format!(
                "no scale below {cap:.6} meets the pDP condition (p = {p}, eps = {eps}, delta = {delta})"
            )));
        }
    }
    while hi - lo > mc.bisection_tol * hi {
        let mid = 0.5 * (lo + hi);
        if samples.exceed_fraction(mid, eps) < delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn draw_loss_samples<R: Rng + ?Sized>(
    deltas: &[f64],
    delta_p: f64,
    p: u32,
    draws: usize,
    rng: &mut R,
) -> LossSamples {
    let order = (p - 1) as usize;
    let base = RngStream::new(rng.random(), rng.random());
    let sampler = GGSampler::new(GGParams { mu: 0.0, b: 1.0, p });
    // weights[j-1][k] = C(p, j) Δ_{1,k}^j
    let weights: Vec<Vec<f64>> = (1..p)
        .map(|j| {
            deltas
                .iter()
                .map(|d| binomial(p, j) * d.powi(j as i32))
                .collect()
        })
        .collect();
    let n_chunks = draws.div_ceil(MC_CHUNK);
    let coefs: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut stream = base.substream(chunk as u64);
            let len = MC_CHUNK.min(draws - chunk * MC_CHUNK);
            let mut out = vec![0.0; len * order];
            let mut mags = vec![0.0; deltas.len()];
            for row in out.chunks_exact_mut(order) {
                for m in mags.iter_mut() {
                    *m = sampler.draw_unit_magnitude(&mut stream);
                }
                for (j, c) in row.iter_mut().enumerate() {
                    let power = (p as usize - (j + 1)) as i32;
                    *c = mags
                        .iter()
                        .zip(&weights[j])
                        .map(|(u, w)| w * u.powi(power))
                        .sum();
                }
            }
            out
        })
        .collect();
    LossSamples {
        order,
        coefs,
        delta_p_pow: delta_p.powi(p as i32),
        pf: p as i32,
    }
}

/// Exceedance probability for a disjoint query at scale `b`:
/// `Pr((|e| + Δ)^p - |e|^p > b^p ε)` with `e ~ GG(0, b, p)`.
pub fn disjoint_pdp_tail(delta: f64, p: u32, epsilon: f64, b: f64) -> Result<f64> {
    check_positive("sensitivity", delta)?;
    check_positive("epsilon", epsilon)?;
    check_positive("scale", b)?;
    if p < 2 {
        return Err(Error::domain("disjoint pDP tail needs p >= 2"));
    }
    let x = delta / b;
    let expand = |tau: f64| -> f64 {
        (1..=p)
            .map(|j| binomial(p, j) * tau.powi((p - j) as i32) * x.powi(j as i32))
            .sum()
    };
    if expand(0.0) >= epsilon {
        return Ok(1.0);
    }
    // (τ + x)^p - τ^p is strictly increasing in τ >= 0.
    let mut hi = 1.0_f64;
    while expand(hi) <= epsilon {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expand(mid) > epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    reg_upper_gamma(1.0 / f64::from(p), tau.powi(p as i32))
}

/// Deterministic pDP scale for a disjoint query with element sensitivity `delta`.
pub fn disjoint_pdp_scale(delta: f64, p: u32, params: PrivacyParams) -> Result<f64> {
    if p == 1 {
        return Err(Error::config(
            "p = 1 reaches pure epsilon-DP; use the Laplace scale instead",
        ));
    }
    if p == 0 {
        return Err(Error::domain("order p must be >= 1"));
    }
    check_positive("sensitivity", delta)?;
    params.require_positive_delta("the disjoint pDP bound")?;
    let eps = params.epsilon;
    let target = params.delta;
    let tail = |b: f64| disjoint_pdp_tail(delta, p, eps, b);

    let mut lo = delta / eps.powf(1.0 / f64::from(p));
    let mut hi = 2.0 * lo;
    let mut doublings = 0;
    while tail(hi)? >= target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::Convergence(format!(
                "could not bracket the disjoint pDP scale (p = {p}, eps = {eps}, delta = {target})"
            )));
        }
    }
    while hi - lo > DETERMINISTIC_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if tail(mid)? < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Gaussian two-sided tail `2Φ(-t/σ)` at the pDP σ for `epsilon2`.
fn gaussian_tail_at(t: f64, delta_s: f64, epsilon2: f64, delta: f64) -> Result<f64> {
    let sigma = gauss_pdp_sigma(delta_s, PrivacyParams::new(epsilon2, delta)?)?;
    Ok(2.0 * std_normal_cdf(-t / sigma))
}

/// The ε₂ at which the (ε₂, δ)-pDP Gaussian mechanism has the same two-sided
/// tail probability at `t` as the ε₁ Laplace mechanism.
pub fn equivalent_epsilon(epsilon1: f64, delta: f64, t: f64, delta_s: f64) -> Result<f64> {
    check_positive("epsilon1", epsilon1)?;
    check_positive("t", t)?;
    check_positive("sensitivity", delta_s)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let target = (-t * epsilon1 / delta_s).exp();
    let (mut lo, mut hi) = (1e-12_f64.ln(), 1e12_f64.ln());
    let tail_lo = gaussian_tail_at(t, delta_s, lo.exp(), delta)?;
    let tail_hi = gaussian_tail_at(t, delta_s, hi.exp(), delta)?;
    if !(target < tail_lo && target > tail_hi) {
        return Err(Error::NoSolution(format!(
            "Laplace tail {target:e} at t = {t} is outside the Gaussian range ({tail_hi:e}, {tail_lo:e})"
        )));
    }
    // Tail decreases in epsilon2; bisect on ln(epsilon2).
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if gaussian_tail_at(t, delta_s, mid.exp(), delta)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    // Reference values evaluated at 40 digits with an independent
    // arbitrary-precision quantile and logarithm.
    const PDP_1_1_05: f64 = 2.188_437_496_280_634_6;
    const PDP_1_2_05: f64 = 1.190_056_119_029_578_9;
    const ADP_05_05: f64 = 5.074_544_964_718_079;
    const ADP_09_25: f64 = 1.993_469_531_104_557_2;
    const DISJOINT_P3: f64 = 4.662_444_534_456_972;

    fn pp(e: f64, d: f64) -> PrivacyParams {
        PrivacyParams::new(e, d).unwrap()
    }

    #[test]
    fn privacy_params_validation() {
        assert!(PrivacyParams::new(0.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, -0.1).is_err());
        let p: PrivacyParams = serde_json::from_str(r#"{"epsilon": 2.0}"#).unwrap();
        assert_eq!(p, pp(2.0, 0.0));
        assert!(serde_json::from_str::<PrivacyParams>(r#"{"epsilon": -2.0}"#).is_err());
    }

    #[test]
    fn laplace_examples() {
        assert_eq!(laplace_scale(1.0, 0.5).unwrap(), 2.0);
        assert_eq!(laplace_scale(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(laplace_scale(2.0, 4.0).unwrap(), 0.5);
        assert!(laplace_scale(0.0, 1.0).is_err());
        assert!(laplace_scale(1.0, -1.0).is_err());
    }

    #[test]
    fn tgg_examples() {
        let unit = SensitivityProfile::new(vec![1.0], false)
            .unwrap()
            .with_bounds(vec![(0.0, 1.0)])
            .unwrap();
        assert!((tgg_scale(&unit, 1, 0.5).unwrap() - 4.0).abs() < 1e-14);
        assert!((tgg_scale(&unit, 2, 1.0).unwrap() - 6f64.sqrt()).abs() < 1e-14);
        let hist = SensitivityProfile::histogram(64, 70.0).unwrap();
        let b = tgg_scale(&hist, 2, 1.0).unwrap();
        assert!((b - 282f64.sqrt()).abs() < 1e-12);
        assert!((b - 16.793).abs() < 1e-3);
        let unbounded = SensitivityProfile::new(vec![1.0], false).unwrap();
        assert!(matches!(
            tgg_scale(&unbounded, 2, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tgg_lemma1_fallback_matches_full_binomial_sum() {
        // With Δ_p from the Minkowski bound the j-sum runs to p.
        let prof = SensitivityProfile::new(vec![1.0, 0.5], false)
            .unwrap()
            .with_bounds(vec![(0.0, 3.0), (0.0, 2.0)])
            .unwrap();
        let p = 3;
        let full: f64 = [(3.0, 1.0), (2.0, 0.5)]
            .iter()
            .map(|&(w, d): &(f64, f64)| {
                (1..=p)
                    .map(|j| binomial(p, j) * w.powi((p - j) as i32) * d.powi(j as i32))
                    .sum::<f64>()
            })
            .sum();
        let expect = (2.0 * full / 0.7).powf(1.0 / 3.0);
        assert!((tgg_scale(&prof, p, 0.7).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn gauss_pdp_examples() {
        assert!((gauss_pdp_sigma(1.0, pp(1.0, 0.05)).unwrap() - PDP_1_1_05).abs() < 1e-10);
        assert!((gauss_pdp_sigma(1.0, pp(2.0, 0.05)).unwrap() - PDP_1_2_05).abs() < 1e-10);
        let base = gauss_pdp_sigma(1.0, pp(0.3, 0.1)).unwrap();
        assert!((gauss_pdp_sigma(3.5, pp(0.3, 0.1)).unwrap() - 3.5 * base).abs() < 1e-12);
        assert!(matches!(
            gauss_pdp_sigma(1.0, pp(1.0, 0.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gauss_adp_examples() {
        assert!((gauss_adp_sigma(1.0, pp(0.5, 0.05)).unwrap() - ADP_05_05).abs() < 1e-10);
        assert!((gauss_adp_sigma(1.0, pp(0.9, 0.25)).unwrap() - ADP_09_25).abs() < 1e-10);
        assert!(matches!(
            gauss_adp_sigma(1.0, pp(1.0, 0.05)),
            Err(Error::Domain(_))
        ));
        assert!(gauss_adp_sigma_extended(1.0, pp(2.0, 0.05)).is_ok());
    }

    #[test]
    fn pdp_tighter_than_adp_on_grid() {
        for i in 1..10 {
            let eps = i as f64 / 10.0;
            for delta in [0.01, 0.05, 0.1, 0.25] {
                let a = gauss_pdp_sigma(1.0, pp(eps, delta)).unwrap();
                let b = gauss_adp_sigma(1.0, pp(eps, delta)).unwrap();
                assert!(a < b, "eps={eps} delta={delta}");
            }
        }
    }

    #[test]
    fn disjoint_examples() {
        let b2 = disjoint_pdp_scale(1.0, 2, pp(1.0, 0.05)).unwrap();
        assert!((b2 - SQRT_2 * PDP_1_1_05).abs() < 1e-4);
        assert!((b2 - 3.094_916).abs() < 1e-4);
        let b3 = disjoint_pdp_scale(1.0, 3, pp(1.0, 0.05)).unwrap();
        assert!((b3 - DISJOINT_P3).abs() < 1e-6, "{b3}");
        assert!((disjoint_pdp_tail(1.0, 3, 1.0, b3).unwrap() - 0.05).abs() < 1e-8);
        assert!(matches!(
            disjoint_pdp_scale(1.0, 1, pp(1.0, 0.05)),
            Err(Error::Config(_))
        ));
        assert!(disjoint_pdp_scale(1.0, 3, pp(1.0, 0.0)).is_err());
    }

    #[test]
    fn disjoint_tail_p2_closed_form() {
        // t* = (b²ε - Δ²)/(2Δ); tail = 2Φ(-√2 t*/b).
        let (d, eps, b) = (1.3, 0.8, 4.0);
        let t = (b * b * eps - d * d) / (2.0 * d);
        let expect = 2.0 * std_normal_cdf(-SQRT_2 * t / b);
        assert!((disjoint_pdp_tail(d, 2, eps, b).unwrap() - expect).abs() < 1e-12);
        assert_eq!(disjoint_pdp_tail(1.0, 2, 1.0, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn mc_matches_closed_form_at_p2() {
        let prof = SensitivityProfile::new(vec![1.0], false).unwrap();
        let mut rng = RngStream::new(8, 0);
        let b = gg_pdp_scale_mc(&prof, 2, pp(1.0, 0.05), &McConfig::default(), &mut rng).unwrap();
        let exact = SQRT_2 * PDP_1_1_05;
        assert!((b / exact - 1.0).abs() < 0.02, "{b} vs {exact}");
    }

    #[test]
    fn mc_matches_disjoint_solver_at_p3() {
        let hist = SensitivityProfile::histogram(64, 70.0).unwrap();
        let mut rng = RngStream::new(8, 1);
        let b = gg_pdp_scale_mc(&hist, 3, pp(1.0, 0.05), &McConfig::default(), &mut rng).unwrap();
        assert!((b / DISJOINT_P3 - 1.0).abs() < 0.02, "{b}");
    }

    #[test]
    fn mc_near_unit_delta_approaches_positivity_bound() {
        let prof = SensitivityProfile::new(vec![1.0, 0.1, 0.05], false).unwrap();
        let p = 3;
        let mut rng = RngStream::new(4, 4);
        let b =
            gg_pdp_scale_mc(&prof, p, pp(1.0, 0.999_999), &McConfig::default(), &mut rng).unwrap();
        let floor = effective_lp_gs(&prof, p).unwrap();
        assert!(b >= floor && b < floor * 1.01, "{b} vs {floor}");
    }

    #[test]
    fn mc_is_reproducible_and_thread_independent() {
        let prof = SensitivityProfile::new(vec![1.0, 0.1, 0.05], false).unwrap();
        let mc = McConfig::default();
        let run = || {
            let mut rng = RngStream::new(99, 3);
            gg_pdp_scale_mc(&prof, 3, pp(0.5, 0.05), &mc, &mut rng).unwrap()
        };
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(run);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mc_errors() {
        let prof = SensitivityProfile::new(vec![1.0], false).unwrap();
        let mut rng = RngStream::new(1, 1);
        let mc = McConfig::default();
        assert!(matches!(
            gg_pdp_scale_mc(&prof, 1, pp(1.0, 0.05), &mc, &mut rng),
            Err(Error::Config(_))
        ));
        assert!(gg_pdp_scale_mc(&prof, 3, pp(1.0, 0.0), &mc, &mut rng).is_err());
        let few = McConfig { draws: 100, ..mc };
        assert!(gg_pdp_scale_mc(&prof, 3, pp(1.0, 0.05), &few, &mut rng).is_err());
        let tight = McConfig {
            b_hi_factor: 1.01,
            ..mc
        };
        assert!(matches!(
            gg_pdp_scale_mc(&prof, 4, pp(0.1, 0.001), &tight, &mut rng),
            Err(Error::Convergence(_))
        ));
    }

    #[test]
    fn scales_decrease_in_epsilon_and_delta() {
        let prof = SensitivityProfile::new(vec![1.0, 0.1, 0.05], false).unwrap();
        let mc = McConfig::default();
        let eps_grid = [0.5, 1.0, 2.0];
        let delta_grid = [0.01, 0.05, 0.2];
        for solver in 0..3 {
            let value = |e: f64, d: f64| -> f64 {
                match solver {
                    0 => gauss_pdp_sigma(1.0, pp(e, d)).unwrap(),
                    1 => disjoint_pdp_scale(1.0, 3, pp(e, d)).unwrap(),
                    _ => {
                        let mut rng = RngStream::new(21, 0);
                        gg_pdp_scale_mc(&prof, 3, pp(e, d), &mc, &mut rng).unwrap()
                    }
                }
            };
            for &d in &delta_grid {
                let row: Vec<f64> = eps_grid.iter().map(|&e| value(e, d)).collect();
                assert!(
                    row.windows(2).all(|w| w[1] < w[0]),
                    "solver {solver}: {row:?}"
                );
            }
            for &e in &eps_grid {
                let col: Vec<f64> = delta_grid.iter().map(|&d| value(e, d)).collect();
                assert!(
                    col.windows(2).all(|w| w[1] < w[0]),
                    "solver {solver}: {col:?}"
                );
            }
        }
    }

    #[test]
    fn equivalent_epsilon_self_consistent() {
        let eps2 = equivalent_epsilon(1.0, 0.05, 5.0, 1.0).unwrap();
        let sigma = gauss_pdp_sigma(1.0, pp(eps2, 0.05)).unwrap();
        let back = 2.0 * std_normal_cdf(-5.0 / sigma);
        assert!((back - (-5.0f64).exp()).abs() <= 1e-10);
    }

    #[test]
    fn equivalent_epsilon_shrinks_with_delta() {
        let mut prev = f64::INFINITY;
        for delta in [0.01, 0.05, 0.1, 0.2] {
            let e2 = equivalent_epsilon(1.0, delta, 3.0, 1.0).unwrap();
            assert!(e2 < prev, "delta = {delta}");
            prev = e2;
        }
    }

    #[test]
    fn equivalent_epsilon_errors() {
        assert!(matches!(
            equivalent_epsilon(1.0, 0.05, 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(equivalent_epsilon(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(matches!(
            equivalent_epsilon(1.0, 0.05, 1e6, 1.0),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn calibration_json_shape() {
        let c = Calibration {
            mechanism: MechanismKind::GaussPdp,
            p: 2,
            epsilon: 1.0,
            delta: 0.05,
            b: 3.0,
            sigma: 2.1,
            method: CalibrationMethod::ClosedForm,
            draws: None,
        };
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["mechanism"], "gauss_pdp");
        assert_eq!(v["method"], "closed-form");
        assert!(v["draws"].is_null());
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 8);
    }

    proptest! {
        #[test]
        fn pdp_sigma_respects_positivity_floor(
            eps in 0.01f64..10.0,
            delta in 0.001f64..0.99,
            d in 0.01f64..100.0,
        ) {
            let sigma = gauss_pdp_sigma(d, pp(eps, delta)).unwrap();
            prop_assert!(sigma * SQRT_2 >= d / eps.sqrt() * (1.0 - 1e-12));
        }
    }
}
