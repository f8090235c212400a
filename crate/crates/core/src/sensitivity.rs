//! l_p global sensitivity calculus and utility-function sensitivity bounds.
//!
//! Sensitivities are query-level quantities: callers supply the per-element
//! l1 sensitivity of each statistic, never the data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::binomial;

/// Per-element sensitivities of an r-dimensional query.
///
/// JSON form: `{"delta1": [...], "bounds": [[lo, hi], ...], "disjoint": bool,
/// "delta_p_override": number | null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub struct SensitivityProfile {
    delta1: Vec<f64>,
    bounds: Option<Vec<(f64, f64)>>,
    disjoint: bool,
    delta_p_override: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    delta1: Vec<f64>,
    #[serde(default)]
    bounds: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    disjoint: bool,
    #[serde(default)]
    delta_p_override: Option<f64>,
}

impl TryFrom<RawProfile> for SensitivityProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        let mut profile = SensitivityProfile::new(raw.delta1, raw.disjoint)?;
        if let Some(bounds) = raw.bounds {
            profile = profile.with_bounds(bounds)?;
        }
        if let Some(v) = raw.delta_p_override {
            profile = profile.with_delta_p_override(v)?;
        }
        Ok(profile)
    }
}

impl From<SensitivityProfile> for RawProfile {
    fn from(p: SensitivityProfile) -> Self {
        RawProfile {
            delta1: p.delta1,
            bounds: p.bounds,
            disjoint: p.disjoint,
            delta_p_override: p.delta_p_override,
        }
    }
}

impl SensitivityProfile {
    pub fn new(delta1: Vec<f64>, disjoint: bool) -> Result<Self> {
        if delta1.is_empty() {
            return Err(Error::domain(
                "sensitivity profile needs at least one element",
            ));
        }
        if let Some(bad) = delta1.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::domain(format!(
                "per-element l1 sensitivities must be finite and >= 0, got {bad}"
            )));
        }
        Ok(Self {
            delta1,
            bounds: None,
            disjoint,
            delta_p_override: None,
        })
    }

    /// Histogram of `r` bins: unit sensitivity per bin, disjoint, each count in `[0, n]`.
    pub fn histogram(r: usize, n: f64) -> Result<Self> {
        SensitivityProfile::new(vec![1.0; r], true)?.with_bounds(vec![(0.0, n); r])
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.delta1.len() {
            return Err(Error::domain(format!(
                "{} bounds supplied for {} elements",
                bounds.len(),
                self.delta1.len()
            )));
        }
        for (k, (&(lo, hi), &d)) in bounds.iter().zip(&self.delta1).enumerate() {
            check_pair(lo, hi)?;
            if d > hi - lo {
                return Err(Error::domain(format!(
                    "element {k}: sensitivity {d} exceeds its range {}",
                    hi - lo
                )));
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn with_delta_p_override(mut self, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::domain(format!(
                "delta_p override must be positive, got {value}"
            )));
        }
        self.delta_p_override = Some(value);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.delta1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta1.is_empty()
    }

    pub fn delta1(&self) -> &[f64] {
        &self.delta1
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    pub fn disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn delta_p_override(&self) -> Option<f64> {
        self.delta_p_override
    }

    pub fn max_delta1(&self) -> f64 {
        self.delta1.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn require_bounds(&self, what: &str) -> Result<&[(f64, f64)]> {
        self.bounds().ok_or_else(|| {
            Error::config(format!("{what} requires bounds in the sensitivity profile"))
        })
    }
}

fn check_pair(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::domain(format!(
            "bounds must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn check_order(p: u32) -> Result<()> {
    if p == 0 {
        return Err(Error::domain("order p must be an integer >= 1"));
    }
    Ok(())
}

fn minkowski(values: impl Iterator<Item = f64>, p: u32) -> f64 {
    let pf = f64::from(p);
    values.map(|v| v.powi(p as i32)).sum::<f64>().powf(1.0 / pf)
}

/// Upper bound `(Σ_k Δ_{1,k}^p)^{1/p}` on the l_p global sensitivity.
pub fn lp_gs_upper_bound(delta1: &[f64], p: u32) -> Result<f64> {
    check_order(p)?;
    if delta1.is_empty() {
        return Err(Error::domain("empty sensitivity vector"));
    }
    if delta1.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(Error::domain("sensitivities must be finite and >= 0"));
    }
    if delta1.iter().all(|d| *d == 0.0) {
        return Err(Error::domain("all-zero sensitivity vector"));
    }
    // Scale by the max entry so large p neither overflows nor underflows.
    let m = delta1.iter().copied().fold(0.0, f64::max);
    Ok(m * minkowski(delta1.iter().map(|d| d / m), p))
}

/// Range-based bound `(Σ_k (c_{k1} - c_{k0})^p)^{1/p}`.
pub fn range_gs_bound(bounds: &[(f64, f64)], p: u32) -> Result<f64> {
    check_order(p)?;
    if bounds.is_empty() {
        return Err(Error::domain("empty bounds"));
    }
    for &(lo, hi) in bounds {
        check_pair(lo, hi)?;
    }
    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    lp_gs_upper_bound(&widths, p)
}

/// The Δ_p used for calibration.
///
/// Disjoint queries change one element per record, so Δ_p is the largest
/// element sensitivity for every p. Otherwise an explicit override wins over
/// the Minkowski upper bound.
pub fn effective_lp_gs(profile: &SensitivityProfile, p: u32) -> Result<f64> {
    check_order(p)?;
    if profile.disjoint {
        let m = profile.max_delta1();
        if m == 0.0 {
            return Err(Error::domain("all-zero sensitivity vector"));
        }
        return Ok(m);
    }
    if let Some(v) = profile.delta_p_override {
        return Ok(v);
    }
    lp_gs_upper_bound(&profile.delta1, p)
}

/// Sensitivity of the utility `u(s*|s) = -‖s* - s‖_p^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySensitivity {
    pub delta_u: f64,
    pub p: u32,
    /// `deltaj[j - 1][k]` is the l1 sensitivity of `s_k^j`.
    pub deltaj: Option<Vec<Vec<f64>>>,
}

/// Largest absolute bound `max{|c_{k0}|, |c_{k1}|}`.
fn magnitude(bound: (f64, f64)) -> f64 {
    bound.0.abs().max(bound.1.abs())
}

/// Mean-value bound on the sensitivity of `s_k^j`: `j · M^{j-1} · Δ_{1,k}`.
pub fn default_power_sensitivities(profile: &SensitivityProfile, p: u32) -> Result<Vec<Vec<f64>>> {
    let bounds = profile.require_bounds("power sensitivities")?;
    Ok((1..=p)
        .map(|j| {
            bounds
                .iter()
                .zip(&profile.delta1)
                .map(|(&b, &d)| f64::from(j) * magnitude(b).powi(j as i32 - 1) * d)
                .collect()
        })
        .collect())
}

fn check_deltaj(profile: &SensitivityProfile, p: u32, deltaj: &[Vec<f64>]) -> Result<()> {
    if deltaj.len() != p as usize {
        return Err(Error::config(format!(
            "power sensitivities need {p} rows, got {}",
            deltaj.len()
        )));
    }
    for (j, row) in deltaj.iter().enumerate() {
        if row.len() != profile.len() {
            return Err(Error::config(format!(
                "power sensitivity row {} has {} entries, expected {}",
                j + 1,
                row.len(),
                profile.len()
            )));
        }
        if row.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("power sensitivities must be finite and >= 0"));
        }
    }
    let first_matches = deltaj[0]
        .iter()
        .zip(&profile.delta1)
        .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
    if !first_matches {
        return Err(Error::config(
            "first power sensitivity row must equal delta1",
        ));
    }
    Ok(())
}

/// Combine per-element contributions: a disjoint query moves only one element.
fn combine(profile: &SensitivityProfile, terms: impl Iterator<Item = f64>) -> f64 {
    if profile.disjoint {
        terms.fold(0.0, f64::max)
    } else {
        terms.sum()
    }
}

/// Binomial-expansion bound `Σ_k Σ_{j=1}^p C(p,j) M_k^{p-j} Δ^{(j)}_{1,k}`,
/// valid for any `p >= 1`.
pub fn power_utility_bound(
    p: u32,
    profile: &SensitivityProfile,
    deltaj: Option<&[Vec<f64>]>,
) -> Result<f64> {
    check_order(p)?;
    let bounds = profile.require_bounds("the power utility bound")?;
    let owned;
    let deltaj = match deltaj {
        Some(d) => {
            check_deltaj(profile, p, d)?;
            d
        }
        None => {
            owned = default_power_sensitivities(profile, p)?;
            &owned[..]
        }
    };
    let terms = bounds.iter().enumerate().map(|(k, &b)| {
        let m = magnitude(b);
        (1..=p)
            .map(|j| binomial(p, j) * m.powi((p - j) as i32) * deltaj[j as usize - 1][k])
            .sum::<f64>()
    });
    Ok(combine(profile, terms))
}

/// Δ_u for the exponential mechanism with utility `-‖s* - s‖_p^p`.
///
/// * `p = 1`: `Σ_k Δ_{1,k}`, capped at the query's Δ_1.
/// * `p = 2`: `2 Σ_k Δ_{1,k} (c_{k1} - c_{k0})`.
/// * `p >= 3`: [`power_utility_bound`].
///
/// For disjoint profiles the per-element sums become maxima.
pub fn utility_sensitivity(
    p: u32,
    profile: &SensitivityProfile,
    deltaj: Option<Vec<Vec<f64>>>,
) -> Result<UtilitySensitivity> {
    check_order(p)?;
    let delta_u = match p {
        1 => {
            let total = combine(profile, profile.delta1.iter().copied());
            total.min(effective_lp_gs(profile, 1)?)
        }
        2 => {
            let bounds = profile.require_bounds("the p = 2 utility bound")?;
            let terms = bounds
                .iter()
                .zip(&profile.delta1)
                .map(|(&(lo, hi), &d)| 2.0 * d * (hi - lo));
            combine(profile, terms)
        }
        _ => power_utility_bound(p, profile, deltaj.as_deref())?,
    };
    if !(delta_u > 0.0) {
        return Err(Error::domain("utility sensitivity must be positive"));
    }
    Ok(UtilitySensitivity { delta_u, p, deltaj })
}
