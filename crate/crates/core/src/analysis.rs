//! Utility metrics and Laplace-versus-Gaussian comparisons.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::{gauss_pdp_sigma, PrivacyParams};
use crate::error::{Error, Result};
use crate::numerics::std_normal_cdf;

/// Default pseudocount for [`kl_divergence`].
pub const KL_PSEUDOCOUNT: f64 = 0.5;
/// Default likelihood cutoff for [`tail_ratio_curve`].
pub const TAIL_CUTOFF: f64 = 1e-4;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// `KL(P || Q)` between pseudocount-smoothed count distributions,
/// `p_k = (o_k + α) / (Σo + rα)`.
pub fn kl_divergence(orig: &[f64], san: &[f64], pseudocount: f64) -> Result<f64> {
    same_len(orig, san)?;
    if orig.is_empty() {
        return Err(Error::domain("empty count vectors"));
    }
    if !(pseudocount >= 0.0 && pseudocount.is_finite()) {
        return Err(Error::domain(format!(
            "pseudocount must be >= 0, got {pseudocount}"
        )));
    }
    for v in [orig, san] {
        if v.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::domain("counts must be finite and nonnegative"));
        }
        if !v.iter().any(|c| *c > 0.0) {
            return Err(Error::domain("count vector is all zero"));
        }
    }
    let r = orig.len() as f64;
    let zo = orig.iter().sum::<f64>() + r * pseudocount;
    let zs = san.iter().sum::<f64>() + r * pseudocount;
    let mut kl = 0.0;
    for (o, s) in orig.iter().zip(san) {
        let p = (o + pseudocount) / zo;
        if p == 0.0 {
            continue;
        }
        let q = (s + pseudocount) / zs;
        kl += p * (p / q).ln();
    }
    Ok(kl.max(0.0))
}

/// Two-sided Laplace tail `Pr(|e| > t) = exp(-tε/Δ_1)`.
pub fn laplace_tail(t: f64, epsilon: f64, delta1: f64) -> f64 {
    (-t.abs() * epsilon / delta1).exp()
}

/// Two-sided Gaussian tail `2Φ(-t/σ)`.
pub fn gaussian_tail(t: f64, sigma: f64) -> f64 {
    2.0 * std_normal_cdf(-t.abs() / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCurvePoint {
    pub t: f64,
    pub p1: f64,
    pub p2: f64,
    /// `p1 / p2`; `None` once the Gaussian tail underflows.
    pub ratio: Option<f64>,
    pub likely: bool,
}

/// Laplace and pDP-Gaussian tail probabilities along `t_grid`.
pub fn tail_ratio_curve(
    epsilon: f64,
    delta: f64,
    delta_s: f64,
    t_grid: &[f64],
    cutoff: f64,
) -> Result<Vec<TailCurvePoint>> {
    let sigma = gauss_pdp_sigma(delta_s, PrivacyParams::new(epsilon, delta)?)?;
    if t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::domain("t grid must be nonnegative"));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("t grid must be ascending"));
    }
    Ok(t_grid
        .iter()
        .map(|&t| {
            let p1 = laplace_tail(t, epsilon, delta_s);
            let p2 = gaussian_tail(t, sigma);
            TailCurvePoint {
                t,
                p1,
                p2,
                ratio: (p2 > 0.0).then(|| p1 / p2),
                likely: p1.max(p2) > cutoff,
            }
        })
        .collect())
}

/// `n` evenly spaced points on `[0, t_max]`.
pub fn linear_grid(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// First `t` where the ratio climbs back through 1 after dipping below it,
/// by linear interpolation between grid points.
pub fn ratio_recrossing(points: &[TailCurvePoint]) -> Option<f64> {
    let mut dipped = false;
    for w in points.windows(2) {
        let (Some(r0), Some(r1)) = (w[0].ratio, w[1].ratio) else {
            return None;
        };
        if r1 < 1.0 {
            dipped = true;
        }
        if dipped && r0 < 1.0 && r1 >= 1.0 {
            let f = (1.0 - r0) / (r1 - r0);
            return Some(w[0].t + f * (w[1].t - w[0].t));
        }
    }
    None
}

/// `Var_gauss / Var_laplace = σ² / (2 (Δ/ε)²)` at the pDP σ.
pub fn variance_comparison(epsilon: f64, delta: f64, delta_s: f64) -> Result<f64> {
    let sigma = gauss_pdp_sigma(delta_s, PrivacyParams::new(epsilon, delta)?)?;
    let b = delta_s / epsilon;
    Ok(sigma * sigma / (2.0 * b * b))
}

fn sig9(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.8e}")
    }
}

/// CSV with header `t,p1,p2,ratio,likely`; an undefined ratio is left empty.
pub fn write_curve_csv<W: Write>(points: &[TailCurvePoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,p1,p2,ratio,likely")?;
    for pt in points {
        let ratio = pt.ratio.map(sig9).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            sig9(pt.t),
            sig9(pt.p1),
            sig9(pt.p2),
            ratio,
            pt.likely
        )?;
    }
    Ok(())
}
