//! Mechanism dispatch, post-processing and empirical privacy audits.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    disjoint_pdp_scale, gauss_adp_sigma_extended, gauss_pdp_sigma, gg_pdp_scale_mc, laplace_scale,
    tgg_scale, Calibration, CalibrationMethod, McConfig, PrivacyParams,
};
use crate::error::{Error, Result};
use crate::ggdist::{GGParams, GGSampler};
use crate::numerics::RngStream;
use crate::sensitivity::{effective_lp_gs, utility_sensitivity, SensitivityProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Laplace,
    GaussPdp,
    GaussAdp,
    GgPdp,
    TggEdp,
    ExpGg,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::Laplace,
        MechanismKind::GaussPdp,
        MechanismKind::GaussAdp,
        MechanismKind::GgPdp,
        MechanismKind::TggEdp,
        MechanismKind::ExpGg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Laplace => "laplace",
            MechanismKind::GaussPdp => "gauss_pdp",
            MechanismKind::GaussAdp => "gauss_adp",
            MechanismKind::GgPdp => "gg_pdp",
            MechanismKind::TggEdp => "tgg_edp",
            MechanismKind::ExpGg => "exp_gg",
        }
    }

    /// Shape fixed by the kind, if any.
    pub fn fixed_order(self) -> Option<u32> {
        match self {
            MechanismKind::Laplace => Some(1),
            MechanismKind::GaussPdp | MechanismKind::GaussAdp => Some(2),
            _ => None,
        }
    }

    pub fn is_pure(self) -> bool {
        matches!(
            self,
            MechanismKind::Laplace | MechanismKind::TggEdp | MechanismKind::ExpGg
        )
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, MechanismKind::TggEdp | MechanismKind::ExpGg)
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown mechanism kind '{s}'")))
    }
}

/// Everything needed to build a sanitizer.
///
/// JSON: `{"kind", "p", "epsilon", "delta", "profile", "mc"}`; `p` may be
/// omitted for kinds with a fixed shape, `delta` defaults to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct MechanismSpec {
    kind: MechanismKind,
    p: u32,
    privacy: PrivacyParams,
    profile: SensitivityProfile,
    mc: Option<McConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: MechanismKind,
    #[serde(default)]
    p: Option<u32>,
    epsilon: f64,
    #[serde(default)]
    delta: f64,
    profile: SensitivityProfile,
    #[serde(default)]
    mc: Option<McConfig>,
}

impl TryFrom<RawSpec> for MechanismSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let privacy = PrivacyParams::new(raw.epsilon, raw.delta)?;
        let mut spec = MechanismSpec::new(raw.kind, raw.p, privacy, raw.profile)?;
        if let Some(mc) = raw.mc {
            spec = spec.with_mc(mc)?;
        }
        Ok(spec)
    }
}

impl From<MechanismSpec> for RawSpec {
    fn from(s: MechanismSpec) -> Self {
        RawSpec {
            kind: s.kind,
            p: Some(s.p),
            epsilon: s.privacy.epsilon,
            delta: s.privacy.delta,
            profile: s.profile,
            mc: s.mc,
        }
    }
}

impl MechanismSpec {
    pub fn new(
        kind: MechanismKind,
        p: Option<u32>,
        privacy: PrivacyParams,
        profile: SensitivityProfile,
    ) -> Result<Self> {
        let p = match (kind.fixed_order(), p) {
            (Some(fixed), Some(given)) if given != fixed => {
                return Err(Error::config(format!(
                    "{kind} has fixed order p = {fixed}, got {given}"
                )))
            }
            (Some(fixed), _) => fixed,
            (None, Some(given)) => given,
            (None, None) => return Err(Error::config(format!("{kind} needs an order p"))),
        };
        if p == 0 {
            return Err(Error::config("order p must be >= 1"));
        }
        if kind == MechanismKind::GgPdp && p < 2 {
            return Err(Error::config(
                "gg_pdp needs p >= 2; p = 1 is the laplace mechanism",
            ));
        }
        if kind.is_pure() && privacy.delta != 0.0 {
            return Err(Error::config(format!(
                "{kind} gives pure epsilon-DP and requires delta = 0, got {}",
                privacy.delta
            )));
        }
        if !kind.is_pure() && privacy.delta == 0.0 {
            return Err(Error::config(format!("{kind} requires delta in (0, 1)")));
        }
        if kind.is_bounded() {
            profile.require_bounds(kind.name())?;
        }
        Ok(Self {
            kind,
            p,
            privacy,
            profile,
            mc: None,
        })
    }

    pub fn with_mc(mut self, mc: McConfig) -> Result<Self> {
        mc.validate()?;
        self.mc = Some(mc);
        Ok(self)
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn privacy(&self) -> PrivacyParams {
        self.privacy
    }

    pub fn profile(&self) -> &SensitivityProfile {
        &self.profile
    }

    pub fn mc(&self) -> Option<&McConfig> {
        self.mc.as_ref()
    }
}

/// Tags recorded by post-processing steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostOp {
    Clamp,
    Normalize,
    Round,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedResult {
    pub values: Vec<f64>,
    pub scale_used: f64,
    pub post_ops: Vec<PostOp>,
}

impl SanitizedResult {
    pub fn clamp(mut self, lo: &[f64], hi: &[f64]) -> Result<Self> {
        self.values = clamp(&self.values, lo, hi)?;
        self.post_ops.push(PostOp::Clamp);
        Ok(self)
    }

    pub fn normalize(mut self, total: f64) -> Result<Self> {
        self.values = normalize_to_total(&self.values, total)?;
        self.post_ops.push(PostOp::Normalize);
        Ok(self)
    }

    pub fn round(mut self) -> Self {
        self.values = round_counts(&self.values);
        self.post_ops.push(PostOp::Round);
        self
    }
}

/// A calibrated mechanism, reusable across many queries.
#[derive(Debug, Clone)]
pub struct Sanitizer {
    spec: MechanismSpec,
    calibration: Calibration,
    noise: GGParams,
}

/// Scale for the gauss kinds is `b = √2 σ`.
fn gg_sigma(b: f64, p: u32) -> f64 {
    GGParams { mu: 0.0, b, p }.std_dev()
}

/// Calibrate the noise scale for `spec`. Only `gg_pdp` on a non-disjoint
/// profile consumes randomness.
pub fn calibrate<R: Rng + ?Sized>(spec: &MechanismSpec, rng: &mut R) -> Result<Calibration> {
    let prof = &spec.profile;
    let privacy = spec.privacy;
    let p = spec.p;
    let mut draws = None;
    let (b, method) = match spec.kind {
        MechanismKind::Laplace => {
            let total = if prof.disjoint() {
                prof.max_delta1()
            } else {
                effective_lp_gs(prof, 1)?
            };
            (
                laplace_scale(total, privacy.epsilon)?,
                CalibrationMethod::ClosedForm,
            )
        }
        MechanismKind::GaussPdp => {
            let sigma = gauss_pdp_sigma(effective_lp_gs(prof, 2)?, privacy)?;
            (
                std::f64::consts::SQRT_2 * sigma,
                CalibrationMethod::ClosedForm,
            )
        }
        MechanismKind::GaussAdp => {
            let sigma = gauss_adp_sigma_extended(effective_lp_gs(prof, 2)?, privacy)?;
            (
                std::f64::consts::SQRT_2 * sigma,
                CalibrationMethod::ClosedForm,
            )
        }
        MechanismKind::GgPdp if prof.disjoint() => (
            disjoint_pdp_scale(prof.max_delta1(), p, privacy)?,
            CalibrationMethod::Deterministic,
        ),
        MechanismKind::GgPdp => {
            let mc = spec.mc.unwrap_or_default();
            draws = Some(mc.draws);
            (
                gg_pdp_scale_mc(prof, p, privacy, &mc, rng)?,
                CalibrationMethod::Mc,
            )
        }
        MechanismKind::TggEdp => (
            tgg_scale(prof, p, privacy.epsilon)?,
            CalibrationMethod::ClosedForm,
        ),
        MechanismKind::ExpGg => {
            let du = utility_sensitivity(p, prof, None)?.delta_u;
            if !(du > 0.0) {
                return Err(Error::domain("utility sensitivity is zero"));
            }
            (
                (2.0 * du / privacy.epsilon).powf(1.0 / f64::from(p)),
                CalibrationMethod::ClosedForm,
            )
        }
    };
    Ok(Calibration {
        mechanism: spec.kind,
        p,
        epsilon: privacy.epsilon,
        delta: privacy.delta,
        b,
        sigma: gg_sigma(b, p),
        method,
        draws,
    })
}

impl Sanitizer {
    pub fn new<R: Rng + ?Sized>(spec: MechanismSpec, rng: &mut R) -> Result<Self> {
        let calibration = calibrate(&spec, rng)?;
        let noise = GGParams::new(0.0, calibration.b, spec.p)?;
        Ok(Self {
            spec,
            calibration,
            noise,
        })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    /// `σ` for the Gaussian kinds, `b` otherwise.
    pub fn scale_used(&self) -> f64 {
        match self.spec.kind {
            MechanismKind::GaussPdp | MechanismKind::GaussAdp => self.calibration.sigma,
            _ => self.calibration.b,
        }
    }

    fn check_query(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.spec.profile.len() {
            return Err(Error::config(format!(
                "query has {} elements but the profile has {}",
                s.len(),
                self.spec.profile.len()
            )));
        }
        if let Some(bad) = s.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "query values must be finite, got {bad}"
            )));
        }
        if self.spec.kind.is_bounded() {
            let bounds = self.spec.profile.require_bounds(self.spec.kind.name())?;
            for (k, (&v, &(lo, hi))) in s.iter().zip(bounds).enumerate() {
                if !(lo..=hi).contains(&v) {
                    return Err(Error::domain(format!(
                        "element {k} = {v} lies outside its bounds [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<SanitizedResult> {
        self.check_query(s)?;
        let values = if self.spec.kind.is_bounded() {
            let bounds = self.spec.profile.require_bounds(self.spec.kind.name())?;
            s.iter()
                .zip(bounds)
                .map(|(&mu, &(lo, hi))| GGParams { mu, ..self.noise }.truncated_sample(lo, hi, rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            let sampler = GGSampler::new(self.noise);
            s.iter().map(|&v| v + sampler.draw(rng)).collect()
        };
        Ok(SanitizedResult {
            values,
            scale_used: self.scale_used(),
            post_ops: Vec::new(),
        })
    }

    /// Log density of one output element given input `mu`, up to a constant
    /// that does not depend on `mu`.
    fn element_log_density(&self, k: usize, mu: f64, x: f64) -> f64 {
        let z = (x - mu).abs() / self.noise.b;
        let energy = -z.powi(self.noise.p as i32);
        match self.spec.profile.bounds() {
            Some(bounds) if self.spec.kind.is_bounded() => {
                let (lo, hi) = bounds[k];
                if !(lo..=hi).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let mass = GGParams { mu, ..self.noise }
                    .interval_mass(lo, hi)
                    .expect("validated bounds");
                energy - mass.ln()
            }
            _ => energy,
        }
    }

    fn check_neighbours(&self, s: &[f64], s_prime: &[f64]) -> Result<()> {
        self.check_query(s)?;
        self.check_query(s_prime)
            .map_err(|e| Error::domain(format!("neighbouring query: {e}")))?;
        let deltas = self.spec.profile.delta1();
        let mut moved = 0;
        for (k, ((a, b), d)) in s.iter().zip(s_prime).zip(deltas).enumerate() {
            let gap = (a - b).abs();
            if gap > d * (1.0 + 1e-12) {
                return Err(Error::domain(format!(
                    "element {k} moves by {gap}, more than its sensitivity {d}"
                )));
            }
            if gap > 0.0 {
                moved += 1;
            }
        }
        if self.spec.profile.disjoint() && moved > 1 {
            return Err(Error::domain(format!(
                "a disjoint query changes in at most one element, {moved} differ"
            )));
        }
        Ok(())
    }

    /// Pointwise privacy loss `log f(x|s) - log f(x|s')`.
    pub fn privacy_loss(&self, s: &[f64], s_prime: &[f64], x: &[f64]) -> f64 {
        (0..s.len())
            .map(|k| {
                if s[k] == s_prime[k] {
                    0.0
                } else {
                    self.element_log_density(k, s[k], x[k])
                        - self.element_log_density(k, s_prime[k], x[k])
                }
            })
            .sum()
    }

    /// Sup of `|privacy_loss|` over a grid of `grid_points` per dimension.
    ///
    /// The loss is a sum of per-element terms, so the sup over the product
    /// grid is `max(Σ_k max g_k, -Σ_k min g_k)`.
    pub fn audit_privacy_loss(
        &self,
        s: &[f64],
        s_prime: &[f64],
        grid_points: usize,
    ) -> Result<f64> {
        self.check_neighbours(s, s_prime)?;
        if grid_points < 2 {
            return Err(Error::domain(
                "audit grid needs at least 2 points per dimension",
            ));
        }
        let reach = 10.0 * self.noise.b;
        let bounds = self
            .spec
            .profile
            .bounds()
            .filter(|_| self.spec.kind.is_bounded());
        let extremes: Vec<(f64, f64)> = (0..s.len())
            .into_par_iter()
            .map(|k| {
                if s[k] == s_prime[k] {
                    return (0.0, 0.0);
                }
                let (lo, hi) = match bounds {
                    Some(b) => b[k],
                    None => (s[k] - reach, s[k] + reach),
                };
                let step = (hi - lo) / (grid_points - 1) as f64;
                (0..grid_points)
                    .map(|i| {
                        let x = if i + 1 == grid_points {
                            hi
                        } else {
                            lo + step * i as f64
                        };
                        self.element_log_density(k, s[k], x)
                            - self.element_log_density(k, s_prime[k], x)
                    })
                    .fold((f64::NEG_INFINITY, f64::INFINITY), |(mx, mn), g| {
                        (mx.max(g), mn.min(g))
                    })
            })
            .collect();
        let upper: f64 = extremes.iter().map(|e| e.0).sum();
        let lower: f64 = extremes.iter().map(|e| e.1).sum();
        Ok(upper.max(-lower).max(0.0))
    }

    /// Fraction of `draws` sanitized outputs of `s` whose privacy loss
    /// against `s_prime` exceeds ε in absolute value.
    pub fn loss_exceedance<R: Rng + ?Sized>(
        &self,
        s: &[f64],
        s_prime: &[f64],
        draws: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_neighbours(s, s_prime)?;
        if draws == 0 {
            return Err(Error::domain("draws must be positive"));
        }
        let eps = self.spec.privacy.epsilon;
        let mut hits = 0usize;
        for _ in 0..draws {
            let out = self.apply(s, rng)?;
            if self.privacy_loss(s, s_prime, &out.values).abs() > eps {
                hits += 1;
            }
        }
        Ok(hits as f64 / draws as f64)
    }
}

/// Calibrate and sanitize in one call.
pub fn sanitize(spec: &MechanismSpec, s: &[f64], rng: &mut RngStream) -> Result<SanitizedResult> {
    Sanitizer::new(spec.clone(), rng)?.apply(s, rng)
}

/// Audit with a freshly calibrated sanitizer. Monte-Carlo calibrations use a
/// fixed stream so the result is deterministic.
pub fn audit_privacy_loss(
    spec: &MechanismSpec,
    s: &[f64],
    s_prime: &[f64],
    grid_points: usize,
) -> Result<f64> {
    let mut rng = RngStream::new(0, 0);
    Sanitizer::new(spec.clone(), &mut rng)?.audit_privacy_loss(s, s_prime, grid_points)
}

fn broadcast(bound: &[f64], k: usize, len: usize) -> Result<f64> {
    match bound.len() {
        1 => Ok(bound[0]),
        n if n == len => Ok(bound[k]),
        n => Err(Error::domain(format!(
            "bound vector of length {n} does not match {len} values"
        ))),
    }
}

/// Project each value onto `[lo_k, hi_k]`; length-1 bounds broadcast.
pub fn clamp(values: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    (0..values.len())
        .map(|k| {
            let l = broadcast(lo, k, values.len())?;
            let h = broadcast(hi, k, values.len())?;
            if !(l <= h) {
                return Err(Error::domain(format!(
                    "clamp bounds need lo <= hi, got [{l}, {h}]"
                )));
            }
            Ok(values[k].clamp(l, h))
        })
        .collect()
}

/// Rescale nonnegative values to sum to `total`; an all-zero vector becomes uniform.
pub fn normalize_to_total(values: &[f64], total: f64) -> Result<Vec<f64>> {
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::domain(format!(
            "normalization total must be positive, got {total}"
        )));
    }
    if values.is_empty() {
        return Err(Error::domain("cannot normalize an empty vector"));
    }
    if let Some(bad) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::domain(format!(
            "normalization needs finite nonnegative values, got {bad}; clamp first"
        )));
    }
    let sum: f64 = values.iter().sum();
    if sum == 0.0 {
        return Ok(vec![total / values.len() as f64; values.len()]);
    }
    Ok(values.iter().map(|v| v * total / sum).collect())
}

/// Round half away from zero, then clamp at 0.
pub fn round_counts(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v.round().max(0.0)).collect()
}
