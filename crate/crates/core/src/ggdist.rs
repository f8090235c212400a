//! The generalized Gaussian distribution `GG(mu, b, p)`.
//!
//! Density `p / (2 b Γ(1/p)) · exp(-(|x - mu| / b)^p)`. Shape `p = 1` is the
//! Laplace distribution, `p = 2` the normal with variance `b²/2`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_gamma, reg_lower_gamma, reg_upper_gamma};

/// Interval mass at or above which truncated draws use plain rejection.
pub const REJECTION_MIN_MASS: f64 = 0.01;

const INVERSION_TOL: f64 = 1e-12;
const INVERSION_MAX_ITER: usize = 400;
/// `exp(-z^p)` underflows once `z^p` passes this.
const UNDERFLOW_EXPONENT: f64 = 750.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GGParams {
    pub mu: f64,
    pub b: f64,
    pub p: u32,
}

impl GGParams {
    pub fn new(mu: f64, b: f64, p: u32) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("location must be finite, got {mu}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {b}")));
        }
        if p == 0 {
            return Err(Error::domain("shape p must be an integer >= 1"));
        }
        Ok(Self { mu, b, p })
    }

    fn shape(&self) -> f64 {
        f64::from(self.p)
    }

    /// `(|x - mu| / b)^p`, the argument of the exponential.
    fn energy(&self, x: f64) -> f64 {
        ((x - self.mu).abs() / self.b).powi(self.p as i32)
    }

    fn ln_norm(&self) -> f64 {
        let p = self.shape();
        // 1/p <= 1, always inside ln_gamma's domain.
        p.ln() - (2.0 * self.b).ln() - ln_gamma(1.0 / p).expect("1/p > 0")
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_norm() - self.energy(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Mass beyond distance `|x - mu|` on one side: `Q(1/p, z^p) / 2`.
    fn one_sided_tail(&self, x: f64) -> f64 {
        let z = self.energy(x);
        0.5 * reg_upper_gamma(1.0 / self.shape(), z).expect("valid gamma arguments")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x < self.mu {
            self.one_sided_tail(x)
        } else {
            1.0 - self.one_sided_tail(x)
        }
    }

    /// `1 - cdf(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x > self.mu {
            self.one_sided_tail(x)
        } else {
            1.0 - self.one_sided_tail(x)
        }
    }

    /// `b² Γ(3/p) / Γ(1/p)`.
    pub fn variance(&self) -> f64 {
        let p = self.shape();
        let ratio =
            (ln_gamma(3.0 / p).expect("3/p > 0") - ln_gamma(1.0 / p).expect("1/p > 0")).exp();
        self.b * self.b * ratio
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Symmetric mass `P(1/p, (t/b)^p)` of `[mu - t, mu + t]`.
    pub fn central_mass(&self, t: f64) -> f64 {
        let z = (t.abs() / self.b).powi(self.p as i32);
        reg_lower_gamma(1.0 / self.shape(), z).expect("valid gamma arguments")
    }

    /// Probability of `[c0, c1]`; the truncation normalizer.
    pub fn interval_mass(&self, c0: f64, c1: f64) -> Result<f64> {
        check_interval(c0, c1)?;
        Ok(self.interval_mass_unchecked(c0, c1))
    }

    fn interval_mass_unchecked(&self, c0: f64, c1: f64) -> f64 {
        if c0 >= self.mu {
            self.one_sided_tail(c0) - self.one_sided_tail(c1)
        } else if c1 <= self.mu {
            self.one_sided_tail(c1) - self.one_sided_tail(c0)
        } else {
            1.0 - self.one_sided_tail(c0) - self.one_sided_tail(c1)
        }
    }

    /// `(P(X < c0), P(X > c1))`.
    pub fn tail_masses(&self, c0: f64, c1: f64) -> Result<(f64, f64)> {
        check_interval(c0, c1)?;
        Ok((self.cdf(c0), self.sf(c1)))
    }

    pub fn sampler(&self) -> GGSampler {
        GGSampler::new(*self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let sampler = self.sampler();
        (0..count).map(|_| sampler.draw(rng)).collect()
    }

    /// One draw conditioned on `[c0, c1]`.
    pub fn truncated_sample<R: Rng + ?Sized>(&self, c0: f64, c1: f64, rng: &mut R) -> Result<f64> {
        check_interval(c0, c1)?;
        let mass = self.interval_mass_unchecked(c0, c1);
        if mass >= REJECTION_MIN_MASS {
            let sampler = self.sampler();
            loop {
                let x = sampler.draw(rng);
                if (c0..=c1).contains(&x) {
                    return Ok(x);
                }
            }
        }
        if mass > f64::MIN_POSITIVE {
            return Ok(self.invert_on_interval(c0, c1, rng.random::<f64>()));
        }
        Ok(self.far_tail_sample(c0, c1, rng))
    }

    /// Inverse-CDF draw restricted to `[c0, c1]`, working in whichever
    /// tail coordinate keeps the target accurate.
    fn invert_on_interval(&self, c0: f64, c1: f64, u: f64) -> f64 {
        let reach = self.b * UNDERFLOW_EXPONENT.powf(1.0 / self.shape());
        let lo = c0.max(self.mu - reach).min(c1);
        let hi = c1.min(self.mu + reach).max(lo);
        let upper_side = lo >= self.mu;
        let coord = |x: f64| if upper_side { -self.sf(x) } else { self.cdf(x) };
        let (f_lo, f_hi) = (coord(lo), coord(hi));
        let target = f_lo + u * (f_hi - f_lo);
        let (mut a, mut b) = (lo, hi);
        for _ in 0..INVERSION_MAX_ITER {
            if b - a <= INVERSION_TOL * a.abs().max(b.abs()).max(1.0) {
                break;
            }
            let mid = 0.5 * (a + b);
            if coord(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        (0.5 * (a + b)).clamp(c0, c1)
    }

    /// Exact draw when the interval mass underflows: the interval lies in one
    /// tail where `-z^p` is concave, so an exponential envelope tangent at the
    /// near end dominates the density.
    fn far_tail_sample<R: Rng + ?Sized>(&self, c0: f64, c1: f64, rng: &mut R) -> f64 {
        let (near, far, dir) = if c0 >= self.mu {
            (c0, c1, 1.0)
        } else {
            (c1, c0, -1.0)
        };
        let p = self.shape();
        let z0 = (near - self.mu).abs() / self.b;
        let rate = p * z0.powf(p - 1.0) / self.b;
        let span = (far - near).abs();
        loop {
            let u: f64 = rng.random();
            // Exponential(rate) truncated to [0, span].
            let d = if span.is_finite() {
                -(1.0 - u * (1.0 - (-rate * span).exp())).ln() / rate
            } else {
                -(1.0 - u).ln() / rate
            };
            let x = near + dir * d;
            let log_accept = -(self.energy(x) - z0.powf(p) - rate * d);
            let v: f64 = rng.random();
            if v.ln() <= log_accept.min(0.0) {
                return x.clamp(c0, c1);
            }
        }
    }
}

fn check_interval(c0: f64, c1: f64) -> Result<()> {
    if c0.is_nan() || c1.is_nan() || !(c0 < c1) {
        return Err(Error::domain(format!(
            "interval requires c0 < c1, got [{c0}, {c1}]"
        )));
    }
    Ok(())
}

/// Reusable draw machinery for one parameter set.
///
/// `X = mu + S · b · G^(1/p)` with a random sign `S` and `G ~ Gamma(1/p)`.
/// The gamma shape is boosted to `1/p + 1` and corrected with `U^p`, since
/// `Gamma(a) = Gamma(a + 1) · U^(1/a)`.
#[derive(Debug, Clone)]
pub struct GGSampler {
    params: GGParams,
    boosted: Gamma<f64>,
    inv_p: f64,
}

impl GGSampler {
    pub fn new(params: GGParams) -> Self {
        let inv_p = 1.0 / params.shape();
        let boosted = Gamma::new(inv_p + 1.0, 1.0).expect("positive gamma shape");
        Self {
            params,
            boosted,
            inv_p,
        }
    }

    pub fn params(&self) -> &GGParams {
        &self.params
    }

    /// One draw of `|X - mu| / b`.
    pub fn draw_unit_magnitude<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = self.boosted.sample(rng);
        let u: f64 = rng.random();
        g.powf(self.inv_p) * u
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.draw_unit_magnitude(rng);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        self.params.mu + sign * self.params.b * m
    }
}
