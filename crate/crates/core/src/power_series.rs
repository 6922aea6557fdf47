//! Power-series distributions `P(ξ = k) = b_k θ^k / (k! B(θ))`.
//!
//! A [`PowerSeriesFamily`] holds the coefficient sequence `b_k` and the
//! convergence radius of `B(θ) = Σ b_k θ^k / k!`. Evaluating it at a
//! particular `θ` yields a [`PowerSeriesDist`], which caches `ln B(θ)`, the
//! first two moments and a CDF for sampling.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use libm::{exp, expm1, log};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{ln_choose, ln_factorial};

/// Default relative tolerance for truncating `B(θ)` and its derivatives.
pub const DEFAULT_TOL: f64 = 1e-15;

/// Default tolerance used when inverting the mean map.
pub const DEFAULT_INVERSE_TOL: f64 = 1e-13;

/// Number of consecutive non-increasing term ratios required before the
/// geometric tail bound is trusted.
const RATIO_WINDOW: usize = 8;

const MAX_TERMS: usize = 20_000_000;

/// Extra terms a sampler may compute beyond the cached CDF.
const SAMPLE_EXTENSION: u64 = 1_000_000;

type CoeffFn = dyn Fn(u64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Coefficients {
    Poisson,
    Geometric,
    Binomial(u64),
    Explicit(Vec<f64>),
    Generator(Arc<CoeffFn>),
}

/// Families whose conditional law has a direct combinatorial sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// `b_k = 1`: balls thrown uniformly into boxes.
    Poisson,
    /// `b_k = k!`: uniform compositions.
    Geometric,
    /// `b_k = m!/(m-k)!`: boxes with `m` distinguishable slots each.
    Binomial(u64),
}

#[derive(Clone)]
pub struct PowerSeriesFamily {
    name: String,
    coeffs: Coefficients,
    radius: f64,
    support_bound: Option<u64>,
}

impl fmt::Debug for PowerSeriesFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PowerSeriesFamily")
            .field("name", &self.name)
            .field("radius", &self.radius)
            .field("support_bound", &self.support_bound)
            .finish()
    }
}

impl PowerSeriesFamily {
    pub fn poisson() -> Self {
        PowerSeriesFamily {
            name: "poisson".to_string(),
            coeffs: Coefficients::Poisson,
            radius: f64::INFINITY,
            support_bound: None,
        }
    }

    pub fn geometric() -> Self {
        PowerSeriesFamily {
            name: "geometric".to_string(),
            coeffs: Coefficients::Geometric,
            radius: 1.0,
            support_bound: None,
        }
    }

    /// `b_k = m!/(m-k)!` for `k <= m`; `B(θ) = (1 + θ)^m`.
    pub fn binomial(m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidFamily("binomial(0) has b_1 = 0".to_string()));
        }
        Ok(PowerSeriesFamily {
            name: format!("binomial({m})"),
            coeffs: Coefficients::Binomial(m),
            radius: f64::INFINITY,
            support_bound: Some(m),
        })
    }

    /// Finite coefficient list `[b_0, b_1, ...]`. Trailing zeros are dropped,
    /// and the support bound is the index of the last positive coefficient.
    pub fn explicit(name: impl Into<String>, mut coeffs: Vec<f64>, radius: f64) -> Result<Self> {
        while coeffs.len() > 2 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.len() < 2 {
            return Err(Error::InvalidFamily(
                "at least b_0 and b_1 are required".to_string(),
            ));
        }
        validate_leading(coeffs[0], coeffs[1])?;
        if let Some((k, b)) = coeffs
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b >= 0.0))
        {
            return Err(Error::InvalidFamily(format!("b_{k} = {b} is not a non-negative real")));
        }
        validate_radius(radius)?;
        let family = PowerSeriesFamily {
            name: name.into(),
            support_bound: Some(coeffs.len() as u64 - 1),
            coeffs: Coefficients::Explicit(coeffs),
            radius,
        };
        family.probe_radius()?;
        Ok(family)
    }

    /// Coefficients produced on demand by `coeff`.
    pub fn generator(
        name: impl Into<String>,
        coeff: impl Fn(u64) -> f64 + Send + Sync + 'static,
        radius: f64,
        support_bound: Option<u64>,
    ) -> Result<Self> {
        validate_leading(coeff(0), coeff(1))?;
        let probe = support_bound.unwrap_or(64).min(64);
        for k in 0..=probe {
            let b = coeff(k);
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::InvalidFamily(format!("b_{k} = {b} is not a non-negative real")));
            }
        }
        validate_radius(radius)?;
        let family = PowerSeriesFamily {
            name: name.into(),
            coeffs: Coefficients::Generator(Arc::new(coeff)),
            radius,
            support_bound,
        };
        family.probe_radius()?;
        Ok(family)
    }

    /// Builtin family by name: `poisson`, `geometric` or `binomial(m)`.
    pub fn by_name(name: &str) -> Result<Self> {
        let name = name.trim();
        match name {
            "poisson" => Ok(Self::poisson()),
            "geometric" => Ok(Self::geometric()),
            _ => {
                let inner = name
                    .strip_prefix("binomial(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .ok_or_else(|| Error::InvalidFamily(format!("unknown family `{name}`")))?;
                let m = inner
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidFamily(format!("bad binomial size in `{name}`")))?;
                Self::binomial(m)
            }
        }
    }

    /// The same family with every coefficient multiplied by `factor`. The
    /// distribution of `ξ(θ)` does not change.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidFamily(format!("scale factor {factor} must be positive")));
        }
        let inner = self.clone();
        let support = self.support_bound;
        Ok(PowerSeriesFamily {
            name: format!("{}*{}", factor, self.name),
            coeffs: Coefficients::Generator(Arc::new(move |k| match support {
                Some(sb) if k > sb => 0.0,
                _ => factor * inner.coeff(k),
            })),
            radius: self.radius,
            support_bound: self.support_bound,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn support_bound(&self) -> Option<u64> {
        self.support_bound
    }

    pub fn builtin(&self) -> Option<Builtin> {
        match self.coeffs {
            Coefficients::Poisson => Some(Builtin::Poisson),
            Coefficients::Geometric => Some(Builtin::Geometric),
            Coefficients::Binomial(m) => Some(Builtin::Binomial(m)),
            _ => None,
        }
    }

    /// The coefficient `b_k`.
    pub fn coeff(&self, k: u64) -> f64 {
        if matches!(self.support_bound, Some(sb) if k > sb) {
            return 0.0;
        }
        match &self.coeffs {
            Coefficients::Poisson => 1.0,
            Coefficients::Geometric => exp(ln_factorial(k)),
            Coefficients::Binomial(m) => (0..k).map(|i| (m - i) as f64).product(),
            Coefficients::Explicit(c) => c[k as usize],
            Coefficients::Generator(f) => f(k),
        }
    }

    /// `ln(b_k / k!)`, `-inf` when `b_k = 0`.
    pub fn ln_weight(&self, k: u64) -> f64 {
        if matches!(self.support_bound, Some(sb) if k > sb) {
            return f64::NEG_INFINITY;
        }
        match &self.coeffs {
            Coefficients::Poisson => -ln_factorial(k),
            Coefficients::Geometric => 0.0,
            Coefficients::Binomial(m) => ln_choose(*m, k),
            Coefficients::Explicit(c) => ln_or_neg_inf(c[k as usize]) - ln_factorial(k),
            Coefficients::Generator(f) => ln_or_neg_inf(f(k)) - ln_factorial(k),
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if theta.is_finite() && theta > 0.0 && theta < self.radius {
            Ok(())
        } else {
            Err(Error::Domain {
                theta,
                radius: self.radius,
            })
        }
    }

    fn probe_radius(&self) -> Result<()> {
        let theta = if self.radius.is_finite() {
            self.radius / 2.0
        } else {
            1.0
        };
        self.series(theta, DEFAULT_TOL).map(|_| ()).map_err(|e| {
            Error::InvalidFamily(format!("B(θ) failed at θ = {theta} inside the declared radius: {e}"))
        })
    }

    /// Log terms `ln(b_k θ^k / k!)` up to a truncation index whose neglected
    /// tail (weighted by `k²`, so moments are covered as well) is below
    /// `tol` times the partial sum.
    fn series(&self, theta: f64, tol: f64) -> Result<Series> {
        self.check_theta(theta)?;
        if !(tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance {tol} must be positive")));
        }
        let ln_theta = log(theta);
        let ln_tol = log(tol);
        let mut terms = Vec::new();
        let mut max = f64::NEG_INFINITY;
        // running sum of exp(term - max)
        let mut acc = 0.0f64;
        let mut prev: Option<(u64, f64)> = None;
        let mut ratios = [0.0f64; RATIO_WINDOW];
        let mut n_ratios = 0usize;

        for k in 0u64.. {
            if terms.len() >= MAX_TERMS {
                return Err(Error::NonConvergence { terms: terms.len() });
            }
            if matches!(self.support_bound, Some(sb) if k > sb) {
                break;
            }
            let w = self.ln_weight(k);
            let lt = if w == f64::NEG_INFINITY {
                w
            } else {
                w + k as f64 * ln_theta
            };
            terms.push(lt);
            if lt == f64::NEG_INFINITY {
                continue;
            }
            if lt > max {
                acc = acc * exp(max - lt) + 1.0;
                max = lt;
            } else {
                acc += exp(lt - max);
            }
            if self.support_bound.is_some() {
                continue;
            }

            let u = lt + 2.0 * log((k + 1) as f64);
            if let Some((pk, pu)) = prev {
                let r = (u - pu) / (k - pk) as f64;
                ratios.copy_within(1.., 0);
                ratios[RATIO_WINDOW - 1] = r;
                n_ratios += 1;
            }
            prev = Some((k, u));
            if n_ratios >= RATIO_WINDOW {
                let settled = ratios[RATIO_WINDOW - 1] < 0.0
                    && ratios.windows(2).all(|p| p[1] <= p[0] + 1e-12);
                if settled {
                    let r = ratios[RATIO_WINDOW - 1];
                    // Σ_{j>k} u_j ≤ u_k q / (1 - q) with q = e^r
                    let ln_tail = u + r - log(-expm1(r));
                    if ln_tail <= ln_tol + max + log(acc) {
                        break;
                    }
                }
            }
        }
        let ln_sum = max + log(acc);
        Ok(Series { terms, ln_sum })
    }

    /// `B(θ)`.
    pub fn eval_b(&self, theta: f64, tol: f64) -> Result<f64> {
        Ok(exp(self.series(theta, tol)?.ln_sum))
    }

    /// `ln B(θ)`; finite even where `B(θ)` itself overflows.
    pub fn ln_b(&self, theta: f64, tol: f64) -> Result<f64> {
        Ok(self.series(theta, tol)?.ln_sum)
    }

    /// The distribution of `ξ(θ)`.
    pub fn at(&self, theta: f64) -> Result<PowerSeriesDist> {
        PowerSeriesDist::new(self.clone(), theta, DEFAULT_TOL)
    }

    /// The distribution with mean `alpha`.
    pub fn fit(&self, alpha: f64) -> Result<PowerSeriesDist> {
        let theta = self.mean_inverse(alpha, DEFAULT_INVERSE_TOL)?;
        self.at(theta.get())
    }

    pub fn pmf(&self, theta: f64, k: u64) -> Result<f64> {
        Ok(exp(self.log_pmf(theta, k)?))
    }

    pub fn log_pmf(&self, theta: f64, k: u64) -> Result<f64> {
        let ln_b = self.ln_b(theta, DEFAULT_TOL)?;
        Ok(log_pmf_with(self, log(theta), ln_b, k))
    }

    /// `m(θ) = θ B'(θ) / B(θ)`.
    pub fn mean(&self, theta: f64) -> Result<f64> {
        Ok(self.series(theta, DEFAULT_TOL)?.moments().0)
    }

    /// `σ²(θ) = θ² B''/B + θ B'/B - θ² (B'/B)²`.
    pub fn variance(&self, theta: f64) -> Result<f64> {
        let (_, var) = self.series(theta, DEFAULT_TOL)?.moments();
        check_variance(var)
    }

    /// Inverse of the strictly increasing mean map, by geometric bracketing
    /// toward the radius followed by bisection.
    pub fn mean_inverse(&self, alpha: f64, tol: f64) -> Result<ThetaValue> {
        let range_err = |reason: &str| Error::Range {
            alpha,
            reason: reason.to_string(),
        };
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(range_err("the mean map takes values in (0, sup)"));
        }
        if let Some(sb) = self.support_bound {
            if alpha >= sb as f64 {
                return Err(range_err("mean must be below the support bound"));
            }
        }
        let mean_at = |theta: f64| -> Result<f64> {
            self.mean(theta)
                .map_err(|e| range_err(&format!("bracket reached the radius ({e})")))
        };

        let mut lo = 0.0f64;
        let mut hi = if self.radius.is_finite() {
            self.radius / 2.0
        } else {
            1.0
        };
        let mut bracketed = false;
        for _ in 0..2048 {
            if mean_at(hi)? >= alpha {
                bracketed = true;
                break;
            }
            lo = hi;
            hi = if self.radius.is_finite() {
                0.5 * (hi + self.radius)
            } else {
                2.0 * hi
            };
            if !(hi < self.radius) || hi == lo || !hi.is_finite() {
                break;
            }
        }
        if !bracketed {
            return Err(range_err("bracket reached the radius without enclosing the mean"));
        }

        let target = tol * alpha.max(1.0);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..400 {
            mid = 0.5 * (lo + hi);
            let m = mean_at(mid)?;
            if (m - alpha).abs() <= target {
                break;
            }
            if m < alpha {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(ThetaValue(mid))
    }
}

fn ln_or_neg_inf(b: f64) -> f64 {
    if b > 0.0 {
        log(b)
    } else {
        f64::NEG_INFINITY
    }
}

fn validate_leading(b0: f64, b1: f64) -> Result<()> {
    if b0 > 0.0 && b1 > 0.0 && b0.is_finite() && b1.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidFamily(format!(
            "b_0 and b_1 must be positive (got {b0}, {b1})"
        )))
    }
}

fn validate_radius(radius: f64) -> Result<()> {
    if radius > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidFamily(format!("radius {radius} must be positive")))
    }
}

fn check_variance(var: f64) -> Result<f64> {
    if var > 0.0 && var.is_finite() {
        Ok(var)
    } else {
        Err(Error::Internal(format!("variance {var} is not positive")))
    }
}

fn log_pmf_with(family: &PowerSeriesFamily, ln_theta: f64, ln_b: f64, k: u64) -> f64 {
    let w = family.ln_weight(k);
    if w == f64::NEG_INFINITY {
        w
    } else {
        w + k as f64 * ln_theta - ln_b
    }
}

struct Series {
    terms: Vec<f64>,
    ln_sum: f64,
}

impl Series {
    fn weights(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.terms
            .iter()
            .enumerate()
            .map(move |(k, lt)| (k as f64, exp(lt - self.ln_sum)))
    }

    fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.weights().map(|(k, w)| k * w).sum();
        let var: f64 = self.weights().map(|(k, w)| (k - mean) * (k - mean) * w).sum();
        (mean, var)
    }
}

/// A parameter value inside the convergence disc of a family.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ThetaValue(f64);

impl ThetaValue {
    pub fn new(family: &PowerSeriesFamily, theta: f64) -> Result<Self> {
        family.check_theta(theta)?;
        Ok(ThetaValue(theta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `ξ(θ)` for a fixed family and `θ`.
#[derive(Debug, Clone)]
pub struct PowerSeriesDist {
    family: PowerSeriesFamily,
    theta: f64,
    ln_theta: f64,
    ln_b: f64,
    mean: f64,
    variance: f64,
    cdf: Vec<f64>,
}

impl PowerSeriesDist {
    pub fn new(family: PowerSeriesFamily, theta: f64, tol: f64) -> Result<Self> {
        let series = family.series(theta, tol)?;
        let (mean, variance) = series.moments();
        let variance = check_variance(variance)?;
        let mut cum = 0.0;
        let cdf = series
            .weights()
            .map(|(_, w)| {
                cum += w;
                cum
            })
            .collect();
        Ok(PowerSeriesDist {
            family,
            theta,
            ln_theta: log(theta),
            ln_b: series.ln_sum,
            mean,
            variance,
            cdf,
        })
    }

    pub fn family(&self) -> &PowerSeriesFamily {
        &self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn ln_b(&self) -> f64 {
        self.ln_b
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Index past which the cached series was truncated.
    pub fn truncation(&self) -> u64 {
        self.cdf.len() as u64 - 1
    }

    pub fn log_pmf(&self, k: u64) -> f64 {
        log_pmf_with(&self.family, self.ln_theta, self.ln_b, k)
    }

    pub fn pmf(&self, k: u64) -> f64 {
        exp(self.log_pmf(k))
    }

    /// `ln P(ξ = k)` for `k < len`.
    pub fn log_pmf_vec(&self, len: usize) -> Vec<f64> {
        (0..len as u64).map(|k| self.log_pmf(k)).collect()
    }

    /// Inverse-CDF draw; terms past the cached truncation are computed on demand.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx < self.cdf.len() {
            return Ok(idx as u64);
        }
        if self.family.support_bound.is_some() {
            // rounding left the cumulative sum just below u
            let last = (0..self.cdf.len() as u64)
                .rev()
                .find(|&k| self.log_pmf(k) > f64::NEG_INFINITY)
                .unwrap_or(0);
            return Ok(last);
        }
        let mut cum = *self.cdf.last().unwrap_or(&0.0);
        let first = self.cdf.len() as u64;
        for k in first..first + SAMPLE_EXTENSION {
            cum += self.pmf(k);
            if cum > u {
                return Ok(k);
            }
        }
        Err(Error::NonConvergence {
            terms: (first + SAMPLE_EXTENSION) as usize,
        })
    }
}
