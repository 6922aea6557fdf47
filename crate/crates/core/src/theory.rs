//! Closed-form limits, constants and bounds for occupancy counts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, pow, sqrt};

use crate::error::{Error, Result};
use crate::math::adaptive_simpson;
use crate::power_series::{PowerSeriesDist, PowerSeriesFamily};
use crate::scheme::{OccupancyTarget, SchemeConfig};
use crate::sum_distribution::{ln_event_probability, marginal_law};

/// Inversion tolerance for limit values; tight enough that fitted `θ`
/// contributes well under `1e-12` to any reported probability.
const LIMIT_TOL: f64 = 1e-15;

/// Absolute tolerance (scaled by `max(1, |rhs|)`) for exact identities.
pub const IDENTITY_TOL: f64 = 1e-12;

fn fitted(family: &PowerSeriesFamily, alpha: f64) -> Result<PowerSeriesDist> {
    let theta = family.mean_inverse(alpha, LIMIT_TOL)?;
    family.at(theta.get())
}

fn fitted_all(families: &[PowerSeriesFamily], alpha: &[f64]) -> Result<Vec<PowerSeriesDist>> {
    if families.len() != alpha.len() || families.is_empty() {
        return Err(Error::Precondition(format!(
            "{} families but {} means",
            families.len(),
            alpha.len()
        )));
    }
    families
        .iter()
        .zip(alpha)
        .enumerate()
        .map(|(i, (f, &a))| fitted(f, a).map_err(|e| e.in_colour(i)))
        .collect()
}

/// `Π_i pmf_i(s_i)`.
pub fn cell_probability(dists: &[PowerSeriesDist], s: &[u64]) -> Result<f64> {
    if dists.len() != s.len() {
        return Err(Error::Precondition(format!(
            "target has {} entries for {} colours",
            s.len(),
            dists.len()
        )));
    }
    Ok(dists.iter().zip(s).map(|(d, &k)| d.pmf(k)).product())
}

/// `Σ_{s_1+…+s_K = s} Π_i pmf_i(s_i)`, via convolution of the pmf vectors.
pub fn cell_probability_total(dists: &[PowerSeriesDist], s: u64) -> f64 {
    let len = s as usize + 1;
    let mut acc = vec![0.0; len];
    acc[0] = 1.0;
    for d in dists {
        let pmf: Vec<f64> = (0..len as u64).map(|k| d.pmf(k)).collect();
        acc = convolve_linear(&acc, &pmf);
    }
    acc[s as usize]
}

fn convolve_linear(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len();
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().take(len - i).enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Limit of `μ/N` for a content-vector target when `n_i/N → α_i`.
pub fn slln_limit(families: &[PowerSeriesFamily], alpha0: &[f64], s: &[u64]) -> Result<f64> {
    cell_probability(&fitted_all(families, alpha0)?, s)
}

/// Limit of `μ/N` for a colour-blind total `s`.
pub fn slln_limit_total(families: &[PowerSeriesFamily], alpha0: &[f64], s: u64) -> Result<f64> {
    Ok(cell_probability_total(&fitted_all(families, alpha0)?, s))
}

/// Constant bounding the iterated-logarithm ratio along a fixed sequence.
pub fn lil_bound_sequence(colours: usize) -> f64 {
    4.0 * sqrt(1.0 + colours as f64 / 2.0)
}

/// Constant for the uniform (sector) version of the bound.
pub fn lil_bound_sector(colours: usize) -> f64 {
    4.0 * sqrt(1.0 + 3.0 * colours as f64 / 2.0)
}

/// Lower bound `1 / (4 σ(θ_α) √N)` on `P(S_N = n)`.
pub fn fixed_sum_lower_bound(family: &PowerSeriesFamily, alpha: f64, boxes: usize) -> Result<f64> {
    let d = fitted(family, alpha)?;
    Ok(1.0 / (4.0 * sqrt(d.variance()) * sqrt(boxes as f64)))
}

/// `f₂(x) = 2 E[Z² e^{x|Z|}] − 1` for standard normal `Z`, `x ≥ 0`.
///
/// Folding onto the half-line and completing the square,
/// `E[Z² e^{x|Z|}] = 2 e^{x²/2} ∫_0^∞ z² φ(z − x) dz`; the integrand is
/// bounded by `O(1 + x²)` and is negligible past `x + 40`.
pub fn tilted_gaussian_moment(x: f64) -> Result<f64> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Precondition(format!("f2 needs a finite x >= 0, got {x}")));
    }
    let inv_sqrt_2pi = 1.0 / sqrt(2.0 * core::f64::consts::PI);
    let g = move |z: f64| z * z * exp(-0.5 * (z - x) * (z - x)) * inv_sqrt_2pi;
    let integral = adaptive_simpson(&g, 0.0, x + 40.0, 1e-14 * (1.0 + x * x));
    Ok(4.0 * exp(0.5 * x * x) * integral - 1.0)
}

/// Exponential deviation bound for `|μ − Eμ|/√N ≥ ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub epsilon: f64,
    /// `√2/P(A) · e^{−ε²/(16σ²)} · (1 + B̂)`.
    pub value: f64,
    /// As `value`, with `c · 8σ²/ε²` added to `1 + B̂`.
    pub value_with_slack: f64,
    pub b_hat: f64,
    /// `8σ²/ε²`, the size of the neglected remainder.
    pub slack_indicator: f64,
    pub event_probability: f64,
}

/// Theory values for one scheme and target, at the fitted `θ`.
#[derive(Debug, Clone)]
pub struct TheoryContext {
    pub scheme: SchemeConfig,
    pub target: OccupancyTarget,
    pub dists: Vec<PowerSeriesDist>,
    pub p: f64,
    pub sigma2: f64,
    pub rho: f64,
}

impl TheoryContext {
    pub fn new(scheme: &SchemeConfig, target: OccupancyTarget) -> Result<Self> {
        let alpha = scheme.alpha();
        let families: Vec<PowerSeriesFamily> = scheme.colours.iter().map(|c| c.family.clone()).collect();
        let dists = fitted_all(&families, &alpha)?;
        let p = match &target {
            OccupancyTarget::Vector(s) => cell_probability(&dists, s)?,
            OccupancyTarget::Total(s) => cell_probability_total(&dists, *s),
        };
        let sigma2 = p * (1.0 - p);
        Ok(TheoryContext {
            scheme: scheme.clone(),
            target,
            dists,
            p,
            sigma2,
            rho: 2.0 * sigma2,
        })
    }

    pub fn sigma(&self) -> f64 {
        sqrt(self.sigma2)
    }

    fn s_max(&self) -> u64 {
        match &self.target {
            OccupancyTarget::Vector(s) => s.iter().copied().max().unwrap_or(0),
            OccupancyTarget::Total(s) => *s,
        }
    }

    /// Exact conditional marginal laws `P(η_{ij} = k)`, `k ≤ s_max`, per colour.
    pub fn marginal_laws(&self) -> Result<Vec<Vec<f64>>> {
        let s_max = self.s_max() as usize;
        self.dists
            .iter()
            .zip(&self.scheme.colours)
            .enumerate()
            .map(|(i, (d, c))| {
                let n = c.n as usize;
                let mut law = marginal_law(d, self.scheme.boxes, n, s_max.min(n)).map_err(|e| e.in_colour(i))?;
                law.resize(s_max + 1, 0.0);
                Ok(law)
            })
            .collect()
    }

    /// Exact `E μ` from the conditional marginals.
    pub fn expected_count(&self) -> Result<f64> {
        let laws = self.marginal_laws()?;
        let boxes = self.scheme.boxes as f64;
        Ok(match &self.target {
            OccupancyTarget::Vector(s) => {
                if s.len() != laws.len() {
                    return Err(Error::Precondition(format!(
                        "target has {} entries for {} colours",
                        s.len(),
                        laws.len()
                    )));
                }
                boxes * laws.iter().zip(s).map(|(l, &k)| l[k as usize]).product::<f64>()
            }
            OccupancyTarget::Total(s) => {
                let mut acc = vec![0.0; *s as usize + 1];
                acc[0] = 1.0;
                for l in &laws {
                    acc = convolve_linear(&acc, l);
                }
                boxes * acc[*s as usize]
            }
        })
    }

    /// `P(A) = Π_i P(S_{iN} = n_i)` at the fitted `θ_i`.
    pub fn event_probability(&self) -> Result<f64> {
        let mut ln = 0.0;
        for (i, (d, c)) in self.dists.iter().zip(&self.scheme.colours).enumerate() {
            ln += ln_event_probability(d, self.scheme.boxes, c.n as usize).map_err(|e| e.in_colour(i))?;
        }
        Ok(exp(ln))
    }

    /// Smallest admissible `ε`, `4√2 σ`.
    pub fn tail_threshold(&self) -> f64 {
        4.0 * core::f64::consts::SQRT_2 * self.sigma()
    }

    pub fn tail_bound(&self, epsilon: f64, slack: f64) -> Result<TailBound> {
        self.tail_bound_with(self.event_probability()?, epsilon, slack)
    }

    /// [`tail_bound`](Self::tail_bound) with a precomputed `P(A)`.
    pub fn tail_bound_with(&self, event_probability: f64, epsilon: f64, slack: f64) -> Result<TailBound> {
        let threshold = self.tail_threshold();
        // relative slack absorbs the rounding of grid points written as 4√2σ
        if !(epsilon >= threshold * (1.0 - 1e-12)) || self.sigma2 <= 0.0 {
            return Err(Error::Precondition(format!(
                "epsilon {epsilon} is below 4√2σ = {threshold}"
            )));
        }
        let s2 = self.sigma2;
        let e2 = epsilon * epsilon;
        let y = e2 / (8.0 * s2 * s2 * sqrt(self.scheme.boxes as f64));
        let b_hat = self.rho / 32.0 * y * y * tilted_gaussian_moment(2.0 * y)?;
        let slack_indicator = 8.0 * s2 / e2;
        let lead = core::f64::consts::SQRT_2 / event_probability * exp(-e2 / (16.0 * s2));
        Ok(TailBound {
            epsilon,
            value: lead * (1.0 + b_hat),
            value_with_slack: lead * (1.0 + b_hat + slack * slack_indicator),
            b_hat,
            slack_indicator,
            event_probability,
        })
    }
}

/// Main term of the local approximation to `P(η_j = s)`:
/// `pmf(s; θ_α) √(N/(N−1)) exp{−(n − s − α(N−1))² / (2σ²(N−1))}`.
pub fn local_marginal_approx(family: &PowerSeriesFamily, s: u64, boxes: usize, n: u64) -> Result<f64> {
    if boxes < 2 {
        return Err(Error::Precondition("the local approximation needs N >= 2".into()));
    }
    let nb = boxes as f64;
    let alpha = n as f64 / nb;
    let d = fitted(family, alpha)?;
    let dev = n as f64 - s as f64 - alpha * (nb - 1.0);
    Ok(d.pmf(s) * sqrt(nb / (nb - 1.0)) * exp(-dev * dev / (2.0 * d.variance() * (nb - 1.0))))
}

/// One checked identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCase {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl IdentityCase {
    fn new(label: String, lhs: f64, rhs: f64) -> Self {
        let holds = (lhs - rhs).abs() <= IDENTITY_TOL * rhs.abs().max(1.0);
        IdentityCase { label, lhs, rhs, holds }
    }
}

/// `(b_0/B(α/K))^K` against `b_0/B(α)`, with `B` evaluated at `α` itself.
/// Equality for every `K` characterises `B(α) = b_0 e^{(b_1/b_0)α}`.
pub fn splitting_identity(family: &PowerSeriesFamily, alpha: f64, colours: usize) -> Result<IdentityCase> {
    let b0 = family.coeff(0);
    let k = colours as f64;
    let lhs = pow(b0 / family.eval_b(alpha / k, 1e-16)?, k);
    let rhs = b0 / family.eval_b(alpha, 1e-16)?;
    Ok(IdentityCase::new(
        format!("{} split K={colours} alpha={alpha}", family.name()),
        lhs,
        rhs,
    ))
}

/// Colour-blind limit of `K` identical colours with means `alpha_i` against
/// the single-colour limit at `Σ alpha_i`.
pub fn composition_identity(family: &PowerSeriesFamily, alpha: &[f64], s: u64) -> Result<IdentityCase> {
    let families = vec![family.clone(); alpha.len()];
    let lhs = slln_limit_total(&families, alpha, s)?;
    let total: f64 = alpha.iter().sum();
    let rhs = slln_limit(&[family.clone()], &[total], &[s])?;
    Ok(IdentityCase::new(
        format!("{} merge K={} alpha={:?} s={s}", family.name(), alpha.len(), alpha),
        lhs,
        rhs,
    ))
}

/// Both identity families over a grid: splitting for every `(K, α)` with
/// `α` inside the radius, and merging with even and uneven splits of `α`.
pub fn colour_identities(
    family: &PowerSeriesFamily,
    alphas: &[f64],
    split_ks: &[usize],
    merge_ks: &[usize],
    s_max: u64,
) -> Result<Vec<IdentityCase>> {
    let mut out = Vec::new();
    for &a in alphas {
        if a >= family.radius() {
            continue;
        }
        for &k in split_ks {
            out.push(splitting_identity(family, a, k)?);
        }
    }
    for &a in alphas {
        for &k in merge_ks {
            let even = vec![a / k as f64; k];
            let weight_sum = (k * (k + 1) / 2) as f64;
            let uneven: Vec<f64> = (1..=k).map(|i| a * i as f64 / weight_sum).collect();
            for s in 0..=s_max {
                out.push(composition_identity(family, &even, s)?);
                if k > 1 {
                    out.push(composition_identity(family, &uneven, s)?);
                }
            }
        }
    }
    Ok(out)
}

/// Multiplying every `b_k` by `c` leaves the limits and the conditional law unchanged.
pub fn scale_invariance(family: &PowerSeriesFamily, factor: f64, alpha: f64, s_max: u64) -> Result<Vec<IdentityCase>> {
    let scaled = family.scaled(factor)?;
    let mut out = Vec::new();
    for s in 0..=s_max {
        out.push(IdentityCase::new(
            format!("{} scaled by {factor}: limit s={s}", family.name()),
            slln_limit(&[scaled.clone()], &[alpha], &[s])?,
            slln_limit(&[family.clone()], &[alpha], &[s])?,
        ));
    }
    let counts = [2u64, 0, 1, 3];
    out.push(IdentityCase::new(
        format!("{} scaled by {factor}: conditional law {counts:?}", family.name()),
        crate::sampler::exact_conditional_prob(&scaled, &counts)?,
        crate::sampler::exact_conditional_prob(family, &counts)?,
    ));
    Ok(out)
}

/// Candidate limit values for the geometric family set against the exact
/// finite-`N` marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitArbitration {
    pub alpha: f64,
    pub s: u64,
    pub boxes: usize,
    pub n: u64,
    /// Exact `P(η_1 = s)` at `(N, n)`.
    pub oracle: f64,
    /// `(label, value)` pairs; the first is the general formula.
    pub candidates: Vec<(String, f64)>,
    /// Index of the candidate closest to the oracle.
    pub nearest: usize,
}

impl LimitArbitration {
    pub fn verdict(&self) -> String {
        let (label, value) = &self.candidates[self.nearest];
        format!(
            "exact marginal {:.6} at N={}, n={} is closest to `{label}` ({value:.6}, |diff| = {:.2e})",
            self.oracle,
            self.boxes,
            self.n,
            (self.oracle - value).abs()
        )
    }

    pub fn general_formula_wins(&self) -> bool {
        self.nearest == 0
    }
}

/// Arbitrates the geometric mean map: the general `m(θ) = θB'/B` gives the
/// limit `pmf(s; α/(1+α))`, while the reading `θ = 1/α` gives
/// `(1/α)^s (1 − 1/α)`. The product with a Poisson(1) companion at `s₂ = 0`
/// is listed too, since that value is often quoted for the two-colour case.
pub fn arbitrate_geometric_limit(alpha: f64, s: u64, boxes: usize, n: u64) -> Result<LimitArbitration> {
    let g = PowerSeriesFamily::geometric();
    let general = slln_limit(&[g.clone()], &[alpha], &[s])?;
    let inverse_reading = pow(1.0 / alpha, s as f64) * (1.0 - 1.0 / alpha);
    let with_companion = inverse_reading * exp(-1.0);
    let dist = g.at(g.mean_inverse(n as f64 / boxes as f64, LIMIT_TOL)?.get())?;
    let oracle = marginal_law(&dist, boxes, n as usize, s as usize)?[s as usize];
    let candidates = vec![
        (String::from("general formula pmf(s; m^-1(alpha))"), general),
        (String::from("theta = 1/alpha reading (1/alpha)^s (1 - 1/alpha)"), inverse_reading),
        (String::from("theta = 1/alpha reading times Poisson(1) pmf at 0"), with_companion),
    ];
    let nearest = candidates
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 .1 - oracle)
                .abs()
                .partial_cmp(&(b.1 .1 - oracle).abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(LimitArbitration {
        alpha,
        s,
        boxes,
        n,
        oracle,
        candidates,
        nearest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{compositions, ln_factorial};
    use crate::scheme::ColourSpec;
    use approx::assert_relative_eq;
    use libm::{erfc, log};
    use proptest::prelude::*;

    fn poisson_pmf(lambda: f64, k: u64) -> f64 {
        exp(-lambda + k as f64 * log(lambda) - ln_factorial(k))
    }

    #[test]
    fn cell_probability_examples() {
        let p = PowerSeriesFamily::poisson();
        assert_relative_eq!(slln_limit(&[p.clone()], &[1.0], &[0]).unwrap(), exp(-1.0), max_relative = 1e-13);
        let two = slln_limit(&[p.clone(), p.clone()], &[1.0, 2.0], &[1, 1]).unwrap();
        assert_relative_eq!(two, 2.0 * exp(-3.0), max_relative = 1e-13);
        let b = PowerSeriesFamily::binomial(2).unwrap();
        assert_eq!(slln_limit(&[b], &[1.0], &[3]).unwrap(), 0.0);
        let d = [p.at(1.2).unwrap(), PowerSeriesFamily::geometric().at(0.3).unwrap()];
        assert_eq!(cell_probability(&d, &[2, 1]).unwrap(), d[0].pmf(2) * d[1].pmf(1));
    }

    #[test]
    fn slln_limit_examples() {
        let p = PowerSeriesFamily::poisson();
        let g = PowerSeriesFamily::geometric();
        assert_relative_eq!(slln_limit(&[p.clone()], &[1.0], &[2]).unwrap(), exp(-1.0) / 2.0, max_relative = 1e-13);
        assert_relative_eq!(slln_limit(&[g.clone()], &[2.0], &[0]).unwrap(), 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(
            slln_limit(&[g, p.clone()], &[2.0, 1.0], &[0, 0]).unwrap(),
            exp(-1.0) / 3.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            slln_limit_total(&[p.clone(), p.clone()], &[1.0, 1.0], 1).unwrap(),
            2.0 * exp(-2.0),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            slln_limit_total(&[p.clone()], &[1.7], 3).unwrap(),
            slln_limit(&[p], &[1.7], &[3]).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn slln_limit_total_matches_enumeration() {
        let fams = [PowerSeriesFamily::poisson(), PowerSeriesFamily::geometric(), PowerSeriesFamily::binomial(3).unwrap()];
        let alpha = [0.7, 1.5, 2.2];
        for s in 0..8u64 {
            let direct: f64 = compositions(s, 3)
                .iter()
                .map(|c| slln_limit(&fams, &alpha, c).unwrap())
                .sum();
            assert_relative_eq!(slln_limit_total(&fams, &alpha, s).unwrap(), direct, max_relative = 1e-12);
        }
        let sum: f64 = (0..=50).map(|s| slln_limit_total(&fams[..1], &[1.0], s).unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn slln_limit_is_continuous() {
        let g = PowerSeriesFamily::geometric();
        for i in 1..40 {
            let a = 0.1 * i as f64;
            let d = slln_limit(&[g.clone()], &[a], &[1]).unwrap() - slln_limit(&[g.clone()], &[a + 1e-6], &[1]).unwrap();
            assert!(d.abs() < 1e-4);
        }
    }

    #[test]
    fn lil_constants() {
        assert_relative_eq!(lil_bound_sequence(1), 4.898979485566356, max_relative = 1e-14);
        assert_relative_eq!(lil_bound_sector(1), 6.324555320336759, max_relative = 1e-14);
        assert_relative_eq!(lil_bound_sequence(2), 5.656854249492381, max_relative = 1e-14);
        assert_relative_eq!(lil_bound_sector(2), 8.0, max_relative = 1e-14);
        assert!((1..20).all(|k| lil_bound_sequence(k) < lil_bound_sequence(k + 1)));
    }

    #[test]
    fn fixed_sum_lower_bound_examples() {
        let p = PowerSeriesFamily::poisson();
        assert_relative_eq!(fixed_sum_lower_bound(&p, 1.0, 100).unwrap(), 0.025, max_relative = 1e-12);
        let a = fixed_sum_lower_bound(&p, 1.0, 100).unwrap();
        let b = fixed_sum_lower_bound(&p, 1.0, 400).unwrap();
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-12);
        let g = PowerSeriesFamily::geometric();
        assert_relative_eq!(
            fixed_sum_lower_bound(&g, 1.0, 400).unwrap(),
            1.0 / (4.0 * sqrt(2.0) * 20.0),
            max_relative = 1e-10
        );
    }

    fn f2_closed(x: f64) -> f64 {
        let phi = exp(-0.5 * x * x) / sqrt(2.0 * core::f64::consts::PI);
        let cdf = 0.5 * erfc(-x / core::f64::consts::SQRT_2);
        4.0 * exp(0.5 * x * x) * ((1.0 + x * x) * cdf + x * phi) - 1.0
    }

    fn f2_trapezoid(x: f64) -> f64 {
        let steps = 2_000_000;
        let hi = x + 40.0;
        let h = hi / steps as f64;
        let f = |z: f64| 4.0 * z * z * exp(x * z - 0.5 * z * z) / sqrt(2.0 * core::f64::consts::PI);
        let inner: f64 = (1..steps).map(|i| f(i as f64 * h)).sum();
        h * (inner + 0.5 * (f(0.0) + f(hi))) - 1.0
    }

    #[test]
    fn f2_examples() {
        assert_relative_eq!(tilted_gaussian_moment(0.0).unwrap(), 1.0, max_relative = 1e-12);
        assert!((tilted_gaussian_moment(1.0).unwrap() - f2_trapezoid(1.0)).abs() < 1e-6);
        for x in [0.0, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0] {
            assert_relative_eq!(tilted_gaussian_moment(x).unwrap(), f2_closed(x), max_relative = 1e-8);
        }
        let grid: Vec<f64> = (0..60).map(|i| tilted_gaussian_moment(0.1 * i as f64).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(grid.iter().all(|&v| v >= 1.0));
        assert!(tilted_gaussian_moment(-1.0).is_err());
    }

    fn poisson_context(boxes: usize, n: u64, s: u64) -> TheoryContext {
        let scheme = SchemeConfig::single(PowerSeriesFamily::poisson(), boxes, n).unwrap();
        TheoryContext::new(&scheme, OccupancyTarget::Vector(vec![s])).unwrap()
    }

    #[test]
    fn context_values() {
        let ctx = poisson_context(1000, 1000, 0);
        assert_relative_eq!(ctx.p, exp(-1.0), max_relative = 1e-13);
        assert_relative_eq!(ctx.sigma2, exp(-1.0) * (1.0 - exp(-1.0)), max_relative = 1e-13);
        assert_relative_eq!(ctx.rho, 2.0 * ctx.sigma2);
        // E μ = N (1 − 1/N)^n for an empty box under uniform placement
        assert_relative_eq!(
            ctx.expected_count().unwrap(),
            1000.0 * pow(1.0 - 1e-3, 1000.0),
            max_relative = 1e-10
        );
        assert_relative_eq!(ctx.event_probability().unwrap(), poisson_pmf(1000.0, 1000), max_relative = 1e-9);
    }

    #[test]
    fn expected_total_count_matches_vector_sum() {
        let scheme = SchemeConfig::new(
            vec![
                ColourSpec::new(PowerSeriesFamily::poisson(), 30),
                ColourSpec::new(PowerSeriesFamily::geometric(), 45),
            ],
            20,
        )
        .unwrap();
        for s in 0..5u64 {
            let total = TheoryContext::new(&scheme, OccupancyTarget::Total(s)).unwrap().expected_count().unwrap();
            let parts: f64 = compositions(s, 2)
                .into_iter()
                .map(|c| TheoryContext::new(&scheme, OccupancyTarget::Vector(c)).unwrap().expected_count().unwrap())
                .sum();
            assert_relative_eq!(total, parts, max_relative = 1e-12);
        }
    }

    #[test]
    fn tail_bound_behaviour() {
        let ctx = poisson_context(1000, 1000, 0);
        let sigma = ctx.sigma();
        let b0 = ctx.tail_bound(ctx.tail_threshold(), 1.0).unwrap();
        assert!(b0.value.is_finite() && b0.value > 0.0);
        assert!(b0.value_with_slack > b0.value);
        assert_relative_eq!(b0.slack_indicator, 8.0 / 32.0, max_relative = 1e-12);
        // decreasing up to about 7σ; further out the B̂ factor takes over at this N
        let mut last = f64::INFINITY;
        for i in 0..=30 {
            let eps = ctx.tail_threshold() + (7.0 * sigma - ctx.tail_threshold()) * i as f64 / 30.0;
            let b = ctx.tail_bound(eps, 1.0).unwrap();
            assert!(b.value >= 0.0 && b.value < last);
            last = b.value;
        }
        let coarse: Vec<f64> = [ctx.tail_threshold(), 6.0 * sigma, 8.0 * sigma]
            .iter()
            .map(|&e| ctx.tail_bound(e, 1.0).unwrap().value)
            .collect();
        assert!(coarse[0] > coarse[1] && coarse[1] > coarse[2]);
        assert!(ctx.tail_bound(12.0 * sigma, 1.0).unwrap().value > coarse[2]);
        assert!(matches!(ctx.tail_bound(5.0 * sigma, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn local_approximation_converges() {
        let p = PowerSeriesFamily::poisson();
        let mut prev = f64::INFINITY;
        for boxes in [100usize, 1000, 10_000] {
            let d = p.at(1.0).unwrap();
            let exact = marginal_law(&d, boxes, boxes, 1).unwrap()[1];
            let approx = local_marginal_approx(&p, 1, boxes, boxes as u64).unwrap();
            let err = (approx / exact - 1.0).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 0.02);
        // everything in one box
        let d = p.at(1.0).unwrap();
        let exact = marginal_law(&d, 200, 200, 200).unwrap()[200];
        assert!(exact < 1e-300 && local_marginal_approx(&p, 200, 200, 200).unwrap() < 1e-300);
    }

    #[test]
    fn identities() {
        let cases = colour_identities(&PowerSeriesFamily::poisson(), &[0.5, 1.0, 2.0], &[2, 3, 5], &[2, 3], 5).unwrap();
        assert!(cases.iter().all(|c| c.holds), "{:?}", cases.iter().find(|c| !c.holds));
        let g = splitting_identity(&PowerSeriesFamily::geometric(), 0.8, 2).unwrap();
        assert_relative_eq!(g.lhs, 0.36, max_relative = 1e-12);
        assert_relative_eq!(g.rhs, 0.2, max_relative = 1e-12);
        assert!(!g.holds);
        let k1 = splitting_identity(&PowerSeriesFamily::geometric(), 0.8, 1).unwrap();
        assert!(k1.holds);
        for fam in [PowerSeriesFamily::geometric(), PowerSeriesFamily::binomial(4).unwrap()] {
            assert!(scale_invariance(&fam, 3.5, 0.9, 4).unwrap().iter().all(|c| c.holds));
        }
    }

    #[test]
    fn geometric_arbitration() {
        let a = arbitrate_geometric_limit(2.0, 0, 2000, 4000).unwrap();
        // exact count of compositions: P(η = 0) = (N − 1)/(n + N − 1)
        assert_relative_eq!(a.oracle, 1999.0 / 5999.0, max_relative = 1e-10);
        assert!(a.general_formula_wins());
        assert_relative_eq!(a.candidates[1].1, 0.5);
        assert_relative_eq!(a.candidates[2].1, 0.18393972058572117, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn lower_bound_holds_on_small_grid(boxes in 2usize..200, alpha in 0.2f64..3.0) {
            for fam in [PowerSeriesFamily::poisson(), PowerSeriesFamily::geometric()] {
                let n = (alpha * boxes as f64).round() as usize;
                if n == 0 { continue; }
                let a = n as f64 / boxes as f64;
                let d = fam.at(fam.mean_inverse(a, 1e-13).unwrap().get()).unwrap();
                let exact = exp(ln_event_probability(&d, boxes, n).unwrap());
                prop_assert!(exact > fixed_sum_lower_bound(&fam, a, boxes).unwrap());
            }
        }
    }
}
