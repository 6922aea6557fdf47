//! Oracle cross-validation suites: samplers against enumeration, θ-invariance,
//! the fixed-sum lower bound, the local marginal approximation and the
//! colour identities.

use std::collections::HashMap;

use alloc_lab_core::math::compositions;
use alloc_lab_core::sampler::{exact_conditional_prob, exact_conditional_prob_at, RowSampler, SamplerStrategy, DEFAULT_ENUMERATION_GUARD};
use alloc_lab_core::sum_distribution::{ln_event_probability, marginal_law};
use alloc_lab_core::theory::{
    colour_identities, fixed_sum_lower_bound, local_marginal_approx, scale_invariance, splitting_identity, IdentityCase,
    IDENTITY_TOL,
};
use alloc_lab_core::{Builtin, PowerSeriesFamily};
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::Kind;
use crate::error::LabError;
use crate::harness::{derive_seed, rng_for};
use crate::report::{num, Check, ExperimentReport};

/// TV threshold for single-sample and two-sample sampler checks.
pub const SAMPLER_TV: f64 = 0.005;
/// TV threshold between the empirical laws at two values of `θ`.
pub const THETA_TV: f64 = 0.01;
/// Chi-square p-value below which a sampler is rejected.
pub const CHI_SQUARE_P: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    /// Draws per sampler for the TV checks.
    pub draws: u64,
    /// Draws for the chi-square goodness-of-fit check.
    pub chi_draws: u64,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            draws: 1_000_000,
            chi_draws: 100_000,
            seed: 0,
        }
    }
}

pub type Law = HashMap<Vec<u64>, f64>;

/// Conditional law by brute force: weights `Π b_{k_j}/k_j!` normalised over
/// every composition of `n` into `boxes` parts.
pub fn enumerate_law(family: &PowerSeriesFamily, boxes: usize, n: u64) -> Law {
    let weight = |c: &[u64]| -> f64 {
        c.iter()
            .map(|&k| {
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                family.coeff(k) / fact
            })
            .product()
    };
    let all = compositions(n, boxes);
    let total: f64 = all.iter().map(|c| weight(c)).sum();
    all.into_iter()
        .map(|c| {
            let w = weight(&c) / total;
            (c, w)
        })
        .collect()
}

/// Half the L1 distance, over the union of supports.
pub fn total_variation(a: &Law, b: &Law) -> f64 {
    let mut sum = 0.0;
    for (k, &p) in a {
        sum += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            sum += q;
        }
    }
    0.5 * sum
}

/// Empirical law of `draws` rows from `sampler`.
pub fn empirical_law(sampler: &RowSampler, draws: u64, seed: u64) -> Result<Law, LabError> {
    let mut rng = rng_for(seed);
    let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut row = vec![0; sampler.boxes()];
    for _ in 0..draws {
        sampler.fill(&mut rng, &mut row)?;
        *counts.entry(row.clone()).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / draws as f64))
        .collect())
}

/// Pearson goodness-of-fit p-value of `empirical` (frequencies over `draws`)
/// against `truth`.
pub fn chi_square_p_value(empirical: &Law, truth: &Law, draws: u64) -> Result<f64, LabError> {
    let m = draws as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (k, &p) in truth {
        if p <= 0.0 {
            continue;
        }
        let observed = empirical.get(k).copied().unwrap_or(0.0) * m;
        let expected = p * m;
        stat += (observed - expected).powi(2) / expected;
        cells += 1;
    }
    if empirical.keys().any(|k| truth.get(k).copied().unwrap_or(0.0) <= 0.0) {
        return Ok(0.0);
    }
    let dof = (cells.max(2) - 1) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| LabError::Runtime(format!("chi-square: {e}")))?;
    Ok(chi.sf(stat))
}

fn reference_theta(family: &PowerSeriesFamily, boxes: usize, n: u64) -> Result<f64, LabError> {
    Ok(family.mean_inverse(n as f64 / boxes as f64, 1e-13)?.get())
}

/// Sampler exactness on every composition of `n` into `boxes` parts.
pub fn sampler_suite(
    report: &mut ExperimentReport,
    family: &PowerSeriesFamily,
    boxes: usize,
    n: u64,
    opts: &ValidateOptions,
    stream: u64,
) -> Result<(), LabError> {
    let name = family.name();
    let truth = enumerate_law(family, boxes, n);
    let mut max_diff: f64 = 0.0;
    for (c, &p) in &truth {
        max_diff = max_diff.max((exact_conditional_prob(family, c)? - p).abs());
    }
    report.checks.push(Check::within(
        format!("{name} N={boxes} n={n}: exact_conditional_prob vs enumeration, max |diff| over {} rows", truth.len()),
        max_diff,
        0.0,
        1e-12,
    ));

    let theta = reference_theta(family, boxes, n)?;
    let table = RowSampler::new(family, Some(theta), boxes, n, SamplerStrategy::Table)?;
    let rejection = RowSampler::new(
        family,
        Some(theta),
        boxes,
        n,
        SamplerStrategy::Rejection { max_attempts: u64::MAX },
    )?;
    let table_law = empirical_law(&table, opts.draws, derive_seed(opts.seed, stream, 0))?;
    let rejection_law = empirical_law(&rejection, opts.draws, derive_seed(opts.seed, stream, 1))?;
    report.checks.push(Check::less(
        format!("{name}: TV(table sampler, exact law) at {} draws", opts.draws),
        total_variation(&table_law, &truth),
        SAMPLER_TV,
    ));
    report.checks.push(Check::less(
        format!("{name}: TV(rejection sampler, table sampler) at {} draws", opts.draws),
        total_variation(&rejection_law, &table_law),
        SAMPLER_TV,
    ));
    if family.builtin().is_some() {
        let direct = RowSampler::new(family, None, boxes, n, SamplerStrategy::Direct)?;
        let direct_law = empirical_law(&direct, opts.draws, derive_seed(opts.seed, stream, 2))?;
        report.checks.push(Check::less(
            format!("{name}: TV(direct sampler, exact law) at {} draws", opts.draws),
            total_variation(&direct_law, &truth),
            SAMPLER_TV,
        ));
    }
    let chi_law = empirical_law(&table, opts.chi_draws, derive_seed(opts.seed, stream, 3))?;
    report.checks.push(Check::greater(
        format!("{name}: chi-square p-value of table sampler at {} draws", opts.chi_draws),
        chi_square_p_value(&chi_law, &truth, opts.chi_draws)?,
        CHI_SQUARE_P,
    ));
    Ok(())
}

/// The conditional law does not move with `θ`, exactly or in distribution.
pub fn theta_suite(
    report: &mut ExperimentReport,
    family: &PowerSeriesFamily,
    boxes: usize,
    n: u64,
    thetas: (f64, f64),
    opts: &ValidateOptions,
    stream: u64,
) -> Result<(), LabError> {
    let name = family.name();
    let all = compositions(n, boxes);
    let mut max_diff: f64 = 0.0;
    for c in &all {
        let a = exact_conditional_prob_at(family, thetas.0, c, DEFAULT_ENUMERATION_GUARD)?;
        let b = exact_conditional_prob_at(family, thetas.1, c, DEFAULT_ENUMERATION_GUARD)?;
        max_diff = max_diff.max((a - b).abs());
    }
    report.checks.push(Check::within(
        format!(
            "{name} N={boxes} n={n}: conditional law at theta={} vs {}, max |diff|",
            thetas.0, thetas.1
        ),
        max_diff,
        0.0,
        1e-12,
    ));
    let lo = RowSampler::new(family, Some(thetas.0), boxes, n, SamplerStrategy::Table)?;
    let hi = RowSampler::new(family, Some(thetas.1), boxes, n, SamplerStrategy::Table)?;
    let tv = total_variation(
        &empirical_law(&lo, opts.draws, derive_seed(opts.seed, stream, 0))?,
        &empirical_law(&hi, opts.draws, derive_seed(opts.seed, stream, 1))?,
    );
    report.checks.push(Check::less(
        format!("{name}: TV(sampler at theta={}, at theta={}) at {} draws", thetas.0, thetas.1, opts.draws),
        tv,
        THETA_TV,
    ));
    Ok(())
}

/// `ln` of the Poisson(`λ`) pmf at `n`.
fn ln_poisson_pmf(lambda: f64, n: u64) -> f64 {
    let lnfact: f64 = (1..=n).map(|i| (i as f64).ln()).sum();
    n as f64 * lambda.ln() - lambda - lnfact
}

/// `P(S_N = n) > 1/(4σ√N)` on a grid, with Poisson points checked against
/// the closed form `Poisson(Nθ)`.
pub fn lower_bound_suite(
    report: &mut ExperimentReport,
    families: &[PowerSeriesFamily],
    boxes_grid: &[usize],
    alphas: &[f64],
) -> Result<(), LabError> {
    let mut rows = Vec::new();
    for family in families {
        for &boxes in boxes_grid {
            for &alpha in alphas {
                let n = (alpha * boxes as f64).round() as u64;
                let a = n as f64 / boxes as f64;
                let dist = family.fit(a)?;
                let exact = ln_event_probability(&dist, boxes, n as usize)?.exp();
                let bound = fixed_sum_lower_bound(family, a, boxes)?;
                report.checks.push(Check::greater(
                    format!("{} N={boxes} alpha={alpha}: P(S_N = n) > 1/(4 sigma sqrt N)", family.name()),
                    exact,
                    bound,
                ));
                if family.builtin() == Some(Builtin::Poisson) {
                    let closed = ln_poisson_pmf(boxes as f64 * dist.theta(), n).exp();
                    report.checks.push(Check::within(
                        format!("poisson N={boxes} alpha={alpha}: relative gap to the Poisson(N theta) pmf"),
                        (exact - closed).abs() / closed,
                        0.0,
                        1e-9,
                    ));
                }
                rows.push(json!({
                    "family": family.name(), "N": boxes, "n": n,
                    "exact": num(exact), "bound": num(bound),
                }));
            }
        }
    }
    report.summary.insert("lower_bound_grid".into(), Value::Array(rows));
    Ok(())
}

/// Ratio of the local approximation to the exact marginal over a growing `N`.
pub fn local_approx_suite(
    report: &mut ExperimentReport,
    family: &PowerSeriesFamily,
    alpha: f64,
    s: u64,
    boxes_grid: &[usize],
    final_tol: f64,
) -> Result<(), LabError> {
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    for &boxes in boxes_grid {
        let n = (alpha * boxes as f64).round() as u64;
        let dist = family.fit(n as f64 / boxes as f64)?;
        let exact = marginal_law(&dist, boxes, n as usize, s as usize)?[s as usize];
        let approx = local_marginal_approx(family, s, boxes, n)?;
        let ratio = approx / exact;
        gaps.push((ratio - 1.0).abs());
        rows.push(json!({"N": boxes, "n": n, "exact": num(exact), "approx": num(approx), "ratio": num(ratio)}));
    }
    report.checks.push(Check::decreasing(
        format!("{} alpha={alpha} s={s}: |ratio - 1| over N={boxes_grid:?}", family.name()),
        &gaps,
    ));
    if let (Some(&last), Some(&boxes)) = (gaps.last(), boxes_grid.last()) {
        report.checks.push(Check::less(
            format!("{} alpha={alpha} s={s}: |ratio - 1| at N={boxes}", family.name()),
            last,
            final_tol,
        ));
    }
    report.summary.insert("local_approximation".into(), Value::Array(rows));
    Ok(())
}

fn case_json(c: &IdentityCase) -> Value {
    json!({"case": c.label, "lhs": num(c.lhs), "rhs": num(c.rhs), "holds": c.holds})
}

fn holds_check(c: &IdentityCase) -> Check {
    Check::within(c.label.clone(), c.lhs, c.rhs, IDENTITY_TOL * c.rhs.abs().max(1.0))
}

#[derive(Debug, Clone)]
pub struct IdentityOptions {
    pub families: Vec<PowerSeriesFamily>,
    pub alphas: Vec<f64>,
    pub split_ks: Vec<usize>,
    pub merge_ks: Vec<usize>,
    pub s_max: u64,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions {
            families: vec![PowerSeriesFamily::poisson(), PowerSeriesFamily::geometric()],
            alphas: vec![0.5, 1.0, 2.0],
            split_ks: vec![2, 3, 5],
            merge_ks: vec![2, 3],
            s_max: 5,
        }
    }
}

/// Splitting and merging identities. Poisson cases must hold; other
/// families are listed, with the geometric split at `K = 2, α = 0.8`
/// required to fail and every `K = 1` split required to hold.
pub fn identity_suite(report: &mut ExperimentReport, opts: &IdentityOptions) -> Result<(), LabError> {
    let mut cases = Vec::new();
    for family in &opts.families {
        let poisson = family.builtin() == Some(Builtin::Poisson);
        for c in colour_identities(family, &opts.alphas, &opts.split_ks, &opts.merge_ks, opts.s_max)? {
            if poisson {
                report.checks.push(holds_check(&c));
            }
            cases.push(case_json(&c));
        }
        for &a in opts.alphas.iter().filter(|&&a| a < family.radius()) {
            let c = splitting_identity(family, a, 1)?;
            report.checks.push(holds_check(&c));
            cases.push(case_json(&c));
        }
        if family.builtin() == Some(Builtin::Geometric) {
            let c = splitting_identity(family, 0.8, 2)?;
            report.checks.push(Check::differs(
                format!("{} (fails for a non-exponential B)", c.label),
                c.lhs,
                c.rhs,
                IDENTITY_TOL,
            ));
            cases.push(case_json(&c));
        }
        let a = opts.alphas.iter().copied().find(|&a| a < family.radius()).unwrap_or(0.5);
        for c in scale_invariance(family, 3.5, a, opts.s_max)? {
            report.checks.push(holds_check(&c));
            cases.push(case_json(&c));
        }
    }
    report.summary.insert("identities".into(), Value::Array(cases));
    Ok(())
}

pub fn run_identities(opts: &IdentityOptions, config_hash: String) -> Result<ExperimentReport, LabError> {
    let mut report = ExperimentReport::new(Kind::Identities, config_hash, 0);
    identity_suite(&mut report, opts)?;
    Ok(report)
}

/// Every small-instance suite, as a pass/fail matrix.
pub fn run_validate(opts: &ValidateOptions, config_hash: String) -> Result<ExperimentReport, LabError> {
    let mut report = ExperimentReport::new(Kind::Validate, config_hash, opts.seed);
    let families = [
        PowerSeriesFamily::poisson(),
        PowerSeriesFamily::geometric(),
        PowerSeriesFamily::binomial(3)?,
    ];
    for (i, f) in families.iter().enumerate() {
        sampler_suite(&mut report, f, 3, 4, opts, i as u64)?;
    }
    theta_suite(&mut report, &families[0], 4, 5, (0.3, 0.7), opts, 10)?;
    lower_bound_suite(&mut report, &families[..2], &[100, 300, 1000, 3000], &[0.5, 1.0, 2.0])?;
    local_approx_suite(&mut report, &families[0], 1.0, 1, &[100, 1000, 10_000], 0.02)?;
    identity_suite(&mut report, &IdentityOptions::default())?;
    report.summary.insert("draws".into(), json!(opts.draws));
    report.summary.insert("chi_square_draws".into(), json!(opts.chi_draws));
    report.summary.insert(
        "checks_passed".into(),
        json!(report.checks.iter().filter(|c| c.pass).count()),
    );
    report.summary.insert("checks_total".into(), json!(report.checks.len()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_is_normalised() {
        let law = enumerate_law(&PowerSeriesFamily::geometric(), 3, 4);
        assert_eq!(law.len(), 15);
        for &p in law.values() {
            assert!((p - 1.0 / 15.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tv_basics() {
        let a: Law = [(vec![0], 0.5), (vec![1], 0.5)].into_iter().collect();
        let b: Law = [(vec![0], 1.0)].into_iter().collect();
        assert!((total_variation(&a, &b) - 0.5).abs() < 1e-15);
        assert_eq!(total_variation(&a, &a), 0.0);
    }

    #[test]
    fn chi_square_accepts_truth_and_rejects_bias() {
        let truth: Law = [(vec![0], 0.5), (vec![1], 0.5)].into_iter().collect();
        let fair: Law = [(vec![0], 0.501), (vec![1], 0.499)].into_iter().collect();
        let biased: Law = [(vec![0], 0.6), (vec![1], 0.4)].into_iter().collect();
        assert!(chi_square_p_value(&fair, &truth, 10_000).unwrap() > 0.5);
        assert!(chi_square_p_value(&biased, &truth, 10_000).unwrap() < 1e-10);
    }

    #[test]
    fn small_sampler_suite_passes() {
        let opts = ValidateOptions {
            draws: 20_000,
            chi_draws: 20_000,
            seed: 3,
        };
        let mut report = ExperimentReport::new(Kind::Validate, String::new(), 3);
        sampler_suite(&mut report, &PowerSeriesFamily::poisson(), 2, 3, &opts, 0).unwrap();
        let exact = report.checks.first().unwrap();
        assert!(exact.pass, "{exact:?}");
    }

    #[test]
    fn identities_default_matrix() {
        let report = run_identities(&IdentityOptions::default(), String::new()).unwrap();
        assert!(report.passed(), "{}", report.render_text());
    }
}
