//! Exact samplers for `(ξ_1, …, ξ_N)` conditioned on `ξ_1 + … + ξ_N = n`.
//!
//! Three independent routes lead to the same law:
//!
//! * the sequential sampler walks a [`SumTable`], drawing each box from
//!   `P(ξ_1 = k | S_r = m) = pmf(k) P(S_{r-1} = m - k) / P(S_r = m)`;
//! * the rejection sampler draws unconditional rows until one hits `n`;
//! * builtin families have direct combinatorial samplers
//!   (uniform ball placement, uniform compositions, slots without replacement).

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::power_series::{Builtin, PowerSeriesDist, PowerSeriesFamily};
use crate::sum_distribution::{EndRows, SumTable, DEFAULT_CELL_CAP};

/// Default bound on `N·n` for [`exact_conditional_prob`].
pub const DEFAULT_ENUMERATION_GUARD: usize = 1_000_000;

/// Default attempt budget for the rejection sampler.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

/// One sampled row: box contents summing to `n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConditionalRow {
    pub counts: Vec<u64>,
    pub n: u64,
}

impl ConditionalRow {
    pub fn boxes(&self) -> usize {
        self.counts.len()
    }
}

/// Sequential exact draw from the table.
pub fn sample_exact<R: Rng + ?Sized>(table: &SumTable, rng: &mut R) -> ConditionalRow {
    let mut counts = vec![0u64; table.boxes()];
    fill_exact(table, rng, &mut counts);
    ConditionalRow {
        counts,
        n: table.n() as u64,
    }
}

/// [`sample_exact`] into a caller-provided buffer of length `N`.
pub fn fill_exact<R: Rng + ?Sized>(table: &SumTable, rng: &mut R, out: &mut [u64]) {
    let boxes = table.boxes();
    debug_assert_eq!(out.len(), boxes);
    let mut m = table.n();
    for (j, slot) in out.iter_mut().enumerate() {
        let remaining = boxes - j;
        if remaining == 1 {
            *slot = m as u64;
            break;
        }
        let denom = table.ln_at(remaining, m);
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut pick = None;
        let mut last_positive = 0;
        for k in 0..=m {
            let ln = table.ln_pmf(k) + table.ln_at(remaining - 1, m - k);
            if ln == f64::NEG_INFINITY {
                continue;
            }
            last_positive = k;
            cum += exp(ln - denom);
            if u < cum {
                pick = Some(k);
                break;
            }
        }
        // rounding can leave the cumulative sum a hair below u
        let k = pick.unwrap_or(last_positive);
        *slot = k as u64;
        m -= k;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectionOutcome {
    Accepted { row: ConditionalRow, attempts: u64 },
    Exhausted { attempts: u64 },
}

/// Draws unconditional rows until the sum equals `n`. A partial row is
/// abandoned as soon as its running sum exceeds `n`.
pub fn sample_rejection<R: Rng + ?Sized>(
    dist: &PowerSeriesDist,
    boxes: usize,
    n: u64,
    rng: &mut R,
    max_attempts: u64,
) -> Result<RejectionOutcome> {
    let mut counts = vec![0u64; boxes];
    match fill_rejection(dist, n, rng, max_attempts, &mut counts)? {
        Some(attempts) => Ok(RejectionOutcome::Accepted {
            row: ConditionalRow { counts, n },
            attempts,
        }),
        None => Ok(RejectionOutcome::Exhausted {
            attempts: max_attempts,
        }),
    }
}

/// Rejection sampling into `out`; `Some(attempts)` on success.
pub fn fill_rejection<R: Rng + ?Sized>(
    dist: &PowerSeriesDist,
    n: u64,
    rng: &mut R,
    max_attempts: u64,
    out: &mut [u64],
) -> Result<Option<u64>> {
    if max_attempts == 0 {
        return Err(Error::Precondition("max_attempts must be at least 1".to_string()));
    }
    if out.is_empty() {
        return Err(Error::Precondition("at least one box is required".to_string()));
    }
    'attempt: for attempt in 1..=max_attempts {
        let mut sum = 0u64;
        for slot in out.iter_mut() {
            let k = dist.sample(rng)?;
            sum += k;
            if sum > n {
                continue 'attempt;
            }
            *slot = k;
        }
        if sum == n {
            return Ok(Some(attempt));
        }
    }
    Ok(None)
}

/// Direct draw for builtin families.
pub fn fill_direct<R: Rng + ?Sized>(kind: Builtin, n: u64, rng: &mut R, out: &mut [u64]) -> Result<()> {
    let boxes = out.len();
    if boxes == 0 {
        return Err(Error::Precondition("at least one box is required".to_string()));
    }
    out.iter_mut().for_each(|x| *x = 0);
    match kind {
        Builtin::Poisson => {
            for _ in 0..n {
                out[rng.gen_range(0..boxes)] += 1;
            }
        }
        Builtin::Geometric => {
            // stars and bars: N - 1 bars among n + N - 1 positions
            let len = n as usize + boxes - 1;
            let mut bars = index::sample(rng, len, boxes - 1).into_vec();
            bars.sort_unstable();
            let mut prev = 0usize;
            for (slot, &bar) in out.iter_mut().zip(&bars) {
                *slot = (bar - prev) as u64;
                prev = bar + 1;
            }
            out[boxes - 1] = (len - prev) as u64;
        }
        Builtin::Binomial(m) => {
            let cells = boxes as u64 * m;
            if n > cells {
                return Err(Error::Infeasible {
                    boxes,
                    n: n as usize,
                });
            }
            for cell in index::sample(rng, cells as usize, n as usize).iter() {
                out[cell / m as usize] += 1;
            }
        }
    }
    Ok(())
}

/// `θ` at which θ-free quantities are evaluated: the fitted value if `n > 0`.
fn reference_theta(family: &PowerSeriesFamily, boxes: usize, n: u64) -> Result<f64> {
    if n > 0 {
        if let Ok(t) = family.mean_inverse(n as f64 / boxes as f64, 1e-13) {
            return Ok(t.get());
        }
    }
    Ok(if family.radius().is_finite() {
        family.radius() / 2.0
    } else {
        1.0
    })
}

/// `P(η = counts)` under the conditional law, independent of `θ`.
pub fn exact_conditional_prob(family: &PowerSeriesFamily, counts: &[u64]) -> Result<f64> {
    let n: u64 = counts.iter().sum();
    let theta = reference_theta(family, counts.len(), n)?;
    exact_conditional_prob_at(family, theta, counts, DEFAULT_ENUMERATION_GUARD)
}

/// [`exact_conditional_prob`] evaluated through the pmf at a chosen `θ`.
pub fn exact_conditional_prob_at(
    family: &PowerSeriesFamily,
    theta: f64,
    counts: &[u64],
    guard: usize,
) -> Result<f64> {
    let boxes = counts.len();
    let n: u64 = counts.iter().sum();
    let states = boxes.saturating_mul(n as usize);
    if states > guard {
        return Err(Error::Guard { states, limit: guard });
    }
    let dist = family.at(theta)?;
    let numer: f64 = counts.iter().map(|&k| dist.log_pmf(k)).sum();
    if numer == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let denom = EndRows::by_doubling(&dist, boxes, n as usize, 0)?.ln_event();
    Ok(exp(numer - denom))
}

/// `P(η_j = s)` from a full table.
pub fn marginal_prob(table: &SumTable, s: usize) -> Result<f64> {
    if table.ln_event() == f64::NEG_INFINITY {
        return Err(Error::Infeasible {
            boxes: table.boxes(),
            n: table.n(),
        });
    }
    table.marginal_prob(s)
}

/// How a [`RowSampler`] draws rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerStrategy {
    /// Direct for builtin families, otherwise the table, otherwise rejection.
    #[default]
    Auto,
    Direct,
    Table,
    Rejection { max_attempts: u64 },
}

impl core::str::FromStr for SamplerStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SamplerStrategy::Auto),
            "direct" => Ok(SamplerStrategy::Direct),
            "table" => Ok(SamplerStrategy::Table),
            "rejection" => Ok(SamplerStrategy::Rejection {
                max_attempts: DEFAULT_MAX_ATTEMPTS,
            }),
            other => Err(Error::Precondition(format!("unknown sampler strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Mode {
    Empty,
    Direct(Builtin),
    Table(SumTable),
    Rejection { dist: PowerSeriesDist, max_attempts: u64 },
}

/// A prepared single-colour sampler for fixed `(family, θ, N, n)`.
#[derive(Debug, Clone)]
pub struct RowSampler {
    boxes: usize,
    n: u64,
    mode: Mode,
}

impl RowSampler {
    /// `theta` is only consulted by the table and rejection routes; it may be
    /// `None` when `n = 0` or the strategy is direct.
    pub fn new(
        family: &PowerSeriesFamily,
        theta: Option<f64>,
        boxes: usize,
        n: u64,
        strategy: SamplerStrategy,
    ) -> Result<Self> {
        if boxes == 0 {
            return Err(Error::Precondition("at least one box is required".to_string()));
        }
        if let Some(sb) = family.support_bound() {
            if n as u128 > boxes as u128 * sb as u128 {
                return Err(Error::Infeasible {
                    boxes,
                    n: n as usize,
                });
            }
        }
        let need_theta = || -> Result<PowerSeriesDist> {
            match theta {
                Some(t) => family.at(t),
                None => family.at(reference_theta(family, boxes, n)?),
            }
        };
        let mode = match strategy {
            _ if n == 0 => Mode::Empty,
            SamplerStrategy::Direct => match family.builtin() {
                Some(b) => Mode::Direct(b),
                None => {
                    return Err(Error::Precondition(format!(
                        "family `{}` has no direct sampler",
                        family.name()
                    )))
                }
            },
            SamplerStrategy::Table => Mode::Table(SumTable::build(&need_theta()?, boxes, n as usize)?),
            SamplerStrategy::Rejection { max_attempts } => Mode::Rejection {
                dist: need_theta()?,
                max_attempts,
            },
            SamplerStrategy::Auto => match family.builtin() {
                Some(b) => Mode::Direct(b),
                None => {
                    let dist = need_theta()?;
                    match SumTable::build_with_cap(&dist, boxes, n as usize, DEFAULT_CELL_CAP) {
                        Ok(t) => Mode::Table(t),
                        Err(Error::Resource { .. }) => Mode::Rejection {
                            dist,
                            max_attempts: DEFAULT_MAX_ATTEMPTS,
                        },
                        Err(e) => return Err(e),
                    }
                }
            },
        };
        Ok(RowSampler { boxes, n, mode })
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn table(&self) -> Option<&SumTable> {
        match &self.mode {
            Mode::Table(t) => Some(t),
            _ => None,
        }
    }

    /// Draws one row into `out` (length `N`).
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u64]) -> Result<()> {
        if out.len() != self.boxes {
            return Err(Error::Precondition(format!(
                "buffer has {} slots for {} boxes",
                out.len(),
                self.boxes
            )));
        }
        match &self.mode {
            Mode::Empty => out.iter_mut().for_each(|x| *x = 0),
            Mode::Direct(b) => fill_direct(*b, self.n, rng, out)?,
            Mode::Table(t) => fill_exact(t, rng, out),
            Mode::Rejection { dist, max_attempts } => {
                if fill_rejection(dist, self.n, rng, *max_attempts, out)?.is_none() {
                    return Err(Error::Exhausted {
                        attempts: *max_attempts,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ConditionalRow> {
        let mut counts = vec![0u64; self.boxes];
        self.fill(rng, &mut counts)?;
        Ok(ConditionalRow { counts, n: self.n })
    }
}

/// Log of the multinomial coefficient `n! / Π k_j!`.
pub fn ln_multinomial(counts: &[u64]) -> f64 {
    use crate::math::ln_factorial;
    let n: u64 = counts.iter().sum();
    ln_factorial(n) - counts.iter().map(|&k| ln_factorial(k)).sum::<f64>()
}

/// Uniform multinomial probability of `counts` over its boxes.
pub fn uniform_multinomial_prob(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    exp(ln_multinomial(counts) - n as f64 * log(counts.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{compositions, ln_factorial};
    use alloc::collections::BTreeMap;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<PowerSeriesFamily> {
        vec![
            PowerSeriesFamily::poisson(),
            PowerSeriesFamily::geometric(),
            PowerSeriesFamily::binomial(3).unwrap(),
        ]
    }

    /// Brute force: Π (b_k / k!) normalised over all compositions.
    fn enumerate(family: &PowerSeriesFamily, boxes: usize, n: u64) -> BTreeMap<Vec<u64>, f64> {
        let weight = |c: &Vec<u64>| -> f64 {
            c.iter()
                .map(|&k| family.coeff(k) / exp(ln_factorial(k)))
                .product()
        };
        let comps = compositions(n, boxes);
        let total: f64 = comps.iter().map(weight).sum();
        comps.into_iter().map(|c| {
            let w = weight(&c);
            (c, w / total)
        }).collect()
    }

    fn empirical(
        sampler: impl Fn(&mut ChaCha8Rng) -> Vec<u64>,
        draws: usize,
        seed: u64,
    ) -> BTreeMap<Vec<u64>, f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(sampler(&mut rng)).or_insert(0usize) += 1;
        }
        counts.into_iter().map(|(k, c)| (k, c as f64 / draws as f64)).collect()
    }

    fn tv(a: &BTreeMap<Vec<u64>, f64>, b: &BTreeMap<Vec<u64>, f64>) -> f64 {
        let keys: alloc::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
        0.5 * keys
            .into_iter()
            .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
            .sum::<f64>()
    }

    #[test]
    fn conditional_prob_examples() {
        let p = PowerSeriesFamily::poisson();
        assert_relative_eq!(exact_conditional_prob(&p, &[1, 1]).unwrap(), 0.5, max_relative = 1e-12);
        let g = PowerSeriesFamily::geometric();
        for c in compositions(2, 3) {
            assert_relative_eq!(exact_conditional_prob(&g, &c).unwrap(), 1.0 / 6.0, max_relative = 1e-12);
        }
        let a = exact_conditional_prob_at(&p, 0.3, &[2, 0, 1, 2], DEFAULT_ENUMERATION_GUARD).unwrap();
        let b = exact_conditional_prob_at(&p, 0.7, &[2, 0, 1, 2], DEFAULT_ENUMERATION_GUARD).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn conditional_prob_matches_enumeration_and_multinomial() {
        for fam in families() {
            for (c, p) in enumerate(&fam, 3, 4) {
                assert!((exact_conditional_prob(&fam, &c).unwrap() - p).abs() < 1e-12, "{} {:?}", fam.name(), c);
            }
        }
        for c in compositions(4, 3) {
            let p = exact_conditional_prob(&PowerSeriesFamily::poisson(), &c).unwrap();
            assert!((p - uniform_multinomial_prob(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn guard_rejects_large_instances() {
        let counts = vec![1u64; 2000];
        assert!(matches!(
            exact_conditional_prob(&PowerSeriesFamily::poisson(), &counts),
            Err(Error::Guard { .. })
        ));
    }

    #[test]
    fn small_exact_laws() {
        let d = PowerSeriesFamily::poisson().at(1.0).unwrap();
        let t = SumTable::build(&d, 2, 2).unwrap();
        let emp = empirical(|r| sample_exact(&t, r).counts, 200_000, 1);
        assert!((emp[&vec![1, 1]] - 0.5).abs() < 0.01);
        assert!((emp[&vec![0, 2]] - 0.25).abs() < 0.01);
        let g = PowerSeriesFamily::geometric().at(0.5).unwrap();
        let t = SumTable::build(&g, 2, 2).unwrap();
        let emp = empirical(|r| sample_exact(&t, r).counts, 200_000, 2);
        assert!(emp.values().all(|p| (p - 1.0 / 3.0).abs() < 0.01));
        let t = SumTable::build(&g, 1, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_exact(&t, &mut rng).counts, vec![5]);
    }

    #[test]
    fn every_route_matches_enumeration() {
        for fam in families() {
            let exact = enumerate(&fam, 3, 4);
            let dist = fam.at(0.9).unwrap();
            let table = SumTable::build(&dist, 3, 4).unwrap();
            let seq = empirical(|r| sample_exact(&table, r).counts, 300_000, 10);
            assert!(tv(&seq, &exact) < 0.005, "{} table", fam.name());
            let rej = empirical(
                |r| match sample_rejection(&dist, 3, 4, r, 10_000).unwrap() {
                    RejectionOutcome::Accepted { row, .. } => row.counts,
                    RejectionOutcome::Exhausted { .. } => panic!("exhausted"),
                },
                300_000,
                11,
            );
            assert!(tv(&rej, &exact) < 0.005, "{} rejection", fam.name());
            let b = fam.builtin().unwrap();
            let dir = empirical(
                |r| {
                    let mut out = vec![0; 3];
                    fill_direct(b, 4, r, &mut out).unwrap();
                    out
                },
                300_000,
                12,
            );
            assert!(tv(&dir, &exact) < 0.005, "{} direct", fam.name());
        }
    }

    #[test]
    fn rejection_attempts_track_the_event_probability() {
        let dist = PowerSeriesFamily::poisson().at(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut total = 0u64;
        let reps = 4000;
        for _ in 0..reps {
            match sample_rejection(&dist, 100, 100, &mut rng, 100_000).unwrap() {
                RejectionOutcome::Accepted { row, attempts } => {
                    assert_eq!(row.counts.iter().sum::<u64>(), 100);
                    total += attempts;
                }
                RejectionOutcome::Exhausted { .. } => panic!(),
            }
        }
        let mean = total as f64 / reps as f64;
        // geometric number of attempts with success probability ≈ 0.03986
        assert!((mean - 25.09).abs() < 1.5, "mean attempts {mean}");
        assert_eq!(
            sample_rejection(&dist, 100, 1000, &mut rng, 3).unwrap(),
            RejectionOutcome::Exhausted { attempts: 3 }
        );
    }

    #[test]
    fn marginals_are_exchangeable() {
        let d = PowerSeriesFamily::geometric().at(0.5).unwrap();
        let t = SumTable::build(&d, 5, 6).unwrap();
        let comps = compositions(6, 5);
        for s in 0..=6u64 {
            let per_box: Vec<f64> = (0..5)
                .map(|j| {
                    comps
                        .iter()
                        .filter(|c| c[j] == s)
                        .map(|c| exact_conditional_prob(d.family(), c).unwrap())
                        .sum()
                })
                .collect();
            let m = marginal_prob(&t, s as usize).unwrap();
            for p in per_box {
                assert!((p - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_examples() {
        let p = PowerSeriesFamily::poisson().at(1.0).unwrap();
        assert_relative_eq!(marginal_prob(&SumTable::build(&p, 2, 2).unwrap(), 1).unwrap(), 0.5, max_relative = 1e-12);
        assert_relative_eq!(marginal_prob(&SumTable::build(&p, 1, 3).unwrap(), 3).unwrap(), 1.0, max_relative = 1e-12);
        let g = PowerSeriesFamily::geometric().at(0.5).unwrap();
        let t = SumTable::build(&g, 10, 10).unwrap();
        // compositions of 10 into 9 boxes over compositions into 10 boxes
        let want = exp(crate::math::ln_choose(18, 8) - crate::math::ln_choose(19, 9));
        assert_relative_eq!(want, 9.0 / 19.0, max_relative = 1e-12);
        assert_relative_eq!(marginal_prob(&t, 0).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn row_sampler_routes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let custom = PowerSeriesFamily::explicit("c", vec![1.0, 2.0, 0.5, 0.25], f64::INFINITY).unwrap();
        let s = RowSampler::new(&custom, None, 20, 30, SamplerStrategy::Auto).unwrap();
        assert!(s.table().is_some());
        assert!(RowSampler::new(&custom, None, 20, 30, SamplerStrategy::Direct).is_err());
        assert!(matches!(
            RowSampler::new(&custom, None, 5, 16, SamplerStrategy::Auto),
            Err(Error::Infeasible { .. })
        ));
        for strategy in [SamplerStrategy::Auto, SamplerStrategy::Table, SamplerStrategy::Rejection { max_attempts: 100_000 }] {
            let s = RowSampler::new(&custom, Some(1.3), 20, 30, strategy).unwrap();
            for _ in 0..100 {
                let row = s.sample(&mut rng).unwrap();
                assert_eq!(row.counts.iter().sum::<u64>(), 30);
                assert!(row.counts.iter().all(|&k| k <= 3));
            }
        }
        let zero = RowSampler::new(&PowerSeriesFamily::poisson(), None, 4, 0, SamplerStrategy::Auto).unwrap();
        assert_eq!(zero.sample(&mut rng).unwrap().counts, vec![0; 4]);
        let starved = RowSampler::new(
            &PowerSeriesFamily::poisson(),
            Some(0.01),
            50,
            500,
            SamplerStrategy::Rejection { max_attempts: 2 },
        )
        .unwrap();
        assert!(matches!(starved.sample(&mut rng), Err(Error::Exhausted { attempts: 2 })));
    }

    proptest! {
        #[test]
        fn direct_rows_sum_to_n(boxes in 1usize..50, n in 0u64..200, which in 0usize..3, seed in any::<u64>()) {
            let kind = families()[which].builtin().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = vec![0; boxes];
            match fill_direct(kind, n, &mut rng, &mut out) {
                Ok(()) => {
                    prop_assert_eq!(out.iter().sum::<u64>(), n);
                    if let Builtin::Binomial(m) = kind {
                        prop_assert!(out.iter().all(|&k| k <= m));
                    }
                }
                Err(Error::Infeasible { .. }) => prop_assert!(matches!(kind, Builtin::Binomial(m) if n > boxes as u64 * m)),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn table_rows_sum_to_n(boxes in 1usize..12, n in 0u64..25, theta in 0.1f64..0.9, seed in any::<u64>()) {
            let d = PowerSeriesFamily::geometric().at(theta).unwrap();
            let t = SumTable::build(&d, boxes, n as usize).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let row = sample_exact(&t, &mut rng);
            prop_assert_eq!(row.counts.iter().sum::<u64>(), n);
        }

        #[test]
        fn conditional_prob_is_theta_free(t1 in 0.05f64..3.0, t2 in 0.05f64..3.0, c in proptest::collection::vec(0u64..4, 1..5)) {
            let p = PowerSeriesFamily::poisson();
            let a = exact_conditional_prob_at(&p, t1, &c, DEFAULT_ENUMERATION_GUARD).unwrap();
            let b = exact_conditional_prob_at(&p, t2, &c, DEFAULT_ENUMERATION_GUARD).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
