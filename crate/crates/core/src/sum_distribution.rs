//! Laws of partial sums `S_j = ξ_1 + … + ξ_j` of i.i.d. power-series variables,
//! truncated at a target sum `n`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::exp;

use crate::error::{Error, Result};
use crate::math::{log_convolve, power, Window};
use crate::power_series::PowerSeriesDist;

/// Default cap on the number of `f64` cells in a full table (256 MiB).
pub const DEFAULT_CELL_CAP: usize = 1 << 25;

/// Relative error a pruned (windowed) value must be certified to before it is used.
const CERTIFY_REL: f64 = 1e-12;

fn check_feasible(dist: &PowerSeriesDist, boxes: usize, n: usize) -> Result<()> {
    if boxes == 0 {
        return Err(Error::Precondition("at least one box is required".to_string()));
    }
    if let Some(sb) = dist.family().support_bound() {
        if (n as u128) > boxes as u128 * sb as u128 {
            return Err(Error::Infeasible { boxes, n });
        }
    }
    Ok(())
}

fn delta(len: usize) -> Vec<f64> {
    let mut d = vec![f64::NEG_INFINITY; len];
    d[0] = 0.0;
    d
}

/// Full table of `ln P(S_j = m)` for `j ∈ 1..=N`, `m ∈ 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTable {
    family: String,
    theta: f64,
    boxes: usize,
    n: usize,
    log_p: Vec<f64>,
}

impl SumTable {
    pub fn build(dist: &PowerSeriesDist, boxes: usize, n: usize) -> Result<Self> {
        Self::build_with_cap(dist, boxes, n, DEFAULT_CELL_CAP)
    }

    pub fn build_with_cap(dist: &PowerSeriesDist, boxes: usize, n: usize, cap: usize) -> Result<Self> {
        check_feasible(dist, boxes, n)?;
        let width = n + 1;
        let cells = boxes.saturating_mul(width);
        if cells > cap {
            return Err(Error::Resource { cells, cap });
        }
        let ln_pmf = dist.log_pmf_vec(width);
        let mut log_p = Vec::with_capacity(cells);
        log_p.extend_from_slice(&ln_pmf);
        for j in 1..boxes {
            let next = log_convolve(&log_p[(j - 1) * width..j * width], &ln_pmf, width);
            log_p.extend_from_slice(&next);
        }
        let table = SumTable {
            family: dist.family().name().to_string(),
            theta: dist.theta(),
            boxes,
            n,
            log_p,
        };
        if table.ln_event() == f64::NEG_INFINITY {
            return Err(Error::Infeasible { boxes, n });
        }
        Ok(table)
    }

    /// Rebuilds a table from its row-major log-probabilities.
    pub fn from_raw(family: impl Into<String>, theta: f64, boxes: usize, n: usize, log_p: Vec<f64>) -> Result<Self> {
        if boxes == 0 || log_p.len() != boxes * (n + 1) {
            return Err(Error::Precondition(format!(
                "expected {} cells for N = {boxes}, n = {n}, got {}",
                boxes * (n + 1),
                log_p.len()
            )));
        }
        Ok(SumTable {
            family: family.into(),
            theta,
            boxes,
            n,
            log_p,
        })
    }

    pub fn family_name(&self) -> &str {
        &self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row-major cells, row `j - 1` holding `ln P(S_j = ·)`.
    pub fn raw(&self) -> &[f64] {
        &self.log_p
    }

    /// `ln P(S_j = ·)` on `0..=n`; `j` ranges over `1..=N`.
    pub fn row(&self, j: usize) -> &[f64] {
        let w = self.n + 1;
        &self.log_p[(j - 1) * w..j * w]
    }

    /// `ln P(S_j = m)`, including the empty sum `j = 0`.
    #[inline]
    pub fn ln_at(&self, j: usize, m: usize) -> f64 {
        if j == 0 {
            return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        self.log_p[(j - 1) * (self.n + 1) + m]
    }

    /// `ln P(ξ = k)` for `k ≤ n`.
    #[inline]
    pub fn ln_pmf(&self, k: usize) -> f64 {
        self.log_p[k]
    }

    /// `ln P(S_N = n)`.
    pub fn ln_event(&self) -> f64 {
        self.ln_at(self.boxes, self.n)
    }

    /// `P(S_N = n)`.
    pub fn prob_event_a(&self) -> f64 {
        exp(self.ln_event())
    }

    /// `P(η_j = s)` under the conditional law, for any box `j`.
    pub fn marginal_prob(&self, s: usize) -> Result<f64> {
        if s > self.n {
            return Ok(0.0);
        }
        let ln = self.ln_pmf(s) + self.ln_at(self.boxes - 1, self.n - s) - self.ln_event();
        Ok(exp(ln))
    }
}

/// The two last rows `ln P(S_{N-1} = ·)` and `ln P(S_N = ·)` on `0..=n`,
/// which is all the marginal and event probabilities need.
#[derive(Debug, Clone)]
pub struct EndRows {
    boxes: usize,
    n: usize,
    ln_pmf: Vec<f64>,
    prev: Vec<f64>,
    last: Vec<f64>,
}

impl EndRows {
    /// Sequential two-row recurrence, `O(N n²)`.
    pub fn streaming(dist: &PowerSeriesDist, boxes: usize, n: usize) -> Result<Self> {
        check_feasible(dist, boxes, n)?;
        let width = n + 1;
        let ln_pmf = dist.log_pmf_vec(width);
        let mut prev = delta(width);
        let mut last = ln_pmf.clone();
        for _ in 1..boxes {
            let next = log_convolve(&last, &ln_pmf, width);
            prev = core::mem::replace(&mut last, next);
        }
        Ok(EndRows {
            boxes,
            n,
            ln_pmf,
            prev,
            last,
        })
    }

    /// Binary-exponentiation doubling, `O(w² log N)` for effective width `w`.
    ///
    /// The entries at `n` (last row) and `n - s` for `s ≤ s_max` (previous
    /// row) are certified against the pruning error. If that fails, the exact
    /// log-domain doubling (`O(n² log N)`) is used instead.
    pub fn by_doubling(dist: &PowerSeriesDist, boxes: usize, n: usize, s_max: usize) -> Result<Self> {
        check_feasible(dist, boxes, n)?;
        let width = n + 1;
        let ln_pmf = dist.log_pmf_vec(width);
        let base = Window::from_log(&ln_pmf);
        let prev_w = power(&base, boxes - 1, Window::delta(), |a, b| a.convolve(b, n));
        let last_w = prev_w.convolve(&base, n);

        let certified = |w: &Window, m: usize| {
            let v = w.ln_at(m);
            w.lost == 0.0 || (v > f64::NEG_INFINITY && w.lost <= CERTIFY_REL * exp(v))
        };
        let ok = certified(&last_w, n) && (0..=s_max.min(n)).all(|s| certified(&prev_w, n - s));
        if ok {
            return Ok(EndRows {
                boxes,
                n,
                prev: prev_w.to_log(width),
                last: last_w.to_log(width),
                ln_pmf,
            });
        }

        let conv = |a: &Vec<f64>, b: &Vec<f64>| log_convolve(a, b, width);
        let prev = power(&ln_pmf, boxes - 1, delta(width), conv);
        let last = log_convolve(&prev, &ln_pmf, width);
        Ok(EndRows {
            boxes,
            n,
            ln_pmf,
            prev,
            last,
        })
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `ln P(S_{N-1} = ·)` on `0..=n`.
    pub fn prev(&self) -> &[f64] {
        &self.prev
    }

    /// `ln P(S_N = ·)` on `0..=n`.
    pub fn last(&self) -> &[f64] {
        &self.last
    }

    pub fn ln_event(&self) -> f64 {
        self.last[self.n]
    }

    pub fn prob_event_a(&self) -> f64 {
        exp(self.ln_event())
    }

    pub fn marginal_prob(&self, s: usize) -> Result<f64> {
        if self.ln_event() == f64::NEG_INFINITY {
            return Err(Error::Infeasible {
                boxes: self.boxes,
                n: self.n,
            });
        }
        if s > self.n {
            return Ok(0.0);
        }
        Ok(exp(self.ln_pmf[s] + self.prev[self.n - s] - self.ln_event()))
    }
}

/// `ln P(S_N = n)` by doubling.
pub fn ln_event_probability(dist: &PowerSeriesDist, boxes: usize, n: usize) -> Result<f64> {
    Ok(EndRows::by_doubling(dist, boxes, n, 0)?.ln_event())
}

/// Conditional marginal law `P(η_j = s)` for `s ∈ 0..=s_max`.
pub fn marginal_law(dist: &PowerSeriesDist, boxes: usize, n: usize, s_max: usize) -> Result<Vec<f64>> {
    let rows = EndRows::by_doubling(dist, boxes, n, s_max)?;
    (0..=s_max).map(|s| rows.marginal_prob(s)).collect()
}
