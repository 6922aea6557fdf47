//! Numerical building blocks shared by the distribution code.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, lgamma, log};

/// Terms more than this many nats below the running maximum are skipped in
/// log-domain sums. `exp(-64)` is below 1e-27, far under f64 resolution even
/// after accumulating 1e8 such terms.
const LOG_SKIP: f64 = 64.0;

/// Windowed vectors drop entries this many nats below their own maximum.
const WINDOW_PRUNE: f64 = 120.0;

#[inline]
pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else {
        lgamma(k as f64 + 1.0)
    }
}

/// `ln C(m, k)`, exact (up to rounding) for small `m`.
pub fn ln_choose(m: u64, k: u64) -> f64 {
    if k > m {
        return f64::NEG_INFINITY;
    }
    let k = k.min(m - k);
    if m <= 60 {
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (m - i) as f64 / (i + 1) as f64;
        }
        log(c)
    } else {
        ln_factorial(m) - ln_factorial(k) - ln_factorial(m - k)
    }
}

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(exp(lo - hi))
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for &x in xs {
        let d = x - max;
        if d > -LOG_SKIP {
            sum += exp(d);
        }
    }
    max + log(sum)
}

fn finite_range(xs: &[f64]) -> Option<(usize, usize)> {
    let first = xs.iter().position(|x| x.is_finite())?;
    let last = xs.iter().rposition(|x| x.is_finite())?;
    Some((first, last))
}

/// Log-domain convolution truncated to `len` entries:
/// `c[m] = ln Σ_k exp(a[k] + b[m - k])` for `m < len`.
///
/// Every term within `LOG_SKIP` nats of the per-entry maximum is summed, so the
/// result keeps full relative precision even deep in the tails.
pub fn log_convolve(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; len];
    let (Some((a_lo, a_hi)), Some((b_lo, b_hi))) = (finite_range(a), finite_range(b)) else {
        return out;
    };
    for (m, slot) in out.iter_mut().enumerate().skip(a_lo + b_lo) {
        // k ranges over indices with a[k] and b[m-k] both inside their finite ranges.
        let k_lo = a_lo.max(m.saturating_sub(b_hi));
        let k_hi = a_hi.min(m - b_lo);
        if k_lo > k_hi {
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for k in k_lo..=k_hi {
            let x = a[k] + b[m - k];
            if x > max {
                max = x;
            }
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut sum = 0.0;
        for k in k_lo..=k_hi {
            let d = a[k] + b[m - k] - max;
            if d > -LOG_SKIP {
                sum += exp(d);
            }
        }
        *slot = max + log(sum);
    }
    out
}

/// A probability vector stored as `exp(log_scale) * vals[i]` at index `start + i`,
/// with negligible entries trimmed from both ends.
///
/// `lost` is an upper bound on the probability mass removed by trimming, which
/// is also a pointwise bound on the absolute error of every entry.
#[derive(Debug, Clone)]
pub(crate) struct Window {
    pub start: usize,
    pub log_scale: f64,
    pub vals: Vec<f64>,
    pub lost: f64,
}

impl Window {
    /// Unit mass at zero (the law of an empty sum).
    pub fn delta() -> Self {
        Window {
            start: 0,
            log_scale: 0.0,
            vals: vec![1.0],
            lost: 0.0,
        }
    }

    pub fn from_log(ln: &[f64]) -> Self {
        let max = ln.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vals = ln.iter().map(|&x| exp(x - max)).collect();
        let mut w = Window {
            start: 0,
            log_scale: max,
            vals,
            lost: 0.0,
        };
        w.trim();
        w
    }

    fn trim(&mut self) {
        let cut = exp(-WINDOW_PRUNE);
        let keep_lo = self.vals.iter().position(|&v| v >= cut).unwrap_or(0);
        let keep_hi = self.vals.iter().rposition(|&v| v >= cut).unwrap_or(0);
        let scale = exp(self.log_scale);
        let dropped: f64 = self.vals[..keep_lo].iter().sum::<f64>()
            + self.vals[keep_hi + 1..].iter().sum::<f64>();
        self.lost += dropped * scale;
        self.vals.truncate(keep_hi + 1);
        self.vals.drain(..keep_lo);
        self.start += keep_lo;
    }

    /// Convolution restricted to indices `<= cap`.
    pub fn convolve(&self, other: &Window, cap: usize) -> Window {
        let start = self.start + other.start;
        let lost = self.lost + other.lost;
        let empty = Window {
            start,
            log_scale: f64::NEG_INFINITY,
            vals: Vec::new(),
            lost,
        };
        if start > cap || self.vals.is_empty() || other.vals.is_empty() {
            return empty;
        }
        let full = self.vals.len() + other.vals.len() - 1;
        let len = full.min(cap - start + 1);
        let mut vals = vec![0.0; len];
        for (i, &a) in self.vals.iter().enumerate() {
            if i >= len {
                break;
            }
            let span = other.vals.len().min(len - i);
            for (slot, &b) in vals[i..i + span].iter_mut().zip(&other.vals[..span]) {
                *slot += a * b;
            }
        }
        let max = vals.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return empty;
        }
        for v in vals.iter_mut() {
            *v /= max;
        }
        let mut w = Window {
            start,
            log_scale: self.log_scale + other.log_scale + log(max),
            vals,
            lost,
        };
        w.trim();
        w
    }

    pub fn ln_at(&self, m: usize) -> f64 {
        if m < self.start || m >= self.start + self.vals.len() {
            return f64::NEG_INFINITY;
        }
        self.log_scale + log(self.vals[m - self.start])
    }

    /// Dense log vector on `0..len`.
    pub fn to_log(&self, len: usize) -> Vec<f64> {
        (0..len).map(|m| self.ln_at(m)).collect()
    }
}

/// Binary exponentiation for an associative product with identity `one`.
pub(crate) fn power<T: Clone>(base: &T, mut e: usize, one: T, mul: impl Fn(&T, &T) -> T) -> T {
    let mut acc = one;
    let mut sq = base.clone();
    let mut first = true;
    while e > 0 {
        if !first {
            sq = mul(&sq, &sq);
        }
        first = false;
        if e & 1 == 1 {
            acc = mul(&acc, &sq);
        }
        e >>= 1;
    }
    acc
}

/// All ordered tuples of `parts` non-negative integers summing to `total`,
/// in lexicographic order.
pub fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut cur = vec![0u64; parts];
    cur[parts - 1] = total;
    loop {
        out.push(cur.clone());
        // the position just left of the last non-zero entry grows by one
        let Some(last_nz) = (1..parts).rev().find(|&j| cur[j] > 0) else {
            break;
        };
        let i = last_nz - 1;
        let rest: u64 = cur[i + 1..].iter().sum();
        cur[i] += 1;
        for x in cur[i + 1..].iter_mut() {
            *x = 0;
        }
        cur[parts - 1] = rest - 1;
    }
    out
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
///
/// The interval is first cut into 64 panels so that narrow peaks are not
/// missed by the initial five-point estimate.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    let mut left = a;
    let mut f_left = f(a);
    for i in 1..=PANELS {
        let right = if i == PANELS { b } else { a + h * i as f64 };
        let f_right = f(right);
        let m = 0.5 * (left + right);
        let fm = f(m);
        let whole = (right - left) / 6.0 * (f_left + 4.0 * fm + f_right);
        total += simpson_step(f, left, right, f_left, fm, f_right, whole, tol / PANELS as f64, 50);
        left = right;
        f_left = f_right;
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
