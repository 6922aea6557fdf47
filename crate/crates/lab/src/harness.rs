//! Seeded, parallel Monte Carlo runs over a [`Plan`].

use alloc_lab_core::scheme::{AllocationMatrix, OccupancyTarget, SchemeSampler};
use alloc_lab_core::sum_distribution::marginal_law;
use alloc_lab_core::theory::{arbitrate_geometric_limit, lil_bound_sector, lil_bound_sequence, slln_limit, slln_limit_total};
use alloc_lab_core::Builtin;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{Kind, Plan, Ready};
use crate::error::LabError;
use crate::format::sig12;
use crate::report::{num, Check, ExperimentReport, PointError, Record};

/// Default pass threshold for the mean SLLN error.
pub const DEFAULT_SLLN_TOLERANCE: f64 = 0.01;

/// Box count at which the geometric limit is arbitrated against the exact marginal.
pub const ARBITRATION_BOXES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Seed for replication `r` at schedule point `t`: the first eight bytes of
/// SHA-256 over the three values, little-endian.
pub fn derive_seed(master: u64, t: u64, r: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(t.to_le_bytes());
    h.update(r.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pool(workers: usize) -> Result<ThreadPool, LabError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Runtime(format!("thread pool: {e}")))
}

/// `(seed, μ)` for every replication at point `t`, in replication order.
/// Results do not depend on the worker count: each replication owns its stream.
pub fn simulate(
    pool: &ThreadPool,
    ready: &Ready,
    strategy: alloc_lab_core::SamplerStrategy,
    master: u64,
    t: u64,
    replications: u64,
) -> Result<Vec<(u64, u64)>, LabError> {
    let sampler = SchemeSampler::new(&ready.scheme, strategy)?;
    let colours = ready.scheme.colours();
    let boxes = ready.scheme.boxes;
    let expected_rows = ready.scheme.ball_counts();
    let target = &ready.theory.target;
    pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map_init(
                || AllocationMatrix::zeros(colours, boxes),
                |m, r| {
                    let seed = derive_seed(master, t, r);
                    sampler.fill(&mut rng_for(seed), m)?;
                    if cfg!(debug_assertions) || r % 100 == 0 {
                        let sums = m.row_sums();
                        if sums != expected_rows {
                            return Err(LabError::Runtime(format!(
                                "row sums {sums:?} differ from {expected_rows:?} at replication {r}"
                            )));
                        }
                    }
                    Ok((seed, target.count(m)?))
                },
            )
            .collect()
    })
}

/// Dispatches on the experiment kind.
pub fn run(plan: &Plan, opts: RunOptions) -> Result<ExperimentReport, LabError> {
    match plan.config.kind {
        Kind::Slln => run_slln(plan, opts),
        Kind::Lil => run_lil(plan, opts),
        Kind::Tail => run_tail(plan, opts),
        Kind::Validate | Kind::Identities => Err(LabError::Invalid(format!(
            "`{}` runs through its own suite",
            plan.config.kind.as_str()
        ))),
    }
}

fn new_report(plan: &Plan) -> ExperimentReport {
    ExperimentReport::new(plan.config.kind, plan.config.hash(), plan.config.master_seed)
}

fn limit_alpha(plan: &Plan, ready: &Ready) -> Vec<f64> {
    plan.config.alpha.clone().unwrap_or_else(|| ready.scheme.alpha())
}

fn limit_value(plan: &Plan, alpha: &[f64]) -> Result<f64, LabError> {
    Ok(match &plan.target {
        OccupancyTarget::Vector(s) => slln_limit(&plan.families, alpha, s)?,
        OccupancyTarget::Total(s) => slln_limit_total(&plan.families, alpha, *s)?,
    })
}

/// `E μ` from the context, recomputed from independent per-colour marginal
/// laws for vector targets.
fn exact_expectation(ready: &Ready) -> Result<f64, LabError> {
    let e = ready.theory.expected_count()?;
    if let OccupancyTarget::Vector(s) = &ready.theory.target {
        let boxes = ready.scheme.boxes;
        let mut again = boxes as f64;
        for ((d, c), &si) in ready.theory.dists.iter().zip(&ready.scheme.colours).zip(s) {
            let law = marginal_law(d, boxes, c.n as usize, (si as usize).min(c.n as usize))?;
            again *= law.get(si as usize).copied().unwrap_or(0.0);
        }
        if (again - e).abs() > 1e-9 * e.abs().max(1e-300) {
            return Err(LabError::Runtime(format!("E mu recomputation disagrees: {e} vs {again}")));
        }
    }
    Ok(e)
}

fn point_error(report: &mut ExperimentReport, boxes: usize, n: &[u64], message: String) {
    report.errors.push(PointError {
        boxes,
        n: n.to_vec(),
        message,
    });
}

fn point_summary(boxes: usize, n: &[u64]) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("N".into(), json!(boxes));
    m.insert("n".into(), json!(n));
    m
}

/// Strong-law check: `μ/N` against the limit at every schedule point.
pub fn run_slln(plan: &Plan, opts: RunOptions) -> Result<ExperimentReport, LabError> {
    let pool = pool(opts.workers)?;
    let mut report = new_report(plan);
    let tol = plan.config.tolerance.unwrap_or(DEFAULT_SLLN_TOLERANCE);
    let s = plan.target.values();
    let mut points = Vec::new();
    let mut last: Option<(usize, f64, f64, f64)> = None;

    for (t, p) in plan.points.iter().enumerate() {
        let ready = match &p.ready {
            Ok(r) => r,
            Err(e) => {
                point_error(&mut report, p.boxes, &p.n, e.clone());
                continue;
            }
        };
        let outcome = (|| -> Result<_, LabError> {
            let alpha = limit_alpha(plan, ready);
            let limit = limit_value(plan, &alpha)?;
            let e_mu = exact_expectation(ready)?;
            let draws = simulate(&pool, ready, plan.strategy, plan.config.master_seed, t as u64, plan.config.replications)?;
            Ok((limit, e_mu, draws))
        })();
        let (limit, e_mu, draws) = match outcome {
            Ok(x) => x,
            Err(e) => {
                point_error(&mut report, p.boxes, &p.n, e.to_string());
                continue;
            }
        };
        let mut sum_err = 0.0;
        let mut max_err: f64 = 0.0;
        let mut sum_ratio = 0.0;
        for (r, &(seed, mu)) in draws.iter().enumerate() {
            let ratio = mu as f64 / p.boxes as f64;
            let err = (ratio - limit).abs();
            sum_err += err;
            max_err = max_err.max(err);
            sum_ratio += ratio;
            report.records.push(Record {
                kind: Kind::Slln,
                boxes: p.boxes,
                n: p.n.clone(),
                s: s.clone(),
                replication: r as u64,
                mu,
                e_mu_exact: e_mu,
                theory_value: limit,
                statistic: err,
                bound: tol,
                seed,
            });
        }
        let reps = draws.len() as f64;
        let mut ps = point_summary(p.boxes, &p.n);
        ps.insert("limit".into(), num(limit));
        ps.insert("E_mu_exact_over_N".into(), num(e_mu / p.boxes as f64));
        ps.insert("mean_mu_over_N".into(), num(sum_ratio / reps));
        ps.insert("mean_abs_error".into(), num(sum_err / reps));
        ps.insert("max_abs_error".into(), num(max_err));
        points.push(Value::Object(ps));
        if last.is_none_or(|l| p.boxes >= l.0) {
            last = Some((p.boxes, sum_err / reps, max_err, sum_ratio / reps));
        }
    }

    report.summary.insert("points".into(), Value::Array(points));
    if let Some((boxes, mean_err, max_err, mean_ratio)) = last {
        report.summary.insert("largest_N".into(), json!(boxes));
        report.summary.insert("mean_abs_error_at_largest_N".into(), num(mean_err));
        report.summary.insert("max_abs_error_at_largest_N".into(), num(max_err));
        report.summary.insert("tolerance".into(), num(tol));
        report.checks.push(Check::less(
            format!("mean |mu/N - limit| at N={boxes}"),
            mean_err,
            tol,
        ));
        geometric_arbitration(plan, &mut report, mean_ratio, tol)?;
    }
    Ok(report)
}

/// For every geometric colour of a single-colour vector target, sets the
/// candidate limits against the exact finite-`N` marginal.
fn geometric_arbitration(plan: &Plan, report: &mut ExperimentReport, mean_ratio: f64, tol: f64) -> Result<(), LabError> {
    let OccupancyTarget::Vector(s) = &plan.target else {
        return Ok(());
    };
    if plan.families.len() != 1 || plan.families[0].builtin() != Some(Builtin::Geometric) {
        return Ok(());
    }
    let alpha = match &plan.config.alpha {
        Some(a) => a[0],
        None => match plan.points.iter().rev().find_map(|p| p.ready.as_ref().ok()) {
            Some(r) => r.scheme.alpha()[0],
            None => return Ok(()),
        },
    };
    let n = (alpha * ARBITRATION_BOXES as f64).round() as u64;
    let arb = arbitrate_geometric_limit(alpha, s[0], ARBITRATION_BOXES, n)?;
    let candidates: Vec<Value> = arb
        .candidates
        .iter()
        .map(|(label, v)| json!({"label": label, "value": num(*v)}))
        .collect();
    report.summary.insert(
        "arbitration".into(),
        json!({
            "alpha": num(alpha),
            "s": s[0],
            "N": arb.boxes,
            "n": arb.n,
            "oracle": num(arb.oracle),
            "candidates": candidates,
            "nearest": arb.nearest,
            "general_formula_wins": arb.general_formula_wins(),
            "verdict": arb.verdict(),
        }),
    );
    for (label, v) in &arb.candidates {
        report.notes.push(format!("candidate limit `{label}` = {}", sig12(*v)));
    }
    report.notes.push(format!("verdict: {}", arb.verdict()));
    report.checks.push(Check::within(
        "exact marginal agrees with the general formula",
        arb.oracle,
        arb.candidates[0].1,
        tol,
    ));
    report.checks.push(Check::greater(
        "general formula is the nearest candidate (1 = yes)",
        if arb.general_formula_wins() { 1.0 } else { 0.0 },
        0.5,
    ));
    report.checks.push(Check::within(
        "mean mu/N at the largest N against the exact marginal",
        mean_ratio,
        arb.oracle,
        tol,
    ));
    Ok(())
}

/// Iterated-logarithm ratio `R_t = |μ − Eμ| / (√(N ln N) σ)` along the
/// schedule, with the per-replication maximum checked against the constant.
pub fn run_lil(plan: &Plan, opts: RunOptions) -> Result<ExperimentReport, LabError> {
    let pool = pool(opts.workers)?;
    let mut report = new_report(plan);
    let k = plan.colours();
    let sector = plan.config.sector.is_some();
    let bound = if sector { lil_bound_sector(k) } else { lil_bound_sequence(k) };
    let reps = plan.config.replications as usize;
    let s = plan.target.values();
    let mut max_per_rep = vec![0.0_f64; reps];
    let mut points = Vec::new();

    for (t, p) in plan.points.iter().enumerate() {
        let ready = match &p.ready {
            Ok(r) => r,
            Err(e) => {
                point_error(&mut report, p.boxes, &p.n, e.clone());
                continue;
            }
        };
        let outcome = (|| -> Result<_, LabError> {
            let e_mu = exact_expectation(ready)?;
            let draws = simulate(&pool, ready, plan.strategy, plan.config.master_seed, t as u64, plan.config.replications)?;
            Ok((e_mu, draws))
        })();
        let (e_mu, draws) = match outcome {
            Ok(x) => x,
            Err(e) => {
                point_error(&mut report, p.boxes, &p.n, e.to_string());
                continue;
            }
        };
        let sigma = ready.theory.sigma();
        let nb = p.boxes as f64;
        let scale = (nb * nb.ln()).sqrt() * sigma;
        let mut point_max: f64 = 0.0;
        for (r, &(seed, mu)) in draws.iter().enumerate() {
            let ratio = (mu as f64 - e_mu).abs() / scale;
            max_per_rep[r] = max_per_rep[r].max(ratio);
            point_max = point_max.max(ratio);
            report.records.push(Record {
                kind: Kind::Lil,
                boxes: p.boxes,
                n: p.n.clone(),
                s: s.clone(),
                replication: r as u64,
                mu,
                e_mu_exact: e_mu,
                theory_value: ready.theory.p,
                statistic: ratio,
                bound,
                seed,
            });
        }
        let mut ps = point_summary(p.boxes, &p.n);
        ps.insert("E_mu_exact".into(), num(e_mu));
        ps.insert("sigma".into(), num(sigma));
        ps.insert("max_ratio".into(), num(point_max));
        points.push(Value::Object(ps));
    }

    let overall = max_per_rep.iter().copied().fold(0.0, f64::max);
    let within = max_per_rep.iter().filter(|&&m| m <= bound).count();
    report.summary.insert("points".into(), Value::Array(points));
    report.summary.insert("bound".into(), num(bound));
    report.summary.insert("bound_kind".into(), json!(if sector { "sector" } else { "sequence" }));
    report.summary.insert("max_ratio_per_replication".into(), Value::Array(max_per_rep.iter().map(|&m| num(m)).collect()));
    report.summary.insert("max_ratio".into(), num(overall));
    report.summary.insert("replications_within_bound".into(), json!(within));
    report.notes.push(
        "finite-horizon check: the maximum over the schedule is compared with the constant; \
         the limsup itself is not observable from finitely many N"
            .into(),
    );
    if report.errors.len() < plan.points.len() {
        report.checks.push(Check::at_most(
            format!("max_t R_t over {reps} replications ({} bound)", if sector { "sector" } else { "sequence" }),
            overall,
            bound,
        ));
    }
    Ok(report)
}

/// Empirical `P(|μ − Eμ|/√N ≥ ε)` against the exponential bound on the ε grid.
pub fn run_tail(plan: &Plan, opts: RunOptions) -> Result<ExperimentReport, LabError> {
    let pool = pool(opts.workers)?;
    let mut report = new_report(plan);
    let s = plan.target.values();
    let mut points = Vec::new();

    for (t, p) in plan.points.iter().enumerate() {
        let ready = match &p.ready {
            Ok(r) => r,
            Err(e) => {
                point_error(&mut report, p.boxes, &p.n, e.clone());
                continue;
            }
        };
        let sigma = ready.theory.sigma();
        let outcome = (|| -> Result<_, LabError> {
            let e_mu = exact_expectation(ready)?;
            let pa = ready.theory.event_probability()?;
            let bounds = plan
                .eps
                .iter()
                .map(|(_, m)| ready.theory.tail_bound_with(pa, m * sigma, plan.config.slack))
                .collect::<Result<Vec<_>, _>>()?;
            let draws = simulate(&pool, ready, plan.strategy, plan.config.master_seed, t as u64, plan.config.replications)?;
            Ok((e_mu, pa, bounds, draws))
        })();
        let (e_mu, pa, bounds, draws) = match outcome {
            Ok(x) => x,
            Err(e) => {
                point_error(&mut report, p.boxes, &p.n, e.to_string());
                continue;
            }
        };
        let root_n = (p.boxes as f64).sqrt();
        let first_bound = bounds[0].value;
        let stats: Vec<f64> = draws.iter().map(|&(_, mu)| (mu as f64 - e_mu).abs() / root_n).collect();
        for (r, (&(seed, mu), &stat)) in draws.iter().zip(&stats).enumerate() {
            report.records.push(Record {
                kind: Kind::Tail,
                boxes: p.boxes,
                n: p.n.clone(),
                s: s.clone(),
                replication: r as u64,
                mu,
                e_mu_exact: e_mu,
                theory_value: sigma,
                statistic: stat,
                bound: first_bound,
                seed,
            });
        }
        let reps = draws.len() as f64;
        let mut grid = Vec::new();
        let mut by_eps: Vec<(f64, f64)> = Vec::new();
        for ((label, m), b) in plan.eps.iter().zip(&bounds) {
            let hits = stats.iter().filter(|&&x| x >= b.epsilon).count();
            let empirical = hits as f64 / reps;
            grid.push(json!({
                "eps": label,
                "eps_over_sigma": num(*m),
                "epsilon": num(b.epsilon),
                "empirical": num(empirical),
                "exceedances": hits,
                "bound": num(b.value),
                "bound_with_slack": num(b.value_with_slack),
                "b_hat": num(b.b_hat),
                "slack_indicator": num(b.slack_indicator),
                "pass": empirical <= b.value,
            }));
            report.checks.push(Check::at_most(
                format!("empirical tail at eps={label} (N={})", p.boxes),
                empirical,
                b.value,
            ));
            by_eps.push((b.epsilon, b.value));
        }
        by_eps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ordered: Vec<f64> = by_eps.iter().map(|x| x.1).collect();
        let monotone = ordered.windows(2).all(|w| w[1] < w[0]);
        if !monotone {
            report.notes.push(format!(
                "bound column is not decreasing in eps at N={}: the B-hat factor grows with eps",
                p.boxes
            ));
        }
        let mut ps = point_summary(p.boxes, &p.n);
        ps.insert("E_mu_exact".into(), num(e_mu));
        ps.insert("sigma".into(), num(sigma));
        ps.insert("event_probability".into(), num(pa));
        ps.insert("threshold".into(), num(ready.theory.tail_threshold()));
        ps.insert("bound_decreasing".into(), json!(monotone));
        ps.insert("grid".into(), Value::Array(grid));
        points.push(Value::Object(ps));
    }
    report.summary.insert("points".into(), Value::Array(points));
    report.summary.insert("slack_multiplier".into(), num(plan.config.slack));
    Ok(report)
}
