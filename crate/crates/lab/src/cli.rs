//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for usage and validation errors (nothing was
//! computed), 2 for runtime errors.

use std::io::Write;
use std::path::PathBuf;

use alloc_lab_core::sampler::{exact_conditional_prob, exact_conditional_prob_at, fill_exact, SamplerStrategy, DEFAULT_ENUMERATION_GUARD};
use alloc_lab_core::scheme::{AllocationMatrix, SchemeSampler};
use alloc_lab_core::sum_distribution::{marginal_law, SumTable};
use alloc_lab_core::PowerSeriesFamily;
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::cache;
use crate::config::{
    ColourDoc, EpsPoint, ExperimentConfig, FamilyDef, FamilyRef, Format, Kind, OutputDoc, Plan, ScheduleDoc, SchemeDoc,
    SectorBound, TargetDoc,
};
use crate::error::LabError;
use crate::format::sig12;
use crate::harness::{derive_seed, rng_for, run, RunOptions};
use crate::report::{emit_report, ExperimentReport};
use crate::validate::{run_identities, run_validate, IdentityOptions, ValidateOptions};

#[derive(Debug, Parser)]
#[command(
    name = "alloc-lab",
    version,
    about = "Power-series allocation schemes: exact samplers, limit values and Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the builtin families, or describe one given by flags
    Families(FamilyArgs),
    /// Fit theta so that the mean equals each alpha
    Theta(ThetaArgs),
    /// Draw allocations and print them as CSV (replication,box_index,count)
    Sample(SampleArgs),
    /// Exact conditional probability of a row, or the marginal P(eta_1 = s)
    Prob(ProbArgs),
    /// Strong-law check of mu/N against its limit
    Slln(ExperimentArgs),
    /// Iterated-logarithm ratio check along a schedule of N
    Lil(ExperimentArgs),
    /// Empirical tail frequencies against the exponential bound
    Tail(ExperimentArgs),
    /// Oracle cross-validation suite (samplers, bounds, identities)
    Validate(ValidateArgs),
    /// Splitting and merging identities for one or more families
    Identities(IdentityArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct FamilyArgs {
    /// Builtin family: poisson, geometric or binomial(m); comma list for several colours
    #[arg(long)]
    pub family: Option<String>,
    /// JSON family definition {"name", "coeffs", "radius"}
    #[arg(long, value_name = "PATH", conflicts_with = "family")]
    pub coeffs_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThetaArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Target means, comma list
    #[arg(long, required = true)]
    pub alpha: String,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Number of colours when a single family is repeated
    #[arg(long = "K")]
    pub colours: Option<usize>,
    /// Number of boxes
    #[arg(long = "N", required = true)]
    pub boxes: usize,
    /// Balls per colour, comma list
    #[arg(long, required = true)]
    pub n: String,
    /// theta per colour (defaults to the fitted value), comma list
    #[arg(long)]
    pub theta: Option<String>,
    /// Sampler: auto, direct, table or rejection
    #[arg(long, default_value = "auto")]
    pub strategy: String,
    /// Number of draws
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Binary table cache, read when its key matches and written otherwise (single colour, table strategy)
    #[arg(long, value_name = "PATH")]
    pub table_cache: Option<PathBuf>,
    /// Write the CSV here instead of standard output
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Number of boxes
    #[arg(long = "N", required = true)]
    pub boxes: usize,
    /// Number of balls
    #[arg(long, required = true)]
    pub n: u64,
    /// Row contents, comma list of length N summing to n
    #[arg(long, conflicts_with = "s", required_unless_present = "s")]
    pub counts: Option<String>,
    /// Content s for the marginal P(eta_1 = s)
    #[arg(long)]
    pub s: Option<u64>,
    /// Evaluate through the pmf at this theta (the result does not depend on it)
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// Experiment config JSON; flags override its fields
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Number of colours when a single family is repeated
    #[arg(long = "K")]
    pub colours: Option<usize>,
    /// Balls per colour, comma list
    #[arg(long)]
    pub n: Option<String>,
    /// Number of boxes
    #[arg(long = "N")]
    pub boxes: Option<usize>,
    /// Target: comma list for a content vector, a scalar for a colour-blind total
    #[arg(long)]
    pub s: Option<String>,
    /// Limit means per colour, comma list; also sets n = round(alpha N) on schedule strings
    #[arg(long)]
    pub alpha: Option<String>,
    /// theta override per colour, comma list
    #[arg(long)]
    pub theta: Option<String>,
    /// Replications per schedule point
    #[arg(long)]
    pub reps: Option<u64>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Schedule of N: pow2:A..B, list:N1,N2,... or a single N
    #[arg(long)]
    pub schedule: Option<String>,
    /// Sector bounds per colour as lower:upper, comma list (lil)
    #[arg(long)]
    pub sector: Option<String>,
    /// eps grid in units of sigma, comma list; `min` is 4 sqrt(2) (tail)
    #[arg(long)]
    pub eps_grid: Option<String>,
    /// Multiplier on the 8 sigma^2/eps^2 remainder in the slack column (tail)
    #[arg(long)]
    pub slack: Option<f64>,
    /// Pass threshold for the mean |mu/N - limit| (slln)
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Sampler: auto, direct, table or rejection
    #[arg(long)]
    pub strategy: Option<String>,
    /// Output path; the CSV and the JSON summary are written next to each other
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Which files to write
    #[arg(long, value_parser = ["csv", "json", "both"])]
    pub format: Option<String>,
    /// Worker threads [default: available parallelism]
    #[arg(long, env = "ALLOC_LAB_WORKERS", hide_env_values = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Draws per sampler for the total-variation checks
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: u64,
    /// Draws for the chi-square check
    #[arg(long, default_value_t = 100_000)]
    pub chi_draws: u64,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path for the JSON summary (and an empty record CSV)
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Which files to write
    #[arg(long, value_parser = ["csv", "json", "both"], default_value = "json")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct IdentityArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Total means to test, comma list
    #[arg(long)]
    pub alpha: Option<String>,
    /// Colour counts for the splitting identity, comma list
    #[arg(long = "K")]
    pub colours: Option<String>,
    /// Largest s for the merging identity
    #[arg(long)]
    pub s: Option<u64>,
    /// Output path for the JSON summary
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Which files to write
    #[arg(long, value_parser = ["csv", "json", "both"], default_value = "json")]
    pub format: String,
}

/// Failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

type Outcome = Result<(), Failure>;

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|x| x.trim().parse::<T>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| invalid(format!("--{flag}: cannot parse `{s}`")))
}

/// Splits a family list on commas outside parentheses.
fn split_families(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur.trim().to_string());
    out
}

impl FamilyArgs {
    fn given(&self) -> bool {
        self.family.is_some() || self.coeffs_file.is_some()
    }

    fn refs(&self) -> Result<Vec<FamilyRef>, Failure> {
        if let Some(path) = &self.coeffs_file {
            return Ok(vec![FamilyRef::Inline(FamilyDef::load(path).map_err(invalid)?)]);
        }
        match &self.family {
            Some(f) => Ok(split_families(f).into_iter().map(FamilyRef::Name).collect()),
            None => Err(invalid("one of --family or --coeffs-file is required")),
        }
    }

    fn build(&self) -> Result<Vec<PowerSeriesFamily>, Failure> {
        self.refs()?.iter().map(|r| r.build().map_err(invalid)).collect()
    }

    fn single(&self) -> Result<PowerSeriesFamily, Failure> {
        let mut f = self.build()?;
        if f.len() != 1 {
            return Err(invalid("exactly one family is expected here"));
        }
        Ok(f.remove(0))
    }
}

fn repeat_to<T: Clone>(items: Vec<T>, colours: Option<usize>, what: &str) -> Result<Vec<T>, Failure> {
    match colours {
        None => Ok(items),
        Some(0) => Err(invalid("--K must be at least 1")),
        Some(k) if items.len() == 1 => Ok(vec![items[0].clone(); k]),
        Some(k) if items.len() == k => Ok(items),
        Some(k) => Err(invalid(format!("{} {what} for --K {k}", items.len()))),
    }
}

/// A comma list with one entry per colour, or a single entry broadcast.
fn per_colour<T: std::str::FromStr + Clone>(flag: &str, s: &str, colours: usize) -> Result<Vec<T>, Failure> {
    let v: Vec<T> = parse_list(flag, s)?;
    match v.len() {
        1 => Ok(vec![v[0].clone(); colours]),
        l if l == colours => Ok(v),
        l => Err(invalid(format!("--{flag} has {l} entries for {colours} colours"))),
    }
}

/// Entry point shared by the binary and the tests.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Outcome {
    match command {
        Command::Families(a) => families(&a, out),
        Command::Theta(a) => theta(&a, out),
        Command::Sample(a) => sample(&a, out),
        Command::Prob(a) => prob(&a, out),
        Command::Slln(a) => experiment(Kind::Slln, &a, out),
        Command::Lil(a) => experiment(Kind::Lil, &a, out),
        Command::Tail(a) => experiment(Kind::Tail, &a, out),
        Command::Validate(a) => validate(&a, out),
        Command::Identities(a) => identities(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: impl AsRef<str>) -> Outcome {
    out.write_all(text.as_ref().as_bytes()).map_err(runtime)
}

fn describe(f: &PowerSeriesFamily) -> String {
    let radius = if f.radius().is_finite() { sig12(f.radius()) } else { "inf".into() };
    let support = f.support_bound().map_or("unbounded".to_string(), |b| b.to_string());
    let coeffs: Vec<String> = (0..6).map(|k| sig12(f.coeff(k))).collect();
    format!("{}\tradius {radius}\tsupport {support}\tb_0..b_5 {}\n", f.name(), coeffs.join(","))
}

fn families(a: &FamilyArgs, out: &mut dyn Write) -> Outcome {
    if a.given() {
        for f in a.build()? {
            emit(out, describe(&f))?;
        }
        return Ok(());
    }
    emit(
        out,
        "poisson\tb_k = 1\tradius inf\tsupport unbounded\n\
         geometric\tb_k = k!\tradius 1\tsupport unbounded\n\
         binomial(m)\tb_k = m!/(m-k)!\tradius inf\tsupport m\n",
    )
}

fn theta(a: &ThetaArgs, out: &mut dyn Write) -> Outcome {
    let f = a.family.single()?;
    let alphas: Vec<f64> = parse_list("alpha", &a.alpha)?;
    let mut lines = String::new();
    for alpha in alphas {
        let t = f.mean_inverse(alpha, 1e-15).map_err(invalid)?;
        lines.push_str(&sig12(t.get()));
        lines.push('\n');
    }
    emit(out, lines)
}

fn sample(a: &SampleArgs, out: &mut dyn Write) -> Outcome {
    let families = repeat_to(a.family.build()?, a.colours, "families")?;
    let k = families.len();
    let ns: Vec<u64> = per_colour("n", &a.n, k)?;
    let thetas: Vec<Option<f64>> = match &a.theta {
        Some(t) => per_colour::<f64>("theta", t, k)?.into_iter().map(Some).collect(),
        None => vec![None; k],
    };
    let strategy: SamplerStrategy = a.strategy.parse().map_err(invalid)?;
    let colours = families
        .iter()
        .zip(&ns)
        .zip(&thetas)
        .map(|((f, &n), &theta)| alloc_lab_core::ColourSpec {
            family: f.clone(),
            n,
            theta,
        })
        .collect();
    let mut scheme = alloc_lab_core::SchemeConfig::new(colours, a.boxes).map_err(invalid)?;
    if a.table_cache.is_some() && (k != 1 || strategy != SamplerStrategy::Table) {
        return Err(invalid("--table-cache needs a single colour and --strategy table"));
    }
    if matches!(strategy, SamplerStrategy::Table | SamplerStrategy::Rejection { .. }) {
        let fitted = scheme.fitted_thetas().map_err(invalid)?;
        for (c, t) in scheme.colours.iter_mut().zip(fitted) {
            c.theta.get_or_insert(t);
        }
    }

    let mut text = String::new();
    if k == 1 {
        text.push_str("replication,box_index,count\n");
    } else {
        text.push_str("replication,colour,box_index,count\n");
    }
    let push_row = |text: &mut String, r: u64, colour: Option<usize>, row: &[u64]| {
        for (j, c) in row.iter().enumerate() {
            match colour {
                None => text.push_str(&format!("{r},{j},{c}\n")),
                Some(i) => text.push_str(&format!("{r},{i},{j},{c}\n")),
            }
        }
    };
    if let Some(path) = &a.table_cache {
        let c = &scheme.colours[0];
        let theta = c.theta.expect("theta fitted above");
        let table = cache::load_or_build(path, c.family.name(), theta, a.boxes, c.n as usize, || {
            let dist = c.family.at(theta)?;
            Ok(SumTable::build(&dist, a.boxes, c.n as usize)?)
        })
        .map_err(runtime)?;
        let mut row = vec![0; a.boxes];
        for r in 0..a.reps {
            fill_exact(&table, &mut rng_for(derive_seed(a.seed, 0, r)), &mut row);
            push_row(&mut text, r, None, &row);
        }
    } else {
        let sampler = SchemeSampler::new(&scheme, strategy).map_err(runtime)?;
        let mut m = AllocationMatrix::zeros(k, a.boxes);
        for r in 0..a.reps {
            sampler.fill(&mut rng_for(derive_seed(a.seed, 0, r)), &mut m).map_err(runtime)?;
            for i in 0..k {
                push_row(&mut text, r, (k > 1).then_some(i), m.row(i));
            }
        }
    }
    match &a.out {
        Some(path) => std::fs::write(path, text).map_err(|e| runtime(LabError::io(path, e))),
        None => emit(out, text),
    }
}

fn prob(a: &ProbArgs, out: &mut dyn Write) -> Outcome {
    let f = a.family.single()?;
    if a.boxes == 0 {
        return Err(invalid("--N must be at least 1"));
    }
    if let Some(counts) = &a.counts {
        let counts: Vec<u64> = parse_list("counts", counts)?;
        if counts.len() != a.boxes || counts.iter().sum::<u64>() != a.n {
            return Err(invalid(format!(
                "--counts must have N = {} entries summing to n = {}",
                a.boxes, a.n
            )));
        }
        let p = match a.theta {
            Some(t) => exact_conditional_prob_at(&f, t, &counts, DEFAULT_ENUMERATION_GUARD),
            None => exact_conditional_prob(&f, &counts),
        }
        .map_err(runtime)?;
        return emit(out, format!("{}\n", sig12(p)));
    }
    let s = a.s.expect("clap requires --counts or --s");
    let theta = match a.theta {
        Some(t) => t,
        None if a.n == 0 => return emit(out, format!("{}\n", if s == 0 { "1" } else { "0" })),
        None => f.mean_inverse(a.n as f64 / a.boxes as f64, 1e-13).map_err(invalid)?.get(),
    };
    let dist = f.at(theta).map_err(invalid)?;
    let law = marginal_law(&dist, a.boxes, a.n as usize, (s as usize).min(a.n as usize)).map_err(runtime)?;
    emit(out, format!("{}\n", sig12(law.get(s as usize).copied().unwrap_or(0.0))))
}

/// Folds the flags into the config (file or fresh). Every error here is a
/// validation error.
pub fn assemble_config(kind: Kind, a: &ExperimentArgs) -> Result<ExperimentConfig, LabError> {
    let fail = |f: Failure| LabError::Invalid(f.message);
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    cfg.kind = kind;

    let mut colours: Vec<ColourDoc> = cfg.scheme.as_ref().map(|s| s.colours.clone()).unwrap_or_default();
    let mut boxes = cfg.scheme.as_ref().map(|s| s.boxes);
    if a.family.given() {
        let refs = repeat_to(a.family.refs().map_err(fail)?, a.colours, "families").map_err(fail)?;
        let old = std::mem::take(&mut colours);
        colours = refs
            .into_iter()
            .enumerate()
            .map(|(i, family)| ColourDoc {
                family,
                n: old.get(i).map_or(0, |c| c.n),
                theta: None,
            })
            .collect();
    } else if let Some(k) = a.colours {
        if colours.len() == 1 && k > 1 {
            colours = vec![colours[0].clone(); k];
        } else if colours.len() != k {
            return Err(LabError::Invalid(format!("--K {k} does not match {} configured colours", colours.len())));
        }
    }
    if colours.is_empty() {
        return Err(LabError::Invalid("no family given: use --family, --coeffs-file or --config".into()));
    }
    let k = colours.len();
    if let Some(b) = a.boxes {
        boxes = Some(b);
    }
    if let Some(s) = &a.schedule {
        cfg.schedule = Some(ScheduleDoc::Spec(s.clone()));
        if boxes.is_none() {
            boxes = crate::config::parse_schedule(s)?.first().copied();
        }
    }
    let boxes = boxes.ok_or_else(|| LabError::Invalid("--N is required".into()))?;
    if let Some(al) = &a.alpha {
        let alpha: Vec<f64> = per_colour("alpha", al, k).map_err(fail)?;
        for (c, al) in colours.iter_mut().zip(&alpha) {
            c.n = (al * boxes as f64).round() as u64;
        }
        cfg.alpha = Some(alpha);
    }
    if let Some(n) = &a.n {
        for (c, n) in colours.iter_mut().zip(per_colour::<u64>("n", n, k).map_err(fail)?) {
            c.n = n;
        }
    }
    if a.family.given() && a.n.is_none() && a.alpha.is_none() {
        return Err(LabError::Invalid("--n or --alpha is required with --family".into()));
    }
    if let Some(t) = &a.theta {
        for (c, t) in colours.iter_mut().zip(per_colour::<f64>("theta", t, k).map_err(fail)?) {
            c.theta = Some(t);
        }
    }
    cfg.scheme = Some(SchemeDoc { colours, boxes });

    if let Some(s) = &a.s {
        let v: Vec<u64> = parse_list("s", s).map_err(fail)?;
        cfg.s = Some(if v.len() == 1 { TargetDoc::Total(v[0]) } else { TargetDoc::Vector(v) });
    }
    if let Some(r) = a.reps {
        cfg.replications = r;
    }
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(sector) = &a.sector {
        let bounds = sector
            .split(',')
            .map(|b| {
                let (lo, hi) = b
                    .split_once(':')
                    .ok_or_else(|| LabError::Invalid(format!("--sector entry `{b}` is not lower:upper")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| LabError::Invalid(format!("--sector entry `{b}` is not numeric")))
                };
                Ok(SectorBound {
                    lower: parse(lo)?,
                    upper: parse(hi)?,
                })
            })
            .collect::<Result<Vec<_>, LabError>>()?;
        cfg.sector = Some(bounds);
    }
    if let Some(g) = &a.eps_grid {
        cfg.eps_grid = Some(g.split(',').map(EpsPoint::parse).collect::<Result<_, _>>()?);
    }
    if let Some(x) = a.slack {
        cfg.slack = x;
    }
    if let Some(x) = a.tolerance {
        cfg.tolerance = Some(x);
    }
    if let Some(x) = &a.strategy {
        cfg.sampler = Some(x.clone());
    }
    let format: Option<Format> = a.format.as_deref().map(str::parse).transpose()?;
    match (&a.out, &mut cfg.output) {
        (Some(path), _) => {
            cfg.output = Some(OutputDoc {
                path: path.clone(),
                format: format.unwrap_or_default(),
            })
        }
        (None, Some(o)) => {
            if let Some(f) = format {
                o.format = f;
            }
        }
        (None, None) if format.is_some() => return Err(LabError::Invalid("--format needs --out".into())),
        (None, None) => {}
    }
    Ok(cfg)
}

fn workers(flag: Option<usize>) -> Result<RunOptions, Failure> {
    match flag {
        Some(0) => Err(invalid("--workers must be at least 1")),
        Some(w) => Ok(RunOptions { workers: w }),
        None => Ok(RunOptions::default()),
    }
}

fn finish(report: &ExperimentReport, output: Option<&OutputDoc>, out: &mut dyn Write) -> Outcome {
    emit(out, report.render_text())?;
    if let Some(o) = output {
        for p in emit_report(report, &o.path, o.format).map_err(runtime)? {
            emit(out, format!("wrote {}\n", p.display()))?;
        }
    }
    if report.errors.is_empty() {
        Ok(())
    } else {
        Err(runtime(format!("{} schedule point(s) failed", report.errors.len())))
    }
}

fn experiment(kind: Kind, a: &ExperimentArgs, out: &mut dyn Write) -> Outcome {
    let opts = workers(a.workers)?;
    let cfg = assemble_config(kind, a).map_err(invalid)?;
    let plan = Plan::resolve(&cfg).map_err(invalid)?;
    let report = run(&plan, opts).map_err(runtime)?;
    finish(&report, cfg.output.as_ref(), out)
}

fn hash_of(parts: &[String]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(parts.join("\n").as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn output_doc(path: &Option<PathBuf>, format: &str) -> Result<Option<OutputDoc>, Failure> {
    let format: Format = format.parse().map_err(invalid)?;
    Ok(path.as_ref().map(|p| OutputDoc {
        path: p.clone(),
        format,
    }))
}

fn validate(a: &ValidateArgs, out: &mut dyn Write) -> Outcome {
    if a.draws == 0 || a.chi_draws == 0 {
        return Err(invalid("draw counts must be positive"));
    }
    let output = output_doc(&a.out, &a.format)?;
    let opts = ValidateOptions {
        draws: a.draws,
        chi_draws: a.chi_draws,
        seed: a.seed,
    };
    let hash = hash_of(&["validate".into(), a.draws.to_string(), a.chi_draws.to_string(), a.seed.to_string()]);
    let report = run_validate(&opts, hash).map_err(runtime)?;
    finish(&report, output.as_ref(), out)
}

fn identities(a: &IdentityArgs, out: &mut dyn Write) -> Outcome {
    let output = output_doc(&a.out, &a.format)?;
    let mut opts = IdentityOptions::default();
    if a.family.given() {
        opts.families = a.family.build()?;
    }
    if let Some(al) = &a.alpha {
        opts.alphas = parse_list("alpha", al)?;
    }
    if let Some(k) = &a.colours {
        opts.split_ks = parse_list("K", k)?;
        opts.merge_ks = opts.split_ks.clone();
    }
    if let Some(s) = a.s {
        opts.s_max = s;
    }
    if opts.split_ks.contains(&0) || opts.alphas.iter().any(|x| !(*x > 0.0)) {
        return Err(invalid("--K entries must be positive and --alpha entries > 0"));
    }
    let hash = hash_of(&[
        "identities".into(),
        opts.families.iter().map(|f| f.name().to_string()).collect::<Vec<_>>().join(","),
        format!("{:?}", opts.alphas),
        format!("{:?}", opts.split_ks),
        opts.s_max.to_string(),
    ]);
    let report = run_identities(&opts, hash).map_err(runtime)?;
    finish(&report, output.as_ref(), out)
}

/// Markdown reference generated from the `--help` text of every subcommand.
pub fn render_markdown() -> String {
    let mut cmd = Cli::command();
    let mut md = String::from("# alloc-lab command reference\n\nGenerated from `--help`; do not edit by hand.\n\n");
    md.push_str("```text\n");
    md.push_str(&cmd.render_long_help().to_string());
    md.push_str("```\n");
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let sub = cmd.find_subcommand_mut(&name).expect("listed subcommand");
        let help = sub.render_long_help().to_string();
        md.push_str(&format!("\n## {name}\n\n```text\n{help}```\n"));
    }
    md
}
