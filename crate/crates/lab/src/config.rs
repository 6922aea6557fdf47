//! JSON documents: family definitions, scheme configs and experiment configs,
//! plus their resolution into a validated [`Plan`].

use std::fs;
use std::path::{Path, PathBuf};

use alloc_lab_core::power_series::PowerSeriesFamily;
use alloc_lab_core::sampler::SamplerStrategy;
use alloc_lab_core::scheme::{ColourSpec, OccupancyTarget, SchemeConfig};
use alloc_lab_core::theory::TheoryContext;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

/// `"radius": 1.0` or `"radius": "inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Finite(f64),
    Named(String),
}

impl Radius {
    pub fn value(&self) -> Result<f64, LabError> {
        match self {
            Radius::Finite(r) => Ok(*r),
            Radius::Named(s) if matches!(s.as_str(), "inf" | "infinity" | "+inf") => Ok(f64::INFINITY),
            Radius::Named(s) => Err(LabError::Invalid(format!("radius `{s}` is neither a number nor \"inf\""))),
        }
    }
}

/// User-defined family: finite coefficient list `[b_0, b_1, …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDef {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub radius: Radius,
}

impl FamilyDef {
    pub fn build(&self) -> Result<PowerSeriesFamily, LabError> {
        Ok(PowerSeriesFamily::explicit(self.name.clone(), self.coeffs.clone(), self.radius.value()?)?)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::Invalid(format!("{}: {e}", path.display())))
    }
}

/// A builtin family name or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyRef {
    Name(String),
    Inline(FamilyDef),
}

impl FamilyRef {
    pub fn build(&self) -> Result<PowerSeriesFamily, LabError> {
        match self {
            FamilyRef::Name(n) => Ok(PowerSeriesFamily::by_name(n)?),
            FamilyRef::Inline(def) => def.build(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColourDoc {
    pub family: FamilyRef,
    pub n: u64,
    #[serde(default)]
    pub theta: Option<f64>,
}

/// `{"colours": [{"family": …, "n": …, "theta": …}], "N": …}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeDoc {
    pub colours: Vec<ColourDoc>,
    #[serde(rename = "N")]
    pub boxes: usize,
}

impl SchemeDoc {
    pub fn families(&self) -> Result<Vec<PowerSeriesFamily>, LabError> {
        self.colours.iter().map(|c| c.family.build()).collect()
    }

    pub fn build(&self) -> Result<SchemeConfig, LabError> {
        let colours = self
            .colours
            .iter()
            .map(|c| {
                Ok(ColourSpec {
                    family: c.family.build()?,
                    n: c.n,
                    theta: c.theta,
                })
            })
            .collect::<Result<Vec<_>, LabError>>()?;
        Ok(SchemeConfig::new(colours, self.boxes)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Slln,
    Lil,
    Tail,
    Validate,
    Identities,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Slln => "slln",
            Kind::Lil => "lil",
            Kind::Tail => "tail",
            Kind::Validate => "validate",
            Kind::Identities => "identities",
        }
    }
}

/// `"s": [1, 1]` counts boxes with that content vector; `"s": 2` counts boxes
/// holding two balls of any colour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetDoc {
    Vector(Vec<u64>),
    Total(u64),
}

impl TargetDoc {
    pub fn resolve(&self, colours: usize) -> Result<OccupancyTarget, LabError> {
        match self {
            TargetDoc::Vector(v) if v.len() == colours => Ok(OccupancyTarget::Vector(v.clone())),
            TargetDoc::Vector(v) if v.len() == 1 => Ok(OccupancyTarget::Total(v[0])),
            TargetDoc::Vector(v) => Err(LabError::Invalid(format!(
                "target has {} entries for {colours} colours",
                v.len()
            ))),
            TargetDoc::Total(s) if colours == 1 => Ok(OccupancyTarget::Vector(vec![*s])),
            TargetDoc::Total(s) => Ok(OccupancyTarget::Total(*s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    #[serde(rename = "N")]
    pub boxes: usize,
    pub n: Vec<u64>,
}

/// Explicit points, or a generator string such as `pow2:8..17`,
/// `list:1000,2000` or a single box count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleDoc {
    Spec(String),
    Points(Vec<SchedulePoint>),
}

/// Parses a schedule string into box counts.
pub fn parse_schedule(spec: &str) -> Result<Vec<usize>, LabError> {
    let bad = || LabError::Invalid(format!("cannot parse schedule `{spec}`"));
    let spec = spec.trim();
    if let Some(range) = spec.strip_prefix("pow2:") {
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u32 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi || hi >= 48 {
            return Err(bad());
        }
        return Ok((lo..=hi).map(|t| 1usize << t).collect());
    }
    let list = spec.strip_prefix("list:").unwrap_or(spec);
    list.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
        .collect()
}

/// `ε` as a multiple of `σ`, or `"min"` for the smallest admissible `4√2σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsPoint {
    Multiple(f64),
    Named(String),
}

impl EpsPoint {
    pub fn parse(s: &str) -> Result<Self, LabError> {
        let s = s.trim();
        if s == "min" {
            return Ok(EpsPoint::Named(s.to_string()));
        }
        s.parse::<f64>()
            .map(EpsPoint::Multiple)
            .map_err(|_| LabError::Invalid(format!("bad eps grid entry `{s}`")))
    }

    /// Multiple of `σ`.
    pub fn multiple(&self) -> Result<f64, LabError> {
        match self {
            EpsPoint::Multiple(m) => Ok(*m),
            EpsPoint::Named(s) if s == "min" => Ok(4.0 * std::f64::consts::SQRT_2),
            EpsPoint::Named(s) => Err(LabError::Invalid(format!("bad eps grid entry `{s}`"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            EpsPoint::Multiple(m) => format!("{m}sigma"),
            EpsPoint::Named(s) => format!("{s}(4sqrt2 sigma)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorBound {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl std::str::FromStr for Format {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            _ => Err(LabError::Invalid(format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDoc {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_replications() -> u64 {
    1
}

fn default_slack() -> f64 {
    1.0
}

/// An experiment as written in a config file (all fields after flag overrides).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub scheme: Option<SchemeDoc>,
    #[serde(default)]
    pub s: Option<TargetDoc>,
    /// Per-colour `α_i` used to derive `n_i = round(α_i N)` for schedule strings.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub schedule: Option<ScheduleDoc>,
    #[serde(default)]
    pub sector: Option<Vec<SectorBound>>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub eps_grid: Option<Vec<EpsPoint>>,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Pass threshold: mean |μ/N − limit| for slln.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub sampler: Option<String>,
    #[serde(default)]
    pub output: Option<OutputDoc>,
}

impl ExperimentConfig {
    pub fn new(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            scheme: None,
            s: None,
            alpha: None,
            schedule: None,
            sector: None,
            replications: 1,
            master_seed: 0,
            eps_grid: None,
            slack: 1.0,
            tolerance: None,
            sampler: None,
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// A schedule point whose scheme and theory context are ready.
#[derive(Debug, Clone)]
pub struct Ready {
    pub scheme: SchemeConfig,
    pub theory: TheoryContext,
}

/// One schedule point. Infeasible points carry their error and are reported
/// without stopping the rest of the run.
#[derive(Debug, Clone)]
pub struct PlannedPoint {
    pub boxes: usize,
    pub n: Vec<u64>,
    pub ready: Result<Ready, String>,
}

/// A validated Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub families: Vec<PowerSeriesFamily>,
    pub target: OccupancyTarget,
    pub points: Vec<PlannedPoint>,
    pub strategy: SamplerStrategy,
    /// Multiples of `σ` for tail experiments.
    pub eps: Vec<(String, f64)>,
}

impl Plan {
    /// Checks the config and resolves the schedule. Errors here are
    /// validation errors: nothing has been sampled yet.
    pub fn resolve(config: &ExperimentConfig) -> Result<Plan, LabError> {
        if matches!(config.kind, Kind::Validate | Kind::Identities) {
            return Err(LabError::Invalid(format!(
                "`{}` experiments have no schedule to plan",
                config.kind.as_str()
            )));
        }
        let doc = config
            .scheme
            .as_ref()
            .ok_or_else(|| LabError::Invalid("a scheme (families, n, N) is required".into()))?;
        if doc.colours.is_empty() {
            return Err(LabError::Invalid("the scheme needs at least one colour".into()));
        }
        if doc.boxes == 0 {
            return Err(LabError::Invalid("N must be at least 1".into()));
        }
        if config.replications == 0 {
            return Err(LabError::Invalid("replications must be at least 1".into()));
        }
        let families = doc.families()?;
        let k = families.len();
        let target = config
            .s
            .as_ref()
            .ok_or_else(|| LabError::Invalid("an occupancy target `s` is required".into()))?
            .resolve(k)?;
        let strategy: SamplerStrategy = match &config.sampler {
            Some(s) => s.parse()?,
            None => SamplerStrategy::Auto,
        };

        let template_alpha: Vec<f64> = doc.colours.iter().map(|c| c.n as f64 / doc.boxes as f64).collect();
        let alpha = match &config.alpha {
            Some(a) if a.len() != k => {
                return Err(LabError::Invalid(format!("{} alpha values for {k} colours", a.len())))
            }
            Some(a) => a.clone(),
            None => template_alpha,
        };
        if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(LabError::Invalid("alpha values must be finite and non-negative".into()));
        }
        let points: Vec<SchedulePoint> = match &config.schedule {
            None => vec![SchedulePoint {
                boxes: doc.boxes,
                n: doc.colours.iter().map(|c| c.n).collect(),
            }],
            Some(ScheduleDoc::Points(p)) => p.clone(),
            Some(ScheduleDoc::Spec(s)) => parse_schedule(s)?
                .into_iter()
                .map(|boxes| SchedulePoint {
                    boxes,
                    n: alpha.iter().map(|a| (a * boxes as f64).round() as u64).collect(),
                })
                .collect(),
        };
        if points.is_empty() {
            return Err(LabError::Invalid("the schedule is empty".into()));
        }
        for p in &points {
            if p.n.len() != k {
                return Err(LabError::Invalid(format!(
                    "schedule point N={} has {} ball counts for {k} colours",
                    p.boxes,
                    p.n.len()
                )));
            }
            if p.boxes == 0 {
                return Err(LabError::Invalid("schedule box counts must be positive".into()));
            }
        }
        if config.kind == Kind::Lil {
            if points.iter().any(|p| p.boxes < 2) {
                return Err(LabError::Invalid("lil needs N >= 2 (ln N = 0 at N = 1)".into()));
            }
            if points.windows(2).any(|w| w[0].boxes >= w[1].boxes) {
                return Err(LabError::Invalid("lil needs a strictly increasing schedule of N".into()));
            }
        }
        if let Some(sector) = &config.sector {
            if sector.len() != k {
                return Err(LabError::Invalid(format!("{} sector bounds for {k} colours", sector.len())));
            }
            for (i, (b, fam)) in sector.iter().zip(&families).enumerate() {
                if !(b.lower > 0.0 && b.lower < b.upper) {
                    return Err(LabError::Invalid(format!(
                        "colour {i}: sector bounds need 0 < lower < upper"
                    )));
                }
                fam.mean_inverse(b.upper, 1e-13).map_err(|e| {
                    LabError::Invalid(format!("colour {i}: upper sector bound is not attainable inside the radius: {e}"))
                })?;
                for p in &points {
                    let a = p.n[i] as f64 / p.boxes as f64;
                    if !(a > b.lower && a < b.upper) {
                        return Err(LabError::Invalid(format!(
                            "colour {i}: alpha {a} at N={} lies outside the sector ({}, {})",
                            p.boxes, b.lower, b.upper
                        )));
                    }
                }
            }
        }

        let thetas: Vec<Option<f64>> = doc.colours.iter().map(|c| c.theta).collect();
        let planned: Vec<PlannedPoint> = points
            .iter()
            .map(|p| {
                let colours = families
                    .iter()
                    .zip(&p.n)
                    .zip(&thetas)
                    .map(|((f, &n), &theta)| ColourSpec {
                        family: f.clone(),
                        n,
                        theta,
                    })
                    .collect();
                let ready = SchemeConfig::new(colours, p.boxes)
                    .and_then(|scheme| {
                        let theory = TheoryContext::new(&scheme, target.clone())?;
                        Ok(Ready { scheme, theory })
                    })
                    .map_err(|e| e.to_string());
                PlannedPoint {
                    boxes: p.boxes,
                    n: p.n.clone(),
                    ready,
                }
            })
            .collect();
        if planned.iter().all(|p| p.ready.is_err()) {
            let first = planned[0].ready.as_ref().err().cloned().unwrap_or_default();
            return Err(LabError::Invalid(format!("no schedule point is feasible: {first}")));
        }

        let mut eps = Vec::new();
        if config.kind == Kind::Tail {
            let grid = config
                .eps_grid
                .clone()
                .unwrap_or_else(|| vec![EpsPoint::Named("min".into()), EpsPoint::Multiple(6.0), EpsPoint::Multiple(8.0)]);
            if grid.is_empty() {
                return Err(LabError::Invalid("the eps grid is empty".into()));
            }
            let min = 4.0 * std::f64::consts::SQRT_2;
            for e in &grid {
                let m = e.multiple()?;
                if m < min * (1.0 - 1e-12) {
                    return Err(LabError::Invalid(format!(
                        "eps = {m} sigma is below the admissible minimum 4*sqrt(2) sigma"
                    )));
                }
                eps.push((e.label(), m));
            }
            if planned.iter().filter_map(|p| p.ready.as_ref().ok()).any(|r| r.theory.sigma2 <= 0.0) {
                return Err(LabError::Invalid("the target has a degenerate indicator (sigma = 0)".into()));
            }
        }
        if !(config.slack.is_finite() && config.slack >= 0.0) {
            return Err(LabError::Invalid("slack must be a non-negative number".into()));
        }

        Ok(Plan {
            config: config.clone(),
            families,
            target,
            points: planned,
            strategy,
            eps,
        })
    }

    pub fn colours(&self) -> usize {
        self.families.len()
    }
}
