//! Batch experiments: the counterexample sweep, robustness sweeps against
//! frozen baselines, and the tree study. Each returns a structured result
//! that can be written as CSV plus a versioned JSON summary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{Approximator, BcMode, RDContext};
use crate::error::{Error, Result};
use crate::localization::{LocalizationReport, Localizer, Ratio};
use crate::mesh::{parse_mesh, Mesh};
use crate::target::TargetFunction;
use crate::tree::{exhaustive_best_by_budget, tree_approximate, ErrorFunctional};

/// Baseline shipped with the crate; `RDLOC_BASELINE` or an explicit path overrides it.
pub const DEFAULT_BASELINE: &str = include_str!("../baselines/baseline.json");

/// Environment variable naming an alternative baseline file.
pub const BASELINE_ENV: &str = "RDLOC_BASELINE";

/// Slack added to the counterexample bound for quadrature roundoff.
pub const COUNTEREXAMPLE_SLACK: f64 = 1e-8;

const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Counterexample,
    Sweep,
    Tree,
    Localize,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Counterexample => "counterexample",
            Experiment::Sweep => "sweep",
            Experiment::Tree => "tree",
            Experiment::Localize => "localize",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub epsilons: Vec<f64>,
    pub degree: usize,
    /// uniform refinement rounds applied to the mesh before localizing
    pub rounds: usize,
    /// element budget of the tree study
    pub budget: usize,
    pub targets: Vec<String>,
    /// `rdmesh` file replacing the default mesh
    pub mesh: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub bc: BcMode,
    /// explicit baseline path (takes precedence over `RDLOC_BASELINE`)
    pub baseline: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        let (epsilons, targets): (Vec<f64>, &[&str]) = match experiment {
            Experiment::Counterexample => (
                (1..=6).map(|k| 10f64.powi(-k)).collect(),
                &["counterexample"],
            ),
            Experiment::Sweep => (
                (0..=8).map(|k| 10f64.powi(-k)).collect(),
                &["counterexample", "smooth-sine"],
            ),
            Experiment::Tree => (vec![1e-3], &["regularized-step"]),
            Experiment::Localize => (vec![1e-2], &["smooth-sine"]),
        };
        ExperimentConfig {
            experiment,
            epsilons,
            degree: 1,
            rounds: 0,
            budget: 64,
            targets: targets.iter().map(|s| s.to_string()).collect(),
            mesh: None,
            out: None,
            seed: 0,
            bc: BcMode::None,
            baseline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidParameter("epsilon list is empty".into()));
        }
        if let Some(e) = self
            .epsilons
            .iter()
            .find(|e| !(**e >= 0.0) || !e.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {e}"
            )));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("no target selected".into()));
        }
        if !(1..=3).contains(&self.degree) {
            return Err(Error::Degree(self.degree));
        }
        for t in &self.targets {
            TargetFunction::builtin(t, 1.0, self.seed)?;
        }
        Ok(())
    }

    fn target(&self, name: &str, epsilon: f64) -> Result<TargetFunction> {
        TargetFunction::builtin(name, epsilon, self.seed)
    }

    fn ctx(&self, epsilon: f64) -> Result<RDContext> {
        RDContext::with_bc(epsilon, self.degree, self.bc)
    }

    /// The mesh from `--mesh`, or `default`, refined `rounds` times.
    fn mesh_or(&self, default: impl FnOnce() -> Result<Mesh>) -> Result<Mesh> {
        let m = match &self.mesh {
            Some(p) => parse_mesh(&fs::read_to_string(p)?)?,
            None => default()?,
        };
        m.uniform_refine(self.rounds)
    }

    /// The baseline selected by the config and environment.
    pub fn load_baseline(&self) -> Result<Baseline> {
        let path = self
            .baseline
            .clone()
            .or_else(|| std::env::var_os(BASELINE_ENV).map(PathBuf::from));
        match path {
            Some(p) => Baseline::parse(&fs::read_to_string(p)?),
            None => Baseline::parse(DEFAULT_BASELINE),
        }
    }
}

/// The mesh of the counterexample on `(-2, 2) x (-1, 1)`: a tensor grid with
/// `x = 0` as a grid line, so no element straddles the jump of `u_0`.
pub fn counterexample_mesh() -> Result<Mesh> {
    let xs: Vec<f64> = (0..=6).map(|i| -2.0 + 2.0 * i as f64 / 3.0).collect();
    Mesh::rectangle_grid_with_lines(&xs, &[-1.0, 0.0, 1.0])
}

/// Fails unless every leaf lies on one side of `x = 0`.
pub fn check_subordinate(mesh: &Mesh) -> Result<()> {
    let tol = 1e-12 * mesh.scale();
    for &k in mesh.leaves() {
        let v = mesh.triangle(k).v;
        let left = v.iter().all(|p| p[0] <= tol);
        let right = v.iter().all(|p| p[0] >= -tol);
        if !left && !right {
            return Err(Error::InvalidMesh(format!("element {k} straddles x = 0")));
        }
    }
    Ok(())
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `max / min` of the positive finite values.
pub fn spread(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in values {
        if v.is_finite() && v > 0.0 {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (hi > 0.0).then(|| hi / lo)
}

// ---------------------------------------------------------------------------
// baselines

/// Frozen regression interval for one measured quantity.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Interval {
    pub experiment: Experiment,
    pub target: String,
    pub degree: usize,
    pub mesh_hash: String,
    /// element budget, for quantities that depend on it
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub quantity: String,
    pub lo: f64,
    pub hi: f64,
}

type Key = (Experiment, String, usize, String, Option<usize>, String);

impl Interval {
    fn key(&self) -> Key {
        (
            self.experiment,
            self.target.clone(),
            self.degree,
            self.mesh_hash.clone(),
            self.budget,
            self.quantity.clone(),
        )
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Baseline {
    pub schema: u32,
    pub intervals: Vec<Interval>,
}

impl Baseline {
    pub fn parse(text: &str) -> Result<Self> {
        let b: Baseline = serde_json::from_str(text)?;
        if b.schema != SCHEMA {
            return Err(Error::InvalidParameter(format!(
                "unsupported baseline schema {}",
                b.schema
            )));
        }
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("baseline serializes")
    }

    fn find(&self, m: &Measurement) -> Option<&Interval> {
        let key = m.key();
        self.intervals.iter().find(|i| i.key() == key)
    }

    /// Intervals `[min / (1 + margin), max * (1 + margin)]` around the
    /// observed range of each measurement.
    pub fn freeze(measurements: &[Measurement], margin: f64) -> Baseline {
        let intervals = measurements
            .iter()
            .map(|m| Interval {
                experiment: m.experiment,
                target: m.target.clone(),
                degree: m.degree,
                mesh_hash: m.mesh_hash.clone(),
                budget: m.budget,
                quantity: m.quantity.clone(),
                lo: m.min / (1.0 + margin),
                hi: m.max * (1.0 + margin),
            })
            .collect();
        Baseline {
            schema: SCHEMA,
            intervals,
        }
    }

    /// Replace the intervals of the same keys, keep the rest.
    pub fn merge(&mut self, other: Baseline) {
        for i in other.intervals {
            self.intervals.retain(|j| j.key() != i.key());
            self.intervals.push(i);
        }
        self.schema = SCHEMA;
    }
}

/// Observed range of one quantity over a run.
#[derive(Clone, Debug, Serialize)]
pub struct Measurement {
    pub experiment: Experiment,
    pub target: String,
    pub degree: usize,
    pub mesh_hash: String,
    pub budget: Option<usize>,
    pub quantity: String,
    pub min: f64,
    pub max: f64,
}

impl Measurement {
    fn key(&self) -> Key {
        (
            self.experiment,
            self.target.clone(),
            self.degree,
            self.mesh_hash.clone(),
            self.budget,
            self.quantity.clone(),
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub quantity: String,
    pub target: String,
    pub min: f64,
    pub max: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// `None` when no interval is frozen for this configuration
    pub passed: Option<bool>,
}

fn check_all(baseline: &Baseline, measurements: &[Measurement]) -> Vec<Check> {
    measurements
        .iter()
        .map(|m| {
            let iv = baseline.find(m);
            Check {
                quantity: m.quantity.clone(),
                target: m.target.clone(),
                min: m.min,
                max: m.max,
                lo: iv.map(|i| i.lo),
                hi: iv.map(|i| i.hi),
                passed: iv.map(|i| m.min >= i.lo && m.max <= i.hi),
            }
        })
        .collect()
}

fn range(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let mut it = values.into_iter().filter(|v| v.is_finite()).peekable();
    it.peek()?;
    Some(it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    }))
}

// ---------------------------------------------------------------------------
// counterexample

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleRow {
    pub epsilon: f64,
    pub global_error: f64,
    pub element_sum: f64,
    pub pair_sum: f64,
    pub minimal_pair_sum: f64,
    /// `sum_K |||u - P_K|||^2`
    pub element_sum_sq: f64,
    /// `(16/3) sqrt(eps)`
    pub bound: f64,
    pub bound_ok: bool,
    pub element_ratio: Ratio,
    pub pair_ratio: Ratio,
    pub covering_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CounterexampleResult {
    pub degree: usize,
    pub mesh_hash: String,
    pub rows: Vec<CounterexampleRow>,
    /// slope of `log(global_error / element_sum)` against `log eps` over `eps > 0`;
    /// the ratio is the constant of the element localization, expected to blow
    /// up like `eps^(-1/4)`
    pub slope: Option<f64>,
    /// `max / min` of `pair_sum / global_error`
    pub pair_spread: Option<f64>,
    pub bound_ok: bool,
    pub covering_ok: bool,
}

impl CounterexampleResult {
    pub fn passed(&self) -> bool {
        self.bound_ok && self.covering_ok
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "target",
            "epsilon",
            "degree",
            "mesh_hash",
            "global_error",
            "element_sum",
            "pair_sum",
            "minimal_pair_sum",
            "element_sum_sq",
            "bound",
            "bound_ok",
            "element_ratio",
            "pair_ratio",
            "covering_ok",
        ])?;
        for r in &self.rows {
            w.write_record([
                "counterexample-u_eps".to_string(),
                format!("{:e}", r.epsilon),
                self.degree.to_string(),
                self.mesh_hash.clone(),
                format!("{:e}", r.global_error),
                format!("{:e}", r.element_sum),
                format!("{:e}", r.pair_sum),
                format!("{:e}", r.minimal_pair_sum),
                format!("{:e}", r.element_sum_sq),
                format!("{:e}", r.bound),
                r.bound_ok.to_string(),
                r.element_ratio.to_string(),
                r.pair_ratio.to_string(),
                r.covering_ok.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": SCHEMA,
            "experiment": "counterexample",
            "degree": self.degree,
            "mesh_hash": self.mesh_hash,
            "epsilons": self.rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
            "slope": self.slope,
            "pair_spread": self.pair_spread,
            "bound_ok": self.bound_ok,
            "covering_ok": self.covering_ok,
            "passed": self.passed(),
        })
    }
}

/// Localize `u_eps` on the counterexample mesh for every `eps` of the config.
pub fn run_counterexample(config: &ExperimentConfig) -> Result<CounterexampleResult> {
    config.validate()?;
    let positive: Vec<f64> = config
        .epsilons
        .iter()
        .copied()
        .filter(|&e| e > 0.0)
        .collect();
    let decades = match range(positive.iter().map(|e| e.log10())) {
        Some((lo, hi)) => hi - lo,
        None => 0.0,
    };
    if decades < 3.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "epsilon list must span at least 3 decades, spans {decades:.2}"
        )));
    }
    let mesh = config.mesh_or(counterexample_mesh)?;
    check_subordinate(&mesh)?;
    let reports: Vec<LocalizationReport> = config
        .epsilons
        .par_iter()
        .map(|&eps| {
            let ctx = config.ctx(eps)?;
            Localizer::new(&config.target("counterexample", eps)?, config.degree)?
                .report(&mesh, &ctx)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CounterexampleRow> = reports
        .iter()
        .map(|r| {
            let element_sum_sq = r.element_sum * r.element_sum;
            let bound = 16.0 / 3.0 * r.epsilon.sqrt();
            CounterexampleRow {
                epsilon: r.epsilon,
                global_error: r.global_error,
                element_sum: r.element_sum,
                pair_sum: r.pair_sum,
                minimal_pair_sum: r.minimal_pair_sum,
                element_sum_sq,
                bound,
                bound_ok: element_sum_sq <= bound + COUNTEREXAMPLE_SLACK,
                element_ratio: r.ratios.element,
                pair_ratio: r.ratios.pair,
                covering_ok: r.covering.pair && r.covering.minimal_pair,
            }
        })
        .collect();
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.epsilon > 0.0)
        .filter_map(|r| {
            r.element_ratio
                .value()
                .filter(|v| *v > 0.0)
                .map(|v| (r.epsilon.ln(), -v.ln()))
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
    Ok(CounterexampleResult {
        degree: config.degree,
        mesh_hash: mesh.hash(),
        slope: fit_slope(&xs, &ys),
        pair_spread: spread(rows.iter().filter_map(|r| r.pair_ratio.value())),
        bound_ok: rows.iter().all(|r| r.bound_ok),
        covering_ok: rows.iter().all(|r| r.covering_ok),
        rows,
    })
}

// ---------------------------------------------------------------------------
// robustness sweep

/// Per-face ratios of one report against the pair error squared.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FaceRatioRange {
    /// `(jump-augmented) / (pair error^2)`
    pub jump_min: f64,
    pub jump_max: f64,
    /// `(element errors^2 of both sides) / (pair error^2)`
    pub element_min: f64,
    pub element_max: f64,
}

/// Faces whose pair error is below `1e-12 |||u|||^2` are skipped as exact.
pub fn face_ratio_range(report: &LocalizationReport) -> Option<FaceRatioRange> {
    let floor = 1e-12 * report.target_norm * report.target_norm;
    let mut jump = Vec::new();
    let mut element = Vec::new();
    for f in &report.faces {
        let (Some(p), Some(j), Some(js)) = (f.pair_error_sq, f.jump_augmented_sq, f.jump_sq) else {
            continue;
        };
        if p <= floor {
            continue;
        }
        jump.push(j / p);
        element.push((j - js) / p);
    }
    let (jump_min, jump_max) = range(jump)?;
    let (element_min, element_max) = range(element)?;
    Some(FaceRatioRange {
        jump_min,
        jump_max,
        element_min,
        element_max,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub target: String,
    pub epsilon: f64,
    pub degree: usize,
    pub mesh_hash: String,
    pub bc: BcMode,
    pub global_error: f64,
    pub pair_sum: f64,
    pub minimal_pair_sum: f64,
    pub element_sum: f64,
    pub jump_augmented_sum: f64,
    pub trace_augmented_sum: f64,
    pub error_functional_sum: f64,
    pub pair_sum_zero_trace: Option<f64>,
    pub ratios: crate::localization::Ratios,
    pub covering_pair: bool,
    pub covering_minimal_pair: bool,
    pub faces: Option<FaceRatioRange>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub measurements: Vec<Measurement>,
    pub checks: Vec<Check>,
}

impl SweepResult {
    pub fn covering_ok(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.covering_pair && r.covering_minimal_pair)
    }

    /// Checks with a frozen interval that failed.
    pub fn violations(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.passed == Some(false))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.covering_ok() && self.violations().is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "target",
            "epsilon",
            "degree",
            "mesh_hash",
            "bc",
            "global_error",
            "pair_sum",
            "minimal_pair_sum",
            "element_sum",
            "jump_augmented_sum",
            "trace_augmented_sum",
            "error_functional_sum",
            "pair_sum_zero_trace",
            "pair_ratio",
            "minimal_pair_ratio",
            "element_ratio",
            "jump_augmented_ratio",
            "trace_augmented_ratio",
            "error_functional_ratio",
            "face_jump_ratio_min",
            "face_jump_ratio_max",
            "face_element_ratio_min",
            "face_element_ratio_max",
            "covering_pair",
            "covering_minimal_pair",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        for r in &self.rows {
            let f = r.faces;
            w.write_record([
                r.target.clone(),
                format!("{:e}", r.epsilon),
                r.degree.to_string(),
                r.mesh_hash.clone(),
                bc_str(r.bc).to_string(),
                format!("{:e}", r.global_error),
                format!("{:e}", r.pair_sum),
                format!("{:e}", r.minimal_pair_sum),
                format!("{:e}", r.element_sum),
                format!("{:e}", r.jump_augmented_sum),
                format!("{:e}", r.trace_augmented_sum),
                format!("{:e}", r.error_functional_sum),
                opt(r.pair_sum_zero_trace),
                r.ratios.pair.to_string(),
                r.ratios.minimal_pair.to_string(),
                r.ratios.element.to_string(),
                r.ratios.jump_augmented.to_string(),
                r.ratios.trace_augmented.to_string(),
                r.ratios.error_functional.to_string(),
                opt(f.map(|f| f.jump_min)),
                opt(f.map(|f| f.jump_max)),
                opt(f.map(|f| f.element_min)),
                opt(f.map(|f| f.element_max)),
                r.covering_pair.to_string(),
                r.covering_minimal_pair.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": SCHEMA,
            "experiment": "sweep",
            "measurements": self.measurements,
            "checks": self.checks,
            "covering_ok": self.covering_ok(),
            "passed": self.passed(),
        })
    }
}

fn bc_str(bc: BcMode) -> &'static str {
    match bc {
        BcMode::None => "none",
        BcMode::HomogeneousDirichlet => "homogeneous-dirichlet",
    }
}

/// Ratio ranges over `eps` for each target. Quantities whose ratios are all
/// `exact` are omitted.
fn sweep_measurements(rows: &[SweepRow]) -> Vec<Measurement> {
    let mut out = Vec::new();
    let mut targets: Vec<&str> = rows.iter().map(|r| r.target.as_str()).collect();
    targets.dedup();
    for t in targets {
        let rs: Vec<&SweepRow> = rows.iter().filter(|r| r.target == t).collect();
        let first = rs[0];
        let mut push = |quantity: &str, values: Vec<f64>| {
            if let Some((min, max)) = range(values) {
                out.push(Measurement {
                    experiment: Experiment::Sweep,
                    target: t.to_string(),
                    degree: first.degree,
                    mesh_hash: first.mesh_hash.clone(),
                    budget: None,
                    quantity: quantity.to_string(),
                    min,
                    max,
                });
            }
        };
        let ratio = |f: fn(&crate::localization::Ratios) -> Ratio| -> Vec<f64> {
            rs.iter().filter_map(|r| f(&r.ratios).value()).collect()
        };
        push("pair_ratio", ratio(|r| r.pair));
        push("minimal_pair_ratio", ratio(|r| r.minimal_pair));
        push("element_ratio", ratio(|r| r.element));
        push("jump_augmented_ratio", ratio(|r| r.jump_augmented));
        push("trace_augmented_ratio", ratio(|r| r.trace_augmented));
        push("error_functional_ratio", ratio(|r| r.error_functional));
        let faces: Vec<FaceRatioRange> = rs.iter().filter_map(|r| r.faces).collect();
        push(
            "face_jump_ratio",
            faces
                .iter()
                .flat_map(|f| [f.jump_min, f.jump_max])
                .collect(),
        );
        push(
            "face_element_ratio",
            faces
                .iter()
                .flat_map(|f| [f.element_min, f.element_max])
                .collect(),
        );
    }
    out
}

/// Full localization reports for every (target, eps) of the config on the
/// default mesh (the counterexample mesh) or `--mesh`.
pub fn run_robustness_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let mesh = config.mesh_or(counterexample_mesh)?;
    let baseline = config.load_baseline()?;
    let jobs: Vec<(&String, f64)> = config
        .targets
        .iter()
        .flat_map(|t| config.epsilons.iter().map(move |&e| (t, e)))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(t, eps)| {
            let ctx = config.ctx(eps)?;
            let u = config.target(t, eps)?;
            let loc = Localizer::new(&u, config.degree)?;
            let r = loc.report(&mesh, &ctx)?;
            Ok(SweepRow {
                target: t.clone(),
                epsilon: eps,
                degree: config.degree,
                mesh_hash: r.mesh_hash.clone(),
                bc: config.bc,
                global_error: r.global_error,
                pair_sum: r.pair_sum,
                minimal_pair_sum: r.minimal_pair_sum,
                element_sum: r.element_sum,
                jump_augmented_sum: r.jump_augmented_sum,
                trace_augmented_sum: r.trace_augmented_sum,
                error_functional_sum: r.error_functional_sum,
                pair_sum_zero_trace: r.pair_sum_zero_trace,
                ratios: r.ratios.clone(),
                covering_pair: r.covering.pair,
                covering_minimal_pair: r.covering.minimal_pair,
                faces: face_ratio_range(&r),
            })
        })
        .collect::<Result<_>>()?;
    let measurements = sweep_measurements(&rows);
    let checks = check_all(&baseline, &measurements);
    Ok(SweepResult {
        rows,
        measurements,
        checks,
    })
}

// ---------------------------------------------------------------------------
// tree study

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Adaptive,
    Uniform,
    Exhaustive,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Adaptive => "adaptive",
            Method::Uniform => "uniform",
            Method::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeRow {
    pub target: String,
    pub epsilon: f64,
    pub method: Method,
    /// greedy step (adaptive) or refinement round (uniform); budget for exhaustive
    pub step: usize,
    pub elements: usize,
    pub functional: f64,
    pub global_error: f64,
    pub selected: Option<usize>,
    pub mesh_hash: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeStudy {
    pub target: String,
    pub epsilon: f64,
    pub degree: usize,
    pub root_hash: String,
    pub budget: usize,
    pub rows: Vec<TreeRow>,
    pub evaluations: usize,
    pub subadditivity_violations: usize,
    /// `(N, E(adaptive at N) / E(exhaustive best at ceil(N/2)))` for `N <= 12`
    pub near_best: Vec<(usize, Ratio)>,
    /// `(N, adaptive global error / uniform global error)` at the uniform sizes
    pub adaptive_over_uniform: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TreeResult {
    pub studies: Vec<TreeStudy>,
    pub measurements: Vec<Measurement>,
    pub checks: Vec<Check>,
}

impl TreeResult {
    pub fn violations(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.passed == Some(false))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty() && self.studies.iter().all(|s| s.subadditivity_violations == 0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "target",
            "epsilon",
            "degree",
            "mesh_hash",
            "method",
            "step",
            "elements",
            "functional",
            "global_error",
            "selected_element",
        ])?;
        for s in &self.studies {
            for r in &s.rows {
                w.write_record([
                    r.target.clone(),
                    format!("{:e}", r.epsilon),
                    s.degree.to_string(),
                    r.mesh_hash.clone(),
                    r.method.as_str().to_string(),
                    r.step.to_string(),
                    r.elements.to_string(),
                    format!("{:e}", r.functional),
                    format!("{:e}", r.global_error),
                    r.selected.map_or(String::new(), |k| k.to_string()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let studies: Vec<serde_json::Value> = self
            .studies
            .iter()
            .map(|s| {
                serde_json::json!({
                    "target": s.target,
                    "epsilon": s.epsilon,
                    "degree": s.degree,
                    "root_hash": s.root_hash,
                    "budget": s.budget,
                    "evaluations": s.evaluations,
                    "subadditivity_violations": s.subadditivity_violations,
                    "near_best": s.near_best,
                    "adaptive_over_uniform": s.adaptive_over_uniform,
                })
            })
            .collect();
        serde_json::json!({
            "schema": SCHEMA,
            "experiment": "tree",
            "studies": studies,
            "measurements": self.measurements,
            "checks": self.checks,
            "passed": self.passed(),
        })
    }
}

/// Near-best factors `E(T_N) / E*(ceil(N/2))` for `#root <= N <= max_budget`,
/// where `T_N` is the greedy output at budget `N` and `E*(n)` the minimum of
/// `E` over all conforming refinements with at most `n` elements.
pub fn near_best_factors(
    u: &TargetFunction,
    root: &Mesh,
    ctx: &RDContext,
    max_budget: usize,
) -> Result<Vec<(usize, Ratio)>> {
    let n0 = root.num_elements();
    let greedy = tree_approximate(u, root, ctx, max_budget, false)?;
    let best = exhaustive_best_by_budget(u, root, ctx, max_budget.div_ceil(2).max(n0))?;
    let tiny = 1e-12 * greedy.trace[0].functional;
    Ok((n0..=max_budget)
        .map(|n| {
            let g = greedy.functional_at_budget(n);
            let b = best[n.div_ceil(2).max(n0) - n0].functional;
            let r = if g <= tiny && b <= tiny {
                Ratio::Exact
            } else {
                Ratio::Value(g / b)
            };
            (n, r)
        })
        .collect())
}

fn tree_study(config: &ExperimentConfig, root: &Mesh, target: &str, eps: f64) -> Result<TreeStudy> {
    let ctx = config.ctx(eps)?;
    let u = config.target(target, eps)?;
    let approx = Approximator::new(&u, config.degree)?;
    let adaptive = tree_approximate(&u, root, &ctx, config.budget, true)?;
    let mut rows = Vec::new();
    for t in &adaptive.trace {
        rows.push(TreeRow {
            target: target.to_string(),
            epsilon: eps,
            method: Method::Adaptive,
            step: t.step,
            elements: t.elements,
            functional: t.functional,
            global_error: t.global_error.unwrap_or(f64::NAN),
            selected: t.selected,
            mesh_hash: String::new(),
        });
    }
    if let Some(last) = rows.last_mut() {
        last.mesh_hash = adaptive.mesh.hash();
    }

    let mut functional = ErrorFunctional::new(&u, &ctx, root)?;
    let mut adaptive_over_uniform = Vec::new();
    let mut m = root.clone();
    let mut round = 0;
    loop {
        let n = m.num_elements();
        let g = approx.global_best(&m, &ctx)?.error();
        rows.push(TreeRow {
            target: target.to_string(),
            epsilon: eps,
            method: Method::Uniform,
            step: round,
            elements: n,
            functional: functional.total(&m)?,
            global_error: g,
            selected: None,
            mesh_hash: m.hash(),
        });
        // adaptive mesh with the most elements not exceeding n
        let reached = adaptive.trace.last().is_some_and(|l| l.elements >= n);
        if let Some(a) = adaptive
            .trace
            .iter()
            .rev()
            .find(|t| t.elements <= n)
            .filter(|_| reached && g > 0.0)
        {
            adaptive_over_uniform.push((n, a.global_error.unwrap_or(f64::NAN) / g));
        }
        if 2 * n > config.budget {
            break;
        }
        m = m.uniform_refine(1)?;
        round += 1;
    }

    let max_exhaustive = config.budget.min(12);
    let mut near_best = Vec::new();
    if max_exhaustive >= root.num_elements() {
        let bests = exhaustive_best_by_budget(&u, root, &ctx, max_exhaustive)?;
        for (n, best) in (root.num_elements()..).zip(bests) {
            rows.push(TreeRow {
                target: target.to_string(),
                epsilon: eps,
                method: Method::Exhaustive,
                step: n,
                elements: best.mesh.num_elements(),
                functional: best.functional,
                global_error: approx.global_best(&best.mesh, &ctx)?.error(),
                selected: None,
                mesh_hash: best.mesh.hash(),
            });
        }
        near_best = near_best_factors(&u, root, &ctx, max_exhaustive)?;
    }
    Ok(TreeStudy {
        target: target.to_string(),
        epsilon: eps,
        degree: config.degree,
        root_hash: root.hash(),
        budget: config.budget,
        rows,
        evaluations: adaptive.evaluations,
        subadditivity_violations: adaptive.subadditivity_violations().len(),
        near_best,
        adaptive_over_uniform,
    })
}

/// Adaptive vs uniform vs exhaustive on the default 2-triangle root of
/// `(-2, 2) x (-1, 1)` (or `--mesh`) for every (target, eps).
pub fn run_tree_study(config: &ExperimentConfig) -> Result<TreeResult> {
    config.validate()?;
    let root = config.mesh_or(|| Mesh::rectangle(-2.0, 2.0, -1.0, 1.0))?;
    let baseline = config.load_baseline()?;
    let jobs: Vec<(&String, f64)> = config
        .targets
        .iter()
        .flat_map(|t| config.epsilons.iter().map(move |&e| (t, e)))
        .collect();
    let studies: Vec<TreeStudy> = jobs
        .par_iter()
        .map(|&(t, eps)| tree_study(config, &root, t, eps))
        .collect::<Result<_>>()?;

    let mut measurements = Vec::new();
    for t in &config.targets {
        let ss: Vec<&TreeStudy> = studies.iter().filter(|s| &s.target == t).collect();
        let mut push = |quantity: &str, values: Vec<f64>| {
            if let Some((min, max)) = range(values) {
                measurements.push(Measurement {
                    experiment: Experiment::Tree,
                    target: t.clone(),
                    degree: config.degree,
                    mesh_hash: root.hash(),
                    budget: Some(config.budget),
                    quantity: quantity.to_string(),
                    min,
                    max,
                });
            }
        };
        push(
            "near_best_factor",
            ss.iter()
                .flat_map(|s| s.near_best.iter().filter_map(|(_, r)| r.value()))
                .collect(),
        );
        push(
            "adaptive_over_uniform",
            ss.iter()
                .flat_map(|s| s.adaptive_over_uniform.iter().map(|&(_, r)| r))
                .collect(),
        );
        push(
            "evaluations_per_element",
            ss.iter()
                .map(|s| {
                    let out = s
                        .rows
                        .iter()
                        .filter(|r| r.method == Method::Adaptive)
                        .map(|r| r.elements)
                        .max();
                    s.evaluations as f64 / out.unwrap_or(1) as f64
                })
                .collect(),
        );
    }
    let checks = check_all(&baseline, &measurements);
    Ok(TreeResult {
        studies,
        measurements,
        checks,
    })
}

// ---------------------------------------------------------------------------
// single localization

#[derive(Clone, Debug)]
pub struct LocalizeResult {
    pub reports: Vec<LocalizationReport>,
}

impl LocalizeResult {
    pub fn passed(&self) -> bool {
        self.reports
            .iter()
            .all(|r| r.covering.pair && r.covering.minimal_pair)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, r) in self.reports.iter().enumerate() {
            r.write_csv(&mut out, i == 0)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": SCHEMA,
            "experiment": "localize",
            "reports": self.reports.iter().map(|r| r.summary_json()).collect::<Vec<_>>(),
            "passed": self.passed(),
        })
    }
}

/// Localization reports for every (target, eps) on `--mesh` or a uniform
/// grid of the domain.
pub fn localize(config: &ExperimentConfig) -> Result<LocalizeResult> {
    config.validate()?;
    let mesh = config.mesh_or(counterexample_mesh)?;
    let jobs: Vec<(&String, f64)> = config
        .targets
        .iter()
        .flat_map(|t| config.epsilons.iter().map(move |&e| (t, e)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(t, eps)| {
            let u = config.target(t, eps)?;
            let ctx = config.ctx(eps)?;
            if ctx.dirichlet() {
                crate::localization::dirichlet_pair_localization(&u, &mesh, &ctx)
            } else {
                Localizer::new(&u, config.degree)?.report(&mesh, &ctx)
            }
        })
        .collect::<Result<_>>()?;
    Ok(LocalizeResult { reports })
}

// ---------------------------------------------------------------------------
// output

/// Write `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    csv: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    json: &serde_json::Value,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    csv(&mut buf)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, buf)?;
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&json_path, serde_json::to_string_pretty(json)? + "\n")?;
    Ok((csv_path, json_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 0.5, 0.0];
        assert!((fit_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-14);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn counterexample_mesh_is_subordinate() {
        let m = counterexample_mesh().unwrap();
        assert_eq!(m.num_elements(), 24);
        check_subordinate(&m).unwrap();
        let bad = Mesh::rectangle_grid(-2.0, 2.0, -1.0, 1.0, 3, 1).unwrap();
        assert!(check_subordinate(&bad).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::new(Experiment::Sweep);
        c.validate().unwrap();
        c.epsilons = vec![];
        assert!(c.validate().is_err());
        c.epsilons = vec![-1.0];
        assert!(c.validate().is_err());
        c.epsilons = vec![1.0];
        c.targets = vec!["nope".into()];
        assert!(c.validate().is_err());
    }

    #[test]
    fn counterexample_needs_three_decades() {
        let mut c = ExperimentConfig::new(Experiment::Counterexample);
        c.epsilons = vec![1e-2, 1e-3];
        assert!(matches!(
            run_counterexample(&c),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn default_baseline_parses() {
        Baseline::parse(DEFAULT_BASELINE).unwrap();
    }

    #[test]
    fn baseline_freeze_and_check() {
        let m = Measurement {
            experiment: Experiment::Sweep,
            target: "t".into(),
            degree: 1,
            mesh_hash: "h".into(),
            budget: None,
            quantity: "q".into(),
            min: 1.0,
            max: 2.0,
        };
        let b = Baseline::freeze(std::slice::from_ref(&m), 0.1);
        let c = check_all(&b, std::slice::from_ref(&m));
        assert_eq!(c[0].passed, Some(true));
        let worse = Measurement {
            max: 2.5,
            ..m.clone()
        };
        assert_eq!(check_all(&b, &[worse])[0].passed, Some(false));
        let other = Measurement { degree: 2, ..m };
        assert_eq!(check_all(&b, &[other])[0].passed, None);
    }
}
