//! Verification experiments: scenario grids × replicates × estimators, each
//! fit certified against the requested bounds.
//!
//! Tasks run in parallel but results are assembled in (scenario, replicate)
//! order, so the CSV output depends only on the configuration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    estimate_compatibility, verify_l1_ordering, verify_lasso_fast, verify_lasso_slow, verify_trex_fast_as,
    verify_trex_slow, verify_trex_slow_general, BoundReport, CompatibilityEstimate, Kappa, TheoremId, Verdict,
};
use crate::config::SolverConfig;
use crate::datagen::{generate_with_seeds, scenario_grid, splitmix64, ScenarioSpec, Sweep};
use crate::error::{Result, TrexError};
use crate::lasso::{lambda_grid, lasso_path};
use crate::model::{GroundTruth, RegressionProblem};
use crate::norms::{NormKind, NormSpec};
use crate::trex::{solve_trex, solve_trex_constrained, solve_trex_unpenalized, TrexFit};

/// Frozen CSV column order.
pub const CSV_COLUMNS: [&str; 16] = [
    "scenario",
    "replicate",
    "seed",
    "estimator",
    "theorem",
    "lambda_index",
    "verdict",
    "lhs",
    "rhs",
    "ratio",
    "gates",
    "u_hat",
    "noise_dual",
    "lambda",
    "nu",
    "c",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Trex,
    TrexConstrained,
    LassoGrid,
    TrexUnpenalized,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Trex => "trex",
            Estimator::TrexConstrained => "trex_constrained",
            Estimator::LassoGrid => "lasso_grid",
            Estimator::TrexUnpenalized => "trex_unpenalized",
        }
    }

    /// Theorems this estimator can be certified against.
    pub fn theorems(self) -> &'static [TheoremId] {
        use TheoremId::*;
        match self {
            Estimator::Trex => &[T1, C3, T2, ThmA, CorA, ThmB, LemA],
            Estimator::TrexConstrained => &[T2, ThmB],
            Estimator::LassoGrid => &[L1, L2],
            Estimator::TrexUnpenalized => &[],
        }
    }
}

/// A scenario, optionally expanded into a grid by `sweeps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<Sweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoGridConfig {
    pub count: usize,
    /// Smallest lambda as a fraction of `||X^T Y||_inf`.
    pub ratio: f64,
}

impl Default for LassoGridConfig {
    fn default() -> Self {
        Self { count: 8, ratio: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompatibilityConfig {
    pub samples: usize,
    pub refine: bool,
}

impl Default for CompatibilityConfig {
    fn default() -> Self {
        Self { samples: 2000, refine: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// CSV file name, relative to the output directory.
    pub csv: Option<String>,
    /// JSON file name, relative to the output directory.
    pub json: Option<String>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioEntry>,
    pub estimators: Vec<Estimator>,
    pub theorems: Vec<TheoremId>,
    #[serde(default = "one")]
    pub replicates: usize,
    /// Draw a fresh design for every replicate instead of one per scenario.
    #[serde(default)]
    pub resample_design: bool,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Constants for the general fast-rate reports (`ThmA`, `CorA`).
    #[serde(default)]
    pub kappa: Kappa,
    #[serde(default)]
    pub lasso_grid: LassoGridConfig,
    #[serde(default)]
    pub compatibility: CompatibilityConfig,
    /// Penalty for the TREX estimators; defaults to l1, or the scenario's
    /// group structure for group-sparse signals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<NormSpec>,
    /// 1-based unpenalized coordinates for `trex_unpenalized`.
    #[serde(default)]
    pub unpenalized: Vec<usize>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrexError::Parameter(m.to_string()));
        if self.scenarios.is_empty() {
            return bad("experiment needs at least one scenario");
        }
        if self.estimators.is_empty() {
            return bad("experiment needs at least one estimator");
        }
        if self.theorems.is_empty() {
            return bad("experiment needs at least one theorem");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.lasso_grid.count == 0 || !(self.lasso_grid.ratio > 0.0 && self.lasso_grid.ratio <= 1.0) {
            return bad("lasso grid needs count >= 1 and ratio in (0, 1]");
        }
        if self.unpenalized.contains(&0) {
            return bad("unpenalized indices are 1-based");
        }
        self.solver.validate()?;
        self.kappa.validate()?;
        for t in &self.theorems {
            if !self.estimators.iter().any(|e| e.theorems().contains(t)) {
                return Err(TrexError::Parameter(format!("theorem {t} is not produced by any selected estimator")));
            }
        }
        for entry in &self.scenarios {
            entry.spec.validate()?;
        }
        Ok(())
    }

    /// Expanded scenario list. A seed override replaces the base seed of
    /// entry `i` with `seed + i` before grid expansion.
    pub fn expand(&self, seed_override: Option<u64>) -> Result<Vec<ScenarioSpec>> {
        let mut out = Vec::new();
        for (i, entry) in self.scenarios.iter().enumerate() {
            let mut spec = entry.spec.clone();
            if let Some(s) = seed_override {
                spec.seed = s.wrapping_add(i as u64);
            }
            if spec.name.is_none() {
                spec.name = Some(format!("s{i}"));
            }
            if entry.sweeps.is_empty() {
                out.push(spec);
            } else {
                out.extend(scenario_grid(&spec, &entry.sweeps)?);
            }
        }
        Ok(out)
    }

    fn wants(&self, t: TheoremId) -> bool {
        self.theorems.contains(&t)
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub replicate: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub theorem: TheoremId,
    pub lambda_index: Option<usize>,
    pub verdict: Verdict,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// `name=0|1` pairs joined by `;`.
    pub gates: String,
    pub u_hat: Option<f64>,
    pub noise_dual: f64,
    pub lambda: Option<f64>,
    pub nu: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedRow {
    #[serde(flatten)]
    pub row: Row,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub scenario: String,
    pub replicate: usize,
    pub estimator: Estimator,
    pub u_hat: f64,
    pub objective: f64,
    pub converged: bool,
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskError {
    pub scenario: String,
    pub replicate: usize,
    pub estimator: Option<Estimator>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub holds: usize,
    pub violated: usize,
    pub not_applicable: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Holds => self.holds += 1,
            Verdict::Violated => self.violated += 1,
            Verdict::NotApplicable => self.not_applicable += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.holds + self.violated + self.not_applicable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summary: BTreeMap<TheoremId, VerdictCounts>,
    pub totals: VerdictCounts,
    pub rows: Vec<DetailedRow>,
    pub fits: Vec<FitSummary>,
    pub errors: Vec<TaskError>,
}

impl ExperimentReport {
    pub fn any_violated(&self) -> bool {
        self.totals.violated > 0
    }

    pub fn csv_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().map(|d| &d.row)
    }
}

struct TaskOutput {
    rows: Vec<DetailedRow>,
    fits: Vec<FitSummary>,
    errors: Vec<TaskError>,
}

/// Runs the experiment on at most `jobs` worker threads.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize, seed_override: Option<u64>) -> Result<ExperimentReport> {
    config.validate()?;
    let scenarios = config.expand(seed_override)?;
    let tasks: Vec<(usize, usize)> =
        (0..scenarios.len()).flat_map(|s| (0..config.replicates).map(move |r| (s, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| TrexError::Internal(format!("thread pool: {e}")))?;
    let outputs: Vec<TaskOutput> =
        pool.install(|| tasks.par_iter().map(|&(s, r)| run_task(config, &scenarios[s], r)).collect());

    let mut report = ExperimentReport {
        config: config.clone(),
        summary: config.theorems.iter().map(|t| (*t, VerdictCounts::default())).collect(),
        totals: VerdictCounts::default(),
        rows: Vec::new(),
        fits: Vec::new(),
        errors: Vec::new(),
    };
    for out in outputs {
        for d in &out.rows {
            report.summary.entry(d.row.theorem).or_default().add(d.row.verdict);
            report.totals.add(d.row.verdict);
        }
        report.rows.extend(out.rows);
        report.fits.extend(out.fits);
        report.errors.extend(out.errors);
    }
    Ok(report)
}

/// Seeds for replicate `r` of a scenario: `(design, draw)`.
pub fn replicate_seeds(spec: &ScenarioSpec, replicate: usize, resample_design: bool) -> (u64, u64) {
    let draw = splitmix64(spec.seed ^ splitmix64(replicate as u64));
    let design = if resample_design { draw } else { spec.seed };
    (design, draw)
}

fn run_task(config: &ExperimentConfig, spec: &ScenarioSpec, replicate: usize) -> TaskOutput {
    let name = spec.name.clone().unwrap_or_default();
    let mut out = TaskOutput { rows: Vec::new(), fits: Vec::new(), errors: Vec::new() };
    let (design_seed, draw_seed) = replicate_seeds(spec, replicate, config.resample_design);
    let (problem, truth) = match generate_with_seeds(spec, design_seed, draw_seed) {
        Ok(v) => v,
        Err(e) => {
            out.errors.push(TaskError { scenario: name, replicate, estimator: None, message: e.to_string() });
            return out;
        }
    };
    let ctx = TaskContext { config, spec, name: &name, replicate, seed: draw_seed, problem: &problem, truth: &truth };
    let nu = ctx.compatibility();
    for &est in &config.estimators {
        if let Err(e) = ctx.run_estimator(est, nu.as_ref(), &mut out) {
            out.errors.push(TaskError { scenario: name.clone(), replicate, estimator: Some(est), message: e.to_string() });
        }
    }
    out
}

struct TaskContext<'a> {
    config: &'a ExperimentConfig,
    spec: &'a ScenarioSpec,
    name: &'a str,
    replicate: usize,
    seed: u64,
    problem: &'a RegressionProblem,
    truth: &'a GroundTruth,
}

impl TaskContext<'_> {
    fn compatibility(&self) -> Option<CompatibilityEstimate> {
        let needs = [TheoremId::L1, TheoremId::C3, TheoremId::CorA].iter().any(|t| self.config.wants(*t));
        if !needs {
            return None;
        }
        if self.truth.support.is_empty() {
            return Some(CompatibilityEstimate { nu: f64::INFINITY, samples: 0, exact: true });
        }
        let c = &self.config.compatibility;
        estimate_compatibility(self.problem, &self.truth.support, c.samples, c.refine, splitmix64(self.seed)).ok()
    }

    fn penalty(&self) -> Result<NormSpec> {
        match &self.config.penalty {
            Some(spec) => {
                if spec.dim() != self.problem.p() {
                    return Err(TrexError::Dimension(format!(
                        "penalty is defined on R^{} but scenario has p = {}",
                        spec.dim(),
                        self.problem.p()
                    )));
                }
                Ok(spec.clone())
            }
            None => Ok(self.spec.norm_spec().unwrap_or_else(|| NormSpec::l1(self.problem.p()))),
        }
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig { seed: self.seed, ..self.config.solver.clone() }
    }

    fn push(&self, out: &mut TaskOutput, est: Estimator, lambda_index: Option<usize>, report: BoundReport) {
        if !self.config.wants(report.theorem) {
            return;
        }
        let gates = report
            .assumptions
            .iter()
            .map(|a| format!("{}={}", a.name, a.holds as u8))
            .collect::<Vec<_>>()
            .join(";");
        let row = Row {
            scenario: self.name.to_string(),
            replicate: self.replicate,
            seed: self.seed,
            estimator: est,
            theorem: report.theorem,
            lambda_index,
            verdict: report.verdict,
            lhs: report.lhs,
            rhs: report.rhs,
            ratio: report.ratio(),
            gates,
            u_hat: report.inputs.u_hat,
            noise_dual: report.inputs.noise_dual,
            lambda: report.inputs.lambda,
            nu: report.inputs.nu,
            c: report.inputs.c,
        };
        out.rows.push(DetailedRow { row, report });
    }

    fn record_fit(&self, out: &mut TaskOutput, est: Estimator, fit: &TrexFit) {
        out.fits.push(FitSummary {
            scenario: self.name.to_string(),
            replicate: self.replicate,
            estimator: est,
            u_hat: fit.u_hat,
            objective: fit.objective,
            converged: fit.diagnostics.converged,
            heuristic: fit.diagnostics.heuristic,
        });
    }

    fn run_estimator(&self, est: Estimator, nu: Option<&CompatibilityEstimate>, out: &mut TaskOutput) -> Result<()> {
        let cfg = self.solver();
        let wants = |ts: &[TheoremId]| ts.iter().any(|t| self.config.wants(*t));
        let missing_nu = || TrexError::Internal("compatibility estimate unavailable".into());
        match est {
            Estimator::Trex => {
                let penalty = self.penalty()?;
                let fit = solve_trex(self.problem, &cfg, Some(&penalty))?;
                self.record_fit(out, est, &fit);
                let l1 = penalty.kind() == NormKind::L1;
                if l1 && wants(&[TheoremId::T1, TheoremId::C3]) {
                    let nu = nu.ok_or_else(missing_nu)?;
                    let (t, c) = verify_trex_fast_as(
                        self.problem,
                        self.truth,
                        &fit,
                        Kappa::default(),
                        nu,
                        &cfg,
                        TheoremId::T1,
                        TheoremId::C3,
                    )?;
                    self.push(out, est, None, t);
                    self.push(out, est, None, c);
                }
                if l1 && wants(&[TheoremId::T2]) {
                    self.push(out, est, None, verify_trex_slow(self.problem, self.truth, &fit)?);
                }
                if l1 && wants(&[TheoremId::ThmA, TheoremId::CorA]) {
                    let nu = nu.ok_or_else(missing_nu)?;
                    let (t, c) = verify_trex_fast_as(
                        self.problem,
                        self.truth,
                        &fit,
                        self.config.kappa,
                        nu,
                        &cfg,
                        TheoremId::ThmA,
                        TheoremId::CorA,
                    )?;
                    self.push(out, est, None, t);
                    self.push(out, est, None, c);
                }
                if wants(&[TheoremId::ThmB]) {
                    let r = verify_trex_slow_general(self.problem, self.truth, &fit, &penalty)?;
                    self.push(out, est, None, r);
                }
                if l1 && wants(&[TheoremId::LemA]) {
                    self.push(out, est, None, verify_l1_ordering(self.problem, &fit, &cfg)?);
                }
            }
            Estimator::TrexConstrained => {
                let fit = solve_trex_constrained(self.problem, &cfg, None)?;
                self.record_fit(out, est, &fit);
                if wants(&[TheoremId::T2]) {
                    self.push(out, est, None, verify_trex_slow(self.problem, self.truth, &fit)?);
                }
                if wants(&[TheoremId::ThmB]) {
                    let spec = NormSpec::l1(self.problem.p());
                    self.push(out, est, None, verify_trex_slow_general(self.problem, self.truth, &fit, &spec)?);
                }
            }
            Estimator::LassoGrid => {
                let grid = lambda_grid(self.problem, self.config.lasso_grid.count, self.config.lasso_grid.ratio);
                let fits = lasso_path(self.problem, &grid, &cfg)?;
                for (k, fit) in fits.iter().enumerate() {
                    if self.config.wants(TheoremId::L1) {
                        let nu = nu.ok_or_else(missing_nu)?;
                        self.push(out, est, Some(k), verify_lasso_fast(self.problem, self.truth, fit, nu)?);
                    }
                    if self.config.wants(TheoremId::L2) {
                        self.push(out, est, Some(k), verify_lasso_slow(self.problem, self.truth, fit)?);
                    }
                }
            }
            Estimator::TrexUnpenalized => {
                let penalty = self.penalty()?;
                let u: Vec<usize> = self.config.unpenalized.iter().map(|j| j - 1).collect();
                let fit = solve_trex_unpenalized(self.problem, &cfg, Some(&penalty), &u)?;
                self.record_fit(out, est, &fit);
            }
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV bytes with the frozen column order, preceded by `# generated <timestamp>`
/// when a timestamp is given.
pub fn render_csv(report: &ExperimentReport, timestamp: Option<&str>) -> Result<String> {
    let mut out = Vec::new();
    if let Some(ts) = timestamp {
        out.extend_from_slice(format!("# generated {ts}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        for r in report.csv_rows() {
            let record = [
                r.scenario.clone(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.estimator.as_str().to_string(),
                r.theorem.to_string(),
                r.lambda_index.map(|k| k.to_string()).unwrap_or_default(),
                r.verdict.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.ratio.to_string(),
                r.gates.clone(),
                opt(r.u_hat),
                r.noise_dual.to_string(),
                opt(r.lambda),
                opt(r.nu),
                opt(r.c),
            ];
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush()?;
    }
    String::from_utf8(out).map_err(|e| TrexError::Internal(e.to_string()))
}

fn csv_err(e: csv::Error) -> TrexError {
    TrexError::Internal(format!("csv: {e}"))
}

/// Per-theorem verdict counts and ratio statistics of a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremSummary {
    pub theorem: TheoremId,
    pub counts: VerdictCounts,
    /// Largest `lhs / rhs` among applicable rows.
    pub worst_ratio: Option<f64>,
    /// Quantiles (0, 0.25, 0.5, 0.75, 1) of `lhs / rhs` among applicable rows.
    pub ratio_quantiles: Option<[f64; 5]>,
}

pub fn summarize_rows<'a>(rows: impl IntoIterator<Item = (TheoremId, Verdict, f64)> + 'a) -> Vec<TheoremSummary> {
    let mut by: BTreeMap<TheoremId, (VerdictCounts, Vec<f64>)> = BTreeMap::new();
    for (t, v, ratio) in rows {
        let entry = by.entry(t).or_default();
        entry.0.add(v);
        if v != Verdict::NotApplicable && !ratio.is_nan() {
            entry.1.push(ratio);
        }
    }
    by.into_iter()
        .map(|(theorem, (counts, mut ratios))| {
            ratios.sort_by(f64::total_cmp);
            let q = |f: f64| ratios[((ratios.len() - 1) as f64 * f).round() as usize];
            let quantiles = (!ratios.is_empty()).then(|| [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]);
            TheoremSummary { theorem, counts, worst_ratio: ratios.last().copied(), ratio_quantiles: quantiles }
        })
        .collect()
}

/// Reads `(theorem, verdict, ratio)` triples from a JSON report or a CSV file.
pub fn load_report_rows(text: &str) -> Result<Vec<(TheoremId, Verdict, f64)>> {
    if text.trim_start().starts_with('{') {
        let report: ExperimentReport =
            serde_json::from_str(text).map_err(|e| TrexError::Parse { line: e.line(), msg: e.to_string() })?;
        return Ok(report.rows.iter().map(|d| (d.row.theorem, d.row.verdict, d.row.ratio)).collect());
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| TrexError::Parse { line: 1, msg: e.to_string() })?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TrexError::Parse { line: 1, msg: format!("missing column {name:?}") })
    };
    let (ti, vi, ri) = (col("theorem")?, col("verdict")?, col("ratio")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| TrexError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let perr = |msg: String| TrexError::Parse { line, msg };
        let theorem: TheoremId = rec.get(ti).unwrap_or("").parse().map_err(|e: TrexError| perr(e.to_string()))?;
        let verdict = match rec.get(vi).unwrap_or("") {
            "holds" => Verdict::Holds,
            "violated" => Verdict::Violated,
            "not-applicable" => Verdict::NotApplicable,
            other => return Err(perr(format!("unknown verdict {other:?}"))),
        };
        let ratio: f64 = rec.get(ri).unwrap_or("").parse().map_err(|_| perr("ratio is not a number".into()))?;
        rows.push((theorem, verdict, ratio));
    }
    Ok(rows)
}

/// Human-readable table of [`summarize_rows`].
pub fn format_summary(summaries: &[TheoremSummary]) -> String {
    let mut s = String::from("theorem  holds  violated  not-applicable  worst-ratio  ratio quantiles (0/25/50/75/100%)\n");
    let mut total = VerdictCounts::default();
    for t in summaries {
        let worst = t.worst_ratio.map(|w| format!("{w:.4}")).unwrap_or_else(|| "-".into());
        let q = t
            .ratio_quantiles
            .map(|q| q.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" "))
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<8} {:>5}  {:>8}  {:>14}  {:>11}  {}\n",
            t.theorem.as_str(),
            t.counts.holds,
            t.counts.violated,
            t.counts.not_applicable,
            worst,
            q
        ));
        total.holds += t.counts.holds;
        total.violated += t.counts.violated;
        total.not_applicable += t.counts.not_applicable;
    }
    s.push_str(&format!(
        "total    {:>5}  {:>8}  {:>14}  ({} rows)\n",
        total.holds,
        total.violated,
        total.not_applicable,
        total.total()
    ));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{Design, Noise, Signal, SweepParam};

    fn config() -> ExperimentConfig {
        let spec = ScenarioSpec {
            name: Some("small".into()),
            n: 30,
            p: 12,
            s: 2,
            design: Design::Toeplitz { rho: 0.3 },
            noise: Noise::Gaussian { sigma: 1.0 },
            signal: Signal::ScaledToAssumption2 { margin: 2.0 },
            c: 0.5,
            seed: 5,
        };
        ExperimentConfig {
            scenarios: vec![ScenarioEntry {
                spec,
                sweeps: vec![Sweep { param: SweepParam::DesignRho, values: vec![0.0, 0.5] }],
            }],
            estimators: vec![Estimator::Trex, Estimator::TrexConstrained, Estimator::LassoGrid],
            theorems: TheoremId::ALL.to_vec(),
            replicates: 2,
            resample_design: false,
            solver: SolverConfig::default(),
            kappa: Kappa::new(3.0, 6.0).unwrap(),
            lasso_grid: LassoGridConfig { count: 3, ratio: 0.1 },
            compatibility: CompatibilityConfig { samples: 200, refine: true },
            penalty: None,
            unpenalized: vec![],
            output: OutputConfig::default(),
        }
    }

    #[test]
    fn runs_and_is_deterministic() {
        let cfg = config();
        let a = run_experiment(&cfg, 2, None).unwrap();
        let b = run_experiment(&cfg, 1, None).unwrap();
        assert!(a.errors.is_empty(), "{:?}", a.errors);
        let csv_a = render_csv(&a, None).unwrap();
        assert_eq!(csv_a, render_csv(&b, None).unwrap());
        assert!(csv_a.starts_with(&CSV_COLUMNS.join(",")));
        // 2 scenarios x 2 replicates x (7 trex + 2 constrained + 3 x 2 lasso) rows.
        assert_eq!(a.rows.len(), 4 * 15);
        assert_eq!(a.totals.total(), a.rows.len());
        assert!(!a.any_violated());
        let ts = render_csv(&a, Some("2026-01-01T00:00:00Z")).unwrap();
        assert_eq!(ts.lines().nth(1), csv_a.lines().next());
    }

    #[test]
    fn seed_override_changes_output() {
        let cfg = config();
        let a = run_experiment(&cfg, 1, Some(99)).unwrap();
        let b = run_experiment(&cfg, 1, None).unwrap();
        assert_ne!(render_csv(&a, None).unwrap(), render_csv(&b, None).unwrap());
    }

    #[test]
    fn config_validation() {
        let mut cfg = config();
        cfg.theorems.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = config();
        cfg.estimators = vec![Estimator::Trex];
        assert!(cfg.validate().is_err(), "L1 is not produced by trex");
        let mut cfg = config();
        cfg.scenarios.clear();
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&config()).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config());
    }

    #[test]
    fn summary_round_trip_through_csv() {
        let cfg = config();
        let report = run_experiment(&cfg, 1, None).unwrap();
        let csv = render_csv(&report, Some("now")).unwrap();
        let rows = load_report_rows(&csv).unwrap();
        assert_eq!(rows.len(), report.rows.len());
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(load_report_rows(&json).unwrap(), rows);
        let summary = summarize_rows(rows);
        let total: usize = summary.iter().map(|s| s.counts.total()).sum();
        assert_eq!(total, report.rows.len());
        for s in &summary {
            if s.counts.violated == 0 && s.counts.holds > 0 {
                assert!(s.worst_ratio.unwrap() <= 1.0 + 1e-6);
            }
        }
        assert!(format_summary(&summary).contains("total"));
    }
}
