use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use trexlab::experiment::{format_summary, load_report_rows, render_csv, run_experiment, summarize_rows, ExperimentConfig};
use trexlab::io::read_problem_file;
use trexlab::model::unscale_coefficients;
use trexlab::{
    fit_lasso, solve_trex, solve_trex_constrained, solve_trex_unpenalized, NormSpec, RegressionProblem,
    SolverConfig, SubproblemMethod,
};

/// TREX sparse regression: fit estimators and certify prediction bounds.
#[derive(Parser)]
#[command(name = "trexlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator to a problem file (CSV or JSON) and write the fit as JSON.
    Fit(FitArgs),
    /// Run a verification experiment and write CSV and JSON reports.
    Verify(VerifyArgs),
    /// Summarize a CSV or JSON report.
    Report {
        /// Report file written by `verify`.
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    Weighted,
    Group,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Trex,
    TrexConstrained,
    TrexUnpenalized,
    Lasso,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cd,
    Pg,
}

#[derive(Args)]
struct PenaltyArgs {
    /// Penalty norm; `weighted` and `group` read their structure from --groups.
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Weights (`weighted`: p numbers) or groups (`group`: one line of 1-based
    /// indices per group, optionally followed by `: weight`).
    #[arg(long)]
    groups: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Problem file.
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "trex")]
    estimator: EstimatorArg,
    /// TREX constant in (0, 2).
    #[arg(long)]
    c: Option<f64>,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Normalize design columns to norm sqrt(n) before fitting.
    #[arg(long)]
    normalize: bool,
    /// l1 bound for `trex-constrained` (unconstrained if omitted).
    #[arg(long)]
    bound: Option<f64>,
    /// Tuning parameter for `lasso`.
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated 1-based unpenalized predictors for `trex-unpenalized`.
    #[arg(long, value_delimiter = ',')]
    unpenalized: Vec<usize>,
    #[arg(long, value_enum, default_value = "cd")]
    method: MethodArg,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Seed for randomized multistarts.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, env = "TREXLAB_JOBS", default_value_t = default_jobs())]
    jobs: usize,
    /// Override the base seeds of all scenarios.
    #[arg(long)]
    seed: Option<u64>,
    /// Omit the timestamp comment line from the CSV.
    #[arg(long)]
    no_timestamp: bool,
    /// Override the TREX constant of the solver and all scenarios.
    #[arg(long)]
    c: Option<f64>,
    #[command(flatten)]
    penalty: PenaltyArgs,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Report { file } => cmd_report(&file),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_numbers<T: std::str::FromStr>(text: &str, path: &Path, line: usize) -> anyhow::Result<Vec<T>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| anyhow::anyhow!("{}:{line}: cannot parse {t:?}", path.display())))
        .collect()
}

fn load_penalty(args: &PenaltyArgs, p: usize) -> anyhow::Result<Option<NormSpec>> {
    let Some(norm) = args.norm else {
        if args.groups.is_some() {
            bail!("--groups requires --norm weighted or --norm group");
        }
        return Ok(None);
    };
    let read = || -> anyhow::Result<(PathBuf, String)> {
        let path = args.groups.clone().context("--norm weighted/group requires --groups FILE")?;
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok((path, text))
    };
    let lines = |text: &str| -> Vec<(usize, String)> {
        text.lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim().to_string()))
            .filter(|(_, l)| !l.is_empty())
            .collect()
    };
    let spec = match norm {
        NormArg::L1 => NormSpec::l1(p),
        NormArg::Weighted => {
            let (path, text) = read()?;
            let mut weights = Vec::new();
            for (line, l) in lines(&text) {
                weights.extend(parse_numbers::<f64>(&l, &path, line)?);
            }
            if weights.len() != p {
                bail!("{}: expected {p} weights, found {}", path.display(), weights.len());
            }
            NormSpec::weighted_l1(weights)?
        }
        NormArg::Group => {
            let (path, text) = read()?;
            let mut partition = Vec::new();
            let mut weights = Vec::new();
            for (line, l) in lines(&text) {
                let (idx, w) = match l.split_once(':') {
                    Some((idx, w)) => (idx, parse_numbers::<f64>(w, &path, line)?),
                    None => (l.as_str(), vec![1.0]),
                };
                if w.len() != 1 {
                    bail!("{}:{line}: expected a single group weight", path.display());
                }
                let group = parse_numbers::<usize>(idx, &path, line)?;
                if group.contains(&0) {
                    bail!("{}:{line}: group indices are 1-based", path.display());
                }
                partition.push(group.into_iter().map(|j| j - 1).collect());
                weights.push(w[0]);
            }
            NormSpec::group(p, partition, weights)?
        }
    };
    Ok(Some(spec))
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<ExitCode> {
    let file = read_problem_file(&args.problem).with_context(|| format!("reading {}", args.problem.display()))?;
    let mut cfg = SolverConfig::default();
    if let Some(c) = args.c {
        cfg.c = c;
    }
    if let Some(m) = args.max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.method = match args.method {
        MethodArg::Cd => SubproblemMethod::CoordinateDescent,
        MethodArg::Pg => SubproblemMethod::ProximalGradient,
    };
    cfg.validate()?;

    let (problem, scale) = if args.normalize {
        let (p, s) = RegressionProblem::normalized(file.problem.x().clone(), file.problem.y().clone())?;
        (p, Some(s))
    } else {
        (file.problem, None)
    };
    let penalty = load_penalty(&args.penalty, problem.p())?;

    let (fit, converged, beta) = match args.estimator {
        EstimatorArg::Lasso => {
            let lambda = args.lambda.context("--estimator lasso requires --lambda")?;
            let fit = fit_lasso(&problem, lambda, &cfg)?;
            (serde_json::to_value(&fit)?, fit.converged, fit.beta_hat)
        }
        est => {
            let fit = match est {
                EstimatorArg::Trex => solve_trex(&problem, &cfg, penalty.as_ref())?,
                EstimatorArg::TrexConstrained => {
                    if penalty.is_some() {
                        bail!("trex-constrained supports only the l1 penalty");
                    }
                    solve_trex_constrained(&problem, &cfg, args.bound)?
                }
                _ => {
                    if args.unpenalized.contains(&0) {
                        bail!("--unpenalized indices are 1-based");
                    }
                    let u: Vec<usize> = args.unpenalized.iter().map(|j| j - 1).collect();
                    solve_trex_unpenalized(&problem, &cfg, penalty.as_ref(), &u)?
                }
            };
            (serde_json::to_value(&fit)?, fit.diagnostics.converged, fit.beta_hat)
        }
    };

    let mut doc = json!({
        "estimator": args.estimator.to_possible_value().map(|v| v.get_name().to_string()),
        "n": problem.n(),
        "p": problem.p(),
        "fit": fit,
    });
    if let Some(scale) = scale {
        let original = unscale_coefficients(&beta, &scale);
        doc["beta_original_scale"] = json!(original.iter().copied().collect::<Vec<f64>>());
    }
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &args.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    if converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: solver did not converge");
        Ok(ExitCode::from(2))
    }
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(c) = args.c {
        config.solver.c = c;
        for entry in &mut config.scenarios {
            entry.spec.c = c;
        }
    }
    if args.penalty.norm.is_some() {
        let p = config.scenarios.first().map(|e| e.spec.p).context("experiment needs at least one scenario")?;
        config.penalty = load_penalty(&args.penalty, p)?;
    } else if args.penalty.groups.is_some() {
        bail!("--groups requires --norm weighted or --norm group");
    }

    let report = run_experiment(&config, args.jobs, args.seed)?;
    let timestamp = (!args.no_timestamp).then(|| chrono::Utc::now().to_rfc3339());
    let csv = render_csv(&report, timestamp.as_deref())?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join(config.output.csv.as_deref().unwrap_or("report.csv"));
    let json_path = args.out.join(config.output.json.as_deref().unwrap_or("report.json"));
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", json_path.display()))?;

    let rows = report.rows.iter().map(|d| (d.row.theorem, d.row.verdict, d.row.ratio));
    print!("{}", format_summary(&summarize_rows(rows)));
    for e in &report.errors {
        let est = e.estimator.map(|e| e.as_str()).unwrap_or("generation");
        eprintln!("error: {} replicate {} ({est}): {}", e.scenario, e.replicate, e.message);
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(if report.any_violated() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_report(path: &Path) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = load_report_rows(&text).with_context(|| format!("reading report {}", path.display()))?;
    print!("{}", format_summary(&summarize_rows(rows)));
    Ok(ExitCode::SUCCESS)
}
