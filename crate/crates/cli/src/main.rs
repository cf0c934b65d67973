use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coxqueue::analysis::{self, TableCell};
use coxqueue::finite::{self, BlockingPolicy};
use coxqueue::oracle;
use coxqueue::{BatchService, Error, QueueModel, SolveMethod, SolverOptions};
use serde::Serialize;
use serde_json::json;

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   solver or numerical error not listed below
  2   model file does not match the schema or describes an invalid model
  3   model is not ergodic
  4   fixpoint iteration did not converge
  5   input or output file could not be read or written
  64  bad command-line usage

CSV columns:
  solve         quantity,level,phase,value
  finite        level,phase,probability
  sweep         k,lambda_k,gamma,alpha,pi0_bar,L,W,V
  table1/table2 q,k,gamma,alpha,approx_zero (k=inf for infinite order)
  dm1           level,probability
  oracle-check  metric,value";

const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 5;

/// Stationary analysis of Cox(k)/M^Y/1 batch-service queues.
///
/// Model files are JSON:
/// {"arrival": {"k": 3 | "inf", "lambda": 0.5 | [..], "q": 0.5 | [..]},
///  "service": {"mu": 0.8, "p": [0.25, 0.5, 0.25]}}
#[derive(Parser, Debug)]
#[command(name = "coxqueue", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Model JSON file.
    #[arg(long, global = true, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Fixpoint stopping tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, global = true, value_name = "N")]
    max_iter: Option<usize>,
    /// Initial iterate; 0.35 for the table commands, 0.5 otherwise.
    #[arg(long, global = true)]
    gamma0: Option<f64>,
    /// Level cap: printed levels for solve and dm1, capacity for finite,
    /// truncation level for oracle-check.
    #[arg(long, global = true, value_name = "N")]
    cap: Option<usize>,
    /// Output format; csv for the table commands, json otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// fixed-point, newton or bisection.
    #[arg(long, global = true, default_value = "fixed-point")]
    method: SolveMethod,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Level factor, boundary probabilities and moments of the model.
    Solve,
    /// Finite waiting room of size --cap.
    Finite {
        #[arg(long, value_enum, default_value_t = Policy::LostRestart)]
        policy: Policy,
    },
    /// Calibrated family over k = 1..=k-max; service from --model if given.
    Sweep {
        #[arg(long, default_value_t = 0.5)]
        lambda_star: f64,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 50)]
        k_max: usize,
    },
    /// Level factors for equal phase rates 0.5.
    Table1,
    /// Level factors for arrival rate 0.5 across the order k.
    Table2,
    /// Deterministic-arrival limit; load from --model or --rho.
    Dm1 {
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Compare the product form with the truncated chain.
    OracleCheck {
        /// Highest level compared.
        #[arg(long, default_value_t = 100)]
        levels: usize,
        /// Capacity for the finite-queue comparison.
        #[arg(long, default_value_t = 5)]
        capacity: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Policy {
    LostRestart,
    HoldPhase,
}

impl From<Policy> for BlockingPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::LostRestart => BlockingPolicy::LostRestart,
            Policy::HoldPhase => BlockingPolicy::HoldPhase,
        }
    }
}

enum Failure {
    Usage(String),
    Io(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
            Failure::Solver(Error::InvalidModel(_)) => 2,
            Failure::Solver(Error::NotErgodic { .. }) => 3,
            Failure::Solver(Error::NoConvergence { .. }) => 4,
            Failure::Solver(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Io(m) => m.clone(),
            Failure::Solver(e) => e.to_string(),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// A command result in both renderings.
struct Rendered {
    json: serde_json::Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("coxqueue: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Outcome<()> {
    let common = &cli.common;
    let is_table = matches!(cli.command, Command::Table1 | Command::Table2);
    let options = solver_options(common, if is_table { 0.35 } else { 0.5 })?;
    let rendered = match &cli.command {
        Command::Solve => solve(&load_model(common)?, &options, common.cap.unwrap_or(20))?,
        Command::Finite { policy } => {
            let capacity = common.cap.ok_or_else(|| Failure::Usage("finite needs --cap".into()))?;
            finite_queue(&load_model(common)?, capacity, (*policy).into())?
        }
        Command::Sweep { lambda_star, q, k_max } => {
            let service = match &common.model {
                Some(_) => load_model(common)?.service,
                None => analysis::table_service(),
            };
            sweep(*lambda_star, *q, *k_max, &service, &options)?
        }
        Command::Table1 => table(analysis::table1(&options)?),
        Command::Table2 => table(analysis::table2(&options)?),
        Command::Dm1 { rho } => {
            let (rho, service) = match (&common.model, rho) {
                (Some(_), rho) => {
                    let model = load_model(common)?;
                    (rho.unwrap_or_else(|| model.rho()), model.service)
                }
                (None, Some(rho)) => (*rho, analysis::table_service()),
                (None, None) => return Err(Failure::Usage("dm1 needs --model or --rho".into())),
            };
            dm1(rho, &service, common.cap.unwrap_or(20))?
        }
        Command::OracleCheck { levels, capacity } => {
            oracle_check(&load_model(common)?, &options, common.cap.unwrap_or(300), *levels, *capacity)?
        }
    };
    let format = common.format.unwrap_or(if is_table { Format::Csv } else { Format::Json });
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&rendered.json).expect("serializable output");
            s.push('\n');
            s
        }
        Format::Csv => to_csv(&rendered)?,
    };
    emit(common.out.as_deref(), &text)
}

fn solver_options(common: &Common, default_gamma0: f64) -> Outcome<SolverOptions> {
    let gamma0 = common.gamma0.unwrap_or(default_gamma0);
    if !(common.tol > 0.0 && common.tol.is_finite()) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", common.tol)));
    }
    if !(gamma0 > 0.0 && gamma0 < 1.0) {
        return Err(Failure::Usage(format!("--gamma0 must lie in (0, 1), got {gamma0}")));
    }
    if common.max_iter == Some(0) {
        return Err(Failure::Usage("--max-iter must be positive".into()));
    }
    if common.cap == Some(0) {
        return Err(Failure::Usage("--cap must be at least 1".into()));
    }
    Ok(SolverOptions {
        method: common.method,
        gamma0,
        tol: common.tol,
        max_iter: common.max_iter,
    })
}

fn load_model(common: &Common) -> Outcome<QueueModel> {
    let path = common
        .model
        .as_ref()
        .ok_or_else(|| Failure::Usage("this command needs --model".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    QueueModel::from_json(&text).map_err(|e| match e {
        Error::InvalidModel(m) => Error::InvalidModel(format!("{}: {m}", path.display())).into(),
        other => other.into(),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Outcome<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn to_csv(rendered: &Rendered) -> Outcome<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Failure::Io(format!("csv: {e}"));
    writer.write_record(&rendered.header).map_err(io_err)?;
    for row in &rendered.rows {
        writer.write_record(row).map_err(io_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Failure::Io(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn full(x: f64) -> String {
    format!("{x:e}")
}

fn solve(model: &QueueModel, options: &SolverOptions, levels: usize) -> Outcome<Rendered> {
    let dist = coxqueue::solver::stationary_distribution(model, options)?;
    let metrics = analysis::metrics(model, &dist.solution);
    let summary = dist.summary();
    let marginals: Vec<f64> = (0..=levels).map(|m| dist.level_marginal(m)).collect();
    let table = dist.table(levels).ok();

    let mut rows = vec![vec!["gamma".into(), String::new(), String::new(), full(summary.gamma)]];
    for (i, a) in summary.alphas.iter().enumerate() {
        rows.push(vec!["alpha".into(), String::new(), (i + 1).to_string(), full(*a)]);
    }
    rows.push(vec!["pi00".into(), String::new(), String::new(), full(summary.pi00)]);
    for (name, value) in [("L", metrics.l), ("W", metrics.w), ("V", metrics.v)] {
        rows.push(vec![name.into(), String::new(), String::new(), full(value)]);
    }
    match &table {
        Some(table) => {
            for (m, row) in table.iter().enumerate() {
                for (i, p) in row.iter().enumerate() {
                    rows.push(vec!["pi".into(), m.to_string(), i.to_string(), full(*p)]);
                }
            }
        }
        None => {
            for (m, p) in marginals.iter().enumerate() {
                rows.push(vec!["marginal".into(), m.to_string(), String::new(), full(*p)]);
            }
        }
    }
    Ok(Rendered {
        json: json!({
            "gamma": summary.gamma,
            "alphas": summary.alphas,
            "alpha": summary.alpha,
            "pi00": summary.pi00,
            "pi10": summary.pi10,
            "boundary": summary.boundary,
            "L": metrics.l,
            "W": metrics.w,
            "V": metrics.v,
            "pi0_bar": metrics.pi0_bar,
            "rho": model.rho(),
            "method": summary.method.to_string(),
            "iterations": summary.iterations,
            "residual": summary.residual,
            "marginals": marginals,
            "pi": table,
        }),
        header: vec!["quantity", "level", "phase", "value"],
        rows,
    })
}

fn finite_queue(model: &QueueModel, capacity: usize, policy: BlockingPolicy) -> Outcome<Rendered> {
    let sol = finite::solve_finite_with(model, capacity, policy.top_matrix())?;
    let rows = sol
        .pi
        .iter()
        .enumerate()
        .flat_map(|(m, row)| {
            row.iter()
                .enumerate()
                .map(move |(i, p)| vec![m.to_string(), i.to_string(), full(*p)])
        })
        .collect();
    let marginals: Vec<f64> = (0..=capacity).map(|m| sol.level_marginal(m)).collect();
    Ok(Rendered {
        json: json!({
            "capacity": capacity,
            "policy": policy,
            "top_matrix": sol.top,
            "pi": sol.pi,
            "marginals": marginals,
        }),
        header: vec!["level", "phase", "probability"],
        rows,
    })
}

fn sweep(lambda_star: f64, q: f64, k_max: usize, service: &BatchService, options: &SolverOptions) -> Outcome<Rendered> {
    let ks: Vec<usize> = (1..=k_max).collect();
    let report = analysis::monotonicity_sweep(lambda_star, q, &ks, service, options)?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.map_or("inf".into(), |k| k.to_string()),
                full(r.lambda_k),
                full(r.gamma),
                r.alpha.map_or(String::new(), full),
                full(r.pi0_bar),
                full(r.l),
                full(r.w),
                full(r.v),
            ]
        })
        .collect();
    Ok(Rendered {
        json: to_value(&report),
        header: vec!["k", "lambda_k", "gamma", "alpha", "pi0_bar", "L", "W", "V"],
        rows,
    })
}

fn table(cells: Vec<TableCell>) -> Rendered {
    let rows = cells
        .iter()
        .map(|c| {
            let zero = c.approx_zero();
            vec![
                format!("{:.1}", c.q),
                c.k.map_or("inf".into(), |k| k.to_string()),
                format!("{:.4}", if zero { 0.0 } else { c.gamma }),
                format!("{:.4}", c.alpha),
                u8::from(zero).to_string(),
            ]
        })
        .collect();
    let json = cells
        .iter()
        .map(|c| json!({ "q": c.q, "k": c.k, "gamma": c.gamma, "alpha": c.alpha, "approx_zero": c.approx_zero() }))
        .collect();
    Rendered {
        json,
        header: vec!["q", "k", "gamma", "alpha", "approx_zero"],
        rows,
    }
}

fn dm1(rho: f64, service: &BatchService, levels: usize) -> Outcome<Rendered> {
    let limit = analysis::dm1_distribution(rho, service)?;
    let head = limit.head(levels + 1);
    let rows = head
        .iter()
        .enumerate()
        .map(|(m, p)| vec![m.to_string(), full(*p)])
        .collect();
    Ok(Rendered {
        json: json!({ "rho": limit.rho, "sigma": limit.sigma, "pi0": limit.pi0, "marginals": head }),
        header: vec!["level", "probability"],
        rows,
    })
}

fn oracle_check(
    model: &QueueModel,
    options: &SolverOptions,
    cap: usize,
    levels: usize,
    capacity: usize,
) -> Outcome<Rendered> {
    let report = oracle::oracle_check(model, options, cap, levels)?;
    let top = oracle::top_matrix_report(model, capacity)?;
    let mut rows = vec![
        vec!["level_cap".into(), report.level_cap.to_string()],
        vec!["compared_levels".into(), report.compared_levels.to_string()],
        vec!["max_abs_error".into(), full(report.max_abs_error)],
        vec!["max_rel_error".into(), full(report.max_rel_error)],
        vec!["tail_mass_bound".into(), full(report.tail_mass_bound)],
    ];
    for c in &top.comparisons {
        rows.push(vec![
            format!("finite_{}_{}", to_key(&c.top), to_key(&c.policy)),
            full(c.max_abs_error),
        ]);
    }
    Ok(Rendered {
        json: json!({ "stationary": report, "finite": top }),
        header: vec!["metric", "value"],
        rows,
    })
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable output")
}

fn to_key<T: Serialize>(value: &T) -> String {
    match to_value(value) {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}
