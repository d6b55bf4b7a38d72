//! The `ctesn` command: train surrogates for stiff ODE families and
//! query them, with CSV/JSON outputs meant for direct plotting.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration or
//! input-file problems, 3 solver or training failures, 4 domain
//! violations such as out-of-box parameters. Unexpected io failures
//! exit 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ctesn_core::models::HeatingParams;
use ctesn_core::ode::solve_stiff;
use ctesn_core::readout::{sample_times, FitConfig, TimeGrid};
use ctesn_core::surrogate::{evaluation_grid, train, PredictError};
use ctesn_core::TrainedSurrogate;

use ctesn_cli::config::{
    self, ConfigError, ModelChoice, ResolvedRun, RunConfig,
};
use ctesn_cli::container::{self, ContainerError};
use ctesn_cli::harness::{run_heatmap, run_scaling, HarnessError, ScalingConfig};
use ctesn_cli::output;

#[derive(Parser)]
#[command(
    name = "ctesn",
    version,
    about = "Train and query reservoir surrogates for stiff ODE families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured model directly; writes solve.csv.
    Solve(CommonArgs),
    /// Train a surrogate over the parameter box; writes surrogate.ctesn
    /// and train_report.json.
    Train(CommonArgs),
    /// Evaluate a trained surrogate at one parameter point; writes
    /// predict.csv.
    Predict(PredictArgs),
    /// Compare the surrogate against fresh solves on a parameter grid;
    /// writes heatmap.csv and heatmap_stats.json.
    Heatmap(HeatmapArgs),
    /// Time full solves against surrogate predictions over network
    /// sizes; writes scaling.csv.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration JSON.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for training draws; overrides the config's seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Comma-separated key=value overrides for the model coefficients.
    #[arg(long, value_name = "K=V,...")]
    params: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    /// Surrogate container; defaults to OUT/surrogate.ctesn.
    #[arg(long, value_name = "PATH")]
    surrogate: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Parameter point as key=value pairs over the box dimensions;
    /// unspecified components sit at the box midpoint.
    #[arg(long, value_name = "K=V,...")]
    params: Option<String>,
    /// Evaluation times: "log:N", "linear:N", or a comma-separated
    /// list of times inside the training span.
    #[arg(long, value_name = "SPEC", default_value = "log:400")]
    times: String,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Run configuration JSON; must describe the surrogate's model.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Surrogate container; defaults to OUT/surrogate.ctesn.
    #[arg(long, value_name = "PATH")]
    surrogate: Option<PathBuf>,
    /// Output directory; overrides the config's out_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid resolution as N1xN2.
    #[arg(long, value_name = "N1xN2", default_value = "23x23")]
    resolution: String,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Run configuration JSON; the model must be heating.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for training draws; overrides the config's seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Room counts to sweep, ascending.
    #[arg(long, value_name = "N,...", default_value = "5,10,20,40,80")]
    n_list: String,
    /// Repetitions behind each full-solve timing median.
    #[arg(long, value_name = "REPS", default_value_t = 5)]
    solve_reps: usize,
    /// Repetitions behind each prediction timing median.
    #[arg(long, value_name = "REPS", default_value_t = 100)]
    predict_reps: usize,
}

enum CmdError {
    Config(String),
    Solve(String),
    Domain(String),
    Io(String),
}

impl CmdError {
    fn exit_code(&self) -> u8 {
        match self {
            CmdError::Io(_) => 1,
            CmdError::Config(_) => 2,
            CmdError::Solve(_) => 3,
            CmdError::Domain(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Config(m) | CmdError::Solve(m) | CmdError::Domain(m) | CmdError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(e.to_string())
    }
}

impl From<ContainerError> for CmdError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io(_) => CmdError::Io(e.to_string()),
            _ => CmdError::Config(e.to_string()),
        }
    }
}

impl From<HarnessError> for CmdError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::BadInput(_) => CmdError::Config(e.to_string()),
            _ => CmdError::Solve(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_run(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<ResolvedRun, CmdError> {
    let document = RunConfig::from_path(config_path)?;
    Ok(config::resolve(&document, out, seed)?)
}

fn overrides_from(flag: &Option<String>) -> Result<Vec<(String, f64)>, CmdError> {
    match flag {
        Some(text) => Ok(config::parse_overrides(text)?),
        None => Ok(Vec::new()),
    }
}

fn cmd_solve(args: CommonArgs) -> Result<(), CmdError> {
    let mut run = load_run(&args.config, args.out.as_deref(), args.seed)?;
    let overrides = overrides_from(&args.params)?;
    config::apply_model_overrides(&mut run.model, &overrides)?;

    let (system, y0) = run.system();
    let sol = solve_stiff(&system, run.tspan, &y0, &run.training.solver);
    if !sol.is_success() {
        return Err(CmdError::Solve(format!("stiff solve stopped: {}", sol.status())));
    }
    let path = output::write_output(&run.out_dir, "solve.csv", &output::solution_csv(&sol))?;
    println!("wrote {} ({} rows)", path.display(), sol.len());
    Ok(())
}

fn cmd_train(args: CommonArgs) -> Result<(), CmdError> {
    let run = load_run(&args.config, args.out.as_deref(), args.seed)?;
    if args.params.is_some() {
        return Err(CmdError::Config(
            "train takes its parameters from the config; --params only applies to solve and predict"
                .to_string(),
        ));
    }

    let total = Instant::now();
    let family = run.family();
    let start = Instant::now();
    let surrogate = train(run.model_name(), &family, &run.space, run.tspan, &run.training)
        .map_err(|e| CmdError::Solve(format!("training failed: {e}")))?;
    let train_seconds = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&run.out_dir)?;
    let surrogate_path = run.out_dir.join("surrogate.ctesn");
    container::save(&surrogate, &surrogate_path)?;

    let report = train_report(&run, &surrogate, train_seconds, total.elapsed().as_secs_f64());
    let report_path = output::write_output(&run.out_dir, "train_report.json", &report)?;

    let worst = surrogate
        .matrices
        .iter()
        .map(|m| m.fit_residual)
        .fold(0.0f64, f64::max);
    println!(
        "wrote {} and {} ({} samples, worst fit residual {worst:.3e})",
        surrogate_path.display(),
        report_path.display(),
        surrogate.matrices.len()
    );
    Ok(())
}

fn train_report(
    run: &ResolvedRun,
    surrogate: &TrainedSurrogate,
    train_seconds: f64,
    total_seconds: f64,
) -> String {
    let residuals: Vec<f64> = surrogate.matrices.iter().map(|m| m.fit_residual).collect();
    let params: Vec<&[f64]> = surrogate.matrices.iter().map(|m| m.param.as_slice()).collect();
    let report = serde_json::json!({
        "model": run.model_name(),
        "model_dim": surrogate.metadata.model_dim,
        "reservoir_dim": surrogate.metadata.reservoir_dim,
        "seed": surrogate.metadata.seed,
        "n_train": surrogate.matrices.len(),
        "wall_seconds": {
            "train": train_seconds,
            "total": total_seconds,
        },
        "fit_residuals": residuals,
        "sample_params": params,
        "config": run.source,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    text
}

/// Box dimension names for `--params`, from the surrogate's own
/// metadata; containers from other tools fall back to p1..pd.
fn dimension_names(surrogate: &TrainedSurrogate) -> Vec<String> {
    match surrogate.metadata.model_name.as_str() {
        "robertson" => vec!["k1".into(), "k2".into(), "k3".into()],
        "heating" => vec!["t_room_set".into(), "t_fluid_set".into()],
        _ => (1..=surrogate.space.dim()).map(|i| format!("p{i}")).collect(),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<(), CmdError> {
    let surrogate_path =
        args.surrogate.clone().unwrap_or_else(|| args.out.join("surrogate.ctesn"));
    let surrogate = container::load(&surrogate_path)?;

    let names = dimension_names(&surrogate);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let overrides = overrides_from(&args.params)?;
    let p = config::point_from_overrides(&name_refs, &surrogate.space, &overrides)?;
    for (i, name) in names.iter().enumerate() {
        let (lo, hi) = (surrogate.space.lower()[i], surrogate.space.upper()[i]);
        if !(p[i] >= lo && p[i] <= hi) {
            return Err(CmdError::Domain(format!(
                "parameter {name} = {} is outside the trained box [{lo}, {hi}]",
                p[i]
            )));
        }
    }

    let times = parse_times(&args.times, surrogate.tspan)?;
    let pred = surrogate.predict(&p, &times).map_err(|e| match e {
        PredictError::OutOfSpan(_) => {
            CmdError::Domain(format!("requested times leave the trained span [{}, {}]", surrogate.tspan.0, surrogate.tspan.1))
        }
        other => CmdError::Domain(other.to_string()),
    })?;

    let path = output::write_output(&args.out, "predict.csv", &output::trajectory_csv(&times, &pred))?;
    println!("wrote {} ({} rows)", path.display(), times.len());
    Ok(())
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CmdError> {
    let run = load_run(&args.config, args.out.as_deref(), None)?;
    let surrogate_path =
        args.surrogate.clone().unwrap_or_else(|| run.out_dir.join("surrogate.ctesn"));
    let surrogate = container::load(&surrogate_path)?;
    if surrogate.metadata.model_name != run.model_name()
        || surrogate.metadata.model_dim != run.model_dim()
    {
        return Err(CmdError::Config(format!(
            "config model {} (dimension {}) does not match the surrogate's {} (dimension {})",
            run.model_name(),
            run.model_dim(),
            surrogate.metadata.model_name,
            surrogate.metadata.model_dim
        )));
    }

    let resolution = parse_resolution(&args.resolution)?;
    let family = run.family();
    let result = run_heatmap(&surrogate, &family, resolution, &run.training.solver)?;

    let csv_path = output::write_output(&run.out_dir, "heatmap.csv", &output::heatmap_csv(&result))?;
    let stats_path =
        output::write_output(&run.out_dir, "heatmap_stats.json", &output::heatmap_stats_json(&result))?;
    println!(
        "wrote {} and {} ({} cells, {} missing, median {:.3e}, p95 {:.3e}, max {:.3e})",
        csv_path.display(),
        stats_path.display(),
        result.grid.len(),
        result.missing(),
        result.stats.median,
        result.stats.p95,
        result.stats.max
    );
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CmdError> {
    let run = load_run(&args.config, args.out.as_deref(), args.seed)?;
    let base = match &run.model {
        ModelChoice::Heating(params) => params.clone(),
        ModelChoice::Robertson(_) => {
            return Err(CmdError::Config(
                "the scaling benchmark sweeps room counts, so the model must be heating"
                    .to_string(),
            ))
        }
    };
    let n_list = parse_n_list(&args.n_list)?;
    let cfg = ScalingConfig {
        base,
        training: run.training.clone(),
        solve_reps: args.solve_reps,
        predict_reps: args.predict_reps,
        unseen_count: 3,
    };
    let result = run_scaling(&n_list, &cfg)?;
    let path = output::write_output(&run.out_dir, "scaling.csv", &output::scaling_csv(&result))?;
    let largest = result.rows.last().expect("n_list was not empty");
    println!(
        "wrote {} ({} rows; at N={} full solve {:.3}s vs predict {:.2e}s)",
        path.display(),
        result.rows.len(),
        largest.n_rooms,
        largest.full_solve_seconds,
        largest.surrogate_predict_seconds
    );
    Ok(())
}

fn parse_times(spec: &str, tspan: (f64, f64)) -> Result<Vec<f64>, CmdError> {
    let grid = |kind, count: &str| -> Result<Vec<f64>, CmdError> {
        let n: usize = count.parse().map_err(|_| {
            CmdError::Config(format!("times spec {spec:?} needs an integer count"))
        })?;
        if n < 2 {
            return Err(CmdError::Config("times grids need at least 2 points".to_string()));
        }
        let cfg = FitConfig { n_samples: n, time_grid: kind, ..FitConfig::default() };
        Ok(sample_times(tspan, &cfg))
    };
    if let Some(count) = spec.strip_prefix("log:") {
        return grid(TimeGrid::Log, count);
    }
    if let Some(count) = spec.strip_prefix("linear:") {
        return grid(TimeGrid::Linear, count);
    }
    let times: Result<Vec<f64>, _> =
        spec.split(',').map(|piece| piece.trim().parse::<f64>()).collect();
    let times = times.map_err(|_| {
        CmdError::Config(format!(
            "times spec {spec:?} is neither log:N, linear:N, nor a comma-separated list"
        ))
    })?;
    if times.is_empty() {
        return Err(CmdError::Config("the times list is empty".to_string()));
    }
    Ok(times)
}

fn parse_resolution(text: &str) -> Result<(usize, usize), CmdError> {
    let (a, b) = text
        .split_once('x')
        .ok_or_else(|| CmdError::Config(format!("resolution {text:?} is not of the form N1xN2")))?;
    let n1 = a.trim().parse().map_err(|_| {
        CmdError::Config(format!("resolution {text:?} has a non-integer first axis"))
    })?;
    let n2 = b.trim().parse().map_err(|_| {
        CmdError::Config(format!("resolution {text:?} has a non-integer second axis"))
    })?;
    Ok((n1, n2))
}

fn parse_n_list(text: &str) -> Result<Vec<usize>, CmdError> {
    let ns: Result<Vec<usize>, _> =
        text.split(',').map(|piece| piece.trim().parse::<usize>()).collect();
    ns.map_err(|_| CmdError::Config(format!("N list {text:?} must be comma-separated integers")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_specs_parse() {
        let span = (0.0, 100.0);
        let log = parse_times("log:50", span).unwrap();
        assert_eq!(log.len(), 50);
        assert!(log[0] >= 0.0 && *log.last().unwrap() <= 100.0);
        let linear = parse_times("linear:5", span).unwrap();
        assert_eq!(linear, vec![0.0, 25.0, 50.0, 75.0, 100.0]);
        let list = parse_times("1, 2.5, 99", span).unwrap();
        assert_eq!(list, vec![1.0, 2.5, 99.0]);
        assert!(parse_times("log:one", span).is_err());
        assert!(parse_times("weekly", span).is_err());
    }

    #[test]
    fn resolution_and_n_list_parse() {
        assert_eq!(parse_resolution("23x23").unwrap(), (23, 23));
        assert_eq!(parse_resolution("4 x 9").unwrap(), (4, 9));
        assert!(parse_resolution("23").is_err());
        assert_eq!(parse_n_list("5,10,20").unwrap(), vec![5, 10, 20]);
        assert!(parse_n_list("5,ten").is_err());
    }
}
