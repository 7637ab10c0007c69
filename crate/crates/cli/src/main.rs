use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;
use straggler_lab::allocator::solve_allocation_continuous;
use straggler_lab::asymptotics::xi_table;
use straggler_lab::codec::Matrix;
use straggler_lab::figures::{
    write_csv, CsvRow, Fig3Recipe, Fig4Recipe, Fig5Recipe, SIX_GROUP_K, SIX_GROUP_RATES,
    SIX_GROUP_SIZES,
};
use straggler_lab::montecarlo::{run_experiment, ExperimentConfig};
use straggler_lab::runtime::{run_coded_job, SampledDelays};
use straggler_lab::{comp_time_group, optimal_allocation, Error, GroupSystem};

mod output;

const THREADS_ENV: &str = "STRAGGLER_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "straggler-lab",
    version,
    about = "Task allocation, latency simulation and coded execution for group codes on heterogeneous clusters",
    after_help = "Set STRAGGLER_LAB_THREADS to cap the number of simulation threads."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the optimal task allocation for a group system
    Allocate(AllocateArgs),
    /// Run a Monte Carlo experiment described by a TOML file
    Simulate(SimulateArgs),
    /// Computing time versus n for MDS and two group allocations
    Fig3(Fig3Args),
    /// Decoding ratio rho_dec versus the number of groups
    Fig4(Fig4Args),
    /// Execution time versus decoding weight alpha
    Fig5(Fig5Args),
    /// Run one coded matrix-vector job on worker threads
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct AllocateArgs {
    /// Group sizes n_i, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Group rates mu_i, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Number of source tasks
    #[arg(long)]
    k: usize,
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment file (TOML)
    config: PathBuf,
    /// Override the number of trials
    #[arg(long)]
    trials: Option<usize>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the summary as JSON into this directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the summary as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// Output directory for the CSV files
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Monte Carlo trials (random system draws for fig4) per point
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Fig3Args {
    #[command(flatten)]
    common: FigureArgs,
    /// Total worker counts to sweep, each a multiple of 4
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct Fig4Args {
    #[command(flatten)]
    common: FigureArgs,
    /// Group counts to sweep
    #[arg(long, value_delimiter = ',')]
    l_grid: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct Fig5Args {
    #[command(flatten)]
    common: FigureArgs,
    /// Alpha values of the low-alpha panel
    #[arg(long, value_delimiter = ',')]
    alpha_low: Option<Vec<f64>>,
    /// Alpha values of the large-alpha panel
    #[arg(long, value_delimiter = ',')]
    alpha_high: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seconds of injected delay per model time unit
    #[arg(long, default_value_t = 100.0)]
    time_scale: f64,
    /// Rows of the random matrix A (a multiple of 400)
    #[arg(long, default_value_t = 4000)]
    rows: usize,
    /// Columns of A
    #[arg(long, default_value_t = 64)]
    cols: usize,
    /// Make every worker of this group (1-based) unresponsive
    #[arg(long)]
    kill_group: Option<usize>,
    /// Write the per-worker trace as JSON lines
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Failure with its exit status: 2 for invalid input, 1 otherwise.
#[derive(Debug)]
enum CliError {
    Invalid(String),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// Errors that describe bad input rather than a failed computation.
fn is_validation(e: &Error) -> bool {
    matches!(
        e,
        Error::MismatchedLengths { .. }
            | Error::EmptySystem
            | Error::NonPositiveSize { .. }
            | Error::NonPositiveRate { .. }
            | Error::ZeroTasks
            | Error::InfeasibleK { .. }
            | Error::AllocationExceedsGroup { .. }
            | Error::InvalidAllocation(_)
            | Error::InvalidDims { .. }
            | Error::IndivisibleRows { .. }
            | Error::InvalidConfig(_)
    )
}

/// Attaches the offending command-line field to a library error.
fn classify(e: Error, field: impl Fn(&Error) -> Option<&'static str>) -> CliError {
    if !is_validation(&e) {
        return CliError::Failed(e.into());
    }
    match field(&e) {
        Some(f) => invalid(format!("invalid {f}: {e}")),
        None => invalid(e.to_string()),
    }
}

fn system_field(e: &Error) -> Option<&'static str> {
    match e {
        Error::MismatchedLengths { .. } | Error::EmptySystem => Some("--sizes/--rates"),
        Error::NonPositiveSize { .. } => Some("--sizes"),
        Error::NonPositiveRate { .. } => Some("--rates"),
        Error::InfeasibleK { .. } | Error::ZeroTasks => Some("--k"),
        _ => None,
    }
}

fn check_trials(trials: Option<usize>) -> Result<(), CliError> {
    if trials == Some(0) {
        return Err(invalid("invalid --trials: must be at least 1"));
    }
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t >= 1).ok_or_else(|| {
        invalid(format!(
            "invalid {THREADS_ENV}: expected a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")?;
    info!("using {threads} simulation threads");
    Ok(())
}

fn cmd_allocate(args: &AllocateArgs) -> Result<(), CliError> {
    let system = GroupSystem::new(args.sizes.clone(), args.rates.clone())
        .map_err(|e| classify(e, system_field))?;
    let alloc = optimal_allocation(&system, args.k).map_err(|e| classify(e, system_field))?;
    let continuous =
        solve_allocation_continuous(&system, args.k, 1e-10 * system.total_workers() as f64)
            .map_err(|e| classify(e, system_field))?;
    let table = xi_table(&system, &alloc).map_err(|e| classify(e, system_field))?;
    let time = table.iter().map(|x| x.value).fold(0.0, f64::max);

    if args.json {
        let doc = json!({
            "k": args.k,
            "allocation": alloc.per_group(),
            "continuous": continuous.per_group,
            "xi": table.iter().map(|x| x.value).collect::<Vec<_>>(),
            "asymptotic_time": time,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).context("encoding JSON")?
        );
        return Ok(());
    }
    println!(
        "{:>5} {:>7} {:>8} {:>12} {:>6} {:>14}",
        "group", "n_i", "mu_i", "k_i (real)", "k_i", "xi_i"
    );
    for (g, x) in table.iter().enumerate() {
        println!(
            "{:>5} {:>7} {:>8} {:>12.4} {:>6} {:>14.6e}",
            g + 1,
            system.size(g),
            system.rate(g),
            continuous.per_group[g],
            alloc.get(g),
            x.value
        );
    }
    println!(
        "total k = {}, k_max = {}, asymptotic computing time = {time:.6e}",
        alloc.k_total(),
        alloc.k_max()
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    check_trials(args.trials)?;
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| invalid(format!("invalid config {}: {e}", args.config.display())))?;
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    let summary = run_experiment(&config).map_err(|e| classify(e, |_| Some("config")))?;
    let doc = serde_json::to_string_pretty(&summary).context("encoding JSON")?;
    if let Some(dir) = &args.out {
        let written = output::write_all_or_nothing(
            dir,
            vec![("summary.json".into(), format!("{doc}\n").into_bytes())],
        )?;
        info!("wrote {}", written[0].display());
    }
    if args.json {
        println!("{doc}");
        return Ok(());
    }
    println!("{} trials, seed {}", summary.trials, summary.master_seed);
    println!(
        "{:<12} {:>14} {:>12} {:>14} {:>12}",
        "code", "mean t_comp", "std err", "dec units", "rho_dec"
    );
    for c in &summary.codes {
        let rho = c
            .rho_dec
            .map(|r| format!("{:.5}", r.mean))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<12} {:>14.6e} {:>12.3e} {:>14.1} {:>12}",
            c.label, c.t_comp.mean, c.t_comp.std_error, c.dec_units.mean, rho
        );
    }
    for (i, alpha) in summary.config.alpha_grid.iter().enumerate() {
        let cells: Vec<String> = summary
            .codes
            .iter()
            .map(|c| format!("{}={:.6e}", c.label, c.exec[i].mean))
            .collect();
        println!("alpha {alpha:e}: {}", cells.join("  "));
    }
    println!(
        "order-statistic sandwich: {}/{} realizations, MDS dominance: {}/{}",
        summary.sandwich_checks - summary.sandwich_violations,
        summary.sandwich_checks,
        summary.dominance_checks - summary.dominance_violations,
        summary.dominance_checks
    );
    Ok(())
}

fn csv_bytes<R: CsvRow>(rows: &[R]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    buf
}

fn print_rows<R: CsvRow>(title: &str, rows: &[R]) {
    println!("{title}");
    println!("{}", R::HEADER.join("\t"));
    for r in rows {
        println!("{}", r.fields().join("\t"));
    }
}

fn finish_figure(dir: &std::path::Path, files: Vec<(String, Vec<u8>)>) -> Result<(), CliError> {
    for path in output::write_all_or_nothing(dir, files)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn figure_error(e: Error) -> CliError {
    classify(e, |_| None)
}

fn cmd_fig3(args: &Fig3Args) -> Result<(), CliError> {
    check_trials(args.common.trials)?;
    let mut recipe = Fig3Recipe::default();
    if let Some(t) = args.common.trials {
        recipe.trials = t;
    }
    if let Some(s) = args.common.seed {
        recipe.seed = s;
    }
    if let Some(grid) = &args.n_grid {
        if grid.is_empty() {
            return Err(invalid("invalid --n-grid: empty"));
        }
        if let Some(n) = grid.iter().find(|&&n| n % 4 != 0 || n < recipe.k) {
            return Err(invalid(format!(
                "invalid --n-grid: {n} must be a multiple of 4 and at least k = {}",
                recipe.k
            )));
        }
        recipe.n_grid = grid.clone();
    }
    let rows = recipe.run().map_err(figure_error)?;
    print_rows("fig3: mean computing time", &rows);
    finish_figure(
        &args.common.out,
        vec![("fig3.csv".into(), csv_bytes(&rows))],
    )
}

fn cmd_fig4(args: &Fig4Args) -> Result<(), CliError> {
    check_trials(args.common.trials)?;
    let mut recipe = Fig4Recipe::default();
    if let Some(t) = args.common.trials {
        recipe.draws = t;
    }
    if let Some(s) = args.common.seed {
        recipe.seed = s;
    }
    if let Some(grid) = &args.l_grid {
        if grid.is_empty() || grid.iter().any(|&l| l == 0 || l > recipe.k) {
            return Err(invalid(format!(
                "invalid --l-grid: entries must lie in 1..={}",
                recipe.k
            )));
        }
        recipe.l_grid = grid.clone();
    }
    let rows = recipe.run().map_err(figure_error)?;
    print_rows("fig4: mean rho_dec", &rows);
    finish_figure(
        &args.common.out,
        vec![("fig4.csv".into(), csv_bytes(&rows))],
    )
}

fn cmd_fig5(args: &Fig5Args) -> Result<(), CliError> {
    check_trials(args.common.trials)?;
    let mut recipe = Fig5Recipe::default();
    if let Some(t) = args.common.trials {
        recipe.trials = t;
    }
    if let Some(s) = args.common.seed {
        recipe.seed = s;
    }
    for (flag, given, slot) in [
        ("--alpha-low", &args.alpha_low, &mut recipe.alpha_low),
        ("--alpha-high", &args.alpha_high, &mut recipe.alpha_high),
    ] {
        if let Some(grid) = given {
            if grid.is_empty() || grid.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(invalid(format!(
                    "invalid {flag}: entries must be finite and non-negative"
                )));
            }
            *slot = grid.clone();
        }
    }
    let (low, high) = recipe.run().map_err(figure_error)?;
    print_rows("fig5 (low alpha): mean execution time", &low);
    print_rows("fig5 (large alpha): mean execution time", &high);
    finish_figure(
        &args.common.out,
        vec![
            ("fig5_low.csv".into(), csv_bytes(&low)),
            ("fig5_high.csv".into(), csv_bytes(&high)),
        ],
    )
}

fn cmd_demo(args: &DemoArgs) -> Result<(), CliError> {
    let system =
        GroupSystem::new(SIX_GROUP_SIZES.to_vec(), SIX_GROUP_RATES.to_vec()).expect("valid system");
    if !(args.time_scale.is_finite() && args.time_scale >= 0.0) {
        return Err(invalid(
            "invalid --time-scale: must be finite and non-negative",
        ));
    }
    if args.rows == 0 || !args.rows.is_multiple_of(SIX_GROUP_K) {
        return Err(invalid(format!(
            "invalid --rows: must be a positive multiple of {SIX_GROUP_K}"
        )));
    }
    if args.cols == 0 {
        return Err(invalid("invalid --cols: must be positive"));
    }
    let alloc = optimal_allocation(&system, SIX_GROUP_K).map_err(figure_error)?;
    let mut delays = SampledDelays::draw(&system, SIX_GROUP_K, args.seed, args.time_scale);
    if let Some(g) = args.kill_group {
        if g == 0 || g > system.num_groups() {
            return Err(invalid(format!(
                "invalid --kill-group: must lie in 1..={}",
                system.num_groups()
            )));
        }
        delays = delays.kill_group(g - 1);
    }
    let a = Matrix::<f64>::random(args.rows, args.cols, args.seed);
    let x = Matrix::<f64>::random(args.cols, 1, args.seed.wrapping_add(1));
    let trace =
        run_coded_job(&a, &x, &system, &alloc, &delays, args.seed).context("coded job failed")?;
    let direct = a.matmul(&x).context("direct product")?;
    let error = trace.result.relative_error(&direct);
    let injected =
        comp_time_group(delays.sample(), &alloc).context("group computing time")? * args.time_scale;

    if let Some(path) = &args.trace {
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).context("encoding trace")?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(std::path::Path::new("."));
        let name = path
            .file_name()
            .context("--trace needs a file name")?
            .to_string_lossy()
            .into_owned();
        output::write_all_or_nothing(dir, vec![(name, buf)])?;
    }
    let used = trace.used_workers().len();
    if args.json {
        let doc = json!({
            "allocation": alloc.per_group(),
            "workers": trace.events.len(),
            "used_workers": used,
            "t_comp_observed": trace.t_comp_observed,
            "t_comp_injected": injected,
            "relative_error": error,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).context("encoding JSON")?
        );
        return Ok(());
    }
    println!(
        "allocation {:?} over {} workers",
        alloc.per_group(),
        trace.events.len()
    );
    println!("decoded from {used} results");
    println!(
        "observed computing time {:.4} s, injected group time {:.4} s",
        trace.t_comp_observed, injected
    );
    println!("relative error against A x: {error:.3e}");
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Allocate(a) => cmd_allocate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fig3(a) => cmd_fig3(a),
        Command::Fig4(a) => cmd_fig4(a),
        Command::Fig5(a) => cmd_fig5(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
