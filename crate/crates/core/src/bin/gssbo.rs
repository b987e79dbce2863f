use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gssbo::acquisition::AcquisitionConfig;
use gssbo::bo::{RunConfig, Strategy};
use gssbo::harness::{self, GridConfig, NystromConfig, RmseConfig};
use gssbo::{Error, KernelFamily};

#[derive(Parser)]
#[command(
    name = "gssbo",
    version,
    about = "Bayesian optimization with gradient-diverse subset fitting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy over one or more seeds and write the traces.
    Run(RunArgs),
    /// Run an objective × strategy × seed grid from a JSON config.
    Grid(GridArgs),
    /// Nyström analysis of a synthetic Gram matrix, written as JSON.
    Nystrom(NystromArgs),
    /// Surrogate RMSE on a seeded test grid after every iteration.
    Rmse(RmseArgs),
}

#[derive(Args)]
struct RunOptions {
    /// JSON file with run settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    z_factor: Option<f64>,
    /// Fixed buffer size instead of the timing trigger; 100 when given
    /// without a value.
    #[arg(long, num_args = 0..=1, default_missing_value = "100")]
    fixed_m: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// `srinivas`, `adjusted`, `constant:<v>` or a number.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    n_candidates: Option<usize>,
    #[arg(long)]
    trace_subsets: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    opts: RunOptions,
    #[arg(long, default_value = "gssbo")]
    strategy: Strategy,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Seed list (`0,1,2` or `0..10`); overrides `--seed`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    plot_data: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args)]
struct NystromArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long)]
    lengthscale: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RmseArgs {
    #[command(flatten)]
    opts: RunOptions,
    /// Comma-separated strategies.
    #[arg(long, default_value = "gssbo,rssbo,full")]
    strategies: String,
    #[arg(long, default_value = "0..10")]
    seeds: String,
    #[arg(long, default_value_t = 512)]
    grid_size: usize,
    #[arg(long)]
    start_t: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> gssbo::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn build_run_config(o: &RunOptions) -> gssbo::Result<RunConfig> {
    let mut c: RunConfig = match &o.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &o.objective {
        c.objective = v.clone();
    }
    if o.dim.is_some() {
        c.dim = o.dim;
    }
    if let Some(v) = o.budget {
        c.budget = v;
    }
    if let Some(v) = o.n0 {
        c.n0 = v;
    }
    if let Some(v) = o.z_factor {
        c.z_factor = v;
    }
    if o.fixed_m.is_some() {
        c.fixed_m = o.fixed_m;
    }
    if let Some(v) = o.noise {
        c.noise = v;
    }
    if let Some(v) = o.kernel {
        c.kernel = v;
    }
    if let Some(v) = o.n_candidates {
        c.acquisition = AcquisitionConfig {
            n_candidates: Some(v),
            ..c.acquisition
        };
    }
    c.trace_subsets |= o.trace_subsets;
    if let Some(b) = &o.beta {
        let obj = c.objective()?;
        c.beta = Some(harness::parse_beta(b, o.delta, obj.dim, obj.diameter())?);
    }
    c.validate()?;
    Ok(c)
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> gssbo::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text + "\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> gssbo::Result<bool> {
    let base = build_run_config(&a.opts)?;
    let seeds = match &a.seeds {
        Some(s) => harness::parse_seeds(s)?,
        None => vec![a.seed],
    };
    let grid = GridConfig {
        objectives: vec![base.objective.clone()],
        strategies: vec![a.strategy],
        seeds,
        run: base,
        plot_data: a.plot_data,
    };
    let summary = harness::run_grid(&grid, &a.out, a.jobs)?;
    for f in &summary.failures {
        eprintln!("seed {}: {}", f.seed, f.error);
    }
    for r in &summary.rows {
        println!(
            "{} {} seeds={} cum_regret={:.4}±{:.4} wall_ms={:.1}",
            r.objective, r.strategy, r.seeds, r.cum_regret_mean, r.cum_regret_std, r.wall_time_ms_mean
        );
    }
    Ok(summary.failures.is_empty())
}

fn cmd_grid(a: GridArgs) -> gssbo::Result<bool> {
    let mut grid = GridConfig::load(&a.config)?;
    grid.plot_data |= a.plot_data;
    let summary = harness::run_grid(&grid, &a.out, a.jobs)?;
    for f in &summary.failures {
        eprintln!("{} {} seed {}: {}", f.objective, f.strategy, f.seed, f.error);
    }
    println!(
        "{} cells, {} failed; summary in {}",
        grid.cells().len(),
        summary.failures.len(),
        a.out.join("summary.json").display()
    );
    Ok(summary.failures.is_empty())
}

fn cmd_nystrom(a: NystromArgs) -> gssbo::Result<bool> {
    let mut c: NystromConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => NystromConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { c.$f = v; })* };
    }
    set!(n, m, dim, kernel, lengthscale, noise, tolerance, seed);
    let report = harness::nystrom_analysis(&c)?;
    write_json(&report, a.out.as_deref())?;
    Ok(true)
}

fn cmd_rmse(a: RmseArgs) -> gssbo::Result<bool> {
    let run = build_run_config(&a.opts)?;
    let strategies = a
        .strategies
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse())
        .collect::<gssbo::Result<Vec<Strategy>>>()?;
    let config = RmseConfig {
        run,
        strategies,
        seeds: harness::parse_seeds(&a.seeds)?,
        grid_size: a.grid_size,
        grid_seed: 0,
        start_t: a.start_t,
    };
    let study = harness::rmse_study(&config, a.jobs)?;
    for (s, m) in &study.mean_by_strategy {
        eprintln!("{s}: mean rmse {m:.6}");
    }
    write_json(&study, a.out.as_deref())?;
    Ok(true)
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::UnknownObjective(_) | Error::Json(_))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Nystrom(a) => cmd_nystrom(a),
        Command::Rmse(a) => cmd_rmse(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
