//! Command-line front end: dataset ingestion, feature selection, screening,
//! redundancy evaluation, and a timing harness.
//!
//! Exit codes: 0 on success, 1 on a domain error (bad data, guard rails),
//! 2 on a usage error (flag parsing and validation).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use n3lars::data::{generate_synthetic, load_dataset};
use n3lars::parallel::ScoringEngine;
use n3lars::screening::{mr_rank, write_ranking_csv};
use n3lars::solver::select_from_source;
use n3lars::{metrics, solver, Config, Dataset, EventKind, Format, SelectionPath, Task};

/// Exact mode builds n-by-n Grams per feature; past this many samples it is
/// refused without `--force`.
const EXACT_MODE_SAMPLE_GUARD: usize = 2000;

#[derive(Parser)]
#[command(name = "n3lars", version, about = "Nonlinear non-redundant feature selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select features and export the regularization path.
    Select(SelectArgs),
    /// Generate the synthetic benchmark dataset.
    Synth(SynthArgs),
    /// Rank features by relevance, optionally screen-then-select.
    Screen(ScreenArgs),
    /// Redundancy rate of a feature set.
    Red(RedArgs),
    /// Time selection across a grid of sizes and worker counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Exact,
    Nystrom,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMeasure {
    Nhsic,
    Hsic,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliTask {
    Regression,
    Classification,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    DenseCsv,
    Libsvm,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset path.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "dense-csv")]
    format: CliFormat,
    /// First CSV line is a header row.
    #[arg(long)]
    header: bool,
    #[arg(long, value_enum)]
    task: CliTask,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, value_enum, default_value = "nystrom")]
    mode: CliMode,
    #[arg(long, value_enum, default_value = "nhsic")]
    measure: CliMeasure,
    #[arg(long, default_value_t = 1.0)]
    sigma2_x: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma2_y: f64,
    #[arg(long, default_value_t = 20)]
    basis_size: usize,
    #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
    basis_min: f64,
    #[arg(long, default_value_t = 5.0)]
    basis_max: f64,
    /// Relative eigenvalue floor for the basis Gram inverse square root.
    #[arg(long, default_value_t = 1e-10)]
    eps_rel: f64,
    /// Solver step-size guard.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Worker count; 0 = all cores. N3LARS_THREADS overrides.
    #[arg(short = 'p', long, default_value_t = 0)]
    workers: usize,
    /// Byte budget for cached per-feature representations.
    #[arg(long, default_value_t = 2 * 1024 * 1024 * 1024)]
    cache_budget: u64,
}

impl EngineArgs {
    fn config(&self) -> Config {
        Config {
            mode: match self.mode {
                CliMode::Exact => n3lars::Mode::Exact,
                CliMode::Nystrom => n3lars::Mode::Nystrom,
            },
            measure: match self.measure {
                CliMeasure::Nhsic => n3lars::Measure::Nhsic,
                CliMeasure::Hsic => n3lars::Measure::Hsic,
            },
            kernel: n3lars::KernelConfig {
                sigma2_x: self.sigma2_x,
                sigma2_y: self.sigma2_y,
                basis_size: self.basis_size,
                basis_min: self.basis_min,
                basis_max: self.basis_max,
                eps_rel: self.eps_rel,
            },
            solver: n3lars::SolverConfig { tol: self.tol },
            parallel: n3lars::ParallelConfig {
                workers: workers_override(self.workers),
                cache_budget_bytes: self.cache_budget,
            },
        }
    }
}

fn workers_override(flag: usize) -> usize {
    match std::env::var("N3LARS_THREADS") {
        Ok(v) => v.parse().unwrap_or(flag),
        Err(_) => flag,
    }
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of features to select.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output directory for selected.json, path.csv, path.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Run exact mode even on large sample counts.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    /// Base feature count (the output depends on the first three).
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    d_base: u64,
    #[arg(long, default_value_t = 0)]
    d_redundant: u64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; a manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Write a header row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct ScreenArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Screen size: how many features survive the relevance ranking.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
    /// When set, run the solver on the screened candidates for this many
    /// features; otherwise only the ranking is produced.
    #[arg(long)]
    m_final: Option<u64>,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RedArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated feature indices.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<usize>>,
    /// A selected.json produced by `select`, or a JSON array of indices.
    #[arg(long)]
    features_file: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Grid axes as `n=100,200` and `d=100,200`.
    #[arg(long, num_args = 1.., required = true)]
    grid: Vec<String>,
    /// Worker counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    p: Vec<usize>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
    #[arg(long, value_enum, default_value = "nystrom")]
    mode: CliMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timing CSV path.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
}

#[derive(Serialize)]
struct SelectedFeature {
    index: usize,
    name: String,
    rank: usize,
    lambda_enter: f64,
    alpha_final: f64,
}

#[derive(Serialize)]
struct SelectedReport {
    mode: n3lars::Mode,
    m: usize,
    features: Vec<SelectedFeature>,
    config: Config,
}

#[derive(Deserialize)]
struct SelectedReportIn {
    features: Vec<SelectedFeatureIn>,
}

#[derive(Deserialize)]
struct SelectedFeatureIn {
    index: usize,
}

#[derive(Serialize)]
struct SynthManifest {
    seed: u64,
    n: usize,
    d_base: usize,
    d_redundant: usize,
    d: usize,
    noise: f64,
    header: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Select(args) => cmd_select(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Screen(args) => cmd_screen(args),
        Command::Red(args) => cmd_red(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load(input: &InputArgs) -> Result<Dataset, n3lars::Error> {
    let format = match input.format {
        CliFormat::DenseCsv => Format::DenseCsv { header: input.header },
        CliFormat::Libsvm => Format::Libsvm,
    };
    let task = match input.task {
        CliTask::Regression => Task::Regression,
        CliTask::Classification => Task::Classification,
    };
    load_dataset(&input.input, format, task)
}

fn guard_exact_mode(cfg: &Config, n: usize, force: bool) -> Result<(), n3lars::Error> {
    if cfg.mode == n3lars::Mode::Exact && n > EXACT_MODE_SAMPLE_GUARD && !force {
        eprintln!(
            "warning: exact mode stores n-by-n kernel matrices; n = {n} exceeds {EXACT_MODE_SAMPLE_GUARD} \
             and will need roughly {:.1} MiB per feature",
            (n * n * 8) as f64 / (1024.0 * 1024.0)
        );
        return Err(n3lars::Error::invalid(
            "refusing exact mode on a large sample count; pass --force to proceed",
        ));
    }
    Ok(())
}

fn write_selection_outputs(
    ds: &Dataset,
    path: &SelectionPath,
    cfg: &Config,
    m: usize,
    out_dir: &Path,
) -> Result<(), n3lars::Error> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv = BufWriter::new(File::create(out_dir.join("path.csv"))?);
    path.write_csv(&mut csv)?;
    csv.flush()?;
    std::fs::write(out_dir.join("path.json"), path.to_json())?;

    // final coefficients from the last snapshot
    let last = path.events.last();
    let alpha_of = |k: usize| -> f64 {
        last.and_then(|ev| {
            ev.active
                .iter()
                .position(|&f| f == k)
                .map(|pos| ev.alpha[pos])
        })
        .unwrap_or(0.0)
    };
    let lambda_of = |k: usize| -> f64 {
        path.events
            .iter()
            .rev()
            .find(|ev| ev.kind == EventKind::Add && ev.feature == Some(k))
            .map(|ev| ev.lambda)
            .unwrap_or(0.0)
    };
    let features = path
        .selected
        .iter()
        .enumerate()
        .map(|(rank, &k)| SelectedFeature {
            index: k,
            name: ds
                .feature_name(k)
                .map_or_else(|| format!("f{k}"), str::to_owned),
            rank: rank + 1,
            lambda_enter: lambda_of(k),
            alpha_final: alpha_of(k),
        })
        .collect();
    let report = SelectedReport {
        mode: cfg.mode,
        m,
        features,
        config: cfg.clone(),
    };
    std::fs::write(
        out_dir.join("selected.json"),
        serde_json::to_string_pretty(&report).expect("report serialization"),
    )?;
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), n3lars::Error> {
    let started = Instant::now();
    let cfg = args.engine.config();
    let ds = load(&args.input)?;
    guard_exact_mode(&cfg, ds.n_samples(), args.force)?;
    let ds = ds.standardize();
    let m = args.m as usize;
    let path = solver::select(&ds, m, &cfg)?;
    write_selection_outputs(&ds, &path, &cfg, m, &args.out_dir)?;
    let (lo, hi) = path
        .lambda_range()
        .map_or((0.0, 0.0), |(first, last)| (last, first));
    println!(
        "selected {} of {} requested features in {} ms; lambda range [{lo:.6}, {hi:.6}]",
        path.selected.len(),
        m,
        started.elapsed().as_millis()
    );
    println!("selection order: {:?}", path.selected);
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), n3lars::Error> {
    let ds = generate_synthetic(
        args.n as usize,
        args.d_base as usize,
        args.d_redundant as usize,
        args.noise,
        args.seed,
    )?;
    ds.write_dense_csv(&args.out, args.header)?;
    let manifest = SynthManifest {
        seed: args.seed,
        n: ds.n_samples(),
        d_base: args.d_base as usize,
        d_redundant: args.d_redundant as usize,
        d: ds.n_features(),
        noise: args.noise,
        header: args.header,
    };
    let manifest_path = args.out.with_extension("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )?;
    println!(
        "wrote {} ({} samples, {} features) and {}",
        args.out.display(),
        ds.n_samples(),
        ds.n_features(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_screen(args: ScreenArgs) -> Result<(), n3lars::Error> {
    let cfg = args.engine.config();
    let ds = load(&args.input)?.standardize();
    let m = args.m as usize;
    std::fs::create_dir_all(&args.out_dir)?;

    let mut engine = ScoringEngine::new(&ds, &cfg)?;
    engine.score_all()?;
    let ranking = mr_rank(engine.scores(), m)?;
    let mut w = BufWriter::new(File::create(args.out_dir.join("ranking.csv"))?);
    write_ranking_csv(engine.scores(), &ranking, &mut w)?;
    w.flush()?;

    match args.m_final {
        None => {
            println!("top-{m} by relevance: {ranking:?}");
        }
        Some(m_final) => {
            let m_final = m_final as usize;
            let path = select_from_source(&mut engine, m_final, cfg.solver.tol, Some(&ranking))?;
            write_selection_outputs(&ds, &path, &cfg, m_final, &args.out_dir)?;
            println!(
                "screened {} -> selected {}: {:?}",
                m,
                path.selected.len(),
                path.selected
            );
        }
    }
    Ok(())
}

fn cmd_red(args: RedArgs) -> Result<(), n3lars::Error> {
    let ds = load(&args.input)?;
    let features = match (&args.features, &args.features_file) {
        (Some(f), None) => f.clone(),
        (None, Some(path)) => read_feature_file(path)?,
        _ => {
            return Err(n3lars::Error::invalid(
                "pass exactly one of --features or --features-file",
            ))
        }
    };
    let red = metrics::redundancy_rate(&ds, &features)?;
    println!("{red}");
    Ok(())
}

fn read_feature_file(path: &Path) -> Result<Vec<usize>, n3lars::Error> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(report) = serde_json::from_str::<SelectedReportIn>(&text) {
        return Ok(report.features.iter().map(|f| f.index).collect());
    }
    serde_json::from_str::<Vec<usize>>(&text)
        .map_err(|e| n3lars::Error::invalid(format!("cannot read feature list: {e}")))
}

fn cmd_bench(args: BenchArgs) -> Result<(), n3lars::Error> {
    let (ns, ds_axis) = parse_grid(&args.grid)?;
    let mode = match args.mode {
        CliMode::Exact => n3lars::Mode::Exact,
        CliMode::Nystrom => n3lars::Mode::Nystrom,
    };
    let m = args.m as usize;
    let mut out = BufWriter::new(File::create(&args.out)?);
    writeln!(out, "n,d,p,m,mode,seed,score_ms,select_ms,total_ms")?;
    for &n in &ns {
        for &d in &ds_axis {
            let d_base = d.div_ceil(2);
            let ds = generate_synthetic(n, d_base, d - d_base, 0.1, args.seed)?.standardize();
            for &p in &args.p {
                let cfg = Config {
                    mode,
                    parallel: n3lars::ParallelConfig {
                        workers: workers_override(p),
                        ..Default::default()
                    },
                    ..Default::default()
                };
                let t0 = Instant::now();
                let mut engine = ScoringEngine::new(&ds, &cfg)?;
                engine.score_all()?;
                let score_ms = t0.elapsed().as_millis();
                let t1 = Instant::now();
                let path = select_from_source(&mut engine, m, cfg.solver.tol, None)?;
                let select_ms = t1.elapsed().as_millis();
                let total_ms = t0.elapsed().as_millis();
                writeln!(
                    out,
                    "{n},{d},{p},{m},{},{},{score_ms},{select_ms},{total_ms}",
                    mode_name(mode),
                    args.seed
                )?;
                println!(
                    "n={n} d={d} p={p} selected={:?} score_ms={score_ms} select_ms={select_ms}",
                    path.selected
                );
            }
        }
    }
    out.flush()?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn mode_name(mode: n3lars::Mode) -> &'static str {
    match mode {
        n3lars::Mode::Exact => "exact",
        n3lars::Mode::Nystrom => "nystrom",
    }
}

fn parse_grid(specs: &[String]) -> Result<(Vec<usize>, Vec<usize>), n3lars::Error> {
    let mut ns = None;
    let mut ds = None;
    for spec in specs {
        let (axis, values) = spec
            .split_once('=')
            .ok_or_else(|| n3lars::Error::invalid(format!("bad grid spec {spec:?}")))?;
        let parsed: Result<Vec<usize>, _> = values.split(',').map(|v| v.trim().parse()).collect();
        let parsed =
            parsed.map_err(|_| n3lars::Error::invalid(format!("bad grid values {values:?}")))?;
        match axis.trim() {
            "n" => ns = Some(parsed),
            "d" => ds = Some(parsed),
            other => {
                return Err(n3lars::Error::invalid(format!("unknown grid axis {other:?}")))
            }
        }
    }
    match (ns, ds) {
        (Some(n), Some(d)) if !n.is_empty() && !d.is_empty() => Ok((n, d)),
        _ => Err(n3lars::Error::invalid(
            "grid needs both axes, e.g. --grid n=100,200 d=100,200",
        )),
    }
}
