//! `epr`: generate synthetic datasets, run the matcher, tune thresholds and
//! evaluate sparse similarity matrices.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or validation error,
//! 4 internal error.

mod manifest;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use epr_core::dataset::parse_route;
use epr_core::{
    autotune, compare_runs, evaluate, generate_synthetic, intra_db_matrix, load_descriptors,
    load_ground_truth, load_similarity_csv, run, save_descriptors, save_ground_truth,
    save_similarity_csv, EprConfig, EprError, EvalReport, MatchingMode, Role, RouteEntry, Strategy,
    SyntheticSpec, TradeoffRow, P_DB, P_RELOC,
};

use crate::manifest::{RunManifest, Timing};

#[derive(Parser, Debug)]
#[command(
    name = "epr",
    version,
    about = "Efficient sequence-based place recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trajectory dataset.
    ///
    /// Writes <prefix>_db.eprd, <prefix>_q.eprd and <prefix>_gt.csv.
    Synth(SynthArgs),
    /// Run the matcher and write the sparse similarity CSV plus a JSON
    /// manifest.
    Run(RunArgs),
    /// Fit the robust threshold model on the intra-database similarities.
    Autotune(AutotuneArgs),
    /// Evaluate a sparse similarity CSV against ground truth.
    ///
    /// Writes one report row: method,mode,auc,density_pct,gt_min_pct,gt_max_pct
    Eval(EvalArgs),
    /// Build the trade-off table from evaluation reports.
    ///
    /// Output columns: method,mode,auc,density_pct,rel_auc_vs_full
    Compare(CompareArgs),
}

/// Comma-separated route: place indices, `X` for exploration, `a..b` ranges.
#[derive(Clone, Debug)]
struct Route(Vec<RouteEntry>);

fn parse_query_route(s: &str) -> Result<Route, String> {
    parse_route(s).map(Route)
}

/// A route without exploration frames.
#[derive(Clone, Debug)]
struct DbRoute(Vec<usize>);

fn parse_db_route(s: &str) -> Result<DbRoute, String> {
    parse_route(s)?
        .into_iter()
        .map(|e| match e {
            RouteEntry::Place(p) => Ok(p),
            RouteEntry::Explore => Err(format!(
                "invalid database route token {:?}: exploration is only allowed in queries",
                e.to_string()
            )),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(DbRoute)
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s
        .parse()
        .map_err(|_| format!("invalid probability {s:?}"))?;
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(format!("probability {p} must lie strictly between 0 and 1"))
    }
}

fn parse_noise(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("invalid noise {s:?}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("noise {v} must be finite and >= 0"))
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of distinct places.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    places: u64,
    /// Descriptor dimensionality.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Database route, e.g. `0,1,2,0,1` or `0..50,0..50`.
    #[arg(long, value_parser = parse_db_route)]
    db_route: DbRoute,
    /// Query route; `X` marks a place absent from the database.
    #[arg(long, value_parser = parse_query_route)]
    query_route: Route,
    /// Per-component standard deviation of the appearance noise.
    #[arg(long, default_value_t = 0.0, value_parser = parse_noise)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// Periodic relocalization.
    Pr,
    /// Event-based relocalization.
    Er,
    /// Full comparison of every query.
    Full,
    /// Periodic relocalization without intra-database expansion.
    PrNoSdb,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Best matches carried over per timestep.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
    /// Sequence successors added per candidate.
    #[arg(long, default_value_t = 5)]
    v: u64,
    /// Relocalization period (pr, pr-no-sdb).
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    t_reloc: u64,
    #[arg(long, default_value_t = P_DB, value_parser = parse_probability)]
    p_db: f64,
    #[arg(long, default_value_t = P_RELOC, value_parser = parse_probability)]
    p_reloc: f64,
    /// Skip feature standardization before computing intra-database similarities.
    #[arg(long)]
    no_standardize: bool,
    /// Sparse similarity CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Manifest path; defaults to the output path with extension `manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AutotuneArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long, default_value_t = P_DB, value_parser = parse_probability)]
    p: f64,
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    sim: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    db_count: usize,
    #[arg(long)]
    q_count: usize,
    #[arg(long, value_parser = parse_mode)]
    mode: MatchingMode,
    #[arg(long)]
    out: PathBuf,
    /// Method label stored in the report row.
    #[arg(long, default_value = "run")]
    method: String,
}

fn parse_mode(s: &str) -> Result<MatchingMode, String> {
    s.parse()
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Report CSV of the full-comparison run.
    #[arg(long)]
    baseline: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Invalid arguments detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if cause.is::<EprError>() || cause.is::<std::io::Error>() {
            return 3;
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
        Command::Autotune(args) => cmd_autotune(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_places: args.places as usize,
        dim: args.dim as usize,
        db_route: args.db_route.0,
        query_route: args.query_route.0,
        condition_noise_sigma: args.noise,
        rng_seed: args.seed,
    };
    if let Err(e) = spec.validate() {
        return Err(UsageError(e.to_string()).into());
    }
    let (db, query, gt) = generate_synthetic(&spec)?;
    let db_path = with_suffix(&args.out_prefix, "_db.eprd");
    let q_path = with_suffix(&args.out_prefix, "_q.eprd");
    let gt_path = with_suffix(&args.out_prefix, "_gt.csv");
    save_descriptors(&db, &db_path).with_context(|| format!("writing {}", db_path.display()))?;
    save_descriptors(&query, &q_path).with_context(|| format!("writing {}", q_path.display()))?;
    save_ground_truth(&gt, &gt_path).with_context(|| format!("writing {}", gt_path.display()))?;
    println!(
        "db={} ({} x {}) query={} ({} x {}) gt={} (hard={}, soft={})",
        db_path.display(),
        db.count(),
        db.dim(),
        q_path.display(),
        query.count(),
        query.dim(),
        gt_path.display(),
        gt.hard().len(),
        gt.soft().len()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let total_start = Instant::now();
    let t_reloc = args.t_reloc as usize;
    let strategy = match args.strategy {
        StrategyArg::Pr => Strategy::Periodic { t_reloc },
        StrategyArg::Er => Strategy::EventBased,
        StrategyArg::Full => Strategy::FullBaseline,
        StrategyArg::PrNoSdb => Strategy::NoSdb { t_reloc },
    };
    let config = EprConfig {
        k: args.k as usize,
        v: args.v as usize,
        strategy,
        p_db: args.p_db,
        p_reloc: args.p_reloc,
        standardize_db: !args.no_standardize,
    };

    let init_start = Instant::now();
    let db = load_descriptors(&args.db, Role::Database)
        .with_context(|| format!("loading {}", args.db.display()))?;
    let query = load_descriptors(&args.query, Role::Query)
        .with_context(|| format!("loading {}", args.query.display()))?;
    let init_seconds = init_start.elapsed().as_secs_f64();

    let (matrix, report) = run(&db, &query, config)?;
    save_similarity_csv(&matrix, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| args.out.with_extension("manifest.json"));
    let manifest = RunManifest {
        manifest_version: 1,
        strategy: strategy.name().to_string(),
        config,
        db_path: args.db.display().to_string(),
        query_path: args.query.display().to_string(),
        similarity_path: args.out.display().to_string(),
        manifest_path: manifest_path.display().to_string(),
        db_count: db.count(),
        q_count: query.count(),
        timing: Timing {
            init_seconds,
            sdb_seconds: report.setup_seconds,
            query_loop_seconds: report.query_loop_seconds,
            total_seconds: total_start.elapsed().as_secs_f64(),
        },
        reloc_events: report.reloc_events.clone(),
        evaluated_pairs: report.evaluated_pairs,
        density: report.density_pct,
        theta_db: report.theta_db,
        theta_reloc: report.theta_reloc,
    };
    let json = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    fs::write(&manifest_path, json + "\n")
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    println!(
        "strategy={} evaluated_pairs={} density={:.3}% relocalizations={} total={:.3}s",
        strategy.name(),
        report.evaluated_pairs,
        report.density_pct,
        report.reloc_events.len(),
        manifest.timing.total_seconds
    );
    Ok(())
}

fn cmd_autotune(args: AutotuneArgs) -> Result<()> {
    let db = load_descriptors(&args.db, Role::Database)
        .with_context(|| format!("loading {}", args.db.display()))?;
    let sdb = intra_db_matrix(&db, !args.no_standardize)?;
    let sample = sdb.upper_triangle();
    if sample.is_empty() {
        return Err(EprError::Domain("need at least 2 database descriptors".into()).into());
    }
    let model = autotune(&sample, args.p)?;
    println!(
        "mu={:.9} sigma={:.9} theta={:.9} p={} pairs={}",
        model.mu,
        model.sigma,
        model.theta,
        model.probability,
        sample.len()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let s = load_similarity_csv(&args.sim, args.db_count, args.q_count)
        .with_context(|| format!("loading {}", args.sim.display()))?;
    let gt = load_ground_truth(&args.gt, args.db_count, args.q_count)
        .with_context(|| format!("loading {}", args.gt.display()))?;
    let report = evaluate(&s, &gt, args.mode)?;
    let mut w = BufWriter::new(
        fs::File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?,
    );
    writeln!(w, "{}", EvalReport::CSV_HEADER)?;
    writeln!(w, "{}", report.to_csv_row(&args.method))?;
    w.flush()?;
    println!(
        "mode={} auc={:.3} density={:.2}%",
        report.mode, report.auc, report.evaluated_pair_percentage
    );
    Ok(())
}

fn read_reports(path: &Path) -> Result<Vec<(String, EvalReport)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != EvalReport::CSV_HEADER)
        .map(|l| EvalReport::from_csv_row(l).with_context(|| format!("in {}", path.display())))
        .collect()
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let baseline = read_reports(&args.baseline)?
        .into_iter()
        .next()
        .ok_or_else(|| EprError::Format(format!("{} holds no report", args.baseline.display())))?;
    let mut reports = Vec::new();
    for path in &args.reports {
        reports.extend(read_reports(path)?);
    }
    let rows = compare_runs(&reports, &baseline.1)?;
    let mut w = BufWriter::new(
        fs::File::create(&args.out).with_context(|| format!("writing {}", args.out.display()))?,
    );
    writeln!(w, "{}", TradeoffRow::CSV_HEADER)?;
    for row in &rows {
        writeln!(w, "{}", row.to_csv_row())?;
    }
    w.flush()?;
    println!(
        "rows={} baseline={} auc={:.3}",
        rows.len(),
        baseline.0,
        baseline.1.auc
    );
    Ok(())
}
