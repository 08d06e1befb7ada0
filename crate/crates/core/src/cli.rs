//! Command-line front end: `generate`, `solve` and `sweep`.
//!
//! Exit codes: 0 on success (a disagreement outcome included), 2 for usage
//! errors, 3 for file errors, 4 when `--strict` is set and a solver did not
//! converge, 1 for anything else.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::metrics::{self, ReportMeta, SolverChoice, SolverSettings, SweepReport};
use crate::model::Scenario;
use crate::scenario::{self, GeneratorParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_UNCONVERGED: i32 = 4;

/// Environment variable holding the log filter, e.g. `info` or `cooprec=debug`.
pub const LOG_ENV: &str = "COOPREC_LOG";

#[derive(Debug, Parser)]
#[command(name = "cooprec", version, about = "Cooperative recommendations between a content provider and a CDN")]
pub struct Cli {
    /// Worker threads for sweeps (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Exit with code 4 when a solver stops before converging.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a scenario JSON file.
    #[command(after_help = "Examples:\n  \
        cooprec generate --preset toy --out toy.json\n  \
        cooprec generate --preset scenario1 --seed 7 --out s1.json\n  \
        cooprec generate --preset scenario1 --ratings ratings.csv --out s1.json\n\n\
        The same preset and seed always give the same file. Without --ratings the\n\
        relevances are synthetic and a warning is logged for the data presets.")]
    Generate(GenerateArgs),
    /// Solve one scenario and write the outcome, metrics and trace.
    #[command(after_help = "Examples:\n  \
        cooprec solve --scenario toy.json --solver ccr --out out/ccr\n  \
        cooprec solve --scenario toy.json --solver dcr --rho 0.2 --out out/dcr\n  \
        cooprec solve --scenario s2.json --solver ccrcache --config settings.json --out out/cache\n\n\
        Writes outcome.json and metrics.csv, plus trace.csv for dcr and ccrcache.\n\
        A disagreement outcome is a normal result and exits with 0.")]
    Solve(SolveArgs),
    /// Solve one scenario under a grid of discounts.
    #[command(after_help = "Examples:\n  \
        cooprec sweep --scenario s1.json --solver ccr --rho-grid 0.05:0.45:0.05 --out out/sweep\n  \
        cooprec sweep --scenario s2.json --solver ccrcache --rho-grid 0.1:0.3:0.1 --out out/cache\n  \
        cooprec sweep --scenario s1.json --solver ccr --rho-grid 0.1:0.5:0.1 --cache-frac-grid 0.01:0.05:0.02 --out out/grid\n\n\
        Writes sweep.json and sweep.csv, or one pair per cache fraction with\n\
        --cache-frac-grid. Grids are start:end:step with the end included.")]
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Scenario1,
    Scenario2,
    Toy,
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ratings file with `user_id,content_id,rating` rows.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// ccr, dcr, ccrcache or profitmax.
    #[arg(long)]
    pub solver: SolverChoice,
    /// Overrides the scenario's discount.
    #[arg(long)]
    pub rho: Option<f64>,
    /// JSON solver settings; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub solver: SolverChoice,
    /// Discount grid `start:end:step`.
    #[arg(long)]
    pub rho_grid: String,
    /// Cache sizes as fractions of the catalog, `start:end:step`.
    #[arg(long)]
    pub cache_frac_grid: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match execute(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_UNCONVERGED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    // A second call in the same process (tests) is harmless.
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Io { .. } | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::InvalidScenario(_) => EXIT_IO,
        Error::InvalidConfig(_) | Error::Contract(_) | Error::Dimension(_) | Error::TooLarge { .. } => EXIT_USAGE,
        Error::Barrier { .. } | Error::Infeasible(_) => EXIT_FAILURE,
    }
}

/// Returns `Ok(false)` when `--strict` is set and some solve did not converge.
fn execute(cli: &Cli) -> Result<bool> {
    let pool = match cli.jobs {
        Some(0) => return Err(Error::InvalidConfig("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => generate(a).map(|()| true),
        Command::Solve(a) => solve(a).map(|ok| ok || !cli.strict),
        Command::Sweep(a) => sweep(a).map(|ok| ok || !cli.strict),
    })
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let params = match args.preset {
        Preset::Scenario1 => Some(GeneratorParams::scenario_one()),
        Preset::Scenario2 => Some(GeneratorParams::scenario_two()),
        Preset::Toy => None,
    };
    let scenario = match params {
        None => {
            if args.ratings.is_some() {
                log::warn!("the toy preset has fixed relevances; --ratings is ignored");
            }
            scenario::toy_scenario()
        }
        Some(params) => {
            let relevance = match &args.ratings {
                Some(path) => {
                    let loaded = scenario::load_relevance_csv(path, params.users, params.contents)?;
                    if loaded.duplicates > 0 {
                        log::warn!("{} repeated ratings, kept the last of each", loaded.duplicates);
                    }
                    log::info!("{} cells imputed", loaded.imputed);
                    Some(loaded.relevance)
                }
                None => {
                    log::warn!("no ratings file given; using synthetic relevances");
                    None
                }
            };
            scenario::generate(&params, args.seed, relevance)?
        }
    };
    scenario::save_scenario(&scenario, &args.out)?;
    println!("{}", summary(&scenario));
    Ok(())
}

/// `users=.. contents=.. caches=.. lambda=.. capacity=[..]`, capacities as
/// fractions of the catalog size.
pub fn summary(s: &Scenario) -> String {
    let total = s.catalog.total_size();
    let fractions: Vec<String> = s
        .topology
        .capacities
        .iter()
        .map(|c| format!("{:.4}", c / total))
        .collect();
    format!(
        "users={} contents={} caches={} lambda={} rho={} capacity=[{}]",
        s.user_count(),
        s.content_count(),
        s.cache_count(),
        s.pricing.lambda,
        s.pricing.rho,
        fractions.join(",")
    )
}

fn load_settings(path: Option<&Path>) -> Result<SolverSettings> {
    let settings: SolverSettings = match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => SolverSettings::default(),
    };
    settings.validate()?;
    Ok(settings)
}

fn solve(args: &SolveArgs) -> Result<bool> {
    let settings = load_settings(args.config.as_deref())?;
    let mut scenario = scenario::load_scenario(&args.scenario)?;
    if let Some(rho) = args.rho {
        scenario = scenario.with_rho(rho)?;
    }
    let report = metrics::run_solver(&scenario, args.solver, &settings)?;
    create_dir(&args.out)?;

    write_file(&args.out.join("outcome.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w).map_err(|e| Error::io("outcome.json", e))
    })?;
    write_file(&args.out.join("metrics.csv"), |w| {
        metrics::write_metrics_csv(std::slice::from_ref(&report.metrics), &report.meta, w)
    })?;
    if let Some(trace) = &report.trace {
        write_file(&args.out.join("trace.csv"), |w| {
            write_provenance(w, &report.meta)?;
            trace.write_csv(w)
        })?;
    }

    let m = &report.metrics;
    println!(
        "{} rho={} status={} converged={} iterations={} cp_gain={:.4}% cdn_gain={:.4}% hit_rate={:.4}",
        m.solver, m.rho, m.status, m.converged, m.iterations, m.cp_gain_pct, m.cdn_gain_pct, m.hit_rate
    );
    Ok(m.converged && m.stalled != Some(true))
}

fn sweep(args: &SweepArgs) -> Result<bool> {
    let settings = load_settings(args.config.as_deref())?;
    let template = scenario::load_scenario(&args.scenario)?;
    let rhos = parse_grid(&args.rho_grid)?;
    create_dir(&args.out)?;

    let mut all_converged = true;
    let mut emit = |scenario: &Scenario, stem: String| -> Result<()> {
        let report = metrics::sweep_discount(scenario, &rhos, args.solver, &settings)?;
        all_converged &= report.rows.iter().all(|r| r.converged && r.stalled != Some(true));
        write_sweep(&args.out, &stem, &report)?;
        let t = &report.trends;
        println!(
            "{stem}: rows={} cp_nondecreasing={} cdn_nonincreasing={} gains_positive={} hit_rate_ok={} first_disagreement={}",
            report.rows.len(),
            t.cp_gain_nondecreasing,
            t.cdn_gain_nonincreasing,
            t.gains_positive,
            t.hit_rate_at_least_baseline,
            t.first_disagreement_rho.map_or("none".to_string(), |r| r.to_string())
        );
        Ok(())
    };
    match &args.cache_frac_grid {
        None => emit(&template, "sweep".into())?,
        Some(g) => {
            for fraction in parse_grid(g)? {
                let resized = scenario::with_cache_fraction(&template, fraction)?;
                emit(&resized, format!("sweep-cache{fraction}"))?;
            }
        }
    }
    Ok(all_converged)
}

fn write_sweep(dir: &Path, stem: &str, report: &SweepReport) -> Result<()> {
    write_file(&dir.join(format!("{stem}.json")), |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        writeln!(w).map_err(|e| Error::io(stem, e))
    })?;
    write_file(&dir.join(format!("{stem}.csv")), |w| report.write_csv(w))
}

/// `start:end:step`, end included.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::InvalidConfig(format!("grid `{text}` is not start:end:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    let values = metrics::grid(v[0], v[1], v[2])?;
    if values.is_empty() {
        return Err(Error::InvalidConfig(format!("grid `{text}` is empty")));
    }
    Ok(values)
}

/// Trace files keep their fixed columns; provenance goes in leading `#` lines.
fn write_provenance(w: &mut dyn Write, meta: &ReportMeta) -> Result<()> {
    let io = |e| Error::io("trace.csv", e);
    writeln!(w, "# scenario_hash={}", meta.scenario_hash).map_err(io)?;
    writeln!(w, "# config_hash={}", meta.config_hash).map_err(io)?;
    writeln!(w, "# seed={}", meta.seed).map_err(io)?;
    writeln!(w, "# version={}", meta.version).map_err(io)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        assert_eq!(parse_grid("0.05:0.5:0.05").unwrap().len(), 10);
        assert_eq!(parse_grid("0.1:0.1:0.05").unwrap(), vec![0.1]);
        for bad in ["", "0.1:0.2", "a:b:c", "0.5:0.1:0.1", "0.1:0.2:0"] {
            assert!(matches!(parse_grid(bad), Err(Error::InvalidConfig(_))), "{bad}");
        }
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["cooprec", "solve", "--scenario", "x.json", "--solver", "simplex", "--out", "o"]), EXIT_USAGE);
        assert_eq!(run(["cooprec", "generate", "--preset", "nope", "--out", "o"]), EXIT_USAGE);
        assert_eq!(run(["cooprec"]), EXIT_USAGE);
    }

    #[test]
    fn missing_scenario_file_exits_with_three() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("absent.json");
        let code = run([
            "cooprec".into(),
            "solve".into(),
            "--scenario".into(),
            missing.into_os_string(),
            "--solver".into(),
            "ccr".into(),
            "--out".into(),
            dir.path().join("o").into_os_string(),
        ]);
        assert_eq!(code, EXIT_IO);
    }

    #[test]
    fn toy_summary() {
        let line = summary(&scenario::toy_scenario());
        assert!(line.starts_with("users=2 contents=4 caches=1 lambda=0.5 rho=0.3"), "{line}");
        assert!(line.ends_with("capacity=[0.5000]"), "{line}");
    }
}
