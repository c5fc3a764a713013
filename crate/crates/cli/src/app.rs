//! Command-line surface and exit-code policy.
//!
//! Exit codes: 0 success, 1 verification FAIL, 2 unreadable or malformed
//! input, 3 schema violation (or a missing/corrupt manifest for `report`),
//! 4 a worker panicked (partial artifacts), 5 a runtime error in the core.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, resolve, ConfigError, Resolved, TaskKind};
use crate::output::{write_files, write_manifest, Artifacts, Manifest};
use crate::report::render_report;
use crate::run::run_task;

pub const THREADS_ENV: &str = "OPPLAB_THREADS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_SCHEMA: u8 = 3;
pub const EXIT_PANIC: u8 = 4;
pub const EXIT_RUNTIME: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "opplab", version, about = "Simulate and verify Oppenheim-type digit expansions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand a rational with a classical digit algorithm.
    Expand(RunArgs),
    /// Sample digit chains and ratio sequences.
    Sample(RunArgs),
    /// Check one of the supporting inequalities by Monte Carlo.
    Verify(RunArgs),
    /// Simulate a weighted-sum statistic and its convergence diagnostics.
    Law(RunArgs),
    /// Render tables and plot data from an artifact directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Artifact directory.
    pub dir: Option<PathBuf>,
    #[arg(long, conflicts_with = "dir")]
    pub out: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> u8 {
    let (kind, args) = match cli.command {
        Command::Expand(a) => (TaskKind::Expand, a),
        Command::Sample(a) => (TaskKind::Sample, a),
        Command::Verify(a) => (TaskKind::Verify, a),
        Command::Law(a) => (TaskKind::Law, a),
        Command::Report(a) => return report(a),
    };
    let resolved = match load_config(&args.config).and_then(|c| resolve(c, args.seed, args.out, Some(kind))) {
        Ok(r) => r,
        Err(e) => {
            eprint!("{e}");
            if matches!(e, ConfigError::Parse(_)) {
                eprintln!();
                return EXIT_PARSE;
            }
            return EXIT_SCHEMA;
        }
    };
    let threads = match thread_count(resolved.config.threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_SCHEMA;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    pool.install(|| run_and_record(&resolved, kind, threads))
}

/// `OPPLAB_THREADS` wins over the config; 0 means all cores.
fn thread_count(config: Option<usize>) -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| format!("{THREADS_ENV}: not a thread count: {v:?}")),
        Err(_) => Ok(config.unwrap_or(0)),
    }
    .map(|n| if n == 0 { std::thread::available_parallelism().map_or(1, |p| p.get()) } else { n })
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn run_and_record(r: &Resolved, kind: TaskKind, threads: usize) -> u8 {
    let dir = r.config.output_dir().to_path_buf();
    let started = unix_ms();
    let clock = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| run_task(r)));
    let (art, status, error, code) = match outcome {
        Ok(Ok(art)) => {
            let code = if art.failed {
                EXIT_FAIL
            } else if art.partial {
                EXIT_PANIC
            } else {
                EXIT_OK
            };
            let status = match code {
                EXIT_OK => "ok",
                EXIT_FAIL => "fail",
                _ => "partial",
            };
            (art, status, None, code)
        }
        Ok(Err(e)) => (Artifacts::default(), "error", Some(e.to_string()), EXIT_RUNTIME),
        Err(p) => {
            let art = Artifacts { partial: true, ..Default::default() };
            (art, "panic", Some(panic_message(p.as_ref())), EXIT_PANIC)
        }
    };
    let files = match write_files(&dir, &art) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{}: {e}", dir.display());
            return EXIT_RUNTIME;
        }
    };
    let manifest = Manifest {
        tool: "opplab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: kind.to_string(),
        config: serde_json::to_value(&r.config).expect("serializable config"),
        seed: r.config.seed(),
        stream_rule: "ChaCha8(master_seed) stream = stream_id; one stream per replication".into(),
        threads,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        wall_clock_secs: clock.elapsed().as_secs_f64(),
        files,
        status: status.into(),
        partial: art.partial,
        verdict: art.verdict.clone(),
        error: error.clone(),
    };
    if let Err(e) = write_manifest(&dir, &manifest) {
        eprintln!("{}: {e}", dir.display());
        return EXIT_RUNTIME;
    }
    if let Some(e) = error {
        eprintln!("{status}: {e}");
    }
    if let Some(v) = &art.verdict {
        println!("verdict: {v}");
    }
    println!("artifacts written to {}", dir.display());
    code
}

fn report(a: ReportArgs) -> u8 {
    let Some(dir) = a.dir.or(a.out) else {
        eprintln!("report: an artifact directory is required");
        return EXIT_PARSE;
    };
    match render_report(Path::new(&dir)) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("report: {e}");
            EXIT_SCHEMA
        }
    }
}
