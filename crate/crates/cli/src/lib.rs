//! `grantforge` operator commands. Each command loads the snapshot named in
//! the config, does its work and (for `ingest`) saves it back.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 pipeline error.

use std::future::Future;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use parking_lot::Mutex;
use serde::Serialize;

use grantforge_core::config::{AppConfig, ConfigError, CONFIG_ENV};
use grantforge_core::ingest::{run_due_sources, Scheduler, SourceRunOutcome};
use grantforge_core::{SearchFilters, UnifiedIndex};
use grantforge_service::{AppState, ServiceSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "grantforge", version, about = "Federated funding-opportunity discovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArg {
    /// JSON config file. Defaults to $GRANTFORGE_CONFIG.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest every due source (all sources with --force).
    Ingest {
        #[command(flatten)]
        config: ConfigArg,
        /// Only this source id.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        force: bool,
    },
    /// Search the index snapshot.
    Query {
        #[command(flatten)]
        config: ConfigArg,
        query: String,
        /// Keep opportunities whose deadline is on or after this date.
        #[arg(long, value_name = "DATE")]
        min_deadline: Option<NaiveDate>,
        #[arg(long, default_value_t = 10)]
        limit: usize,
        /// One JSON object per line.
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Print index statistics.
    Stats {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        json: bool,
    },
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl std::fmt::Display) -> Self {
        Self { code: EXIT_CONFIG, message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

type CmdResult = Result<(), Failure>;

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Ingest { config, source, force } => ingest(&config, source.as_deref(), force, out, err),
        Command::Query { config, query, min_deadline, limit, json } => {
            query_cmd(&config, &query, min_deadline, limit, json, out, err)
        }
        Command::Serve { config, port } => serve_cmd(&config, port, out, err),
        Command::Stats { config, json } => stats(&config, json, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_config(arg: &ConfigArg) -> Result<AppConfig, Failure> {
    Ok(AppConfig::load(arg.config.as_deref())?)
}

fn write_out(out: &mut dyn Write, line: impl std::fmt::Display) -> CmdResult {
    writeln!(out, "{line}").map_err(Failure::config)
}

/// Loads the snapshot when present; `required` turns absence into an error.
fn open_index(cfg: &AppConfig, required: bool, err: &mut dyn Write) -> Result<UnifiedIndex, Failure> {
    let index = UnifiedIndex::new();
    if !UnifiedIndex::snapshot_exists(&cfg.snapshot) {
        if required {
            return Err(Failure::config(format!("no snapshot at {}; run `grantforge ingest` first", cfg.snapshot.display())));
        }
        return Ok(index);
    }
    let report = index.load_snapshot(&cfg.snapshot).map_err(Failure::config)?;
    for w in &report.warnings {
        let _ = writeln!(err, "warning: snapshot {w}");
    }
    Ok(index)
}

fn ingest(arg: &ConfigArg, only: Option<&str>, force: bool, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = load_config(arg)?;
    let clock = cfg.clock();
    let mut sources = cfg.load_sources()?;
    if let Some(id) = only {
        if !sources.iter().any(|s| s.source_id == id) {
            return Err(Failure::config(format!("unknown source {id}")));
        }
    }
    let gateway = cfg.build_gateway()?;
    let fetcher = cfg.build_fetcher(clock.clone())?;
    let index = open_index(&cfg, false, err)?;

    let now = clock.now();
    let mut runs = Vec::new();
    for source in sources.iter_mut() {
        if only.is_some_and(|id| id != source.source_id) {
            continue;
        }
        runs.extend(run_due_sources(std::slice::from_mut(source), fetcher.as_ref(), &gateway, &index, now, force));
    }
    for run in &runs {
        write_out(out, run.line())?;
        if let SourceRunOutcome::Completed(report) = &run.outcome {
            for w in &report.warnings {
                let _ = writeln!(err, "warning: {}: {w}", report.source_id);
            }
        }
    }
    index.save_snapshot(&cfg.snapshot).map_err(Failure::config)?;
    cfg.save_sources(&sources)?;
    let failed: Vec<&str> = runs.iter().filter(|r| r.failed()).map(|r| r.source_id.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_PIPELINE, message: format!("ingest failed for {}", failed.join(", ")) })
    }
}

#[derive(Serialize)]
struct QueryRow<'a> {
    rank: usize,
    id: &'a str,
    score: f64,
    title: &'a str,
    agency: &'a str,
    end_date: Option<NaiveDate>,
    url: &'a str,
}

fn query_cmd(
    arg: &ConfigArg,
    query: &str,
    min_deadline: Option<NaiveDate>,
    limit: usize,
    json: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let cfg = load_config(arg)?;
    let index = open_index(&cfg, true, err)?;
    let mut filters = SearchFilters::none();
    if let Some(d) = min_deadline {
        filters.min_end_date = Some(d);
        filters.include_undated = false;
    }
    let hits = index.search(query, &filters, limit.max(1));
    if hits.is_empty() {
        if json {
            let _ = writeln!(err, "no results");
            return Ok(());
        }
        return write_out(out, "no results");
    }
    for (i, hit) in hits.iter().enumerate() {
        let o = &hit.opportunity;
        if json {
            let row = QueryRow {
                rank: i + 1,
                id: &hit.id,
                score: hit.score,
                title: &o.title,
                agency: &o.agency,
                end_date: o.end_date,
                url: &o.url,
            };
            write_out(out, serde_json::to_string(&row).expect("row serializes"))?;
        } else {
            let deadline = o.end_date.map_or_else(|| "-".to_string(), |d| d.to_string());
            write_out(out, format!("{:>2}  {:>8.4}  {deadline:<10}  {:<10}  {}  {}", i + 1, hit.score, o.agency, o.title, o.url))?;
        }
    }
    Ok(())
}

fn stats(arg: &ConfigArg, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = load_config(arg)?;
    let index = open_index(&cfg, true, err)?;
    let stats = index.stats();
    if json {
        return write_out(out, serde_json::to_string(&stats).expect("stats serialize"));
    }
    write_out(out, format!("doc_count: {}", stats.doc_count))?;
    let last = stats.last_modified.map_or_else(|| "never".to_string(), |t| t.to_rfc3339());
    write_out(out, format!("last_modified: {last}"))?;
    for (agency, n) in &stats.per_agency_counts {
        write_out(out, format!("{agency:<12} {n}"))?;
    }
    Ok(())
}

fn serve_cmd(arg: &ConfigArg, port: Option<u16>, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut cfg = load_config(arg)?;
    if let Some(p) = port {
        cfg.port = p;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(Failure::config)?;
    runtime.block_on(serve_until(cfg, out, err, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
}

/// Runs the service until `shutdown` resolves, then saves the snapshot if
/// the index changed while serving.
pub async fn serve_until(
    cfg: AppConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> CmdResult {
    let clock = cfg.clock();
    let index = Arc::new(open_index(&cfg, false, err)?);
    let loaded_generation = index.generation();
    let gateway = cfg.build_gateway()?;
    let web = cfg.build_web_search()?;

    let addr = format!("{}:{}", cfg.bind, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| Failure::config(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(Failure::config)?;
    write_out(out, format!("listening on http://{local}"))?;
    let _ = out.flush();

    let scheduler = if cfg.scheduler.enabled {
        let sources = Arc::new(Mutex::new(cfg.load_sources()?));
        let sched = Scheduler {
            sources: sources.clone(),
            fetcher: cfg.build_fetcher(clock.clone())?,
            gateway: gateway.clone(),
            index: index.clone(),
            clock: clock.clone(),
            tick: Duration::from_secs(cfg.scheduler.tick_secs.max(1)),
        };
        let (stop, stopped) = std::sync::mpsc::channel::<()>();
        let save_cfg = cfg.clone();
        let handle = std::thread::spawn(move || {
            let index = sched.index.clone();
            let sources = sched.sources.clone();
            sched.run_until(stopped, |runs| {
                if !runs.iter().any(|r| matches!(r.outcome, SourceRunOutcome::Completed(_))) {
                    return;
                }
                if let Err(e) = index.save_snapshot(&save_cfg.snapshot) {
                    tracing::warn!("saving snapshot failed: {e}");
                }
                if let Err(e) = save_cfg.save_sources(&sources.lock()) {
                    tracing::warn!("saving refresh state failed: {e}");
                }
            });
        });
        Some((stop, handle, sources))
    } else {
        None
    };

    let settings = ServiceSettings { session_ttl: Duration::from_secs(cfg.session_ttl_secs.max(1)), result_limit: cfg.result_limit };
    let state = AppState::new(index.clone(), gateway, web, clock, settings);
    let served = grantforge_service::serve(listener, state, shutdown).await;

    if let Some((stop, handle, sources)) = scheduler {
        let _ = stop.send(());
        let _ = handle.join();
        cfg.save_sources(&sources.lock())?;
    }
    if index.generation() != loaded_generation {
        let n = index.save_snapshot(&cfg.snapshot).map_err(Failure::config)?;
        write_out(out, format!("snapshot saved ({n} records)"))?;
    }
    served.map_err(Failure::config)
}
