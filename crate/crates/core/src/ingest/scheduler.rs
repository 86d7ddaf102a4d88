use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;

use super::fetch::Fetcher;
use super::{due_for_refresh, run_source, IngestReport, PipelineError};
use crate::clock::Clock;
use crate::corpus::SourceDescriptor;
use crate::gateway::Gateway;
use crate::index::UnifiedIndex;

pub const DEFAULT_TICK: Duration = Duration::from_secs(3600);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceRunOutcome {
    NotDue,
    Completed(IngestReport),
    Failed(PipelineError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRun {
    pub source_id: String,
    pub outcome: SourceRunOutcome,
}

impl SourceRun {
    pub fn line(&self) -> String {
        match &self.outcome {
            SourceRunOutcome::NotDue => format!("source={} skipped (not due)", self.source_id),
            SourceRunOutcome::Completed(report) => report.summary_line(),
            SourceRunOutcome::Failed(e) => format!("source={} failed: {e}", self.source_id),
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.outcome, SourceRunOutcome::Failed(_))
    }
}

/// Runs every due source (every source with `force`) in list order.
pub fn run_due_sources(
    sources: &mut [SourceDescriptor],
    fetcher: &dyn Fetcher,
    gateway: &Gateway,
    index: &UnifiedIndex,
    now: DateTime<Utc>,
    force: bool,
) -> Vec<SourceRun> {
    sources
        .iter_mut()
        .map(|source| {
            let outcome = if !force && !due_for_refresh(source, now) {
                SourceRunOutcome::NotDue
            } else {
                match run_source(source, fetcher, gateway, index, now) {
                    Ok(report) => SourceRunOutcome::Completed(report),
                    Err(e) => SourceRunOutcome::Failed(e),
                }
            };
            SourceRun { source_id: source.source_id.clone(), outcome }
        })
        .collect()
}

/// Polling loop: wakes once per tick and ingests whatever is due.
pub struct Scheduler {
    pub sources: Arc<Mutex<Vec<SourceDescriptor>>>,
    pub fetcher: Arc<dyn Fetcher>,
    pub gateway: Gateway,
    pub index: Arc<UnifiedIndex>,
    pub clock: Arc<dyn Clock>,
    pub tick: Duration,
}

impl Scheduler {
    pub fn tick_once(&self) -> Vec<SourceRun> {
        let mut sources = self.sources.lock();
        let runs = run_due_sources(&mut sources, self.fetcher.as_ref(), &self.gateway, &self.index, self.clock.now(), false);
        for run in &runs {
            match &run.outcome {
                SourceRunOutcome::NotDue => {}
                SourceRunOutcome::Completed(_) => tracing::info!("{}", run.line()),
                SourceRunOutcome::Failed(_) => tracing::warn!("{}", run.line()),
            }
        }
        runs
    }

    /// Ticks immediately, then every `tick`, until `stop` receives a value
    /// or its sender is dropped. `after_tick` sees each tick's runs.
    pub fn run_until(&self, stop: Receiver<()>, mut after_tick: impl FnMut(&[SourceRun])) {
        loop {
            let runs = self.tick_once();
            after_tick(&runs);
            match stop.recv_timeout(self.tick) {
                Err(RecvTimeoutError::Timeout) => continue,
                Ok(()) | Err(RecvTimeoutError::Disconnected) => return,
            }
        }
    }
}
