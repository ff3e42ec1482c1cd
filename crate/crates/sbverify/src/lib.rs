//! Batch runner for the Sobolev–Bregman verification suites.
//!
//! A run expands a [`SuiteConfig`] into checks, executes them on a bounded
//! thread pool and writes one JSON record per report, in plan order, plus
//! CSV tables for suites that produce them.

pub mod cli;
pub mod config;
pub mod suites;

pub use config::{ConfigError, SuiteConfig, SuiteName};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stable_bregman::report::VerificationReport;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use suites::{plan, Table};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write output under {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot build thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// One line of the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub suite: SuiteName,
    pub label: String,
    #[serde(flatten)]
    pub report: VerificationReport,
}

impl ReportRecord {
    pub fn without_timing(&self) -> Self {
        Self { report: self.report.without_timing(), ..self.clone() }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub suite: Option<SuiteName>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: SuiteConfig) -> SuiteConfig {
        if let Some(s) = self.suite {
            cfg.suite = s;
        }
        if let Some(seed) = self.seed {
            cfg.mc.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<ReportRecord>,
    pub report_path: PathBuf,
    pub table_paths: Vec<PathBuf>,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.report.pass)
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.report.pass).count()
    }
}

/// Runs the configured suite. `jobs` bounds the number of worker threads;
/// `None` leaves the choice to rayon.
pub fn run(cfg: &SuiteConfig, jobs: Option<usize>) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let checks = plan(cfg, &[cfg.suite]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let outputs: Vec<_> = pool.install(|| checks.par_iter().map(|c| c.run()).collect());

    let mut records = Vec::new();
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    let mut table_order = Vec::new();
    for (check, out) in checks.iter().zip(outputs) {
        records.extend(out.reports.into_iter().map(|report| ReportRecord { suite: check.suite, label: check.label.clone(), report }));
        for t in out.tables {
            match tables.get_mut(&t.name) {
                Some(existing) => existing.rows.extend(t.rows),
                None => {
                    table_order.push(t.name.clone());
                    tables.insert(t.name.clone(), t);
                }
            }
        }
    }

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|source| RunError::Output { path: dir.clone(), source })?;
    let report_path = dir.join(&cfg.output.report);
    write_records(&report_path, &records)?;
    let mut table_paths = Vec::new();
    if cfg.output.tables {
        for name in table_order {
            let path = dir.join(format!("{name}.csv"));
            write_table(&path, &tables[&name])?;
            table_paths.push(path);
        }
    }
    Ok(RunSummary { records, report_path, table_paths })
}

fn write_records(path: &Path, records: &[ReportRecord]) -> Result<(), RunError> {
    let io_err = |source| RunError::Output { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| io_err(e.into()))?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_table(path: &Path, t: &Table) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|source| RunError::Output { path: path.to_path_buf(), source })
}

/// Parses a report file back into records.
pub fn read_records(path: &Path) -> std::io::Result<Vec<ReportRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
