//! Command-line front end. Exit codes: 0 all checks pass, 1 some check
//! failed, 2 usage or config error.

use crate::{run, Overrides, SuiteConfig, SuiteName};
use clap::Parser;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sbverify", version, about = "Run Sobolev-Bregman verification suites")]
pub struct Cli {
    /// TOML suite configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Suite to run, overriding the config.
    #[arg(long, value_enum, value_name = "NAME")]
    pub suite: Option<SuiteName>,
    /// Seed for Monte Carlo and random sub-intervals, overriding the config.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Print the suite names and exit.
    #[arg(long)]
    pub list_suites: bool,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides { suite: self.suite, seed: self.seed, out: self.out.clone(), jobs: self.jobs.map(|j| j as usize) }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_PASS;
        }
    };
    if cli.list_suites {
        for s in SuiteName::EVERY {
            let _ = writeln!(stdout, "{:<14}{}", s.name(), s.describe());
        }
        return EXIT_PASS;
    }
    let cfg = match &cli.config {
        Some(path) => SuiteConfig::from_path(path),
        None => Ok(SuiteConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => cli.overrides().apply(c),
        Err(e) => {
            let _ = writeln!(stderr, "sbverify: {e}");
            return EXIT_USAGE;
        }
    };
    match run(&cfg, cli.overrides().jobs) {
        Ok(summary) => {
            for r in &summary.records {
                let status = if r.report.pass { "PASS" } else { "FAIL" };
                let _ = writeln!(
                    stdout,
                    "{status} {:<13} {:<18} {:<40} lhs={:.6e} rhs={:.6e} rel_err={:.3e}",
                    r.suite.name(),
                    r.report.check,
                    r.label,
                    r.report.lhs,
                    r.report.rhs,
                    r.report.rel_err
                );
            }
            let _ = writeln!(
                stdout,
                "{} checks, {} failed; reports in {}",
                summary.records.len(),
                summary.failures(),
                summary.report_path.display()
            );
            if summary.all_pass() {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        // config problems and unwritable outputs are both usage errors
        Err(e) => {
            let _ = writeln!(stderr, "sbverify: {e}");
            EXIT_USAGE
        }
    }
}
