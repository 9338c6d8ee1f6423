//! Configuration-driven runner for the homogenization studies: reads a TOML
//! run configuration, caches cell solutions, and writes CSV and JSON reports.

pub mod cache;
pub mod config;
pub mod output;
pub mod studies;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use homogbl_core::cell::CellSolutions;
use homogbl_core::corrector::{ErrorRecord, SweepReport};
use homogbl_core::spectral::SpectralReport;
use homogbl_core::Result;
use serde::Serialize;

use cache::{CacheOutcome, CellCache};
use config::{thread_cap, RunConfig, Study};
use output::{write_atomic, Table};
use studies::{CellSummary, Check, Threshold, Verdict};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_THRESHOLD: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    /// Column meanings and units of the CSV files.
    pub columns: BTreeMap<&'static str, &'static str>,
    pub cell: Option<CellSummary>,
    pub sweep: Option<SweepReport>,
    pub oscillating: Option<Vec<ErrorRecord>>,
    pub spectral: Option<SpectralReport>,
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    pub verdict: Verdict,
}

/// Wall-clock data kept out of the report so that reruns stay identical.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunInfo {
    pub seconds: BTreeMap<String, f64>,
    pub cache: BTreeMap<String, String>,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub info: RunInfo,
    pub exit_code: i32,
}

fn columns() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        (
            "eps",
            "period of the microstructure (dimensionless, domain side 1)",
        ),
        ("l2_error", "L2(Omega) norm of the error field"),
        (
            "h1_error",
            "H1(Omega) norm (L2 of value and gradient) of the error field",
        ),
        (
            "slope",
            "least-squares slope of log(error) against log(eps)",
        ),
        (
            "lambda_eps",
            "lowest Dirichlet eigenvalue of the oscillating operator",
        ),
        (
            "lambda_hom",
            "lowest Dirichlet eigenvalue of the homogenized operator",
        ),
        (
            "corrector_integral",
            "lambda_hom times the integral of the eigen boundary layer against v",
        ),
        (
            "residual",
            "lambda_eps - lambda_hom - eps * corrector_integral",
        ),
        ("a11..a22", "entries of the homogenized tensor, row-major"),
        ("extra", "free-form annotation or failure message"),
    ])
}

fn cells_for(
    cache: &CellCache,
    cfg: &RunConfig,
    n: usize,
    info: &mut RunInfo,
) -> Result<CellSolutions> {
    let coeff = cfg.coefficient.field()?;
    let t = Instant::now();
    let (cells, outcome) = cache.get_or_solve(&coeff, n, &cfg.solver.solver())?;
    let label = match outcome {
        CacheOutcome::Hit => "hit",
        CacheOutcome::Miss => "miss",
        CacheOutcome::Recomputed => "recomputed",
        CacheOutcome::Disabled => "disabled",
    };
    info.cache.insert(format!("cells-n{n}"), label.into());
    info.seconds
        .insert(format!("cells-n{n}"), t.elapsed().as_secs_f64());
    Ok(cells)
}

/// Runs the selected studies and writes every output file.
///
/// Study errors are recorded and the remaining studies still run; only a
/// failure to write outputs is returned as `Err`.
pub fn execute(cfg: &RunConfig) -> std::io::Result<RunOutcome> {
    let out = &cfg.run.output_dir;
    std::fs::create_dir_all(out)?;
    let threads = thread_cap();
    let cache = if cfg.run.cache {
        CellCache::at(cfg.cache_dir())
    } else {
        CellCache::disabled()
    };
    let mut info = RunInfo {
        threads,
        ..Default::default()
    };
    let mut report = Report {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        columns: columns(),
        cell: None,
        sweep: None,
        oscillating: None,
        spectral: None,
        checks: Vec::new(),
        errors: Vec::new(),
        verdict: Verdict::Pass,
    };
    let mut tables: Vec<(&str, Table)> = Vec::new();
    let mut sweep_table = None;
    let wants = |s: Study| cfg.run.studies.contains(&s);
    let sweep_n = cfg.grid.sweep_cell_n.unwrap_or(cfg.grid.points_per_cell);

    let mut run_study = |study: Study, report: &mut Report, info: &mut RunInfo| -> Result<()> {
        let coeff = cfg.coefficient.field()?;
        let t = Instant::now();
        match study {
            Study::Cell => {
                let cells = cells_for(&cache, cfg, cfg.grid.cell_n, info)?;
                let (summary, table, checks) = studies::cell_study(&coeff, &cells)?;
                report.cell = Some(summary);
                tables.push(("cell.csv", table));
                tables.push(("cell_checks.csv", studies::checks_table(&checks, "cell")));
                report.checks.extend(checks);
            }
            Study::Sweep => {
                let cells = cells_for(&cache, cfg, sweep_n, info)?;
                let (r, checks) = studies::sweep_study(&coeff, &cells, cfg, threads)?;
                studies::sweep_rows(sweep_table.get_or_insert_with(studies::sweep_header), &r);
                report.sweep = Some(r);
                report.checks.extend(checks);
            }
            Study::Oscillating => {
                let cells = cells_for(&cache, cfg, sweep_n, info)?;
                let t = sweep_table.get_or_insert_with(studies::sweep_header);
                let (records, checks) =
                    studies::oscillating_study(&coeff, &cells, cfg, threads, t)?;
                report.oscillating = Some(records);
                report.checks.extend(checks);
            }
            Study::Spectral => {
                let cells = cells_for(&cache, cfg, sweep_n, info)?;
                let (r, table, checks) = studies::spectral_study(&coeff, &cells, cfg, threads)?;
                report.spectral = Some(r);
                tables.push(("spectral.csv", table));
                report.checks.extend(checks);
            }
            Study::UnfoldingChecks => {
                let cells = cells_for(&cache, cfg, sweep_n, info)?;
                let (table, checks) = studies::unfolding_study(&cells, &cfg.grid.eps)?;
                tables.push(("unfolding.csv", table));
                report.checks.extend(checks);
            }
        }
        info.seconds.insert(
            format!("{study:?}").to_lowercase(),
            t.elapsed().as_secs_f64(),
        );
        Ok(())
    };

    let mut selected = cfg.run.studies.clone();
    selected.sort();
    selected.dedup();
    for study in selected {
        if let Err(e) = run_study(study, &mut report, &mut info) {
            let name = format!("{study:?}").to_lowercase();
            report.errors.push(format!("{name}: {e}"));
            report.checks.push(Check {
                study: "run",
                name: format!("{name}-study"),
                value: None,
                threshold: Threshold::None,
                verdict: Verdict::Fail,
                note: e.to_string(),
            });
        }
    }
    if wants(Study::Sweep) || wants(Study::Oscillating) {
        tables.push((
            "sweep.csv",
            sweep_table.unwrap_or_else(studies::sweep_header),
        ));
    }
    tables.push(("rates.csv", studies::rates_table(&report.checks)));

    report.verdict =
        if !report.errors.is_empty() || report.checks.iter().any(|c| c.verdict.is_failure()) {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
    let exit_code = if !report.errors.is_empty() {
        EXIT_ERROR
    } else if report.verdict == Verdict::Fail {
        EXIT_THRESHOLD
    } else {
        EXIT_PASS
    };

    for (name, table) in &tables {
        table.write(&out.join(name))?;
    }
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &info)?;
    Ok(RunOutcome {
        report,
        info,
        exit_code,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Loads a config file and runs it, mapping every outcome to an exit code.
pub fn run_config_file(path: &Path) -> i32 {
    match RunConfig::load(path) {
        Ok(cfg) => run_and_summarize(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run_and_summarize(cfg: &RunConfig) -> i32 {
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    match execute(cfg) {
        Ok(outcome) => {
            for c in &outcome.report.checks {
                let value = c
                    .value
                    .map(|v| format!("{v:.6e}"))
                    .unwrap_or_else(|| "-".into());
                let note = if c.note.is_empty() {
                    String::new()
                } else {
                    format!("  ({})", c.note)
                };
                println!(
                    "{:<8} {:<11} {:<40} {:>14} {:>12}{}",
                    c.verdict.label(),
                    c.study,
                    c.name,
                    value,
                    c.threshold.label(),
                    note
                );
            }
            for e in &outcome.report.errors {
                eprintln!("error: {e}");
            }
            println!("outputs written to {}", cfg.run.output_dir.display());
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: writing outputs: {e}");
            EXIT_ERROR
        }
    }
}
