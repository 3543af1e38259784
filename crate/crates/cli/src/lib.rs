//! Command-line front end and library facade for the graphon LQG
//! experiments.
//!
//! Every command reads an optional TOML config, runs one experiment and
//! writes `<out>/<experiment>/` containing one CSV per result table,
//! `summary.csv` (checks), `parameters.csv`, optional SVG figures and
//! `manifest.csv` (file, size, SHA-256). Exit codes: 0 success, 1 numerical
//! failure or failed check, 2 usage, config or input error.

pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use graphon_lqg::experiments::{
    run_convergence_study, run_infinite_horizon_comparison, run_lowrank_demo, run_lqg, run_simulate, run_table1,
    ExperimentReport,
};
use graphon_lqg::table::{CsvTable, CsvValue};
use sha2::{Digest, Sha256};

pub use config::{Config, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(#[from] graphon_lqg::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) => 2,
            Self::Output(_) | Self::Numerical(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Worst-case long-range and discounted values per graphon.
    Table1,
    /// Open-loop simulation of the configured scenario.
    Simulate,
    /// Riccati solve and optimal-feedback simulation of the scenario.
    Lqg,
    /// Finite W-random systems against the graphon limit.
    Convergence,
    /// Sampled graph, its low-rank projection and the limit system.
    Lowrank,
    /// Differential against algebraic Riccati solution over a long horizon.
    Infhorizon,
}

#[derive(Debug, Parser)]
#[command(name = "graphon-lqg", version, about = "LQG control of graphon systems with Q-noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: the config's `out`, else `results`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed; a seed list of length k becomes seed, seed+1, …, seed+k−1.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid size (the reference grid for `convergence`).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Suppress console output.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Also write SVG figures.
    #[arg(long, global = true)]
    pub emit_svg: bool,
}

/// A finished command: its report and the files written.
#[derive(Debug)]
pub struct Outcome {
    pub report: ExperimentReport,
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

/// Runs one command and writes its outputs under `out`.
pub fn execute(
    command: Command,
    cfg: &Config,
    ov: &Overrides,
    out: &Path,
    emit_svg: bool,
) -> Result<Outcome, CliError> {
    let report = match command {
        Command::Table1 => run_table1(&config::table1(cfg, ov)?)?,
        Command::Simulate => run_simulate(&config::scenario(cfg, ov)?)?,
        Command::Lqg => run_lqg(&config::scenario(cfg, ov)?)?,
        Command::Convergence => run_convergence_study(&config::convergence(cfg, ov)?)?,
        Command::Lowrank => run_lowrank_demo(&config::lowrank(cfg, ov)?)?,
        Command::Infhorizon => run_infinite_horizon_comparison(&config::infhorizon(cfg, ov)?)?,
    };
    let figures = if emit_svg { figures(&report) } else { Vec::new() };
    let dir = out.join(&report.id);
    let written = write_report(&report, &dir, &figures)?;
    Ok(Outcome { report, dir, written })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes tables, summary, parameters, figures and the manifest.
pub fn write_report(
    report: &ExperimentReport,
    dir: &Path,
    figures: &[(String, String)],
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = report
        .tables
        .iter()
        .map(|(name, t)| (format!("{name}.csv"), t.to_csv()))
        .collect();
    files.push(("summary.csv".into(), report.summary_table().to_csv()));
    files.push(("parameters.csv".into(), report.parameters_table().to_csv()));
    files.extend(figures.iter().map(|(name, svg)| (format!("{name}.svg"), svg.clone())));
    let mut names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Input(format!("duplicate output file {}", w[0])));
    }
    if names.contains(&"manifest.csv") {
        return Err(CliError::Input("a table may not be named manifest".into()));
    }

    let mut manifest = CsvTable::new(["file", "bytes", "sha256"]);
    let mut written = Vec::new();
    for (name, content) in &files {
        let path = dir.join(name);
        fs::write(&path, content)?;
        manifest.push(vec![
            name.as_str().into(),
            CsvValue::Int(content.len() as i64),
            hex(&Sha256::digest(content.as_bytes())).into(),
        ]);
        written.push(path);
    }
    let path = dir.join("manifest.csv");
    fs::write(&path, manifest.to_csv())?;
    written.push(path);
    Ok(written)
}

fn column_pairs(t: &CsvTable, x: &str, y: &str) -> Vec<(f64, f64)> {
    match (t.column(x), t.column(y)) {
        (Some(xs), Some(ys)) => xs.into_iter().zip(ys).collect(),
        _ => Vec::new(),
    }
}

/// A long `t, alpha, value` table as rows of equal `t`.
fn long_to_rows(t: &CsvTable) -> Vec<Vec<f64>> {
    let (Some(ts), Some(vs)) = (t.column("t"), t.column("value")) else {
        return Vec::new();
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut last = f64::NAN;
    for (time, v) in ts.into_iter().zip(vs) {
        if time != last {
            rows.push(Vec::new());
            last = time;
        }
        rows.last_mut().expect("pushed").push(v);
    }
    rows
}

fn figures(report: &ExperimentReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    match report.id.as_str() {
        "simulate" | "lqg" => {
            if let Some((name, t)) = report.tables.iter().find(|(n, _)| n.starts_with("states_seed")) {
                out.push((
                    name.clone(),
                    svg::heatmap(&format!("{} {name} (rows: time)", report.id), &long_to_rows(t)),
                ));
            }
            if let Some(t) = report.get_table("riccati") {
                let series = vec![
                    ("kernel HS".to_string(), column_pairs(t, "t", "kernel_hs_norm")),
                    ("scalar".to_string(), column_pairs(t, "t", "scalar")),
                ];
                out.push((
                    "riccati".into(),
                    svg::line_chart("Riccati solution", "t", &series, false),
                ));
            }
        }
        "convergence" => {
            if let Some(t) = report.get_table("per_n") {
                let series = vec![(
                    "median terminal rmd".to_string(),
                    column_pairs(t, "n", "median_terminal_rmd"),
                )];
                out.push(("per_n".into(), svg::line_chart("Convergence in n", "n", &series, true)));
            }
        }
        "lowrank" => {
            if let Some(t) = report.get_table("rmd") {
                let series = ["full_vs_projected", "full_vs_limit", "projected_vs_limit"]
                    .iter()
                    .map(|c| (c.to_string(), column_pairs(t, "t", c)))
                    .collect::<Vec<_>>();
                out.push(("rmd".into(), svg::line_chart("Pairwise rmd", "t", &series, true)));
            }
        }
        "infhorizon" => {
            if let Some(t) = report.get_table("distance") {
                let series = vec![("distance".to_string(), column_pairs(t, "t", "distance"))];
                out.push((
                    "distance".into(),
                    svg::line_chart("HS distance to stationary solution", "t", &series, true),
                ));
            }
        }
        _ => {}
    }
    out
}

fn print_report(report: &ExperimentReport) {
    if let Some(t) = report.get_table("table1") {
        println!(
            "{:<10} {:>12} {:>12} {:>12}",
            "graphon", "eigenvalue", "long-range", "discounted"
        );
        for row in &t.rows {
            let cell = |k: usize| row[k].as_f64().unwrap_or(f64::NAN);
            let name = match &row[0] {
                CsvValue::Text(s) => s.clone(),
                _ => String::new(),
            };
            println!("{name:<10} {:>12.4} {:>12.4} {:>12.4}", cell(1), cell(2), cell(3));
        }
    }
    for c in &report.checks {
        let tag = match (c.passed, c.gating) {
            (true, _) => "ok  ",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        println!("[{tag}] {}: {:.6e} (threshold {:.3e})", c.name, c.value, c.threshold);
    }
}

/// Parses arguments (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = (|| {
        let cfg = match &cli.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.file.out.clone())
            .unwrap_or_else(|| PathBuf::from("results"));
        let ov = Overrides {
            seed: cli.seed,
            n: cli.n,
            dt: cli.dt,
            horizon: cli.horizon,
        };
        execute(cli.command, &cfg, &ov, &out, cli.emit_svg)
    })();
    match result {
        Ok(outcome) => {
            if !cli.quiet {
                print_report(&outcome.report);
                println!(
                    "wrote {} files to {} in {:.2?}",
                    outcome.written.len(),
                    outcome.dir.display(),
                    outcome.report.duration
                );
            }
            if outcome.report.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
