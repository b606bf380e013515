//! `oscinv`: run forward, asymptotic and inverse experiments from a JSON
//! configuration.
//!
//! Exit codes: 0 when every criterion passes, 1 when one fails, 2 for an
//! invalid configuration or inadmissible data.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use oscinv_core::harness::{
    emit_report, run_asymptotics, run_forward, run_forward_study, run_inversion, run_order_study, run_roundtrip, write_field_csv,
    write_source_csv, DataFile, ExperimentConfig, ReportFormat, StudyReport,
};
use oscinv_core::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "oscinv", version, about = "Wave equations with rapidly oscillating sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the JSON report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated frequencies replacing `omegas` from the configuration.
    #[arg(long, value_delimiter = ',')]
    omega_list: Option<Vec<f64>>,
}

#[derive(Args)]
struct Inverse {
    #[command(flatten)]
    common: Common,
    /// Observation data (JSON). Without it the data are synthesized from the
    /// configured source and the recovery is checked against it.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem at each configured frequency.
    Forward(Common),
    /// Build the two-scale expansion and its residuals.
    Asymptotics(Common),
    /// Recover r(t, τ) from a point trace.
    Invert1(Inverse),
    /// Recover a time-invariant f(x) from the final-time field.
    Invert2(Inverse),
    /// Recover f(x) and the fast part of r from combined data.
    Invert3(Inverse),
    /// Order study over the frequency list.
    Study(Common),
    /// Run the invariant suite.
    Selftest {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Input(anyhow::Error),
    Run(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let input = match e.downcast_ref::<oscinv_core::Error>() {
            Some(core) => core.is_invalid_input(),
            None => false,
        };
        if input {
            Failure::Input(e)
        } else {
            Failure::Run(e)
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(list) = &common.omega_list {
        cfg.omegas = list.clone();
        cfg.omega = None;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_report(report: &StudyReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            emit_report(report, ReportFormat::Csv, &mut create(dir, "report.csv")?)?;
            emit_report(report, ReportFormat::Json, &mut create(dir, "report.json")?)?;
        }
        None => emit_report(report, ReportFormat::Json, &mut io::stdout().lock())?,
    }
    for c in &report.criteria {
        eprintln!("{} {} value={:e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value);
    }
    eprintln!("runtime {:.3}s", report.runtime.as_secs_f64());
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let report = match cli.command {
        Command::Forward(common) => {
            let cfg = load(&common)?;
            let report = run_forward_study(&cfg)?;
            if let Some(dir) = &common.out {
                let (basis, u) = run_forward(&cfg)?;
                let points = basis.sample_points(cfg.spatial_samples);
                write_field_csv(&u, &basis, &points, &mut create(dir, "field.csv")?)?;
            }
            write_report(&report, common.out.as_deref())?;
            report
        }
        Command::Asymptotics(common) => {
            let cfg = load(&common)?;
            let (report, coefficients) = run_asymptotics(&cfg)?;
            if let Some(dir) = &common.out {
                let mut w = create(dir, "coefficients.json")?;
                serde_json::to_writer_pretty(&mut w, &coefficients)?;
                w.write_all(b"\n")?;
            }
            write_report(&report, common.out.as_deref())?;
            report
        }
        Command::Invert1(inv) => invert(inv, 1)?,
        Command::Invert2(inv) => invert(inv, 2)?,
        Command::Invert3(inv) => invert(inv, 3)?,
        Command::Study(common) => {
            let report = run_order_study(&load(&common)?)?;
            write_report(&report, common.out.as_deref())?;
            report
        }
        Command::Selftest { out, seed } => {
            let report = run_selftest(seed)?;
            write_report(&report, out.as_deref())?;
            report
        }
    };
    Ok(report.passed())
}

fn invert(inv: Inverse, which: u8) -> Result<StudyReport, Failure> {
    let cfg = load(&inv.common)?;
    let out = inv.common.out.as_deref();
    let Some(path) = &inv.data else {
        let report = run_roundtrip(&cfg, which)?;
        write_report(&report, out)?;
        return Ok(report);
    };
    let data = DataFile::load(path)?;
    let result = run_inversion(&cfg, which, &data)?;
    if let Some(dir) = out {
        if result.r0.is_some() || result.r1.is_some() {
            write_source_csv(result.r0.as_ref(), result.r1.as_ref(), &mut create(dir, "source.csv")?)?;
        }
        if let Some(f) = &result.f {
            let mut w = create(dir, "f_coefficients.json")?;
            serde_json::to_writer_pretty(&mut w, f)?;
            w.write_all(b"\n")?;
        }
    }
    write_report(&result.report, out)?;
    Ok(result.report)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
