//! Study orchestration behind the `sexpde` binary.

pub mod config;
pub mod selftest;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sexpde::error::{Error, Result};
use sexpde::experiments::{converge_space, converge_strong, converge_time, ConvergenceReport, Functional, Preset};
use sexpde::fem::{BoundaryKind, FemOperators, OperatorCoefficients};
use sexpde::integrator::{write_snapshots_csv, Record, RunConfig, Scheme};
use sexpde::noise::{project_modes, NoiseStream};

use crate::config::{Config, StudyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ConvergeTime,
    ConvergeSpace,
    StrongStudy,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::ConvergeTime => "converge-time",
            Self::ConvergeSpace => "converge-space",
            Self::StrongStudy => "strong-study",
            Self::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub preset: Option<Preset>,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Human-readable summary for the terminal.
    pub summary: String,
    /// `false` when a self-test check failed.
    pub success: bool,
}

pub fn load_config(m: &RunManifest) -> Result<Config> {
    let mut cfg = match &m.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(p) = m.preset {
        cfg.problem.preset = p;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::config("--out", format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".sexpde-write-test");
    fs::write(&probe, b"")
        .map_err(|e| Error::config("--out", format!("{} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Configuration echo embedded in result files. Thread counts are left out
/// so that outputs do not depend on them.
fn effective_echo(cfg: &Config, seed: u64) -> String {
    let mut c = cfg.clone();
    c.study.seed = Some(seed);
    c.study.threads = None;
    c.echo()
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn run(m: &RunManifest) -> Result<Outcome> {
    if m.threads == Some(0) {
        return Err(Error::config("--threads", "must be at least 1"));
    }
    if m.command == Command::Selftest {
        prepare_out(&m.out)?;
        let report = selftest::run_all();
        let table = selftest::format_table(&report);
        let path = m.out.join("selftest.txt");
        fs::write(&path, &table)?;
        return Ok(Outcome {
            files: vec![path],
            success: report.iter().all(|c| c.passed),
            summary: table,
        });
    }
    let cfg = load_config(m)?;
    let seed = cfg.seed(m.seed)?;
    prepare_out(&m.out)?;
    let echo = effective_echo(&cfg, seed);
    let echo_path = m.out.join("effective_config.txt");
    fs::write(&echo_path, &echo)?;
    let mut files = vec![echo_path];

    let kind = match m.command {
        Command::Simulate => {
            let (path, summary) = simulate(&cfg, seed, &echo, &m.out)?;
            files.push(path);
            return Ok(Outcome {
                files,
                summary,
                success: true,
            });
        }
        Command::ConvergeTime => StudyKind::Time,
        Command::ConvergeSpace => StudyKind::Space,
        Command::StrongStudy => StudyKind::Strong,
        Command::Selftest => unreachable!("handled above"),
    };
    let study = cfg.study(kind, seed, m.threads)?;
    let mut report = match kind {
        StudyKind::Time => converge_time(&study)?,
        StudyKind::Space => converge_space(&study)?,
        StudyKind::Strong => converge_strong(&study)?,
    };
    report.config_echo = echo;
    let path = m.out.join(format!("{}.csv", m.command.name()));
    write_file(&path, |w| report.write_csv(w))?;
    files.push(path);
    Ok(Outcome {
        files,
        summary: summarize(&report),
        success: true,
    })
}

fn summarize(r: &ConvergenceReport) -> String {
    let mut s = String::new();
    for p in &r.points {
        s += &format!(
            "{} h={:.6} dt={:.6e} error={:.6e} +- {:.2e}\n",
            r.study, p.h, p.resolution.dt, p.error, p.mc_std_error
        );
    }
    match (r.fitted_rate, r.rate_std_error) {
        (Some(rate), Some(se)) => s += &format!("fitted rate {rate:.4} (std error {se:.4})\n"),
        _ => s += "fitted rate undefined (fewer than two resolved points)\n",
    }
    s
}

fn simulate(cfg: &Config, seed: u64, echo: &str, out: &Path) -> Result<(PathBuf, String)> {
    let spec = cfg.spec(Functional::Phi2);
    let mesh = spec.mesh(cfg.mesh.cells)?;
    let ops = FemOperators::assemble(&mesh, OperatorCoefficients::isotropic(spec.diffusion), BoundaryKind::Neumann)?;
    let spectrum = spec.spectrum(ops.dim())?;
    let modes = project_modes(&spec.basis(), &spectrum, &ops)?;
    let problem = spec.problem(spec.initial_coefficients(&spectrum)?, cfg.problem.final_time);
    let record = match cfg.problem.record_every {
        0 => Record::FinalOnly,
        k => Record::EveryK(k),
    };
    let run = RunConfig::from_dt(cfg.problem.final_time, cfg.problem.dt)?
        .with_krylov(cfg.krylov)
        .with_record(record);
    let scheme = Scheme::new(&problem, &ops, &spectrum, &modes, run)?;
    let traj = scheme.simulate(&NoiseStream::new(seed), cfg.problem.realization)?;
    let path = out.join("trajectory.csv");
    write_file(&path, |w| {
        for line in echo.lines() {
            writeln!(w, "# {line}")?;
        }
        write_snapshots_csv(&ops, &traj.snapshots, &mut *w)
    })?;
    let x = &traj.final_state.x;
    let summary = format!(
        "realization {} at T={}: Phi1={:.10e} Phi2={:.10e} ({} snapshots)\n",
        cfg.problem.realization,
        cfg.problem.final_time,
        ops.phi1(x)?,
        ops.phi2(x)?,
        traj.snapshots.len()
    );
    Ok((path, summary))
}
