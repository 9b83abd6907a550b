//! Entry points of the `fatigue-ocp` binary, usable from library code too.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::config::{ConfigFile, Horizon, OcpSection};
use crate::error::{Error, Result};
use crate::horizon::{analyze_run, run_full_horizon, run_sliding_horizon, RunAnalysis, SolveRecord};
use crate::report::{self, Manifest};
use crate::studies::{run_study1, run_study2, Study1Report, Study2Case};
use crate::transcription::{Actuator, OcpSpec, OcpTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Study1,
    Study2,
    Ocp,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Study1 => "study1",
            Command::Study2 => "study2",
            Command::Ocp => "ocp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    /// TOML config; `None` runs with defaults.
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub plot: bool,
}

/// Process exit status for an error: 2 when the protocol found no feasible
/// problem, 3 for bad configuration, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoFeasibleK { .. } | Error::FirstWindowInfeasible { .. } => 2,
        Error::Config { .. } | Error::InvalidParameter { .. } => 3,
        _ => 1,
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Config {
        path: out.into(),
        reason: format!("output directory is not writable: {e}"),
    })
}

pub fn run(rc: &RunConfig) -> Result<()> {
    let cfg = match &rc.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    prepare_out(&rc.out)?;
    match rc.command {
        Command::Study1 => cmd_study1(&cfg, &rc.out, rc.plot).map(|_| ()),
        Command::Study2 => cmd_study2(&cfg, &rc.out, rc.plot).map(|_| ()),
        Command::Ocp => cmd_ocp(&cfg.ocp, &rc.out, rc.plot).map(|_| ()),
    }
}

pub fn cmd_study1(cfg: &ConfigFile, out: &Path, plot: bool) -> Result<Study1Report> {
    let c = cfg.study1.to_config()?;
    let start = Instant::now();
    let rep = run_study1(&c)?;
    report::write_study1(out, &rep, c.samples)?;
    if plot {
        report::plot_study1(out, &rep, c.samples)?;
    }
    let mut m = Manifest::new("study1");
    m.line(
        "config_hash",
        report::hash_hex(&toml::to_string(&cfg.study1).unwrap_or_default()),
    )
    .line("rmse", format!("{:?}", rep.rmse))
    .line("final_abs_diff", format!("{:?}", rep.final_abs_diff))
    .line("final_sum", format!("{:?}", rep.final_sum))
    .line("wall_time_s", start.elapsed().as_secs_f64());
    m.write(out)?;
    info!("study1: rmse {:?}, final |d| {:?}", rep.rmse, rep.final_abs_diff);
    Ok(rep)
}

pub fn cmd_study2(cfg: &ConfigFile, out: &Path, plot: bool) -> Result<Vec<Study2Case>> {
    let c = cfg.study2.to_config()?;
    let start = Instant::now();
    let cases = run_study2(&c)?;
    report::write_study2(out, &cases)?;
    if plot {
        report::plot_study2(out, &cases)?;
    }
    let mut m = Manifest::new("study2");
    m.line(
        "config_hash",
        report::hash_hex(&toml::to_string(&cfg.study2).unwrap_or_default()),
    );
    for case in &cases {
        m.line(
            &format!("S={} mr0={}", case.stabilization, case.initial_rest),
            format!(
                "crossings {:?}, final |d| {:?}, diverged {}",
                case.crossings, case.final_abs_diff, case.diverged
            ),
        );
    }
    m.line("wall_time_s", start.elapsed().as_secs_f64());
    m.write(out)?;
    Ok(cases)
}

/// Result of one OCP protocol run.
#[derive(Debug, Clone)]
pub struct OcpOutcome {
    pub horizon: Horizon,
    /// Spec with `cycles` set to the repetitions of `trajectory`.
    pub spec: OcpSpec,
    pub trajectory: OcpTrajectory,
    pub repetitions: usize,
    /// Every solve in order; the last one failed unless `reached_cap`.
    pub solves: Vec<SolveRecord>,
    pub reached_cap: bool,
    pub analysis: RunAnalysis,
}

/// Runs the configured protocol without writing anything.
pub fn run_ocp(section: &OcpSection) -> Result<OcpOutcome> {
    section.validate()?;
    let (spec, model, proto) = (&section.spec, &section.model, &section.protocol);
    let (trajectory, repetitions, solves, reached_cap) = match section.horizon {
        Horizon::Full => {
            let r = run_full_horizon(spec, model, proto)?;
            (r.trajectory, r.max_cycles, r.attempts, r.reached_cap)
        }
        Horizon::Sliding => {
            let r = run_sliding_horizon(spec, model, proto)?;
            let mut solves: Vec<SolveRecord> = r.windows.iter().map(|w| w.record.clone()).collect();
            solves.extend(r.failure.clone());
            (r.trajectory, r.repetitions, solves, r.reached_cap)
        }
    };
    let spec = spec.with_cycles(repetitions);
    let analysis = analyze_run(&trajectory, &spec, model)?;
    Ok(OcpOutcome {
        horizon: section.horizon,
        spec,
        trajectory,
        repetitions,
        solves,
        reached_cap,
        analysis,
    })
}

pub fn cmd_ocp(section: &OcpSection, out: &Path, plot: bool) -> Result<OcpOutcome> {
    let start = Instant::now();
    let o = run_ocp(section)?;
    report::write_ocp(out, &o.spec, &o.trajectory, &o.analysis)?;
    report::write_solves(out, &o.solves)?;
    if plot {
        report::plot_ocp(out, &o.spec, &o.trajectory, &o.analysis)?;
    }
    let canonical = toml::to_string(section).map_err(|e| Error::Spec(e.to_string()))?;
    let mut m = Manifest::new("ocp");
    m.line("protocol", o.horizon.as_str())
        .line("cost", section.spec.cost)
        .line("stabilizer", section.spec.stabilizer_enabled)
        .line("spec_hash", report::hash_hex(&canonical))
        .line("repetitions", o.repetitions)
        .line("reached_cap", o.reached_cap);
    for (i, s) in o.solves.iter().enumerate() {
        let label = match o.horizon {
            Horizon::Full => format!("solve {i} (K={})", s.cycles),
            Horizon::Sliding => format!("window {i}"),
        };
        m.line(
            &label,
            format!(
                "{} in {} iterations, objective {}, violation {:.3e}, {:.3} s",
                s.status,
                s.iterations,
                s.objective,
                s.max_violation,
                s.wall_time.as_secs_f64()
            ),
        );
    }
    for a in Actuator::ALL {
        m.line(
            &format!("final_invariant {}", a.name()),
            o.analysis.final_invariant[a.index()],
        );
    }
    m.line("max_activation_violation", o.analysis.max_activation_violation)
        .line("max_continuity_defect", o.analysis.max_continuity_defect)
        .line("wall_time_s", start.elapsed().as_secs_f64());
    m.write(out)?;
    std::fs::write(out.join("config.toml"), canonical)?;
    info!(
        "ocp {} {}: {} repetitions",
        o.horizon.as_str(),
        section.spec.cost,
        o.repetitions
    );
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::NoFeasibleK { status: "x".into() }), 2);
        assert_eq!(exit_code(&Error::FirstWindowInfeasible { status: "x".into() }), 2);
        assert_eq!(
            exit_code(&Error::Config {
                path: "a".into(),
                reason: "b".into()
            }),
            3
        );
        assert_eq!(exit_code(&Error::invalid("F", "neg")), 3);
        assert_eq!(exit_code(&Error::Qp("x".into())), 1);
    }

    #[test]
    fn study1_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let rc = RunConfig {
            command: Command::Study1,
            config: None,
            out: dir.path().to_path_buf(),
            plot: true,
        };
        run(&rc).unwrap();
        for f in [
            "study1_trajectory.csv",
            "study1_summary.csv",
            "manifest.txt",
            "study1.svg",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn missing_config_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let rc = RunConfig {
            command: Command::Study1,
            config: Some(dir.path().join("nope.toml")),
            out: dir.path().to_path_buf(),
            plot: false,
        };
        assert_eq!(exit_code(&run(&rc).unwrap_err()), 3);
    }
}
