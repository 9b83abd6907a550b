//! CSV and text artifacts of the studies and OCP runs. Column layouts are
//! documented in `docs/formats.md`.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! repeated runs produce byte-identical files. Wall-clock timings only
//! appear in `manifest.txt` and `timings.csv`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::horizon::{RunAnalysis, SolveRecord};
use crate::plot::{line_chart, stacked_area, Series};
use crate::studies::{Study1Report, Study2Case, STATE_NAMES};
use crate::transcription::{Actuator, OcpSpec, OcpTrajectory};

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Hex SHA-256 of `text`.
pub fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `study1_trajectory.csv` (both runs on the comparison grid) and
/// `study1_summary.csv`.
pub fn write_study1(dir: &Path, rep: &Study1Report, samples: usize) -> Result<()> {
    let mut w = writer(dir, "study1_trajectory.csv")?;
    w.write_record(["t", "mr_3cc", "ma_3cc", "mf_3cc", "mr_3scc", "ma_3scc", "mf_3scc"])?;
    for t in grid(rep, samples) {
        let a = rep.plain.interpolate(t);
        let b = rep.stabilized.interpolate(t);
        let mut row = vec![num(t)];
        row.extend(a.iter().chain(&b).map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(dir, "study1_summary.csv")?;
    w.write_record(["state", "rmse", "final_abs_diff"])?;
    for (i, name) in STATE_NAMES.iter().enumerate() {
        w.write_record([name.to_string(), num(rep.rmse[i]), num(rep.final_abs_diff[i])])?;
    }
    w.write_record([
        "sum".to_string(),
        num(rep.rmse_sum),
        num((rep.final_sum.0 - rep.final_sum.1).abs()),
    ])?;
    w.flush()?;
    Ok(())
}

fn grid(rep: &Study1Report, samples: usize) -> impl Iterator<Item = f64> {
    let t0 = rep.plain.times[0];
    let tf = *rep.plain.times.last().unwrap();
    let n = samples.max(2);
    (0..n).map(move |k| t0 + (tf - t0) * k as f64 / (n - 1) as f64)
}

pub fn plot_study1(dir: &Path, rep: &Study1Report, samples: usize) -> Result<()> {
    let ts: Vec<f64> = grid(rep, samples).collect();
    let mut series = Vec::new();
    let names = ["mr 3CC", "ma 3CC", "mf 3CC", "mr 3SCC", "ma 3SCC", "mf 3SCC"];
    for (k, name) in names.iter().enumerate() {
        let traj = if k < 3 { &rep.plain } else { &rep.stabilized };
        series.push(Series {
            name,
            points: ts.iter().map(|&t| (t, traj.interpolate(t)[k % 3])).collect(),
        });
    }
    std::fs::write(
        dir.join("study1.svg"),
        line_chart("Study 1: 3CC vs 3SCC at TL = 0.8", "t (s)", "fraction", &series),
    )?;
    Ok(())
}

fn case_name(c: &Study2Case) -> String {
    format!("S{}_mr0_{}", c.stabilization, c.initial_rest)
}

/// `study2_crossings.csv`, `study2_final.csv` and one
/// `study2_<case>.csv` trajectory per case.
pub fn write_study2(dir: &Path, cases: &[Study2Case]) -> Result<()> {
    let mut w = writer(dir, "study2_crossings.csv")?;
    w.write_record(["S", "mr0", "order", "threshold", "time", "first_time", "settling_time"])?;
    for c in cases {
        for (i, &(order, time)) in c.crossings.iter().enumerate() {
            w.write_record([
                num(c.stabilization),
                num(c.initial_rest),
                order.to_string(),
                num(10f64.powi(-order)),
                opt(time),
                opt(c.first_crossings[i].1),
                opt(c.settling_times[i].1),
            ])?;
        }
    }
    w.flush()?;

    let mut w = writer(dir, "study2_final.csv")?;
    w.write_record([
        "S",
        "mr0",
        "abs_diff_mr",
        "abs_diff_ma",
        "abs_diff_mf",
        "initial_defect",
        "final_defect",
        "late_max_defect",
        "reversals",
        "diverged",
    ])?;
    for c in cases {
        w.write_record([
            num(c.stabilization),
            num(c.initial_rest),
            num(c.final_abs_diff[0]),
            num(c.final_abs_diff[1]),
            num(c.final_abs_diff[2]),
            num(c.initial_defect),
            num(c.final_defect),
            num(c.late_max_defect),
            c.reversals.to_string(),
            c.diverged.to_string(),
        ])?;
    }
    w.flush()?;

    for c in cases {
        let mut w = writer(dir, &format!("study2_{}.csv", case_name(c)))?;
        w.write_record(["t", "mr", "ma", "mf", "defect"])?;
        for (t, x) in c.trajectory.times.iter().zip(&c.trajectory.states) {
            w.write_record([
                num(*t),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                num(1.0 - x.iter().sum::<f64>()),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn plot_study2(dir: &Path, cases: &[Study2Case]) -> Result<()> {
    let labels: Vec<String> = cases
        .iter()
        .map(|c| format!("S={} mr0={}", c.stabilization, c.initial_rest))
        .collect();
    let series: Vec<Series<'_>> = cases
        .iter()
        .zip(&labels)
        .map(|(c, name)| Series {
            name,
            points: c
                .trajectory
                .times
                .iter()
                .zip(&c.trajectory.states)
                .map(|(&t, x)| (t, (1.0 - x.iter().sum::<f64>()).abs().max(1e-16).log10()))
                .collect(),
        })
        .collect();
    std::fs::write(
        dir.join("study2.svg"),
        line_chart("Study 2: invariant defect", "t (s)", "log10 |1 - sum m|", &series),
    )?;
    Ok(())
}

/// Per-cycle and per-node OCP artifacts.
pub fn write_ocp(dir: &Path, spec: &OcpSpec, traj: &OcpTrajectory, analysis: &RunAnalysis) -> Result<()> {
    let mut w = writer(dir, "costs.csv")?;
    w.write_record([
        "cycle",
        "shoulder",
        "torque_rate",
        "torque",
        "fatigue_flexion",
        "fatigue_extension",
        "weighted_shoulder",
        "weighted_torque_rate",
        "weighted_torque",
        "weighted_fatigue",
        "objective",
    ])?;
    let wt = &spec.weights;
    let on = |b: bool| if b { 1.0 } else { 0.0 };
    for c in &analysis.cycles {
        let t = &c.terms;
        w.write_record([
            c.cycle.to_string(),
            num(t.shoulder),
            num(t.torque_rate),
            num(t.torque),
            num(t.fatigue_flexion),
            num(t.fatigue_extension),
            num(wt.shoulder * t.shoulder),
            num(wt.torque_rate * t.torque_rate),
            num(on(spec.cost.penalizes_torque()) * wt.torque * t.torque),
            num(on(spec.cost.penalizes_fatigue()) * wt.fatigue * t.fatigue()),
            num(c.weighted),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "torque_limits.csv")?;
    let mut header = vec!["cycle".to_string()];
    header.extend(Actuator::ALL.iter().map(|a| a.name().to_string()));
    w.write_record(&header)?;
    for c in &analysis.cycles {
        let mut row = vec![c.cycle.to_string()];
        row.extend(c.torque_limits.iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let dt = spec.dt();
    let nc = spec.nodes_per_cycle;
    let mut w = writer(dir, "joint_angles.csv")?;
    w.write_record(["node", "t", "cycle", "q0", "q1", "qdot0", "qdot1"])?;
    for (n, x) in traj.states.iter().enumerate() {
        w.write_record([
            n.to_string(),
            num(n as f64 * dt),
            (n / nc + 1).min(traj.intervals() / nc).to_string(),
            num(x[0]),
            num(x[1]),
            num(x[2]),
            num(x[3]),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "controls.csv")?;
    w.write_record([
        "interval",
        "t",
        "tau_plus_shoulder",
        "tau_plus_elbow",
        "tau_minus_shoulder",
        "tau_minus_elbow",
    ])?;
    for (n, u) in traj.controls.iter().enumerate() {
        let mut row = vec![n.to_string(), num(n as f64 * dt)];
        row.extend(u.iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(dir, "compartments.csv")?;
    let mut header = vec!["node".to_string(), "t".to_string()];
    for a in Actuator::ALL {
        for m in STATE_NAMES {
            header.push(format!("{}_{m}", a.name()));
        }
    }
    w.write_record(&header)?;
    for (n, x) in traj.states.iter().enumerate() {
        let mut row = vec![n.to_string(), num(n as f64 * dt)];
        row.extend(x[4..].iter().map(|&v| num(v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(dir, "invariant.csv")?;
    w.write_record(["actuator", "final_invariant"])?;
    for a in Actuator::ALL {
        w.write_record([a.name().to_string(), num(analysis.final_invariant[a.index()])])?;
    }
    w.flush()?;
    Ok(())
}

/// `solves.csv` (deterministic) and `timings.csv`.
pub fn write_solves(dir: &Path, solves: &[SolveRecord]) -> Result<()> {
    let mut w = writer(dir, "solves.csv")?;
    w.write_record(["solve", "cycles", "status", "iterations", "objective", "max_violation"])?;
    for (i, s) in solves.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.cycles.to_string(),
            s.status.to_string(),
            s.iterations.to_string(),
            num(s.objective),
            num(s.max_violation),
        ])?;
    }
    w.flush()?;
    let mut w = writer(dir, "timings.csv")?;
    w.write_record(["solve", "wall_time_s"])?;
    for (i, s) in solves.iter().enumerate() {
        w.write_record([i.to_string(), num(s.wall_time.as_secs_f64())])?;
    }
    w.flush()?;
    Ok(())
}

pub fn plot_ocp(dir: &Path, spec: &OcpSpec, traj: &OcpTrajectory, analysis: &RunAnalysis) -> Result<()> {
    let dt = spec.dt();
    let t: Vec<f64> = (0..traj.states.len()).map(|n| n as f64 * dt).collect();
    let deg = 180.0 / std::f64::consts::PI;
    let angles = [
        Series {
            name: "q0 (deg)",
            points: t.iter().zip(&traj.states).map(|(&t, x)| (t, x[0] * deg)).collect(),
        },
        Series {
            name: "q1 (deg)",
            points: t.iter().zip(&traj.states).map(|(&t, x)| (t, x[1] * deg)).collect(),
        },
    ];
    std::fs::write(
        dir.join("joint_angles.svg"),
        line_chart("Joint angles", "t (s)", "deg", &angles),
    )?;

    let cyc: Vec<f64> = analysis.cycles.iter().map(|c| c.cycle as f64).collect();
    let limits: Vec<Series<'_>> = Actuator::ALL
        .iter()
        .map(|a| Series {
            name: a.name(),
            points: cyc
                .iter()
                .zip(&analysis.cycles)
                .map(|(&k, c)| (k, c.torque_limits[a.index()]))
                .collect(),
        })
        .collect();
    std::fs::write(
        dir.join("torque_limits.svg"),
        line_chart("Torque limits at cycle end", "cycle", "N m", &limits),
    )?;

    let costs = [
        ("shoulder", spec.weights.shoulder),
        ("torque_rate", spec.weights.torque_rate),
        ("torque", spec.weights.torque),
        ("fatigue", spec.weights.fatigue),
    ];
    let cost_series: Vec<Series<'_>> = costs
        .iter()
        .map(|&(name, w)| Series {
            name,
            points: analysis
                .cycles
                .iter()
                .map(|c| {
                    let v = match name {
                        "shoulder" => c.terms.shoulder,
                        "torque_rate" => c.terms.torque_rate,
                        "torque" => c.terms.torque,
                        _ => c.terms.fatigue(),
                    };
                    (c.cycle as f64, (w * v).max(1e-12).log10())
                })
                .collect(),
        })
        .collect();
    std::fs::write(
        dir.join("costs.svg"),
        line_chart("Weighted cost terms per cycle", "cycle", "log10 value", &cost_series),
    )?;

    for a in Actuator::ALL {
        let o = a.state_offset();
        let layers: Vec<(&str, Vec<f64>)> = STATE_NAMES
            .iter()
            .enumerate()
            .map(|(k, &name)| (name, traj.states.iter().map(|x| x[o + k]).collect()))
            .collect();
        std::fs::write(
            dir.join(format!("compartments_{}.svg", a.name())),
            stacked_area(&format!("Compartments, {}", a.name()), "t (s)", "fraction", &t, &layers),
        )?;
    }
    Ok(())
}

/// Free-form manifest lines, written as `manifest.txt`.
pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            lines: vec![format!("command: {command}")],
        }
    }

    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.lines.push(format!("{key}: {value}"));
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(dir.join("manifest.txt"))?);
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        f.flush()?;
        Ok(())
    }
}
