//! The two repetition protocols: growing a single full-horizon problem one
//! cycle at a time, and sliding a 3-cycle window cycle by cycle.

use std::time::Duration;

use log::info;
use serde::Serialize;

use crate::arm::ArmModel;
use crate::error::{Error, Result};
use crate::fatigue::FatigueState;
use crate::nlp::{solve, HessianMode, SolveStatus, SolverConfig};
use crate::transcription::{
    build_nlp, evaluate_cost, shoot, Actuator, CostReport, CostTerms, OcpSpec, OcpTrajectory, StateVec, SystemState,
    STATE_DIM,
};

/// Settings shared by both protocols.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub solver: SolverConfig,
    /// Largest cycle count tried by the full-horizon search.
    pub k_cap: usize,
    /// Cycles per sliding window.
    pub window_cycles: usize,
    /// Largest number of sliding windows solved.
    pub max_windows: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            solver: SolverConfig {
                hessian: HessianMode::FiniteDifference,
                // Converging solves take well under 100 iterations; failing
                // ones crawl along tiny steps for thousands.
                max_iter: 300,
                ..Default::default()
            },
            k_cap: 64,
            window_cycles: 3,
            max_windows: 64,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.k_cap < 1 {
            return Err(Error::invalid("k_cap", "must be >= 1"));
        }
        if self.window_cycles < 2 {
            return Err(Error::invalid("window_cycles", "must be >= 2"));
        }
        if self.max_windows < 1 {
            return Err(Error::invalid("max_windows", "must be >= 1"));
        }
        Ok(())
    }
}

/// Arm hanging at the low task angle, every actuator rested.
pub fn initial_state(spec: &OcpSpec) -> StateVec {
    SystemState::rested([0.0, spec.elbow_low]).to_array()
}

/// Summary of one NLP solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub cycles: usize,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub max_violation: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

fn solve_cycles(
    spec: &OcpSpec,
    model: &ArmModel,
    x_init: &StateVec,
    guess: &OcpTrajectory,
    cfg: &SolverConfig,
) -> Result<(SolveRecord, OcpTrajectory)> {
    let nlp = build_nlp(spec, model, x_init)?;
    let z0 = nlp.layout().pack(guess)?;
    let sol = match solve(&nlp, &z0, cfg) {
        Ok(sol) => sol,
        // A guess the dynamics cannot evaluate counts as a failed solve.
        Err(Error::EvaluationFailure { .. }) => {
            return Ok((
                SolveRecord {
                    cycles: spec.cycles,
                    status: SolveStatus::Diverged,
                    iterations: 0,
                    objective: f64::NAN,
                    max_violation: f64::NAN,
                    wall_time: Duration::ZERO,
                },
                guess.clone(),
            ))
        }
        Err(e) => return Err(e),
    };
    let record = SolveRecord {
        cycles: spec.cycles,
        status: sol.status,
        iterations: sol.iterations,
        objective: sol.objective,
        max_violation: sol.max_violation,
        wall_time: sol.wall_time,
    };
    info!(
        "{} cycles: {} in {} iterations, f = {:.6e}, {:.1?}",
        spec.cycles, sol.status, sol.iterations, sol.objective, sol.wall_time
    );
    Ok((record, nlp.layout().unpack(&sol.x)))
}

/// Appends a copy of the last cycle's mechanics and controls. The copy's
/// fatigue states are integrated forward from the end of `traj` under the
/// copied controls, so the fatigue trajectory stays continuous.
pub fn extend_by_duplicate(traj: &OcpTrajectory, spec: &OcpSpec, model: &ArmModel) -> Result<OcpTrajectory> {
    let nc = spec.nodes_per_cycle;
    let n = traj.intervals();
    if n < nc || !n.is_multiple_of(nc) {
        return Err(Error::Spec(format!("{n} intervals are not whole cycles of {nc}")));
    }
    let mut out = traj.clone();
    for i in 0..nc {
        let src = n - nc + i;
        let u = traj.controls[src];
        let prev = *out.states.last().unwrap();
        let next = shoot(&prev, &u, model, spec, out.intervals())?;
        let mut x = traj.states[src + 1];
        x[4..STATE_DIM].copy_from_slice(&next[4..STATE_DIM]);
        out.controls.push(u);
        out.states.push(x);
    }
    Ok(out)
}

/// Warm start of the next window: drops the first cycle of `prev` and
/// duplicates its last, see [`extend_by_duplicate`].
pub fn shift_window(prev: &OcpTrajectory, spec: &OcpSpec, model: &ArmModel) -> Result<OcpTrajectory> {
    let nc = spec.nodes_per_cycle;
    let tail = OcpTrajectory {
        states: prev.states[nc..].to_vec(),
        controls: prev.controls[nc..].to_vec(),
    };
    extend_by_duplicate(&tail, spec, model)
}

/// Outcome of the full-horizon search.
#[derive(Debug, Clone, PartialEq)]
pub struct FullHorizonResult {
    /// Largest cycle count that converged.
    pub max_cycles: usize,
    /// Solution at `max_cycles`.
    pub trajectory: OcpTrajectory,
    /// Every solve in order, including the final failed one.
    pub attempts: Vec<SolveRecord>,
    /// True when the search stopped at `k_cap` without a failure.
    pub reached_cap: bool,
}

/// Solves K = 1, 2, … cycles until a solve fails to converge and returns
/// the last converged one. Each K starts from the K − 1 solution extended
/// by one duplicated cycle.
pub fn run_full_horizon(spec: &OcpSpec, model: &ArmModel, cfg: &ProtocolConfig) -> Result<FullHorizonResult> {
    cfg.validate()?;
    let x0 = initial_state(spec);
    let mut attempts = Vec::new();
    let mut best: Option<OcpTrajectory> = None;
    for k in 1..=cfg.k_cap {
        let sk = spec.with_cycles(k);
        let guess = match &best {
            None => OcpTrajectory::constant(x0, sk.intervals()),
            Some(prev) => match extend_by_duplicate(prev, &sk, model) {
                Ok(g) => g,
                Err(Error::EvaluationFailure { .. }) => OcpTrajectory::constant(x0, sk.intervals()),
                Err(e) => return Err(e),
            },
        };
        let (record, traj) = solve_cycles(&sk, model, &x0, &guess, &cfg.solver)?;
        let ok = record.status == SolveStatus::Converged;
        let status = record.status;
        attempts.push(record);
        if !ok {
            return match best {
                None => Err(Error::NoFeasibleK {
                    status: status.to_string(),
                }),
                Some(trajectory) => Ok(FullHorizonResult {
                    max_cycles: k - 1,
                    trajectory,
                    attempts,
                    reached_cap: false,
                }),
            };
        }
        best = Some(traj);
    }
    Ok(FullHorizonResult {
        max_cycles: cfg.k_cap,
        trajectory: best.expect("k_cap >= 1"),
        attempts,
        reached_cap: true,
    })
}

/// One converged sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSolution {
    pub index: usize,
    pub trajectory: OcpTrajectory,
    pub record: SolveRecord,
    pub cost: CostReport,
}

/// Cycles kept from the sliding windows, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedSolution {
    pub trajectory: OcpTrajectory,
    pub windows: Vec<WindowSolution>,
    /// The solve that ended the protocol, if one failed.
    pub failure: Option<SolveRecord>,
    pub repetitions: usize,
    /// True when the protocol stopped at `max_windows` without a failure.
    pub reached_cap: bool,
}

/// Slides a `window_cycles`-cycle problem one cycle at a time, keeping each
/// window's first cycle, until a window fails to converge. The last
/// converged window then contributes its remaining cycles.
pub fn run_sliding_horizon(spec: &OcpSpec, model: &ArmModel, cfg: &ProtocolConfig) -> Result<StitchedSolution> {
    cfg.validate()?;
    let ws = spec.with_cycles(cfg.window_cycles);
    let nc = spec.nodes_per_cycle;
    let mut x_init = initial_state(spec);
    let mut guess = OcpTrajectory::constant(x_init, ws.intervals());
    let mut windows: Vec<WindowSolution> = Vec::new();
    let mut stitched: Option<OcpTrajectory> = None;
    let mut failure = None;

    for index in 0..cfg.max_windows {
        let (record, traj) = solve_cycles(&ws, model, &x_init, &guess, &cfg.solver)?;
        if record.status != SolveStatus::Converged {
            if windows.is_empty() {
                return Err(Error::FirstWindowInfeasible {
                    status: record.status.to_string(),
                });
            }
            failure = Some(record);
            break;
        }
        let cost = evaluate_cost(&ws, &traj.states, &traj.controls, None)?;
        let first = traj.cycle(0, nc);
        match &mut stitched {
            None => stitched = Some(first),
            Some(s) => s.extend(&first),
        }
        x_init = traj.states[nc];
        windows.push(WindowSolution {
            index,
            trajectory: traj,
            record,
            cost,
        });
        let last = &windows.last().unwrap().trajectory;
        guess = match shift_window(last, &ws, model) {
            Ok(g) => g,
            Err(Error::EvaluationFailure { .. }) => OcpTrajectory::constant(x_init, ws.intervals()),
            Err(e) => return Err(e),
        };
    }

    let mut trajectory = stitched.expect("at least one window converged");
    let last = &windows.last().unwrap().trajectory;
    for k in 1..cfg.window_cycles {
        trajectory.extend(&last.cycle(k, nc));
    }
    let repetitions = windows.len() + cfg.window_cycles - 1;
    Ok(StitchedSolution {
        reached_cap: failure.is_none(),
        trajectory,
        windows,
        failure,
        repetitions,
    })
}

/// Diagnostics of one cycle of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleAnalysis {
    pub cycle: usize,
    pub terms: CostTerms,
    /// Weighted cost of the cycle under the run's cost function.
    pub weighted: f64,
    /// `(1 − mf)·limit` per actuator at the end of the cycle (N·m), in
    /// [`Actuator::ALL`] order; negative for extensors.
    pub torque_limits: [f64; 4],
    pub end_fatigue: [FatigueState; 4],
    /// Joint angles at the end of the cycle (rad).
    pub q_end: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunAnalysis {
    pub cycles: Vec<CycleAnalysis>,
    /// `1 − Σm` per actuator at the final node.
    pub final_invariant: [f64; 4],
    /// Largest excess of `τ̃ + mf` outside `[0, 1]` over all nodes.
    pub max_activation_violation: f64,
    /// Largest `|x_{n+1} − Φ(x_n, u_n)|` over all intervals.
    pub max_continuity_defect: f64,
}

impl RunAnalysis {
    /// Flexion torque limits per cycle end: `[shoulder, elbow]`.
    pub fn flexion_limits(&self) -> Vec<[f64; 2]> {
        self.cycles
            .iter()
            .map(|c| {
                [
                    c.torque_limits[Actuator::ShoulderFlexion.index()],
                    c.torque_limits[Actuator::ElbowFlexion.index()],
                ]
            })
            .collect()
    }

    /// First cycle (1-based) whose shoulder term exceeds `factor` times the
    /// first cycle's.
    pub fn shoulder_departure(&self, factor: f64) -> Option<usize> {
        let base = self.cycles.first()?.terms.shoulder;
        self.cycles
            .iter()
            .find(|c| c.terms.shoulder > factor * base)
            .map(|c| c.cycle)
    }
}

/// Per-cycle costs, torque limits and invariant of a trajectory.
pub fn analyze_run(traj: &OcpTrajectory, spec: &OcpSpec, model: &ArmModel) -> Result<RunAnalysis> {
    let nc = spec.nodes_per_cycle;
    let report = evaluate_cost(spec, &traj.states, &traj.controls, None)?;
    let fatigue_at = |x: &StateVec| {
        Actuator::ALL.map(|a| {
            let o = a.state_offset();
            FatigueState::new(x[o], x[o + 1], x[o + 2])
        })
    };
    let cycles = report
        .per_cycle
        .iter()
        .enumerate()
        .map(|(k, terms)| {
            let x = &traj.states[(k + 1) * nc];
            let end_fatigue = fatigue_at(x);
            CycleAnalysis {
                cycle: k + 1,
                terms: *terms,
                weighted: terms.weighted(spec),
                torque_limits: Actuator::ALL.map(|a| (1.0 - end_fatigue[a.index()].mf) * a.limit(&spec.limits)),
                end_fatigue,
                q_end: [x[0], x[1]],
            }
        })
        .collect();
    let last = fatigue_at(traj.states.last().expect("non-empty trajectory"));
    let mut max_activation_violation = 0.0f64;
    let mut max_continuity_defect = 0.0f64;
    for (n, u) in traj.controls.iter().enumerate() {
        let x = &traj.states[n];
        let tl = crate::transcription::torque_activation(u, spec);
        for a in Actuator::ALL {
            let v = tl[a.index()] + x[a.state_offset() + 2];
            max_activation_violation = max_activation_violation.max(-v).max(v - 1.0);
        }
        let next = shoot(x, u, model, spec, n)?;
        for (a, b) in next.iter().zip(&traj.states[n + 1]) {
            max_continuity_defect = max_continuity_defect.max((a - b).abs());
        }
    }
    Ok(RunAnalysis {
        cycles,
        final_invariant: last.map(|m| m.invariant_defect()),
        max_activation_violation,
        max_continuity_defect,
    })
}
