//! Forward-simulation studies of the fatigue model at constant target load.
//!
//! Study 1 integrates the plain and stabilized models from the same rested
//! state and measures how far apart they drift. Study 2 starts the stabilized
//! model from a state whose compartment sum is off by `±1e-4` and records how
//! fast the sum is restored for several stabilizer coefficients.

use crate::error::Result;
use crate::fatigue::{derivative, FatigueParams, FatigueState};
use crate::integrate::{solve_ivp_rk45, IvpConfig, Trajectory};

/// Column names of a fatigue trajectory, in state order.
pub const STATE_NAMES: [&str; 3] = ["mr", "ma", "mf"];

/// Weights picking the compartment sum out of a `(mr, ma, mf)` state.
const SUM: [f64; 3] = [1.0, 1.0, 1.0];

/// Integrates one actuator at constant target load.
pub fn simulate(
    m0: FatigueState,
    target_load: f64,
    params: &FatigueParams,
    stabilized: bool,
    cfg: &IvpConfig,
) -> Result<Trajectory> {
    params.validate()?;
    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
        let d = derivative(&FatigueState::new(x[0], x[1], x[2]), target_load, params, stabilized);
        dx.copy_from_slice(&d.to_array());
    };
    solve_ivp_rk45(rhs, &m0.to_array(), cfg)
}

#[derive(Debug, Clone)]
pub struct Study1Config {
    pub params: FatigueParams,
    pub target_load: f64,
    pub ivp: IvpConfig,
    /// Points of the uniform grid the two runs are compared on.
    pub samples: usize,
}

impl Default for Study1Config {
    fn default() -> Self {
        Study1Config {
            params: FatigueParams::elbow_isometric(10.0),
            target_load: 0.8,
            ivp: IvpConfig::new(0.0, 60.0),
            samples: 6001,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study1Report {
    pub plain: Trajectory,
    pub stabilized: Trajectory,
    /// Per-state RMSE between the two runs, `(mr, ma, mf)`.
    pub rmse: [f64; 3],
    pub rmse_sum: f64,
    /// `|plain − stabilized|` per state at the final time.
    pub final_abs_diff: [f64; 3],
    /// Compartment sums at the final time, `(plain, stabilized)`.
    pub final_sum: (f64, f64),
}

pub fn run_study1(cfg: &Study1Config) -> Result<Study1Report> {
    let m0 = FatigueState::new_rested();
    let plain = simulate(m0, cfg.target_load, &cfg.params, false, &cfg.ivp)?;
    let stabilized = simulate(m0, cfg.target_load, &cfg.params, true, &cfg.ivp)?;

    let (t0, tf) = cfg.ivp.t_span;
    let n = cfg.samples.max(2);
    let mut sq = [0.0; 4];
    for k in 0..n {
        let t = t0 + (tf - t0) * k as f64 / (n - 1) as f64;
        let a = plain.interpolate(t);
        let b = stabilized.interpolate(t);
        for i in 0..3 {
            sq[i] += (a[i] - b[i]).powi(2);
        }
        sq[3] += (a.iter().sum::<f64>() - b.iter().sum::<f64>()).powi(2);
    }
    let rms = |s: f64| (s / n as f64).sqrt();
    let (a, b) = (plain.last_state(), stabilized.last_state());
    Ok(Study1Report {
        rmse: [rms(sq[0]), rms(sq[1]), rms(sq[2])],
        rmse_sum: rms(sq[3]),
        final_abs_diff: [(a[0] - b[0]).abs(), (a[1] - b[1]).abs(), (a[2] - b[2]).abs()],
        final_sum: (a.iter().sum(), b.iter().sum()),
        plain,
        stabilized,
    })
}

#[derive(Debug, Clone)]
pub struct Study2Config {
    pub params: FatigueParams,
    pub target_load: f64,
    pub ivp: IvpConfig,
    pub stabilization: Vec<f64>,
    pub initial_rest: Vec<f64>,
    /// Precision orders `k` for thresholds `10^-k`.
    pub orders: Vec<i32>,
}

impl Default for Study2Config {
    fn default() -> Self {
        Study2Config {
            params: FatigueParams::elbow_isometric(0.0),
            target_load: 0.8,
            ivp: IvpConfig::new(0.0, 60.0),
            stabilization: vec![0.0, 5.0, 10.0, 20.0],
            initial_rest: vec![1.0001, 0.9999],
            orders: vec![5, 6, 7, 8, 9],
        }
    }
}

/// One `(S, mr0)` run of Study 2.
#[derive(Debug, Clone)]
pub struct Study2Case {
    pub stabilization: f64,
    pub initial_rest: f64,
    pub trajectory: Trajectory,
    /// `(order, time)`: first time `|1 − Σm| ≤ 10^-order`, reported only
    /// when the precision is then kept until the end of the run.
    pub crossings: Vec<(i32, Option<f64>)>,
    /// First time `|1 − Σm| ≤ 10^-order`, whether or not it is kept.
    pub first_crossings: Vec<(i32, Option<f64>)>,
    /// Time after which `|1 − Σm| ≤ 10^-order` until the end of the run.
    pub settling_times: Vec<(i32, Option<f64>)>,
    /// `|Δ|` per state `(mr, ma, mf)` at the final time against the run
    /// started from `mr0 = 1` with the same `S`.
    pub final_abs_diff: [f64; 3],
    pub initial_defect: f64,
    pub final_defect: f64,
    /// Largest `|1 − Σm|` over the second half of the run.
    pub late_max_defect: f64,
    /// Direction changes of `|1 − Σm|` over the accepted steps.
    pub reversals: usize,
    /// The defect oscillates and ends up larger than it started by more than
    /// the integrator's absolute tolerance.
    pub diverged: bool,
}

impl Study2Case {
    pub fn crossing(&self, order: i32) -> Option<f64> {
        self.crossings.iter().find(|(k, _)| *k == order).and_then(|(_, t)| *t)
    }
}

pub fn run_study2(cfg: &Study2Config) -> Result<Vec<Study2Case>> {
    let mut out = Vec::new();
    for &s in &cfg.stabilization {
        let params = cfg.params.with_stabilization(s);
        let reference = simulate(FatigueState::new_rested(), cfg.target_load, &params, true, &cfg.ivp)?;
        let r = reference.last_state();
        for &mr0 in &cfg.initial_rest {
            let m0 = FatigueState::new(mr0, 0.0, 0.0);
            let traj = simulate(m0, cfg.target_load, &params, true, &cfg.ivp)?;
            let x = traj.last_state();
            let thresholds =
                |f: &dyn Fn(f64) -> Option<f64>| cfg.orders.iter().map(|&k| (k, f(10f64.powi(-k)))).collect::<Vec<_>>();
            let first_crossings = thresholds(&|thr| traj.first_time_below(&SUM, -1.0, thr));
            let settling_times = thresholds(&|thr| traj.settling_time(&SUM, -1.0, thr));
            let crossings = first_crossings
                .iter()
                .zip(&settling_times)
                .map(|(&(k, first), &(_, settle))| match (first, settle) {
                    (Some(a), Some(b)) if b - a <= 1e-9 * (1.0 + a.abs()) => (k, Some(a)),
                    _ => (k, None),
                })
                .collect();
            let defects: Vec<f64> = traj.states.iter().map(|x| 1.0 - x.iter().sum::<f64>()).collect();
            let half = 0.5 * (cfg.ivp.t_span.0 + cfg.ivp.t_span.1);
            let late_max_defect = traj
                .times
                .iter()
                .zip(&defects)
                .filter(|(t, _)| **t >= half)
                .fold(0.0f64, |m, (_, e)| m.max(e.abs()));
            let reversals = defects
                .windows(3)
                .filter(|w| {
                    let (a, b) = (w[1].abs() - w[0].abs(), w[2].abs() - w[1].abs());
                    a * b < 0.0
                })
                .count();
            let initial_defect = 1.0 - m0.sum();
            let diverged = reversals > 0 && late_max_defect > initial_defect.abs() + cfg.ivp.atol;
            out.push(Study2Case {
                stabilization: s,
                initial_rest: mr0,
                final_abs_diff: [(x[0] - r[0]).abs(), (x[1] - r[1]).abs(), (x[2] - r[2]).abs()],
                initial_defect,
                final_defect: *defects.last().unwrap(),
                late_max_defect,
                reversals,
                diverged,
                crossings,
                first_crossings,
                settling_times,
                trajectory: traj,
            });
        }
    }
    Ok(out)
}
