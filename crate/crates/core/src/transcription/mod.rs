//! Direct multiple-shooting transcription of the repeated biceps-curl task.
//!
//! The system state stacks the arm's `(q, q̇)` with one fatigue triple per
//! torque actuator; controls are the four actuator torques, held constant
//! over each shooting interval. See [`build_nlp`] for the resulting NLP and
//! [`evaluate_cost`] for the per-cycle cost breakdown.

mod cost;
mod dynamics;
mod problem;

pub use cost::{evaluate_cost, CostReport, CostTerms};
pub use dynamics::{coupled_dynamics, shoot, simulate_controls, torque_activation};
pub use problem::{build_nlp, Layout, OcpNlp};

use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arm::{ActuatorLimits, ArmState};
use crate::error::{Error, Result};
use crate::fatigue::{FatigueParams, FatigueState, DEFAULT_BOUND_TOLERANCE};

/// Entries of a system state: `q0, q1, q̇0, q̇1` then `(mr, ma, mf)` for each
/// actuator in [`Actuator::ALL`] order.
pub const STATE_DIM: usize = 16;
/// Entries of a control: `τ⁺_shoulder, τ⁺_elbow, τ⁻_shoulder, τ⁻_elbow`.
pub const CONTROL_DIM: usize = 4;

pub type StateVec = [f64; STATE_DIM];
pub type ControlVec = [f64; CONTROL_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Actuator {
    ShoulderFlexion,
    ShoulderExtension,
    ElbowFlexion,
    ElbowExtension,
}

impl Actuator {
    pub const ALL: [Actuator; 4] = [
        Actuator::ShoulderFlexion,
        Actuator::ShoulderExtension,
        Actuator::ElbowFlexion,
        Actuator::ElbowExtension,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// 0 for the shoulder, 1 for the elbow.
    pub fn joint(self) -> usize {
        match self {
            Actuator::ShoulderFlexion | Actuator::ShoulderExtension => 0,
            Actuator::ElbowFlexion | Actuator::ElbowExtension => 1,
        }
    }

    pub fn is_flexion(self) -> bool {
        matches!(self, Actuator::ShoulderFlexion | Actuator::ElbowFlexion)
    }

    /// Position of this actuator's torque in a control vector.
    pub fn control_index(self) -> usize {
        self.joint() + if self.is_flexion() { 0 } else { 2 }
    }

    /// Position of this actuator's `mr` in a state vector.
    pub fn state_offset(self) -> usize {
        4 + 3 * self.index()
    }

    /// Signed torque bound the activation ratio is taken against.
    pub fn limit(self, lim: &ActuatorLimits) -> f64 {
        if self.is_flexion() {
            lim.tau_max[self.joint()]
        } else {
            lim.tau_min[self.joint()]
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Actuator::ShoulderFlexion => "shoulder_flexion",
            Actuator::ShoulderExtension => "shoulder_extension",
            Actuator::ElbowFlexion => "elbow_flexion",
            Actuator::ElbowExtension => "elbow_extension",
        }
    }
}

/// Objective choice. All three penalize the shoulder angle and the torque
/// rate of change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostKind {
    /// Fatigue and torque terms.
    #[serde(rename = "mf_tau")]
    FatigueTorque,
    /// Fatigue term only.
    #[serde(rename = "mf")]
    Fatigue,
    /// Torque term only.
    #[serde(rename = "tau")]
    Torque,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::FatigueTorque, CostKind::Fatigue, CostKind::Torque];

    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::FatigueTorque => "mf_tau",
            CostKind::Fatigue => "mf",
            CostKind::Torque => "tau",
        }
    }

    pub fn penalizes_fatigue(self) -> bool {
        matches!(self, CostKind::FatigueTorque | CostKind::Fatigue)
    }

    pub fn penalizes_torque(self) -> bool {
        matches!(self, CostKind::FatigueTorque | CostKind::Torque)
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("cost", format!("expected mf_tau, mf or tau, got `{s}`")))
    }
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    #[serde(rename = "w_q0")]
    pub shoulder: f64,
    #[serde(rename = "w_dtau")]
    pub torque_rate: f64,
    #[serde(rename = "w_f")]
    pub fatigue: f64,
    #[serde(rename = "w_tau")]
    pub torque: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            shoulder: 1e5,
            torque_rate: 0.1,
            fatigue: 1e3,
            torque: 1.0,
        }
    }
}

/// Everything that defines one K-cycle problem apart from the arm model and
/// the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcpSpec {
    pub cycles: usize,
    pub nodes_per_cycle: usize,
    /// Duration of one curl (s).
    pub cycle_duration: f64,
    pub cost: CostKind,
    pub weights: CostWeights,
    pub limits: ActuatorLimits,
    /// Elbow angle at cycle boundaries (rad).
    pub elbow_low: f64,
    /// Elbow angle at cycle midpoints (rad).
    pub elbow_high: f64,
    /// Fatigue parameters per actuator, [`Actuator::ALL`] order.
    pub fatigue: [FatigueParams; 4],
    pub stabilizer_enabled: bool,
    /// RK4 steps per shooting interval.
    pub rk4_substeps: usize,
    /// Slack on the `[0, 1]` bounds of the fatigue compartments.
    pub fatigue_bound_tolerance: f64,
    pub shoulder_range: (f64, f64),
    pub elbow_range: (f64, f64),
}

impl Default for OcpSpec {
    fn default() -> Self {
        OcpSpec {
            cycles: 1,
            nodes_per_cycle: 30,
            cycle_duration: 1.0,
            cost: CostKind::FatigueTorque,
            weights: CostWeights::default(),
            limits: ActuatorLimits::default(),
            elbow_low: 15f64.to_radians(),
            elbow_high: 150f64.to_radians(),
            fatigue: [FatigueParams::biceps_curl(); 4],
            stabilizer_enabled: true,
            rk4_substeps: 5,
            fatigue_bound_tolerance: DEFAULT_BOUND_TOLERANCE,
            shoulder_range: (-FRAC_PI_2, FRAC_PI_2),
            elbow_range: (0.0, 160f64.to_radians()),
        }
    }
}

impl OcpSpec {
    pub fn with_cycles(&self, cycles: usize) -> Self {
        OcpSpec { cycles, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles < 1 {
            return Err(Error::invalid("cycles", "must be >= 1"));
        }
        if self.nodes_per_cycle < 10 {
            return Err(Error::invalid("nodes_per_cycle", "must be >= 10"));
        }
        if !(self.cycle_duration > 0.0) {
            return Err(Error::invalid("cycle_duration", "must be > 0"));
        }
        if !(self.elbow_low < self.elbow_high) {
            return Err(Error::invalid("elbow_low", "must be below elbow_high"));
        }
        if self.rk4_substeps < 1 {
            return Err(Error::invalid("rk4_substeps", "must be >= 1"));
        }
        if !(self.fatigue_bound_tolerance >= 0.0) {
            return Err(Error::invalid("fatigue_bound_tolerance", "must be >= 0"));
        }
        let w = &self.weights;
        if [w.shoulder, w.torque_rate, w.fatigue, w.torque]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::invalid("weights", "must all be >= 0"));
        }
        for (name, (lo, hi)) in [
            ("shoulder_range", self.shoulder_range),
            ("elbow_range", self.elbow_range),
        ] {
            if !(lo < hi) {
                return Err(Error::invalid(name, "lower bound must be below upper bound"));
            }
        }
        if !(self.elbow_range.0 <= self.elbow_low && self.elbow_high <= self.elbow_range.1) {
            return Err(Error::invalid("elbow_range", "must contain the task angles"));
        }
        self.limits.validate()?;
        for p in &self.fatigue {
            p.validate()?;
        }
        Ok(())
    }

    /// Shooting intervals over the whole horizon.
    pub fn intervals(&self) -> usize {
        self.cycles * self.nodes_per_cycle
    }

    /// Length of one shooting interval (s).
    pub fn dt(&self) -> f64 {
        self.cycle_duration / self.nodes_per_cycle as f64
    }

    /// `(node, elbow angle)` pairs fixed by the task, excluding node 0.
    pub fn task_nodes(&self) -> Vec<(usize, f64)> {
        let nc = self.nodes_per_cycle;
        let mut out = Vec::with_capacity(2 * self.cycles);
        for k in 0..self.cycles {
            out.push((k * nc + nc / 2, self.elbow_high));
            out.push(((k + 1) * nc, self.elbow_low));
        }
        out
    }
}

/// Arm and fatigue state of the whole system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub arm: ArmState,
    /// [`Actuator::ALL`] order.
    pub fatigue: [FatigueState; 4],
}

impl SystemState {
    /// Arm at rest at `q` with every actuator rested.
    pub fn rested(q: [f64; 2]) -> Self {
        SystemState {
            arm: ArmState::new(q, [0.0, 0.0]),
            fatigue: [FatigueState::new_rested(); 4],
        }
    }

    pub fn to_array(&self) -> StateVec {
        let mut x = [0.0; STATE_DIM];
        x[0] = self.arm.q[0];
        x[1] = self.arm.q[1];
        x[2] = self.arm.qdot[0];
        x[3] = self.arm.qdot[1];
        for a in Actuator::ALL {
            let o = a.state_offset();
            x[o..o + 3].copy_from_slice(&self.fatigue[a.index()].to_array());
        }
        x
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != STATE_DIM {
            return Err(Error::Spec(format!(
                "state has {} entries, expected {STATE_DIM}",
                x.len()
            )));
        }
        let f = |a: Actuator| {
            let o = a.state_offset();
            FatigueState::new(x[o], x[o + 1], x[o + 2])
        };
        Ok(SystemState {
            arm: ArmState::new([x[0], x[1]], [x[2], x[3]]),
            fatigue: Actuator::ALL.map(f),
        })
    }
}

/// State and control trajectories on the shooting grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpTrajectory {
    /// One state per node, `intervals + 1` of them.
    pub states: Vec<StateVec>,
    /// One control per interval.
    pub controls: Vec<ControlVec>,
}

impl OcpTrajectory {
    /// Holds `state` at every node with zero torques.
    pub fn constant(state: StateVec, intervals: usize) -> Self {
        OcpTrajectory {
            states: vec![state; intervals + 1],
            controls: vec![[0.0; CONTROL_DIM]; intervals],
        }
    }

    pub fn intervals(&self) -> usize {
        self.controls.len()
    }

    /// Cycle `k` (0-based) as its own trajectory, sharing end nodes with
    /// its neighbours.
    pub fn cycle(&self, k: usize, nodes_per_cycle: usize) -> OcpTrajectory {
        let a = k * nodes_per_cycle;
        let b = a + nodes_per_cycle;
        OcpTrajectory {
            states: self.states[a..=b].to_vec(),
            controls: self.controls[a..b].to_vec(),
        }
    }

    /// Appends `other`, whose first state replaces this trajectory's last.
    pub fn extend(&mut self, other: &OcpTrajectory) {
        self.states.pop();
        self.states.extend_from_slice(&other.states);
        self.controls.extend_from_slice(&other.controls);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn actuator_indexing() {
        let c: Vec<usize> = Actuator::ALL.iter().map(|a| a.control_index()).collect();
        assert_eq!(c, vec![0, 2, 1, 3]);
        let s: Vec<usize> = Actuator::ALL.iter().map(|a| a.state_offset()).collect();
        assert_eq!(s, vec![4, 7, 10, 13]);
    }

    #[test]
    fn state_round_trip() {
        let mut s = SystemState::rested([0.1, 0.2]);
        s.fatigue[2] = FatigueState::new(0.5, 0.3, 0.2);
        let x = s.to_array();
        assert_eq!(x[10..13], [0.5, 0.3, 0.2]);
        assert_eq!(SystemState::from_slice(&x).unwrap(), s);
    }

    #[test]
    fn task_nodes_alternate() {
        let spec = OcpSpec::default().with_cycles(2);
        let t = spec.task_nodes();
        assert_eq!(t.iter().map(|p| p.0).collect::<Vec<_>>(), vec![15, 30, 45, 60]);
        assert_eq!(t[0].1, spec.elbow_high);
        assert_eq!(t[1].1, spec.elbow_low);
    }

    #[test]
    fn spec_validation() {
        assert!(OcpSpec::default().validate().is_ok());
        let bad = OcpSpec {
            nodes_per_cycle: 8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OcpSpec {
            elbow_low: 2.0,
            elbow_high: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(OcpSpec::default().with_cycles(0).validate().is_err());
    }

    #[test]
    fn cost_kind_parsing() {
        for k in CostKind::ALL {
            assert_eq!(k.as_str().parse::<CostKind>().unwrap(), k);
        }
        assert!("fatigue".parse::<CostKind>().is_err());
    }
}
