use serde::Serialize;

use super::{Actuator, ControlVec, OcpSpec, StateVec};
use crate::error::{Error, Result};

/// Unweighted integrals of the cost terms over some stretch of the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostTerms {
    /// `∫ q0²`
    pub shoulder: f64,
    /// `∫ Σ (Δτ)²`, torque change between consecutive intervals.
    pub torque_rate: f64,
    /// `∫ Σ τ²`
    pub torque: f64,
    /// `∫ Σ mf²` over the two flexors.
    pub fatigue_flexion: f64,
    /// `∫ Σ mf²` over the two extensors.
    pub fatigue_extension: f64,
}

impl CostTerms {
    fn add(&mut self, o: &CostTerms) {
        self.shoulder += o.shoulder;
        self.torque_rate += o.torque_rate;
        self.torque += o.torque;
        self.fatigue_flexion += o.fatigue_flexion;
        self.fatigue_extension += o.fatigue_extension;
    }

    pub fn fatigue(&self) -> f64 {
        self.fatigue_flexion + self.fatigue_extension
    }

    /// Weighted sum of the terms `spec.cost` includes.
    pub fn weighted(&self, spec: &OcpSpec) -> f64 {
        let w = &spec.weights;
        let mut f = w.shoulder * self.shoulder + w.torque_rate * self.torque_rate;
        if spec.cost.penalizes_fatigue() {
            f += w.fatigue * self.fatigue();
        }
        if spec.cost.penalizes_torque() {
            f += w.torque * self.torque;
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub per_cycle: Vec<CostTerms>,
    pub total: CostTerms,
    /// Weighted objective, equal to the NLP objective at the same point.
    pub objective: f64,
}

/// Cost terms of a trajectory, split by cycle.
///
/// `states` may hold one more entry than `controls`; only the first
/// `controls.len()` are used. `previous` is the control applied just before
/// the first interval, if any, so that the torque-rate term carries over
/// across windows.
pub fn evaluate_cost(
    spec: &OcpSpec,
    states: &[StateVec],
    controls: &[ControlVec],
    previous: Option<&ControlVec>,
) -> Result<CostReport> {
    let nc = spec.nodes_per_cycle;
    if states.len() < controls.len() || !controls.len().is_multiple_of(nc) {
        return Err(Error::Spec(format!(
            "{} states and {} controls do not form whole cycles of {nc} intervals",
            states.len(),
            controls.len()
        )));
    }
    let dt = spec.dt();
    let mut per_cycle = vec![CostTerms::default(); controls.len() / nc];
    for (n, (x, u)) in states.iter().zip(controls).enumerate() {
        let t = &mut per_cycle[n / nc];
        t.shoulder += dt * x[0] * x[0];
        t.torque += dt * u.iter().map(|v| v * v).sum::<f64>();
        let prev = if n == 0 { previous } else { Some(&controls[n - 1]) };
        if let Some(p) = prev {
            t.torque_rate += dt * u.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        for a in Actuator::ALL {
            let mf = x[a.state_offset() + 2];
            if a.is_flexion() {
                t.fatigue_flexion += dt * mf * mf;
            } else {
                t.fatigue_extension += dt * mf * mf;
            }
        }
    }
    let mut total = CostTerms::default();
    per_cycle.iter().for_each(|c| total.add(c));
    Ok(CostReport {
        objective: total.weighted(spec),
        per_cycle,
        total,
    })
}
