use nalgebra::{SMatrix, Vector2};

use super::{Actuator, ControlVec, OcpSpec, StateVec, SystemState, CONTROL_DIM, STATE_DIM};
use crate::arm::{ArmModel, ArmState};
use crate::error::{Error, Result};
use crate::fatigue::{derivative, derivative_jacobian, FatigueState};

const NZ: usize = STATE_DIM + CONTROL_DIM;

pub(super) type StateJacobian = SMatrix<f64, STATE_DIM, NZ>;

/// Target load of each actuator, [`Actuator::ALL`] order.
pub fn torque_activation(u: &ControlVec, spec: &OcpSpec) -> [f64; 4] {
    Actuator::ALL.map(|a| u[a.control_index()] / a.limit(&spec.limits))
}

fn net_torque(u: &ControlVec) -> Vector2<f64> {
    Vector2::new(u[0] + u[2], u[1] + u[3])
}

fn arm_state(x: &StateVec) -> ArmState {
    ArmState::new([x[0], x[1]], [x[2], x[3]])
}

fn fatigue_state(x: &StateVec, a: Actuator) -> FatigueState {
    let o = a.state_offset();
    FatigueState::new(x[o], x[o + 1], x[o + 2])
}

pub(super) fn rhs(x: &StateVec, u: &ControlVec, model: &ArmModel, spec: &OcpSpec) -> Result<StateVec> {
    let qdd = model.forward_dynamics(&arm_state(x), &net_torque(u))?;
    let tl = torque_activation(u, spec);
    let mut dx = [0.0; STATE_DIM];
    dx[0] = x[2];
    dx[1] = x[3];
    dx[2] = qdd[0];
    dx[3] = qdd[1];
    for a in Actuator::ALL {
        let p = &spec.fatigue[a.index()];
        let d = derivative(&fatigue_state(x, a), tl[a.index()], p, spec.stabilizer_enabled);
        let o = a.state_offset();
        dx[o..o + 3].copy_from_slice(&d.to_array());
    }
    Ok(dx)
}

/// `(f, ∂f/∂(x, u))`.
fn rhs_jacobian(x: &StateVec, u: &ControlVec, model: &ArmModel, spec: &OcpSpec) -> Result<(StateVec, StateJacobian)> {
    let fd = model.forward_dynamics_jacobian(&arm_state(x), &net_torque(u))?;
    let tl = torque_activation(u, spec);
    let mut dx = [0.0; STATE_DIM];
    let mut j = StateJacobian::zeros();
    dx[0] = x[2];
    dx[1] = x[3];
    dx[2] = fd.qddot[0];
    dx[3] = fd.qddot[1];
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    for r in 0..2 {
        for c in 0..2 {
            j[(2 + r, c)] = fd.d_q[(r, c)];
            j[(2 + r, 2 + c)] = fd.d_qdot[(r, c)];
            // joint torque c is the sum of controls c and c + 2
            j[(2 + r, STATE_DIM + c)] = fd.d_tau[(r, c)];
            j[(2 + r, STATE_DIM + c + 2)] = fd.d_tau[(r, c)];
        }
    }
    for a in Actuator::ALL {
        let p = &spec.fatigue[a.index()];
        let m = fatigue_state(x, a);
        let tl_a = tl[a.index()];
        let d = derivative(&m, tl_a, p, spec.stabilizer_enabled);
        let (ds, dtl) = derivative_jacobian(&m, tl_a, p, spec.stabilizer_enabled);
        let o = a.state_offset();
        let uc = STATE_DIM + a.control_index();
        let inv_limit = 1.0 / a.limit(&spec.limits);
        dx[o..o + 3].copy_from_slice(&d.to_array());
        for r in 0..3 {
            for c in 0..3 {
                j[(o + r, o + c)] = ds[r][c];
            }
            j[(o + r, uc)] = dtl[r] * inv_limit;
        }
    }
    Ok((dx, j))
}

/// `d/dt` of the system state under constant controls `u`: the arm's
/// forward dynamics driven by the net joint torques, and each actuator's
/// fatigue dynamics with its activation ratio as target load.
pub fn coupled_dynamics(s: &SystemState, u: &ControlVec, model: &ArmModel, spec: &OcpSpec) -> Result<SystemState> {
    SystemState::from_slice(&rhs(&s.to_array(), u, model, spec)?)
}

fn axpy(y: &StateVec, h: f64, k: &StateVec) -> StateVec {
    let mut out = *y;
    for i in 0..STATE_DIM {
        out[i] += h * k[i];
    }
    out
}

fn check(x: &StateVec, node: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::EvaluationFailure {
            what: "shooting integration",
            node: Some(node),
        })
    }
}

fn tag(e: Error, node: usize) -> Error {
    match e {
        Error::SingularMass { .. } | Error::EvaluationFailure { .. } => Error::EvaluationFailure {
            what: "system dynamics",
            node: Some(node),
        },
        other => other,
    }
}

/// One shooting interval: classical RK4 over `spec.dt()` in
/// `spec.rk4_substeps` steps. `node` only labels errors.
pub fn shoot(x: &StateVec, u: &ControlVec, model: &ArmModel, spec: &OcpSpec, node: usize) -> Result<StateVec> {
    let h = spec.dt() / spec.rk4_substeps as f64;
    let f = |y: &StateVec| rhs(y, u, model, spec).map_err(|e| tag(e, node));
    let mut y = *x;
    for _ in 0..spec.rk4_substeps {
        let k1 = f(&y)?;
        let k2 = f(&axpy(&y, 0.5 * h, &k1))?;
        let k3 = f(&axpy(&y, 0.5 * h, &k2))?;
        let k4 = f(&axpy(&y, h, &k3))?;
        for i in 0..STATE_DIM {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    check(&y, node)?;
    Ok(y)
}

/// [`shoot`] together with `∂x⁺/∂(x, u)`, propagated exactly through the
/// RK4 stages. The state update is the same floating-point sequence as in
/// [`shoot`].
pub(super) fn shoot_sensitivity(
    x: &StateVec,
    u: &ControlVec,
    model: &ArmModel,
    spec: &OcpSpec,
    node: usize,
) -> Result<(StateVec, StateJacobian)> {
    let h = spec.dt() / spec.rk4_substeps as f64;
    let f = |y: &StateVec| rhs_jacobian(y, u, model, spec).map_err(|e| tag(e, node));
    // d(stage)/dz = Jx · dY/dz + Ju, with dU/dz = [0 | I].
    let stage = |j: &StateJacobian, dy: &StateJacobian| -> StateJacobian {
        let jx = j.fixed_view::<STATE_DIM, STATE_DIM>(0, 0);
        let mut out = jx * dy;
        let mut tail = out.fixed_view_mut::<STATE_DIM, CONTROL_DIM>(0, STATE_DIM);
        tail += j.fixed_view::<STATE_DIM, CONTROL_DIM>(0, STATE_DIM);
        out
    };
    let mut y = *x;
    let mut dy = StateJacobian::zeros();
    for i in 0..STATE_DIM {
        dy[(i, i)] = 1.0;
    }
    for _ in 0..spec.rk4_substeps {
        let (k1, j1) = f(&y)?;
        let y2 = axpy(&y, 0.5 * h, &k1);
        let d1 = stage(&j1, &dy);
        let (k2, j2) = f(&y2)?;
        let d2 = stage(&j2, &(dy + d1 * (0.5 * h)));
        let y3 = axpy(&y, 0.5 * h, &k2);
        let (k3, j3) = f(&y3)?;
        let d3 = stage(&j3, &(dy + d2 * (0.5 * h)));
        let y4 = axpy(&y, h, &k3);
        let (k4, j4) = f(&y4)?;
        let d4 = stage(&j4, &(dy + d3 * h));
        for i in 0..STATE_DIM {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        dy += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (h / 6.0);
    }
    check(&y, node)?;
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure {
            what: "shooting sensitivity",
            node: Some(node),
        });
    }
    Ok((y, dy))
}

/// Forward RK4 rollout of `controls` from `x0` on the shooting grid.
pub fn simulate_controls(
    x0: &StateVec,
    controls: &[ControlVec],
    model: &ArmModel,
    spec: &OcpSpec,
) -> Result<Vec<StateVec>> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*x0);
    for (n, u) in controls.iter().enumerate() {
        let next = shoot(&out[n], u, model, spec, n)?;
        out.push(next);
    }
    Ok(out)
}
