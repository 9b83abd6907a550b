//! Unactuated arm released from a raised pose. Total mechanical energy must
//! stay constant; its drift measures the integration error.

use fatigue_ocp::arm::{ArmModel, ArmState};
use fatigue_ocp::integrate::{solve_ivp_rk45, IvpConfig};
use nalgebra::Vector2;

fn main() -> fatigue_ocp::Result<()> {
    let model = ArmModel::default();
    let s0 = ArmState::new([0.6, 1.2], [0.0, 0.0]);
    let e0 = model.total_energy(&s0);

    let rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
        let s = ArmState::new([x[0], x[1]], [x[2], x[3]]);
        let qddot = model
            .forward_dynamics(&s, &Vector2::zeros())
            .expect("mass matrix is positive definite");
        dx[0] = x[2];
        dx[1] = x[3];
        dx[2] = qddot[0];
        dx[3] = qddot[1];
    };
    let cfg = IvpConfig::new(0.0, 5.0).tolerances(1e-10, 1e-12);
    let traj = solve_ivp_rk45(rhs, &[0.6, 1.2, 0.0, 0.0], &cfg)?;

    println!("{:>6} {:>9} {:>9}", "t", "q0", "q1");
    for k in 0..=10 {
        let t = 0.5 * k as f64;
        let x = traj.interpolate(t);
        println!("{t:6.2} {:9.4} {:9.4}", x[0], x[1]);
    }
    let drift = traj
        .states
        .iter()
        .map(|x| (model.total_energy(&ArmState::new([x[0], x[1]], [x[2], x[3]])) - e0).abs())
        .fold(0.0, f64::max);
    println!("max energy drift over {} accepted steps: {drift:.2e} J", traj.len());
    let m = model.mass_matrix(&s0.q);
    println!("M(q0) eigenvalues: {:?}", m.symmetric_eigenvalues().as_slice());
    Ok(())
}
