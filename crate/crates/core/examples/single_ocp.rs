//! One biceps-curl cycle solved by direct multiple shooting.
//!
//! Usage: `single_ocp [cost] [cycles]` with cost one of `mf_tau`, `mf`, `tau`.

use fatigue_ocp::arm::ArmModel;
use fatigue_ocp::horizon::initial_state;
use fatigue_ocp::nlp::{solve, HessianMode, NlpProblem, SolverConfig};
use fatigue_ocp::transcription::{build_nlp, evaluate_cost, Actuator, OcpSpec, OcpTrajectory};

fn main() -> fatigue_ocp::Result<()> {
    let mut args = std::env::args().skip(1);
    let cost = args.next().as_deref().unwrap_or("mf_tau").parse()?;
    let cycles = args.next().map_or(1, |s| s.parse().expect("cycle count"));
    let spec = OcpSpec {
        cost,
        cycles,
        ..Default::default()
    };
    let model = ArmModel::default();
    let x0 = initial_state(&spec);
    let nlp = build_nlp(&spec, &model, &x0)?;
    println!(
        "{} variables, {} constraints, {} Jacobian nonzeros",
        nlp.num_vars(),
        nlp.num_constraints(),
        nlp.jacobian_structure().len()
    );

    let guess = OcpTrajectory::constant(x0, spec.intervals());
    let z0 = nlp.layout().pack(&guess)?;
    let cfg = SolverConfig {
        hessian: HessianMode::FiniteDifference,
        ..Default::default()
    };
    let sol = solve(&nlp, &z0, &cfg)?;
    println!(
        "{} after {} iterations in {:.2?}: objective {:.6e}, violation {:.1e}",
        sol.status, sol.iterations, sol.wall_time, sol.objective, sol.max_violation
    );

    let traj = nlp.layout().unpack(&sol.x);
    let report = evaluate_cost(&spec, &traj.states, &traj.controls, None)?;
    for (k, terms) in report.per_cycle.iter().enumerate() {
        println!(
            "cycle {}: shoulder {:.3e}, torque {:.3e}, fatigue {:.3e}",
            k + 1,
            terms.shoulder,
            terms.torque,
            terms.fatigue()
        );
    }
    let elbow = Actuator::ElbowFlexion;
    println!("{:>6} {:>8} {:>8} {:>9} {:>7}", "t", "q0", "q1", "tau_el+", "mf_el+");
    for n in (0..=spec.intervals()).step_by(5) {
        let x = &traj.states[n];
        let tau = traj.controls.get(n).map_or(f64::NAN, |u| u[elbow.control_index()]);
        println!(
            "{:6.3} {:8.4} {:8.4} {:9.3} {:7.4}",
            n as f64 * spec.dt(),
            x[0],
            x[1],
            tau,
            x[elbow.state_offset() + 2]
        );
    }
    Ok(())
}
