//! Constant-load isometric contraction with and without the stabilizer.
//!
//! With a consistent initial state the stabilizing term is zero and both
//! integrations must agree to integrator precision.

use fatigue_ocp::studies::{run_study1, Study1Config, STATE_NAMES};

fn main() -> fatigue_ocp::Result<()> {
    let cfg = Study1Config::default();
    let start = std::time::Instant::now();
    let rep = run_study1(&cfg)?;
    println!(
        "{} and {} accepted steps over {} s",
        rep.plain.len(),
        rep.stabilized.len(),
        cfg.ivp.t_span.1
    );
    for (i, name) in STATE_NAMES.iter().enumerate() {
        println!(
            "{name}: rmse {:.2e}, final |d| {:.2e}",
            rep.rmse[i], rep.final_abs_diff[i]
        );
    }
    println!("sum: rmse {:.2e}", rep.rmse_sum);
    let last = rep.stabilized.last_state();
    println!("final (mr, ma, mf) = ({:.4}, {:.4}, {:.4})", last[0], last[1], last[2]);
    println!("took {:.1?}", start.elapsed());
    Ok(())
}
