//! Sliding 3-cycle window: solve, keep the first cycle, shift, repeat until
//! a window fails. Takes a few minutes.
//!
//! Usage: `sliding_horizon [cost] [off]`; `off` disables the stabilizer.

use fatigue_ocp::arm::ArmModel;
use fatigue_ocp::horizon::{analyze_run, run_sliding_horizon, ProtocolConfig};
use fatigue_ocp::transcription::OcpSpec;

fn main() -> fatigue_ocp::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let cost = args.next().as_deref().unwrap_or("mf_tau").parse()?;
    let spec = OcpSpec {
        cost,
        stabilizer_enabled: args.next().as_deref() != Some("off"),
        ..Default::default()
    };
    let model = ArmModel::default();
    let run = run_sliding_horizon(&spec, &model, &ProtocolConfig::default())?;

    for w in &run.windows {
        println!(
            "window {:2}: {} iterations, objective {:.4e}, {:.1?}",
            w.index, w.record.iterations, w.record.objective, w.record.wall_time
        );
    }
    if let Some(f) = &run.failure {
        println!("stopped: {} after {} iterations", f.status, f.iterations);
    }
    println!("{} repetitions", run.repetitions);

    let analysis = analyze_run(&run.trajectory, &spec.with_cycles(run.repetitions), &model)?;
    println!(
        "{:>5} {:>10} {:>10} {:>12}",
        "cycle", "sh+ limit", "el+ limit", "shoulder"
    );
    for (c, lim) in analysis.cycles.iter().zip(analysis.flexion_limits()) {
        println!(
            "{:5} {:10.3} {:10.3} {:12.3e}",
            c.cycle, lim[0], lim[1], c.terms.shoulder
        );
    }
    println!("final invariant {:?}", analysis.final_invariant);
    Ok(())
}
