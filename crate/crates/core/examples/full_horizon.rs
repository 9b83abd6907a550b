//! Largest number of repetitions a single OCP can still solve: K = 1, 2, …
//! until a solve fails, each warm-started from the previous solution with
//! its last cycle duplicated. Takes several minutes.
//!
//! Usage: `full_horizon [cost] [off]`; `off` disables the stabilizer.

use fatigue_ocp::arm::ArmModel;
use fatigue_ocp::horizon::{analyze_run, run_full_horizon, ProtocolConfig};
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
    let run = run_full_horizon(&spec, &model, &ProtocolConfig::default())?;

    for a in &run.attempts {
        println!(
            "K = {:2}: {} in {} iterations, {:.1?}",
            a.cycles, a.status, a.iterations, a.wall_time
        );
    }
    println!("max K = {}", run.max_cycles);

    let analysis = analyze_run(&run.trajectory, &spec.with_cycles(run.max_cycles), &model)?;
    for c in &analysis.cycles {
        println!(
            "cycle {:2}: weighted cost {:.4e}, el+ fatigue {:.4}",
            c.cycle, c.weighted, c.end_fatigue[2].mf
        );
    }
    println!(
        "final invariant {:?}, continuity defect {:.1e}",
        analysis.final_invariant, analysis.max_continuity_defect
    );
    Ok(())
}
