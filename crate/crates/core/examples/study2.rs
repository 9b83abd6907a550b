use fatigue_ocp::studies::{run_study2, Study2Config};

fn main() -> fatigue_ocp::Result<()> {
    for c in run_study2(&Study2Config::default())? {
        println!(
            "S={:>4} mr0={:.4}  settle={:?}\n             first={:?}\n             |d|={:.3e} {:.3e} {:.3e} late={:.2e} reversals={} diverged={}",
            c.stabilization,
            c.initial_rest,
            c.crossings,
            c.first_crossings,
            c.final_abs_diff[0],
            c.final_abs_diff[1],
            c.final_abs_diff[2],
            c.late_max_defect,
            c.reversals,
            c.diverged
        );
    }
    Ok(())
}
