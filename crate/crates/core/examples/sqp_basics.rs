//! The SQP solver on two small problems: a bound-constrained Rosenbrock
//! valley and a nonlinear equality on the unit circle.

use fatigue_ocp::nlp::{solve, DenseNlp, HessianMode, SolverConfig};

fn main() -> fatigue_ocp::Result<()> {
    let rosen = DenseNlp::new(
        2,
        |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
        |x, g| {
            g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
        },
    )
    .bounds(vec![-2.0, -2.0], vec![0.8, 2.0]);

    // min x + y  s.t.  x² + y² = 1
    let circle = DenseNlp::new(2, |x| x[0] + x[1], |_, g| g.copy_from_slice(&[1.0, 1.0])).constraints(
        vec![1.0],
        vec![1.0],
        |x, c| c[0] = x[0] * x[0] + x[1] * x[1],
        |x, j| j.copy_from_slice(&[2.0 * x[0], 2.0 * x[1]]),
    );

    for hessian in [HessianMode::DampedBfgs, HessianMode::FiniteDifference] {
        let cfg = SolverConfig {
            hessian,
            ..Default::default()
        };
        let a = solve(&rosen, &[-1.2, 1.0], &cfg)?;
        let b = solve(&circle, &[1.0, 0.2], &cfg)?;
        println!("{hessian:?}");
        println!(
            "  rosenbrock: {} in {} iterations, x = ({:.6}, {:.6})",
            a.status, a.iterations, a.x[0], a.x[1]
        );
        println!(
            "  circle:     {} in {} iterations, x = ({:.6}, {:.6}), expected {:.6}",
            b.status,
            b.iterations,
            b.x[0],
            b.x[1],
            -std::f64::consts::FRAC_1_SQRT_2
        );
    }
    Ok(())
}
