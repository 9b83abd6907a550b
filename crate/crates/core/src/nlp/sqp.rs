use std::cell::Cell;
use std::time::{Duration, Instant};

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpInput, QpOutcome, QpRows, QpStep};
use super::{
    l1_violation, max_violation, HessianMode, IterationRecord, NlpProblem, NlpSolution, SolveStatus, SolverConfig,
};
use crate::error::{Error, Result};

/// Armijo constant of the merit line search.
const ARMIJO: f64 = 1e-4;
/// Shift added to the QP Hessian diagonal.
const HESSIAN_SHIFT: f64 = 1e-8;
const MIN_STEP: f64 = 1e-10;

struct Block {
    idx: Vec<usize>,
    b: DMatrix<f64>,
    fresh: bool,
}

impl Block {
    fn reset(&mut self) {
        self.b = DMatrix::identity(self.idx.len(), self.idx.len());
        self.fresh = true;
    }

    /// Powell-damped BFGS update; the first accepted pair also rescales
    /// the identity start.
    fn update(&mut self, s: &DVector<f64>, y: &DVector<f64>) {
        let ss = s.dot(s);
        if ss <= f64::EPSILON * f64::EPSILON {
            return;
        }
        let sy = s.dot(y);
        if self.fresh && sy > 0.0 {
            let scale = (y.dot(y) / sy).clamp(1e-6, 1e8);
            self.b = DMatrix::identity(s.len(), s.len()) * scale;
        }
        self.fresh = false;
        let bs = &self.b * s;
        let sbs = s.dot(&bs);
        if sbs <= 0.0 {
            return;
        }
        let r = if sy < 0.2 * sbs {
            let theta = 0.8 * sbs / (sbs - sy);
            y * theta + &bs * (1.0 - theta)
        } else {
            y.clone()
        };
        let sr = s.dot(&r);
        if sr <= 0.0 {
            return;
        }
        self.b -= &bs * bs.transpose() / sbs;
        self.b += &r * r.transpose() / sr;
    }
}

/// Current iterate with first-order information.
struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    c: Vec<f64>,
    jv: Vec<f64>,
}

struct Problem<'a, P: NlpProblem + ?Sized> {
    p: &'a P,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cl: Vec<f64>,
    cu: Vec<f64>,
    js: Vec<(usize, usize)>,
    hq: Vec<(usize, usize, f64)>,
}

impl<P: NlpProblem + ?Sized> Problem<'_, P> {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lb).zip(&self.ub) {
            *v = v.clamp(l, u);
        }
    }

    fn eval(&self, x: Vec<f64>) -> Result<Point> {
        let f = self.p.objective(&x)?;
        let mut g = vec![0.0; x.len()];
        self.p.gradient(&x, &mut g)?;
        let mut c = vec![0.0; self.cl.len()];
        let mut jv = vec![0.0; self.js.len()];
        self.p.constraints_and_jacobian(&x, &mut c, &mut jv)?;
        check_finite(f, &g, &c, &jv)?;
        Ok(Point { x, f, g, c, jv })
    }

    fn eval_trial(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f = self.p.objective(x)?;
        let mut c = vec![0.0; self.cl.len()];
        self.p.constraints(x, &mut c)?;
        check_finite(f, &[], &c, &[])?;
        Ok((f, c))
    }

    /// `y += Jᵀλ`.
    fn add_jt(&self, jv: &[f64], lambda: &[f64], y: &mut [f64]) {
        for (&(r, c), v) in self.js.iter().zip(jv) {
            y[c] += v * lambda[r];
        }
    }

    /// `y -= H_q x`.
    fn sub_hq(&self, x: &[f64], y: &mut [f64]) {
        for &(i, j, v) in &self.hq {
            y[i] -= v * x[j];
            if i != j {
                y[j] -= v * x[i];
            }
        }
    }

    /// Gradient of the Lagrangian without its quadratic objective part.
    fn curvature_gradient(&self, pt: &Point, lambda: &[f64]) -> Vec<f64> {
        let mut y = pt.g.clone();
        self.add_jt(&pt.jv, lambda, &mut y);
        self.sub_hq(&pt.x, &mut y);
        y
    }

    /// `‖x − Π(x − ∇L)‖∞ / max(1, ‖∇f‖∞)`.
    fn stationarity(&self, pt: &Point, lambda: &[f64]) -> f64 {
        let mut gl = pt.g.clone();
        self.add_jt(&pt.jv, lambda, &mut gl);
        let scale = pt.g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let r =
            pt.x.iter()
                .zip(&gl)
                .zip(self.lb.iter().zip(&self.ub))
                .map(|((&x, &g), (&l, &u))| (x - (x - g).clamp(l, u)).abs())
                .fold(0.0, f64::max);
        r / scale
    }

    fn qp_input<'b>(&'b self, pt: &'b Point, p: &'b [(usize, usize, f64)], c: &'b [f64]) -> QpInput<'b> {
        QpInput {
            p,
            g: &pt.g,
            jac_structure: &self.js,
            jac_values: &pt.jv,
            c,
            cl: &self.cl,
            cu: &self.cu,
            x: &pt.x,
            lb: &self.lb,
            ub: &self.ub,
        }
    }

    /// Finite-difference curvature blocks at `pt`, one shared perturbation
    /// per column index.
    fn fd_blocks(&self, pt: &Point, lambda: &[f64], blocks: &mut [Block]) -> Result<()> {
        let base = self.curvature_gradient(pt, lambda);
        let width = blocks.iter().map(|b| b.idx.len()).max().unwrap_or(0);
        let mut cols = blocks
            .iter()
            .map(|b| DMatrix::zeros(b.idx.len(), b.idx.len()))
            .collect::<Vec<_>>();
        for j in 0..width {
            let mut x = pt.x.clone();
            let mut steps = vec![0.0; blocks.len()];
            for (k, b) in blocks.iter().enumerate() {
                if let Some(&i) = b.idx.get(j) {
                    steps[k] = 1e-7 * x[i].abs().max(1.0);
                    x[i] += steps[k];
                }
            }
            let shifted = self.eval(x)?;
            let grad = self.curvature_gradient(&shifted, lambda);
            for (k, b) in blocks.iter().enumerate() {
                if j < b.idx.len() {
                    for (r, &i) in b.idx.iter().enumerate() {
                        cols[k][(r, j)] = (grad[i] - base[i]) / steps[k];
                    }
                }
            }
        }
        for (b, h) in blocks.iter_mut().zip(cols) {
            let sym = (&h + h.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let top = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let floor = 1e-8 * top;
            let vals = eig.eigenvalues.map(|v| v.max(floor));
            b.b = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
            b.fresh = false;
        }
        Ok(())
    }
}

fn timed<T>(acc: &Cell<Duration>, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    acc.set(acc.get() + t.elapsed());
    out
}

fn check_finite(f: f64, g: &[f64], c: &[f64], jv: &[f64]) -> Result<()> {
    let bad = |v: &[f64]| v.iter().any(|x| !x.is_finite());
    if !f.is_finite() {
        return Err(Error::EvaluationFailure {
            what: "objective",
            node: None,
        });
    }
    if bad(g) {
        return Err(Error::EvaluationFailure {
            what: "gradient",
            node: None,
        });
    }
    if bad(c) {
        return Err(Error::EvaluationFailure {
            what: "constraints",
            node: None,
        });
    }
    if bad(jv) {
        return Err(Error::EvaluationFailure {
            what: "jacobian",
            node: None,
        });
    }
    Ok(())
}

fn hessian_triplets(hq: &[(usize, usize, f64)], blocks: &[Block], n: usize) -> Vec<(usize, usize, f64)> {
    let mut t = hq.to_vec();
    for b in blocks {
        for (r, &i) in b.idx.iter().enumerate() {
            for (c, &j) in b.idx.iter().enumerate() {
                if i <= j {
                    t.push((i, j, b.b[(r, c)]));
                }
            }
        }
    }
    t.extend((0..n).map(|i| (i, i, HESSIAN_SHIFT)));
    t
}

fn quad_form(p: &[(usize, usize, f64)], d: &[f64]) -> f64 {
    p.iter()
        .map(|&(i, j, v)| if i == j { v * d[i] * d[i] } else { 2.0 * v * d[i] * d[j] })
        .sum()
}

/// Solves `p` from `x0` (clamped into the variable bounds).
///
/// Returns an error only when the starting point cannot be evaluated or the
/// input is inconsistent; every other outcome is reported through
/// [`NlpSolution::status`].
pub fn solve<P: NlpProblem + ?Sized>(p: &P, x0: &[f64], cfg: &SolverConfig) -> Result<NlpSolution> {
    cfg.validate()?;
    let start = Instant::now();
    let n = p.num_vars();
    let m = p.num_constraints();
    if x0.len() != n {
        return Err(Error::Spec(format!(
            "initial guess has {} entries, problem has {n}",
            x0.len()
        )));
    }
    let (lb, ub) = p.variable_bounds();
    let (cl, cu) = p.constraint_bounds();
    if lb.len() != n || ub.len() != n || cl.len() != m || cu.len() != m {
        return Err(Error::Spec("bound vectors do not match problem dimensions".into()));
    }
    let prob = Problem {
        p,
        js: p.jacobian_structure(),
        hq: p.quadratic_hessian(),
        lb,
        ub,
        cl,
        cu,
    };
    let rows = QpRows::new(&prob.lb, &prob.ub, &prob.cl, &prob.cu);
    let mut blocks: Vec<Block> = p
        .curvature_blocks()
        .into_iter()
        .filter(|idx| !idx.is_empty())
        .map(|idx| {
            let k = idx.len();
            Block {
                idx,
                b: DMatrix::identity(k, k),
                fresh: true,
            }
        })
        .collect();

    let mut x = x0.to_vec();
    prob.clamp(&mut x);
    let mut pt = prob.eval(x)?;
    let mut lambda = vec![0.0; m];
    let mut rho = 1.0f64;
    let mut best_violation = f64::INFINITY;
    let mut stall = 0usize;
    let mut ls_failures = 0usize;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let qp_time = Cell::new(Duration::ZERO);
    let hess_time = Cell::new(Duration::ZERO);

    for iter in 0..cfg.max_iter {
        iterations = iter;
        let viol = max_violation(&pt.c, &prob.cl, &prob.cu);
        let stat = prob.stationarity(&pt, &lambda);
        if viol <= cfg.tol_con && stat <= cfg.tol_opt {
            status = SolveStatus::Converged;
            break;
        }
        if viol > cfg.tol_con {
            if viol < 0.99 * best_violation {
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= cfg.stall_iterations {
                status = SolveStatus::Infeasible;
                break;
            }
        } else {
            stall = 0;
        }
        best_violation = best_violation.min(viol);

        if cfg.hessian == HessianMode::FiniteDifference {
            timed(&hess_time, || prob.fd_blocks(&pt, &lambda, &mut blocks))?;
        }
        let hess = hessian_triplets(&prob.hq, &blocks, n);
        let v1 = l1_violation(&pt.c, &prob.cl, &prob.cu);
        let gnorm = pt.g.iter().fold(1.0f64, |a, v| a.max(v.abs()));

        let (step, elastic) = match timed(&qp_time, || solve_qp(&rows, &prob.qp_input(&pt, &hess, &pt.c), None)) {
            Ok(QpOutcome::Solved(s)) => (Some(s), false),
            Ok(QpOutcome::Infeasible) | Err(Error::Qp(_)) => {
                let penalty = 1e3 * rho.max(gnorm);
                match timed(&qp_time, || {
                    solve_qp(&rows, &prob.qp_input(&pt, &hess, &pt.c), Some(penalty))
                }) {
                    Ok(QpOutcome::Solved(s)) => (Some(s), true),
                    _ => (None, true),
                }
            }
            Err(e) => return Err(e),
        };
        let Some(QpStep {
            d,
            lambda: lambda_qp,
            slack,
        }) = step
        else {
            status = if viol > cfg.tol_con {
                SolveStatus::Infeasible
            } else {
                SolveStatus::Diverged
            };
            break;
        };

        // Penalty large enough for the QP multipliers and for descent.
        let lam_max = lambda_qp.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let gd: f64 = pt.g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let dbd = quad_form(&hess, &d).max(0.0);
        let model_drop = v1 - if elastic { slack } else { 0.0 };
        let mut required = 1.1 * lam_max;
        if model_drop > 1e-12 * (1.0 + v1) {
            required = required.max((gd + 0.5 * dbd) / (0.5 * model_drop));
        }
        if required > rho {
            rho = required.max(1.5 * rho);
        }
        let dir = gd - rho * model_drop;
        let merit0 = pt.f + rho * v1;
        let noise = 10.0 * f64::EPSILON * merit0.abs().max(1.0);

        let merit_at = |x: &[f64]| -> f64 {
            match prob.eval_trial(x) {
                Ok((f, c)) => f + rho * l1_violation(&c, &prob.cl, &prob.cu),
                Err(_) => f64::INFINITY,
            }
        };
        let trial = |alpha: f64, d: &[f64]| -> Vec<f64> {
            let mut xt: Vec<f64> = pt.x.iter().zip(d).map(|(x, d)| x + alpha * d).collect();
            prob.clamp(&mut xt);
            xt
        };

        let mut accepted: Option<(Vec<f64>, f64, f64)> = None;
        let mut alpha = 1.0;
        while alpha >= MIN_STEP {
            let xt = trial(alpha, &d);
            let mt = merit_at(&xt);
            if mt <= merit0 + ARMIJO * alpha * dir + noise {
                accepted = Some((xt, alpha, mt));
                break;
            }
            if alpha == 1.0 && !elastic {
                // Second-order correction against the Maratos effect.
                if let Ok((_, ct)) = prob.eval_trial(&xt) {
                    let jd = {
                        let mut jd = vec![0.0; m];
                        for (&(r, c), v) in prob.js.iter().zip(&pt.jv) {
                            jd[r] += v * d[c];
                        }
                        jd
                    };
                    let shifted: Vec<f64> = ct.iter().zip(&jd).map(|(c, j)| c - j).collect();
                    if let Ok(QpOutcome::Solved(soc)) =
                        timed(&qp_time, || solve_qp(&rows, &prob.qp_input(&pt, &hess, &shifted), None))
                    {
                        let xs = trial(1.0, &soc.d);
                        let ms = merit_at(&xs);
                        if ms <= merit0 + ARMIJO * dir + noise {
                            accepted = Some((xs, 1.0, ms));
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }

        let mut record = IterationRecord {
            iter,
            objective: pt.f,
            violation: viol,
            stationarity: stat,
            step: 0.0,
            penalty: rho,
            merit_before: merit0,
            merit_after: merit0,
        };
        match accepted {
            None => {
                ls_failures += 1;
                debug!("{iter:5} {:.10e} {viol:.3e} line search failed", pt.f);
                history.push(record);
                if ls_failures >= cfg.max_line_search_failures {
                    status = if viol > cfg.tol_con {
                        SolveStatus::Infeasible
                    } else {
                        SolveStatus::Diverged
                    };
                    break;
                }
                blocks.iter_mut().for_each(Block::reset);
                continue;
            }
            Some((xn, alpha, mt)) => {
                ls_failures = 0;
                record.step = alpha;
                record.merit_after = mt;
                debug!(
                    "{iter:5} {:.10e} {viol:.3e} {alpha:.3e} stat {stat:.3e} |d| {:.3e} rho {rho:.3e}{}",
                    pt.f,
                    d.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                    if elastic { " elastic" } else { "" }
                );
                history.push(record);
                let new = match prob.eval(xn) {
                    Ok(new) => new,
                    Err(e @ Error::EvaluationFailure { .. }) => {
                        status = SolveStatus::Diverged;
                        debug!("evaluation failed after accepted step: {e}");
                        break;
                    }
                    Err(e) => return Err(e),
                };
                if cfg.hessian == HessianMode::DampedBfgs {
                    let g_old = prob.curvature_gradient(&pt, &lambda_qp);
                    let g_new = prob.curvature_gradient(&new, &lambda_qp);
                    for b in blocks.iter_mut() {
                        let s = DVector::from_iterator(b.idx.len(), b.idx.iter().map(|&i| new.x[i] - pt.x[i]));
                        let y = DVector::from_iterator(b.idx.len(), b.idx.iter().map(|&i| g_new[i] - g_old[i]));
                        b.update(&s, &y);
                    }
                }
                pt = new;
                lambda = lambda_qp;
            }
        }
        iterations = iter + 1;
    }

    let max_violation = max_violation(&pt.c, &prob.cl, &prob.cu);
    let stationarity = prob.stationarity(&pt, &lambda);
    debug!(
        "sqp {status} after {iterations} iterations: f = {:.10e}, violation = {max_violation:.3e}, stationarity = {stationarity:.3e}, qp {:?}, hessian {:?}, total {:?}",
        pt.f,
        qp_time.get(),
        hess_time.get(),
        start.elapsed()
    );
    Ok(NlpSolution {
        status,
        objective: pt.f,
        x: pt.x,
        max_violation,
        stationarity,
        iterations,
        wall_time: start.elapsed(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::super::DenseNlp;
    use super::*;

    fn rosenbrock() -> DenseNlp<'static> {
        DenseNlp::new(
            2,
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            |x, g| {
                g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
                g[1] = 200.0 * (x[1] - x[0] * x[0]);
            },
        )
    }

    #[test]
    fn clipped_quadratic() {
        let p =
            DenseNlp::new(1, |x| (x[0] - 3.0).powi(2), |x, g| g[0] = 2.0 * (x[0] - 3.0)).bounds(vec![0.0], vec![2.0]);
        let sol = solve(&p, &[0.5], &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!((sol.x[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        for mode in [HessianMode::DampedBfgs, HessianMode::FiniteDifference] {
            let cfg = SolverConfig {
                hessian: mode,
                ..Default::default()
            };
            let sol = solve(&rosenbrock(), &[-1.2, 1.0], &cfg).unwrap();
            assert_eq!(sol.status, SolveStatus::Converged, "{mode:?}");
            assert!(
                (sol.x[0] - 1.0).abs() < 1e-6 && (sol.x[1] - 1.0).abs() < 1e-6,
                "{mode:?} {:?}",
                sol.x
            );
        }
    }

    #[test]
    fn merit_never_increases() {
        let p = rosenbrock().constraints(
            vec![f64::NEG_INFINITY],
            vec![1.5],
            |x, c| c[0] = x[0] * x[0] + x[1] * x[1],
            |x, j| {
                j[0] = 2.0 * x[0];
                j[1] = 2.0 * x[1];
            },
        );
        let sol = solve(&p, &[-1.2, 1.0], &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        for r in &sol.history {
            assert!(r.merit_after <= r.merit_before + 1e-12 * r.merit_before.abs().max(1.0));
        }
    }

    #[test]
    fn infeasible_constraints_are_reported() {
        // x² ≤ -1 has no solution
        let p = DenseNlp::new(1, |x| x[0] * x[0], |x, g| g[0] = 2.0 * x[0]).constraints(
            vec![f64::NEG_INFINITY],
            vec![-1.0],
            |x, c| c[0] = x[0] * x[0],
            |x, j| j[0] = 2.0 * x[0],
        );
        let sol = solve(&p, &[1.0], &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn deterministic_iterates() {
        let a = solve(&rosenbrock(), &[-1.2, 1.0], &SolverConfig::default()).unwrap();
        let b = solve(&rosenbrock(), &[-1.2, 1.0], &SolverConfig::default()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn non_finite_start_is_an_evaluation_failure() {
        let p = DenseNlp::new(1, |x| x[0].ln(), |x, g| g[0] = 1.0 / x[0]);
        let err = solve(&p, &[-1.0], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EvaluationFailure { .. }));
    }
}
