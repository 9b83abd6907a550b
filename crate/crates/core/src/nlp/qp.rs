//! Convex QP subproblems, solved with Clarabel.
//!
//! For a step `d` from `x` the subproblem is
//!
//! ```text
//! min ½ dᵀPd + gᵀd   s.t.   cl ≤ c + Jd ≤ cu,   lb ≤ x + d ≤ ub
//! ```
//!
//! In elastic mode every constraint row gets two nonnegative slacks that
//! relax it, priced at `ρ` each, so the subproblem is always feasible.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT, ZeroConeT,
};

use crate::error::{Error, Result};

/// Which QP rows a constraint or variable bound maps to.
#[derive(Debug, Clone, Copy, Default)]
struct RowMap {
    eq: Option<usize>,
    up: Option<usize>,
    lo: Option<usize>,
}

/// Row layout of the subproblem, fixed by the bound pattern.
#[derive(Debug, Clone)]
pub(super) struct QpRows {
    n: usize,
    cons: Vec<RowMap>,
    vars: Vec<RowMap>,
    n_eq: usize,
    n_ineq: usize,
}

impl QpRows {
    pub fn new(lb: &[f64], ub: &[f64], cl: &[f64], cu: &[f64]) -> Self {
        let mut eq = 0;
        let mut ineq = 0;
        let mut assign = |l: f64, u: f64| {
            let mut r = RowMap::default();
            if l == u {
                r.eq = Some(eq);
                eq += 1;
            } else {
                if u.is_finite() {
                    r.up = Some(ineq);
                    ineq += 1;
                }
                if l.is_finite() {
                    r.lo = Some(ineq);
                    ineq += 1;
                }
            }
            r
        };
        let cons: Vec<RowMap> = cl.iter().zip(cu).map(|(&l, &u)| assign(l, u)).collect();
        let vars: Vec<RowMap> = lb.iter().zip(ub).map(|(&l, &u)| assign(l, u)).collect();
        // Inequality rows sit after all equality rows.
        let shift = |r: &mut RowMap| {
            r.up = r.up.map(|i| i + eq);
            r.lo = r.lo.map(|i| i + eq);
        };
        let (mut cons, mut vars) = (cons, vars);
        cons.iter_mut().for_each(shift);
        vars.iter_mut().for_each(shift);
        QpRows {
            n: lb.len(),
            cons,
            vars,
            n_eq: eq,
            n_ineq: ineq,
        }
    }
}

/// Data of one subproblem. `p` holds upper-triangle triplets.
pub(super) struct QpInput<'a> {
    pub p: &'a [(usize, usize, f64)],
    pub g: &'a [f64],
    pub jac_structure: &'a [(usize, usize)],
    pub jac_values: &'a [f64],
    /// Constraint values the linearization is taken around.
    pub c: &'a [f64],
    pub cl: &'a [f64],
    pub cu: &'a [f64],
    pub x: &'a [f64],
    pub lb: &'a [f64],
    pub ub: &'a [f64],
}

pub(super) struct QpStep {
    pub d: Vec<f64>,
    /// Constraint multipliers, positive when the upper bound is active.
    pub lambda: Vec<f64>,
    /// Sum of elastic slacks (0 outside elastic mode).
    pub slack: f64,
}

pub(super) enum QpOutcome {
    Solved(QpStep),
    Infeasible,
}

pub(super) fn solve_qp(rows: &QpRows, q: &QpInput<'_>, elastic: Option<f64>) -> Result<QpOutcome> {
    let n = rows.n;
    let m = rows.cons.len();
    let nv = if elastic.is_some() { n + 2 * m } else { n };
    let n_slack_rows = if elastic.is_some() { 2 * m } else { 0 };
    let n_rows = rows.n_eq + rows.n_ineq + n_slack_rows;

    let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
    for &(i, j, v) in q.p {
        pi.push(i.min(j));
        pj.push(i.max(j));
        pv.push(v);
    }
    let p = CscMatrix::new_from_triplets(nv, nv, pi, pj, pv);

    let mut lin = q.g.to_vec();
    if let Some(rho) = elastic {
        lin.resize(nv, rho);
    }

    let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = vec![0.0; n_rows];
    for (k, &(r, col)) in q.jac_structure.iter().enumerate() {
        let v = q.jac_values[k];
        let map = rows.cons[r];
        for (row, sign) in [(map.eq, 1.0), (map.up, 1.0), (map.lo, -1.0)] {
            if let Some(row) = row {
                ai.push(row);
                aj.push(col);
                av.push(sign * v);
            }
        }
    }
    for (r, map) in rows.cons.iter().enumerate() {
        let (c, l, u) = (q.c[r], q.cl[r], q.cu[r]);
        if let Some(row) = map.eq {
            b[row] = l - c;
        }
        if let Some(row) = map.up {
            b[row] = u - c;
        }
        if let Some(row) = map.lo {
            b[row] = c - l;
        }
        if elastic.is_some() {
            // c + Jd - p + s = target: p relaxes upward, s downward
            let (pp, ss) = (n + 2 * r, n + 2 * r + 1);
            if let Some(row) = map.eq {
                ai.extend([row, row]);
                aj.extend([pp, ss]);
                av.extend([-1.0, 1.0]);
            }
            if let Some(row) = map.up {
                ai.push(row);
                aj.push(pp);
                av.push(-1.0);
            }
            if let Some(row) = map.lo {
                ai.push(row);
                aj.push(ss);
                av.push(-1.0);
            }
        }
    }
    for (j, map) in rows.vars.iter().enumerate() {
        if let Some(row) = map.eq {
            ai.push(row);
            aj.push(j);
            av.push(1.0);
            b[row] = q.lb[j] - q.x[j];
        }
        if let Some(row) = map.up {
            ai.push(row);
            aj.push(j);
            av.push(1.0);
            b[row] = q.ub[j] - q.x[j];
        }
        if let Some(row) = map.lo {
            ai.push(row);
            aj.push(j);
            av.push(-1.0);
            b[row] = q.x[j] - q.lb[j];
        }
    }
    if elastic.is_some() {
        let base = rows.n_eq + rows.n_ineq;
        for k in 0..2 * m {
            ai.push(base + k);
            aj.push(n + k);
            av.push(-1.0);
        }
    }
    let a = CscMatrix::new_from_triplets(n_rows, nv, ai, aj, av);

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if rows.n_eq > 0 {
        cones.push(ZeroConeT(rows.n_eq));
    }
    if rows.n_ineq + n_slack_rows > 0 {
        cones.push(NonnegativeConeT(rows.n_ineq + n_slack_rows));
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .map_err(|e| Error::Qp(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &lin, &a, &b, &cones, settings).map_err(|e| Error::Qp(e.to_string()))?;
    solver.solve();
    log::trace!(
        "clarabel {:?} in {} iterations, {:?}",
        solver.solution.status,
        solver.info.iterations,
        solver.info.solve_time
    );
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => return Ok(QpOutcome::Infeasible),
        s => return Err(Error::Qp(format!("{s:?}"))),
    }
    if sol.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Qp("non-finite step".into()));
    }
    let z = &sol.z;
    let pick = |r: Option<usize>| r.map_or(0.0, |i| z[i]);
    let lambda = rows
        .cons
        .iter()
        .map(|map| pick(map.eq) + pick(map.up) - pick(map.lo))
        .collect();
    let slack = if elastic.is_some() {
        sol.x[n..].iter().map(|v| v.max(0.0)).sum()
    } else {
        0.0
    };
    Ok(QpOutcome::Solved(QpStep {
        d: sol.x[..n].to_vec(),
        lambda,
        slack,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_qp_and_multiplier_sign() {
        // min ½|d|² + (-1,-1)·d  s.t.  d0 + d1 = 1, from x = 0
        let rows = QpRows::new(&[-10.0; 2], &[10.0; 2], &[1.0], &[1.0]);
        let p = [(0, 0, 1.0), (1, 1, 1.0)];
        let q = QpInput {
            p: &p,
            g: &[-1.0, -1.0],
            jac_structure: &[(0, 0), (0, 1)],
            jac_values: &[1.0, 1.0],
            c: &[0.0],
            cl: &[1.0],
            cu: &[1.0],
            x: &[0.0, 0.0],
            lb: &[-10.0; 2],
            ub: &[10.0; 2],
        };
        let QpOutcome::Solved(s) = solve_qp(&rows, &q, None).unwrap() else {
            panic!("infeasible")
        };
        assert!((s.d[0] - 0.5).abs() < 1e-7 && (s.d[1] - 0.5).abs() < 1e-7);
        // d - 1 + λ = 0
        assert!((s.lambda[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn inconsistent_linearization_is_infeasible_then_elastic() {
        // d ≥ 1 from the constraint but d ≤ 0 from the bound
        let rows = QpRows::new(&[f64::NEG_INFINITY], &[0.0], &[1.0], &[f64::INFINITY]);
        let p = [(0, 0, 1.0)];
        let q = QpInput {
            p: &p,
            g: &[0.0],
            jac_structure: &[(0, 0)],
            jac_values: &[1.0],
            c: &[0.0],
            cl: &[1.0],
            cu: &[f64::INFINITY],
            x: &[0.0],
            lb: &[f64::NEG_INFINITY],
            ub: &[0.0],
        };
        assert!(matches!(solve_qp(&rows, &q, None).unwrap(), QpOutcome::Infeasible));
        let QpOutcome::Solved(s) = solve_qp(&rows, &q, Some(10.0)).unwrap() else {
            panic!("elastic mode must be feasible")
        };
        assert!(s.d[0].abs() < 1e-6);
        assert!((s.slack - 1.0).abs() < 1e-6);
    }
}
