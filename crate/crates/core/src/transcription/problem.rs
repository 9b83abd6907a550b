use std::fmt::Write as _;

use rayon::prelude::*;

use super::dynamics::{shoot_sensitivity, StateJacobian};
use super::{Actuator, ControlVec, OcpSpec, OcpTrajectory, StateVec, CONTROL_DIM, STATE_DIM};
use crate::arm::ArmModel;
use crate::error::{Error, Result};
use crate::nlp::NlpProblem;

const NZ: usize = STATE_DIM + CONTROL_DIM;

/// Position of every node's state and every interval's control in the
/// interleaved decision vector `[x0, u0, x1, u1, …, x_N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub intervals: usize,
}

impl Layout {
    pub fn state(&self, node: usize) -> usize {
        node * NZ
    }

    pub fn control(&self, interval: usize) -> usize {
        interval * NZ + STATE_DIM
    }

    pub fn num_vars(&self) -> usize {
        self.intervals * NZ + STATE_DIM
    }

    pub fn pack(&self, traj: &OcpTrajectory) -> Result<Vec<f64>> {
        if traj.controls.len() != self.intervals || traj.states.len() != self.intervals + 1 {
            return Err(Error::Spec(format!(
                "trajectory has {} states and {} controls, layout needs {} and {}",
                traj.states.len(),
                traj.controls.len(),
                self.intervals + 1,
                self.intervals
            )));
        }
        let mut z = Vec::with_capacity(self.num_vars());
        for n in 0..self.intervals {
            z.extend_from_slice(&traj.states[n]);
            z.extend_from_slice(&traj.controls[n]);
        }
        z.extend_from_slice(&traj.states[self.intervals]);
        Ok(z)
    }

    pub fn unpack(&self, z: &[f64]) -> OcpTrajectory {
        let state = |n: usize| -> StateVec { z[self.state(n)..self.state(n) + STATE_DIM].try_into().unwrap() };
        let control =
            |n: usize| -> ControlVec { z[self.control(n)..self.control(n) + CONTROL_DIM].try_into().unwrap() };
        OcpTrajectory {
            states: (0..=self.intervals).map(state).collect(),
            controls: (0..self.intervals).map(control).collect(),
        }
    }
}

/// Whether `∂x⁺_i/∂z_j` can be nonzero for `z = (x, u)` on one interval.
/// The arm does not see the fatigue states and each actuator's fatigue only
/// sees its own compartments and torque.
fn structural(i: usize, j: usize) -> bool {
    let mech = |k: usize| k < 4;
    let actuator_of = |k: usize| Actuator::ALL[(k - 4) / 3];
    if mech(i) {
        return mech(j) || j >= STATE_DIM;
    }
    let a = actuator_of(i);
    if j >= STATE_DIM {
        return j - STATE_DIM == a.control_index();
    }
    !mech(j) && actuator_of(j) == a
}

/// The multiple-shooting NLP of one K-cycle problem.
///
/// Constraint rows, in order:
/// - continuity `x_{n+1} − Φ(x_n, u_n) = 0`, 16 rows per interval;
/// - task equalities on the elbow angle, see [`OcpSpec::task_nodes`];
/// - torque-activation rows `0 ≤ τ̃_a(u_n) + mf_a(x_n) ≤ 1`, 4 per interval.
///
/// The initial state is fixed through equal variable bounds.
pub struct OcpNlp {
    spec: OcpSpec,
    model: ArmModel,
    x_init: StateVec,
    layout: Layout,
    task: Vec<(usize, f64)>,
    /// Continuity entries per interval, `(row, col)` within the interval.
    pattern: Vec<(usize, usize)>,
    hessian: Vec<(usize, usize, f64)>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cl: Vec<f64>,
    cu: Vec<f64>,
}

/// Builds the NLP for `spec` starting from `x_init`.
pub fn build_nlp(spec: &OcpSpec, model: &ArmModel, x_init: &StateVec) -> Result<OcpNlp> {
    spec.validate()?;
    model.validate()?;
    if x_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x_init", "initial state must be finite"));
    }
    let layout = Layout {
        intervals: spec.intervals(),
    };
    let n_int = layout.intervals;
    let task = spec.task_nodes();

    let pattern: Vec<(usize, usize)> = (0..STATE_DIM)
        .flat_map(|i| (0..NZ).filter(move |&j| structural(i, j)).map(move |j| (i, j)))
        .collect();

    let (mut lb, mut ub) = (
        vec![f64::NEG_INFINITY; layout.num_vars()],
        vec![f64::INFINITY; layout.num_vars()],
    );
    let eps = spec.fatigue_bound_tolerance;
    for n in 0..=n_int {
        let o = layout.state(n);
        (lb[o], ub[o]) = spec.shoulder_range;
        (lb[o + 1], ub[o + 1]) = spec.elbow_range;
        for k in 4..STATE_DIM {
            lb[o + k] = -eps;
            ub[o + k] = 1.0 + eps;
        }
    }
    for n in 0..n_int {
        let o = layout.control(n);
        for j in 0..2 {
            lb[o + j] = 0.0;
            ub[o + j] = spec.limits.tau_max[j];
            lb[o + 2 + j] = spec.limits.tau_min[j];
            ub[o + 2 + j] = 0.0;
        }
    }
    lb[..STATE_DIM].copy_from_slice(x_init);
    ub[..STATE_DIM].copy_from_slice(x_init);

    let mut cl = vec![0.0; STATE_DIM * n_int];
    let mut cu = vec![0.0; STATE_DIM * n_int];
    for &(_, q1) in &task {
        cl.push(q1);
        cu.push(q1);
    }
    cl.extend(std::iter::repeat_n(0.0, 4 * n_int));
    cu.extend(std::iter::repeat_n(1.0, 4 * n_int));

    let hessian = quadratic_objective(spec, &layout);
    Ok(OcpNlp {
        spec: spec.clone(),
        model: *model,
        x_init: *x_init,
        layout,
        task,
        pattern,
        hessian,
        lb,
        ub,
        cl,
        cu,
    })
}

/// Upper-triangle Hessian of the objective, which is exactly `½ zᵀHz`.
/// Lagrange terms use the left-rectangle rule on the shooting nodes.
fn quadratic_objective(spec: &OcpSpec, layout: &Layout) -> Vec<(usize, usize, f64)> {
    let dt = spec.dt();
    let w = &spec.weights;
    let mut h = Vec::new();
    for n in 0..layout.intervals {
        let x = layout.state(n);
        let u = layout.control(n);
        h.push((x, x, 2.0 * w.shoulder * dt));
        if spec.cost.penalizes_fatigue() {
            for a in Actuator::ALL {
                let mf = x + a.state_offset() + 2;
                h.push((mf, mf, 2.0 * w.fatigue * dt));
            }
        }
        for j in 0..CONTROL_DIM {
            if spec.cost.penalizes_torque() {
                h.push((u + j, u + j, 2.0 * w.torque * dt));
            }
            // Δτ has no predecessor on the first interval.
            if n > 0 {
                let prev = layout.control(n - 1) + j;
                let c = 2.0 * w.torque_rate * dt;
                h.push((u + j, u + j, c));
                h.push((prev, prev, c));
                h.push((prev, u + j, -c));
            }
        }
    }
    h.retain(|t| t.2 != 0.0);
    h
}

impl OcpNlp {
    pub fn spec(&self) -> &OcpSpec {
        &self.spec
    }

    pub fn model(&self) -> &ArmModel {
        &self.model
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn initial_state(&self) -> &StateVec {
        &self.x_init
    }

    fn task_row(&self, k: usize) -> usize {
        STATE_DIM * self.layout.intervals + k
    }

    fn activation_row(&self, n: usize, a: Actuator) -> usize {
        STATE_DIM * self.layout.intervals + self.task.len() + 4 * n + a.index()
    }

    fn shoot_all(&self, z: &[f64]) -> Result<Vec<(StateVec, StateJacobian)>> {
        (0..self.layout.intervals)
            .into_par_iter()
            .map(|n| {
                let x = &z[self.layout.state(n)..self.layout.state(n) + STATE_DIM];
                let u = &z[self.layout.control(n)..self.layout.control(n) + CONTROL_DIM];
                shoot_sensitivity(x.try_into().unwrap(), u.try_into().unwrap(), &self.model, &self.spec, n)
            })
            .collect()
    }

    fn shoot_values(&self, z: &[f64]) -> Result<Vec<StateVec>> {
        (0..self.layout.intervals)
            .into_par_iter()
            .map(|n| {
                let x = &z[self.layout.state(n)..self.layout.state(n) + STATE_DIM];
                let u = &z[self.layout.control(n)..self.layout.control(n) + CONTROL_DIM];
                super::shoot(x.try_into().unwrap(), u.try_into().unwrap(), &self.model, &self.spec, n)
            })
            .collect()
    }

    fn fill_constraints(&self, z: &[f64], next: &[StateVec], c: &mut [f64]) {
        let l = &self.layout;
        for (n, phi) in next.iter().enumerate() {
            let o = l.state(n + 1);
            for i in 0..STATE_DIM {
                c[STATE_DIM * n + i] = z[o + i] - phi[i];
            }
        }
        for (k, &(node, _)) in self.task.iter().enumerate() {
            c[self.task_row(k)] = z[l.state(node) + 1];
        }
        for n in 0..l.intervals {
            for a in Actuator::ALL {
                let tl = z[l.control(n) + a.control_index()] / a.limit(&self.spec.limits);
                let mf = z[l.state(n) + a.state_offset() + 2];
                c[self.activation_row(n, a)] = tl + mf;
            }
        }
    }

    /// Plain-text summary of the problem's dimensions, bounds and sparsity.
    pub fn debug_dump(&self) -> String {
        let n = self.num_vars();
        let m = self.num_constraints();
        let nnz = self.jacobian_structure().len();
        let fixed = self.lb.iter().zip(&self.ub).filter(|(l, u)| l == u).count();
        let free = self
            .lb
            .iter()
            .zip(&self.ub)
            .filter(|(l, u)| !l.is_finite() && !u.is_finite())
            .count();
        let l = &self.layout;
        let mut s = String::new();
        let _ = writeln!(s, "cycles               {}", self.spec.cycles);
        let _ = writeln!(s, "nodes_per_cycle      {}", self.spec.nodes_per_cycle);
        let _ = writeln!(s, "intervals            {}", l.intervals);
        let _ = writeln!(s, "cost                 {}", self.spec.cost);
        let _ = writeln!(s, "stabilizer           {}", self.spec.stabilizer_enabled);
        let _ = writeln!(s, "variables            {n}");
        let _ = writeln!(s, "  states             {}", STATE_DIM * (l.intervals + 1));
        let _ = writeln!(s, "  controls           {}", CONTROL_DIM * l.intervals);
        let _ = writeln!(s, "  fixed              {fixed}");
        let _ = writeln!(s, "  unbounded          {free}");
        let _ = writeln!(s, "constraints          {m}");
        let _ = writeln!(s, "  continuity         {}", STATE_DIM * l.intervals);
        let _ = writeln!(s, "  task               {}", self.task.len());
        let _ = writeln!(s, "  torque_activation  {}", 4 * l.intervals);
        let _ = writeln!(s, "jacobian_nnz         {nnz}");
        let _ = writeln!(s, "jacobian_density     {:.3e}", nnz as f64 / (n as f64 * m as f64));
        let _ = writeln!(s, "hessian_nnz_upper    {}", self.hessian.len());
        let _ = writeln!(s, "bounds");
        let names = ["q0", "q1", "qdot0", "qdot1"];
        for (k, name) in names.iter().enumerate() {
            let i = l.state(1) + k;
            let _ = writeln!(s, "  {name:<18} [{}, {}]", self.lb[i], self.ub[i]);
        }
        let i = l.state(1) + 4;
        let _ = writeln!(s, "  {:<18} [{}, {}]", "compartments", self.lb[i], self.ub[i]);
        for j in 0..CONTROL_DIM {
            let i = l.control(0) + j;
            let _ = writeln!(s, "  {:<18} [{}, {}]", format!("u{j}"), self.lb[i], self.ub[i]);
        }
        s
    }
}

impl NlpProblem for OcpNlp {
    fn num_vars(&self) -> usize {
        self.layout.num_vars()
    }

    fn num_constraints(&self) -> usize {
        self.cl.len()
    }

    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lb.clone(), self.ub.clone())
    }

    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.cl.clone(), self.cu.clone())
    }

    fn objective(&self, z: &[f64]) -> Result<f64> {
        let f = 0.5
            * self
                .hessian
                .iter()
                .map(|&(i, j, v)| if i == j { v * z[i] * z[i] } else { 2.0 * v * z[i] * z[j] })
                .sum::<f64>();
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::EvaluationFailure {
                what: "objective",
                node: None,
            })
        }
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<()> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &(i, j, v) in &self.hessian {
            grad[i] += v * z[j];
            if i != j {
                grad[j] += v * z[i];
            }
        }
        Ok(())
    }

    fn constraints(&self, z: &[f64], c: &mut [f64]) -> Result<()> {
        let next = self.shoot_values(z)?;
        self.fill_constraints(z, &next, c);
        Ok(())
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let l = &self.layout;
        let mut s = Vec::new();
        for n in 0..l.intervals {
            let (row0, col0) = (STATE_DIM * n, l.state(n));
            s.extend(self.pattern.iter().map(|&(i, j)| (row0 + i, col0 + j)));
            s.extend((0..STATE_DIM).map(|i| (row0 + i, l.state(n + 1) + i)));
        }
        for (k, &(node, _)) in self.task.iter().enumerate() {
            s.push((self.task_row(k), l.state(node) + 1));
        }
        for n in 0..l.intervals {
            for a in Actuator::ALL {
                let r = self.activation_row(n, a);
                s.push((r, l.control(n) + a.control_index()));
                s.push((r, l.state(n) + a.state_offset() + 2));
            }
        }
        s
    }

    fn jacobian_values(&self, z: &[f64], values: &mut [f64]) -> Result<()> {
        let mut c = vec![0.0; self.num_constraints()];
        self.constraints_and_jacobian(z, &mut c, values)
    }

    fn constraints_and_jacobian(&self, z: &[f64], c: &mut [f64], values: &mut [f64]) -> Result<()> {
        let shots = self.shoot_all(z)?;
        let next: Vec<StateVec> = shots.iter().map(|s| s.0).collect();
        self.fill_constraints(z, &next, c);
        let mut k = 0;
        for (_, sens) in &shots {
            for &(i, j) in &self.pattern {
                values[k] = -sens[(i, j)];
                k += 1;
            }
            for _ in 0..STATE_DIM {
                values[k] = 1.0;
                k += 1;
            }
        }
        for _ in &self.task {
            values[k] = 1.0;
            k += 1;
        }
        for _ in 0..self.layout.intervals {
            for a in Actuator::ALL {
                values[k] = 1.0 / a.limit(&self.spec.limits);
                values[k + 1] = 1.0;
                k += 2;
            }
        }
        Ok(())
    }

    fn quadratic_hessian(&self) -> Vec<(usize, usize, f64)> {
        self.hessian.clone()
    }

    fn curvature_blocks(&self) -> Vec<Vec<usize>> {
        (0..self.layout.intervals)
            .map(|n| (self.layout.state(n)..self.layout.state(n) + NZ).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_controls, CostKind, SystemState};
    use super::*;
    use crate::nlp::max_violation;

    fn hang() -> StateVec {
        SystemState::rested([0.0, 15f64.to_radians()]).to_array()
    }

    #[test]
    fn layout_arithmetic() {
        let spec = OcpSpec::default().with_cycles(3);
        let nlp = build_nlp(&spec, &ArmModel::default(), &hang()).unwrap();
        assert_eq!(nlp.num_vars(), 91 * 16 + 90 * 4);
        assert_eq!(nlp.num_vars(), 1816);
        assert_eq!(nlp.num_constraints(), 90 * 16 + 6 + 90 * 4);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let spec = OcpSpec::default();
        let l = Layout {
            intervals: spec.intervals(),
        };
        let mut t = OcpTrajectory::constant(hang(), l.intervals);
        t.controls[3] = [1.0, 2.0, -3.0, -4.0];
        t.states[5][7] = 0.25;
        let z = l.pack(&t).unwrap();
        assert_eq!(l.unpack(&z), t);
        assert_eq!(z[l.control(3) + 2], -3.0);
        assert_eq!(z[l.state(5) + 7], 0.25);
    }

    #[test]
    fn activation_row_examples() {
        let spec = OcpSpec::default();
        let model = ArmModel::default();
        let nlp = build_nlp(&spec, &model, &hang()).unwrap();
        let l = nlp.layout();
        let mut t = OcpTrajectory::constant(hang(), l.intervals);
        // elbow flexion at half capacity with 30% fatigue
        t.controls[0][1] = 25.0;
        t.states[0][Actuator::ElbowFlexion.state_offset() + 2] = 0.3;
        let z = l.pack(&t).unwrap();
        let mut c = vec![0.0; nlp.num_constraints()];
        nlp.constraints(&z, &mut c).unwrap();
        let r = nlp.activation_row(0, Actuator::ElbowFlexion);
        assert!((c[r] - 0.8).abs() < 1e-12);
        assert!(c[r] <= nlp.cu[r]);
        t.controls[0][1] = 45.0;
        let z = l.pack(&t).unwrap();
        nlp.constraints(&z, &mut c).unwrap();
        assert!((c[r] - 1.2).abs() < 1e-12);
        assert!(c[r] > nlp.cu[r]);
    }

    #[test]
    fn simulated_trajectory_has_zero_continuity_residual() {
        let spec = OcpSpec::default();
        let model = ArmModel::default();
        let nlp = build_nlp(&spec, &model, &hang()).unwrap();
        let controls: Vec<ControlVec> = (0..spec.intervals())
            .map(|n| {
                let s = (n as f64 * 0.4).sin();
                [5.0 * s.max(0.0), 15.0 + 5.0 * s, -2.0, -s.abs()]
            })
            .collect();
        let states = simulate_controls(&hang(), &controls, &model, &spec).unwrap();
        let z = nlp.layout().pack(&OcpTrajectory { states, controls }).unwrap();
        let mut c = vec![0.0; nlp.num_constraints()];
        nlp.constraints(&z, &mut c).unwrap();
        assert!(c[..STATE_DIM * spec.intervals()].iter().all(|&r| r == 0.0));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let spec = OcpSpec {
            nodes_per_cycle: 10,
            ..Default::default()
        };
        let model = ArmModel::default();
        let nlp = build_nlp(&spec, &model, &hang()).unwrap();
        let controls: Vec<ControlVec> = (0..spec.intervals())
            .map(|n| [3.0 + n as f64, 18.0, -2.0, -0.5 * n as f64])
            .collect();
        let states = simulate_controls(&hang(), &controls, &model, &spec).unwrap();
        let z = nlp.layout().pack(&OcpTrajectory { states, controls }).unwrap();
        let structure = nlp.jacobian_structure();
        let mut vals = vec![0.0; structure.len()];
        nlp.jacobian_values(&z, &mut vals).unwrap();
        let m = nlp.num_constraints();
        let mut dense = vec![vec![0.0; nlp.num_vars()]; m];
        for (&(r, c), v) in structure.iter().zip(&vals) {
            dense[r][c] += v;
        }
        let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
        for j in 0..nlp.num_vars() {
            let h = 1e-6 * z[j].abs().max(1.0);
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += h;
            zm[j] -= h;
            nlp.constraints(&zp, &mut cp).unwrap();
            nlp.constraints(&zm, &mut cm).unwrap();
            for r in 0..m {
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                assert!(
                    (fd - dense[r][j]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "row {r} col {j}: {fd} vs {}",
                    dense[r][j]
                );
            }
        }
    }

    #[test]
    fn objective_is_half_quadratic_form_and_gradient_consistent() {
        for cost in CostKind::ALL {
            let spec = OcpSpec {
                nodes_per_cycle: 10,
                cost,
                ..Default::default()
            };
            let nlp = build_nlp(&spec, &ArmModel::default(), &hang()).unwrap();
            let z: Vec<f64> = (0..nlp.num_vars())
                .map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1)
                .collect();
            let mut g = vec![0.0; z.len()];
            nlp.gradient(&z, &mut g).unwrap();
            for j in (0..z.len()).step_by(7) {
                let h = 1e-5;
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[j] += h;
                zm[j] -= h;
                let fd = (nlp.objective(&zp).unwrap() - nlp.objective(&zm).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "{cost} {j}");
            }
        }
    }

    #[test]
    fn initial_state_is_fixed_and_hang_guess_violates_only_task() {
        let spec = OcpSpec::default();
        let nlp = build_nlp(&spec, &ArmModel::default(), &hang()).unwrap();
        let (lb, ub) = nlp.variable_bounds();
        assert_eq!(lb[..STATE_DIM], hang());
        assert_eq!(ub[..STATE_DIM], hang());
        let z = nlp
            .layout()
            .pack(&OcpTrajectory::constant(hang(), spec.intervals()))
            .unwrap();
        let mut c = vec![0.0; nlp.num_constraints()];
        nlp.constraints(&z, &mut c).unwrap();
        let (cl, cu) = nlp.constraint_bounds();
        assert!(max_violation(&c, &cl, &cu) > 1.0);
        assert!(nlp.debug_dump().contains("variables            616"));
    }
}
