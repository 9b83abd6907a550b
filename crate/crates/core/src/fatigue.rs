//! Three-compartment actuator fatigue dynamics.
//!
//! Each actuator's capacity is split into a resting, an active and a
//! fatigued fraction. A piecewise feedback controller moves capacity between
//! the resting and active pools so that the active pool tracks a target load;
//! active capacity fatigues at rate `F` and recovers at rate `R`.
//!
//! The stabilized variant adds `S·(1 − ma − mr − mf)` to the fatigued pool's
//! rate. On exact solutions with `r = 1` the compartment sum is conserved, so
//! the extra term only acts when numerical drift (or shooting-node slack)
//! has broken the invariant, and it then decays the defect as `exp(−S·t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default slack on the `[0, 1]` compartment bounds.
pub const DEFAULT_BOUND_TOLERANCE: f64 = 1e-3;

/// Rates and controller coefficients of one actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueParams {
    /// Fatigue rate `F` (1/s).
    #[serde(rename = "F")]
    pub fatigue_rate: f64,
    /// Recovery rate `R` (1/s).
    #[serde(rename = "R")]
    pub recovery_rate: f64,
    /// Rest recovery multiplier `r`.
    #[serde(rename = "r", default = "one")]
    pub rest_multiplier: f64,
    /// Development gain `LD` (1/s).
    #[serde(rename = "LD")]
    pub develop_gain: f64,
    /// Relaxation gain `LR` (1/s).
    #[serde(rename = "LR")]
    pub relax_gain: f64,
    /// Stabilization coefficient `S` (1/s). Zero disables the stabilizer.
    #[serde(rename = "S", default)]
    pub stabilization: f64,
}

fn one() -> f64 {
    1.0
}

impl FatigueParams {
    /// Elbow-torque parameters used by the forward-simulation studies
    /// (`F = 0.00912`, `R = 0.00094`, `LD = LR = 10`).
    pub fn elbow_isometric(stabilization: f64) -> Self {
        FatigueParams {
            fatigue_rate: 0.00912,
            recovery_rate: 0.00094,
            rest_multiplier: 1.0,
            develop_gain: 10.0,
            relax_gain: 10.0,
            stabilization,
        }
    }

    /// Accelerated-fatigue parameters of the biceps-curl problems
    /// (`F = 0.456`, `R = 0.00094`, `LD = LR = 10`, `S = 10`).
    pub fn biceps_curl() -> Self {
        FatigueParams {
            fatigue_rate: 0.456,
            recovery_rate: 0.00094,
            rest_multiplier: 1.0,
            develop_gain: 10.0,
            relax_gain: 10.0,
            stabilization: 10.0,
        }
    }

    pub fn with_stabilization(mut self, s: f64) -> Self {
        self.stabilization = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 6] = [
            ("F", self.fatigue_rate, self.fatigue_rate >= 0.0),
            ("R", self.recovery_rate, self.recovery_rate > 0.0),
            ("r", self.rest_multiplier, self.rest_multiplier >= 0.0),
            ("LD", self.develop_gain, self.develop_gain > 0.0),
            ("LR", self.relax_gain, self.relax_gain > 0.0),
            ("S", self.stabilization, self.stabilization >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::invalid(name, format!("out of range: {value}")));
            }
        }
        Ok(())
    }
}

impl Default for FatigueParams {
    fn default() -> Self {
        Self::biceps_curl()
    }
}

/// Resting / active / fatigued fractions of one actuator.
///
/// The same triple is used for time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FatigueState {
    pub mr: f64,
    pub ma: f64,
    pub mf: f64,
}

impl FatigueState {
    pub const fn new(mr: f64, ma: f64, mf: f64) -> Self {
        FatigueState { mr, ma, mf }
    }

    /// Fully rested actuator: `mr = 1`, `ma = mf = 0`.
    pub const fn new_rested() -> Self {
        FatigueState {
            mr: 1.0,
            ma: 0.0,
            mf: 0.0,
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        FatigueState::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.mr, self.ma, self.mf]
    }

    pub fn sum(&self) -> f64 {
        self.mr + self.ma + self.mf
    }

    /// Invariant defect `1 − (ma + mr + mf)`.
    pub fn invariant_defect(&self) -> f64 {
        1.0 - (self.ma + self.mr + self.mf)
    }

    /// Every compartment lies in `[−eps, 1 + eps]`.
    pub fn within_bounds(&self, eps: f64) -> bool {
        self.to_array().iter().all(|&v| v >= -eps && v <= 1.0 + eps)
    }
}

/// Which piece of the feedback controller is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerBranch {
    /// `ma < TL` and enough resting capacity: `LD·(TL − ma)`.
    Develop,
    /// `ma < TL` but resting pool short of the deficit: `LD·mr`.
    RestLimited,
    /// `ma ≥ TL`: `LR·(TL − ma)`.
    Relax,
}

pub fn controller_branch(ma: f64, mr: f64, target_load: f64) -> ControllerBranch {
    if ma < target_load {
        if mr >= target_load - ma {
            ControllerBranch::Develop
        } else {
            ControllerBranch::RestLimited
        }
    } else {
        ControllerBranch::Relax
    }
}

/// Activation–deactivation feedback rate `C(ma, mr, TL)` in 1/s.
pub fn feedback_controller(ma: f64, mr: f64, target_load: f64, p: &FatigueParams) -> f64 {
    match controller_branch(ma, mr, target_load) {
        ControllerBranch::Develop => p.develop_gain * (target_load - ma),
        ControllerBranch::RestLimited => p.develop_gain * mr,
        ControllerBranch::Relax => p.relax_gain * (target_load - ma),
    }
}

/// Unstabilized three-compartment rates `(ṁr, ṁa, ṁf)`.
pub fn derivative_3cc(m: &FatigueState, target_load: f64, p: &FatigueParams) -> FatigueState {
    let c = feedback_controller(m.ma, m.mr, target_load, p);
    FatigueState {
        mr: -c + p.rest_multiplier * p.recovery_rate * m.mf,
        ma: c - p.fatigue_rate * m.ma,
        mf: p.fatigue_rate * m.ma - p.recovery_rate * m.mf,
    }
}

/// Stabilized rates: [`derivative_3cc`] with `S·(1 − Σm)` added to `ṁf`.
pub fn derivative_3cc_s(m: &FatigueState, target_load: f64, p: &FatigueParams) -> FatigueState {
    let mut d = derivative_3cc(m, target_load, p);
    d.mf += p.stabilization * m.invariant_defect();
    d
}

/// Dispatches to the stabilized or plain model.
pub fn derivative(m: &FatigueState, target_load: f64, p: &FatigueParams, stabilized: bool) -> FatigueState {
    if stabilized {
        derivative_3cc_s(m, target_load, p)
    } else {
        derivative_3cc(m, target_load, p)
    }
}

/// Width of the band around the develop/rest-limited switch inside which
/// [`derivative_jacobian`] keeps the develop branch.
///
/// Optimal trajectories sit on that switch whenever the activation bound
/// `TL + mf ≤ 1` is active, and feasible moves from there lower `TL`, which
/// lands on the develop side. Without the band, round-off flips the
/// derivative between branches from one iterate to the next.
pub const JACOBIAN_TIE_BAND: f64 = 1e-6;

/// Partial derivatives of the rates.
///
/// Returns `(d_state, d_load)` where `d_state[i][j] = ∂ṁ_i/∂m_j` in
/// `(mr, ma, mf)` order and `d_load[i] = ∂ṁ_i/∂TL`. On a branch boundary
/// the one-sided derivative of the branch selected by
/// [`controller_branch`] is returned, except within
/// [`JACOBIAN_TIE_BAND`] below the rest-limited switch.
pub fn derivative_jacobian(
    m: &FatigueState,
    target_load: f64,
    p: &FatigueParams,
    stabilized: bool,
) -> ([[f64; 3]; 3], [f64; 3]) {
    // (∂C/∂mr, ∂C/∂ma, ∂C/∂TL)
    let branch = match controller_branch(m.ma, m.mr, target_load) {
        ControllerBranch::RestLimited if m.mr >= target_load - m.ma - JACOBIAN_TIE_BAND => ControllerBranch::Develop,
        b => b,
    };
    let (c_mr, c_ma, c_tl) = match branch {
        ControllerBranch::Develop => (0.0, -p.develop_gain, p.develop_gain),
        ControllerBranch::RestLimited => (p.develop_gain, 0.0, 0.0),
        ControllerBranch::Relax => (0.0, -p.relax_gain, p.relax_gain),
    };
    let rr = p.rest_multiplier * p.recovery_rate;
    let f = p.fatigue_rate;
    let mut ds = [[-c_mr, -c_ma, rr], [c_mr, c_ma - f, 0.0], [0.0, f, -p.recovery_rate]];
    if stabilized {
        for v in ds[2].iter_mut() {
            *v -= p.stabilization;
        }
    }
    (ds, [-c_tl, c_tl, 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn study_params() -> FatigueParams {
        FatigueParams::elbow_isometric(10.0)
    }

    #[test]
    fn controller_branches_by_substitution() {
        let p = study_params();
        assert_relative_eq!(feedback_controller(0.0, 1.0, 0.8, &p), 8.0, epsilon = 1e-12);
        assert_relative_eq!(feedback_controller(0.5, 0.2, 0.8, &p), 2.0, epsilon = 1e-12);
        assert_relative_eq!(feedback_controller(0.9, 0.2, 0.8, &p), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_ma_equal_target_is_relax_branch() {
        assert_eq!(controller_branch(0.8, 0.1, 0.8), ControllerBranch::Relax);
        assert_eq!(feedback_controller(0.8, 0.1, 0.8, &study_params()), 0.0);
        // mr exactly equal to the deficit stays on the develop branch
        assert_eq!(controller_branch(0.5, 0.25, 0.75), ControllerBranch::Develop);
    }

    #[test]
    fn rested_derivative() {
        let p = FatigueParams::elbow_isometric(0.0);
        let d = derivative_3cc(&FatigueState::new_rested(), 0.8, &p);
        assert_relative_eq!(d.mr, -8.0, epsilon = 1e-12);
        assert_relative_eq!(d.ma, 8.0, epsilon = 1e-12);
        assert_relative_eq!(d.mf, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_recovery() {
        let p = FatigueParams::elbow_isometric(0.0);
        let d = derivative_3cc(&FatigueState::new(0.0, 0.0, 1.0), 0.0, &p);
        assert_relative_eq!(d.mr, 0.00094, epsilon = 1e-15);
        assert_relative_eq!(d.ma, 0.0, epsilon = 1e-15);
        assert_relative_eq!(d.mf, -0.00094, epsilon = 1e-15);
    }

    #[test]
    fn stabilizer_term_on_fatigued_pool() {
        let p = study_params();
        let m = FatigueState::new(1.0001, 0.0, 0.0);
        let d = derivative_3cc_s(&m, 0.8, &p);
        assert_relative_eq!(d.mf, -1e-3, epsilon = 1e-12);
        let plain = derivative_3cc(&m, 0.8, &p);
        assert_eq!(d.mr, plain.mr);
        assert_eq!(d.ma, plain.ma);
    }

    #[test]
    fn rested_constructor_is_exact() {
        let m = FatigueState::new_rested();
        assert_eq!((m.mr, m.ma, m.mf), (1.0, 0.0, 0.0));
        assert!(m.within_bounds(0.0));
        assert!(!FatigueState::new(1.01, 0.0, 0.0).within_bounds(DEFAULT_BOUND_TOLERANCE));
    }

    #[test]
    fn params_validation() {
        assert!(FatigueParams::biceps_curl().validate().is_ok());
        let mut p = FatigueParams::biceps_curl();
        p.fatigue_rate = 0.0;
        assert!(p.validate().is_ok(), "F = 0 disables fatigue");
        p.fatigue_rate = -0.1;
        assert!(p.validate().is_err());
        let mut p = FatigueParams::biceps_curl();
        p.stabilization = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn branch_totality_on_dense_grid() {
        let n = 40;
        let mut seen = std::collections::HashSet::new();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let (ma, mr, tl) = (i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64);
                    let fired = [ma < tl && mr >= tl - ma, ma < tl && mr < tl - ma, ma >= tl];
                    assert_eq!(fired.iter().filter(|&&b| b).count(), 1);
                    seen.insert(controller_branch(ma, mr, tl));
                }
            }
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn compartments_at_zero_are_not_driven_negative() {
        let p = FatigueParams::elbow_isometric(0.0);
        let n = 20;
        for i in 0..=n {
            for k in 0..=n {
                let x = i as f64 / n as f64;
                let tl = k as f64 / n as f64;
                // ma = 0: controller is non-negative there
                let d = derivative_3cc(&FatigueState::new(1.0 - x, 0.0, x), tl, &p);
                assert!(d.ma >= 0.0);
                // mf = 0
                let d = derivative_3cc(&FatigueState::new(1.0 - x, x, 0.0), tl, &p);
                assert!(d.mf >= 0.0);
                // mr = 0 with ma below the load: rest-limited branch caps C at LD·mr = 0
                if x < tl {
                    let m = FatigueState::new(0.0, x, 1.0 - x);
                    assert_eq!(controller_branch(m.ma, m.mr, tl), ControllerBranch::RestLimited);
                    assert_eq!(feedback_controller(m.ma, m.mr, tl, &p), 0.0);
                    assert!(derivative_3cc(&m, tl, &p).mr >= 0.0);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences_off_kinks() {
        let p = FatigueParams::biceps_curl();
        let cases = [
            (FatigueState::new(0.7, 0.1, 0.2), 0.4),
            (FatigueState::new(0.05, 0.3, 0.65), 0.6),
            (FatigueState::new(0.5, 0.45, 0.05), 0.2),
        ];
        for stabilized in [false, true] {
            for (m, tl) in cases {
                let (ds, dl) = derivative_jacobian(&m, tl, &p, stabilized);
                let h = 1e-7;
                for j in 0..3 {
                    let mut a = m.to_array();
                    let mut b = m.to_array();
                    a[j] += h;
                    b[j] -= h;
                    let fa = derivative(&FatigueState::from_array(a), tl, &p, stabilized).to_array();
                    let fb = derivative(&FatigueState::from_array(b), tl, &p, stabilized).to_array();
                    for i in 0..3 {
                        assert_relative_eq!(ds[i][j], (fa[i] - fb[i]) / (2.0 * h), epsilon = 1e-6);
                    }
                }
                let fa = derivative(&m, tl + h, &p, stabilized).to_array();
                let fb = derivative(&m, tl - h, &p, stabilized).to_array();
                for i in 0..3 {
                    assert_relative_eq!(dl[i], (fa[i] - fb[i]) / (2.0 * h), epsilon = 1e-6);
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rate_sum_identity(mr in 0.0..1.0f64, ma in 0.0..1.0f64, mf in 0.0..1.0f64,
                                 tl in 0.0..1.0f64, r in 0.0..3.0f64) {
                let mut p = FatigueParams::elbow_isometric(0.0);
                p.rest_multiplier = r;
                let m = FatigueState::new(mr, ma, mf);
                let d = derivative_3cc(&m, tl, &p);
                let expected = (r - 1.0) * p.recovery_rate * mf;
                prop_assert!((d.sum() - expected).abs() < 1e-12);
            }

            #[test]
            fn zero_stabilizer_is_plain_model(mr in -0.1..1.1f64, ma in -0.1..1.1f64,
                                              mf in -0.1..1.1f64, tl in 0.0..1.0f64) {
                let p = FatigueParams::biceps_curl().with_stabilization(0.0);
                let m = FatigueState::new(mr, ma, mf);
                prop_assert_eq!(derivative_3cc_s(&m, tl, &p), derivative_3cc(&m, tl, &p));
            }

            #[test]
            fn stabilized_defect_rate(mr in 0.0..1.1f64, ma in 0.0..1.0f64,
                                      mf in 0.0..1.0f64, tl in 0.0..1.0f64, s in 0.0..20.0f64) {
                // with r = 1 the defect obeys e' = -S e
                let p = FatigueParams::elbow_isometric(s);
                let m = FatigueState::new(mr, ma, mf);
                let d = derivative_3cc_s(&m, tl, &p);
                let e = m.invariant_defect();
                prop_assert!((-d.sum() + s * e).abs() < 1e-12);
            }
        }
    }
}
