//! Planar two-link arm (shoulder `q0`, elbow `q1`) holding a point-mass
//! dumbbell at the hand.
//!
//! Angle conventions: `q0` is measured from the downward vertical, so the
//! hanging arm is `q0 = 0`; `q1` is the relative elbow flexion with `0` at
//! full extension. Gravity acts in the plane of motion and the joints are
//! frictionless.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Joint-to-joint length (m).
    pub length: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Distance of the center of mass from the proximal joint (m).
    pub com: f64,
    /// Moment of inertia about the center of mass (kg·m²).
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmModel {
    pub upper_arm: Segment,
    /// Forearm and hand as one rigid body.
    pub forearm: Segment,
    /// Point mass carried at the distal end of the forearm (kg).
    pub dumbbell_mass: f64,
    /// Gravitational acceleration, pointing down (m/s²).
    pub gravity: f64,
}

impl Default for ArmModel {
    fn default() -> Self {
        ArmModel {
            upper_arm: Segment {
                length: 0.30,
                mass: 1.86,
                com: 0.13,
                inertia: 0.014,
            },
            forearm: Segment {
                length: 0.33,
                mass: 1.53,
                com: 0.17,
                inertia: 0.020,
            },
            dumbbell_mass: 3.6,
            gravity: 9.81,
        }
    }
}

/// Joint angles and velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmState {
    pub q: Vector2<f64>,
    pub qdot: Vector2<f64>,
}

impl ArmState {
    pub fn new(q: [f64; 2], qdot: [f64; 2]) -> Self {
        ArmState {
            q: Vector2::from(q),
            qdot: Vector2::from(qdot),
        }
    }
}

/// Per-joint torque bounds (N·m), index 0 = shoulder, 1 = elbow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorLimits {
    pub tau_max: [f64; 2],
    pub tau_min: [f64; 2],
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        ActuatorLimits {
            tau_max: [50.0; 2],
            tau_min: [-50.0; 2],
        }
    }
}

impl ActuatorLimits {
    pub fn validate(&self) -> Result<()> {
        for j in 0..2 {
            if !(self.tau_min[j] < 0.0 && 0.0 < self.tau_max[j]) {
                return Err(Error::invalid(
                    "limits",
                    format!("joint {j}: need tau_min < 0 < tau_max"),
                ));
            }
        }
        Ok(())
    }
}

/// Lumped inertial constants of the two-link chain.
#[derive(Debug, Clone, Copy)]
struct Lumped {
    /// `M00` at full extension minus `2β`.
    alpha: f64,
    /// Coupling `(m2·c2 + md·l2)·l1`.
    beta: f64,
    /// `M11`.
    delta: f64,
    /// First moment of everything hanging from the shoulder, projected on the upper arm.
    p: f64,
    /// First moment of forearm plus dumbbell about the elbow.
    q: f64,
}

impl ArmModel {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("upper_arm", &self.upper_arm), ("forearm", &self.forearm)] {
            if !(s.length > 0.0 && s.mass > 0.0 && s.inertia > 0.0) {
                return Err(Error::invalid(name, "length, mass and inertia must be > 0"));
            }
            if !(s.com > 0.0 && s.com < s.length) {
                return Err(Error::invalid(name, "com must lie strictly inside the segment"));
            }
        }
        if !(self.dumbbell_mass > 0.0) {
            return Err(Error::invalid("dumbbell_mass", "must be > 0"));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::invalid("gravity", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn lumped(&self) -> Lumped {
        let (u, f, md) = (&self.upper_arm, &self.forearm, self.dumbbell_mass);
        let q = f.mass * f.com + md * f.length;
        Lumped {
            alpha: u.inertia
                + u.mass * u.com * u.com
                + f.inertia
                + f.mass * (u.length * u.length + f.com * f.com)
                + md * (u.length * u.length + f.length * f.length),
            beta: q * u.length,
            delta: f.inertia + f.mass * f.com * f.com + md * f.length * f.length,
            p: u.mass * u.com + (f.mass + md) * u.length,
            q,
        }
    }

    /// Hand (dumbbell) position relative to the shoulder, y pointing up.
    pub fn hand_position(&self, q: &Vector2<f64>) -> Vector2<f64> {
        let (l1, l2) = (self.upper_arm.length, self.forearm.length);
        let a = q[0] + q[1];
        Vector2::new(l1 * q[0].sin() + l2 * a.sin(), -l1 * q[0].cos() - l2 * a.cos())
    }

    pub fn kinetic_energy(&self, s: &ArmState) -> f64 {
        0.5 * s.qdot.dot(&(self.mass_matrix(&s.q) * s.qdot))
    }

    /// Gravitational potential energy with the shoulder as reference height.
    pub fn potential_energy(&self, q: &Vector2<f64>) -> f64 {
        let k = self.lumped();
        -self.gravity * (k.p * q[0].cos() + k.q * (q[0] + q[1]).cos())
    }

    pub fn total_energy(&self, s: &ArmState) -> f64 {
        self.kinetic_energy(s) + self.potential_energy(&s.q)
    }

    pub fn mass_matrix(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        let k = self.lumped();
        let c = q[1].cos();
        let m01 = k.delta + k.beta * c;
        Matrix2::new(k.alpha + 2.0 * k.beta * c, m01, m01, k.delta)
    }

    /// Gravity generalized forces.
    pub fn gravity_torques(&self, q: &Vector2<f64>) -> Vector2<f64> {
        let k = self.lumped();
        let s01 = (q[0] + q[1]).sin();
        Vector2::new(self.gravity * (k.p * q[0].sin() + k.q * s01), self.gravity * k.q * s01)
    }

    /// Coriolis and centrifugal generalized forces.
    pub fn velocity_torques(&self, q: &Vector2<f64>, qdot: &Vector2<f64>) -> Vector2<f64> {
        let b = self.lumped().beta * q[1].sin();
        Vector2::new(
            -b * (2.0 * qdot[0] * qdot[1] + qdot[1] * qdot[1]),
            b * qdot[0] * qdot[0],
        )
    }

    /// `N(q, q̇)`: velocity-dependent plus gravity generalized forces.
    pub fn nonlinear_effects(&self, q: &Vector2<f64>, qdot: &Vector2<f64>) -> Vector2<f64> {
        self.velocity_torques(q, qdot) + self.gravity_torques(q)
    }

    /// `q̈ = M(q)⁻¹ (τ − N(q, q̇))`.
    pub fn forward_dynamics(&self, s: &ArmState, tau: &Vector2<f64>) -> Result<Vector2<f64>> {
        let m = self.mass_matrix(&s.q);
        let rhs = tau - self.nonlinear_effects(&s.q, &s.qdot);
        m.try_inverse()
            .filter(|inv| inv.iter().all(|v| v.is_finite()))
            .map(|inv| inv * rhs)
            .ok_or(Error::SingularMass { q0: s.q[0], q1: s.q[1] })
    }

    /// Accelerations and their partial derivatives with respect to `q`,
    /// `q̇` and `τ`.
    pub fn forward_dynamics_jacobian(&self, s: &ArmState, tau: &Vector2<f64>) -> Result<ForwardDynamicsJacobian> {
        let k = self.lumped();
        let (q, qd) = (&s.q, &s.qdot);
        let minv = self
            .mass_matrix(q)
            .try_inverse()
            .ok_or(Error::SingularMass { q0: q[0], q1: q[1] })?;
        let qdd = minv * (tau - self.nonlinear_effects(q, qd));

        let (s1, c1) = q[1].sin_cos();
        let c01 = (q[0] + q[1]).cos();
        let g = self.gravity;
        // ∂M/∂q1
        let dm = Matrix2::new(-2.0 * k.beta * s1, -k.beta * s1, -k.beta * s1, 0.0);
        // ∂N/∂q, columns q0 and q1
        let v = 2.0 * qd[0] * qd[1] + qd[1] * qd[1];
        let dn_dq = Matrix2::new(
            g * (k.p * q[0].cos() + k.q * c01),
            g * k.q * c01 - k.beta * c1 * v,
            g * k.q * c01,
            g * k.q * c01 + k.beta * c1 * qd[0] * qd[0],
        );
        let dn_dqd = Matrix2::new(
            -k.beta * s1 * 2.0 * qd[1],
            -k.beta * s1 * 2.0 * (qd[0] + qd[1]),
            2.0 * k.beta * s1 * qd[0],
            0.0,
        );
        let mut dq = -minv * dn_dq;
        let extra = -minv * (dm * qdd);
        dq[(0, 1)] += extra[0];
        dq[(1, 1)] += extra[1];
        Ok(ForwardDynamicsJacobian {
            qddot: qdd,
            d_q: dq,
            d_qdot: -minv * dn_dqd,
            d_tau: minv,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardDynamicsJacobian {
    pub qddot: Vector2<f64>,
    pub d_q: Matrix2<f64>,
    pub d_qdot: Matrix2<f64>,
    pub d_tau: Matrix2<f64>,
}

/// Torque activation ratios `(τ̃⁺_0, τ̃⁺_1, τ̃⁻_0, τ̃⁻_1)`: each flexion torque
/// divided by its upper bound and each extension torque by its (negative)
/// lower bound.
pub fn torque_activation_ratios(tau_plus: &[f64; 2], tau_minus: &[f64; 2], lim: &ActuatorLimits) -> [f64; 4] {
    [
        tau_plus[0] / lim.tau_max[0],
        tau_plus[1] / lim.tau_max[1],
        tau_minus[0] / lim.tau_min[0],
        tau_minus[1] / lim.tau_min[1],
    ]
}
