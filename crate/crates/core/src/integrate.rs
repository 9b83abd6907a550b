//! ODE integration.
//!
//! [`solve_ivp_rk45`] is an adaptive Dormand–Prince 5(4) integrator used by
//! the forward-simulation studies. Its default step-size controller follows
//! the elementary controller of SciPy's `RK45` (RMS error norm, safety 0.9,
//! growth clamped to `[0.2, 10]`, no growth right after a rejection), which
//! is what the reported crossing times are sensitive to. A PI controller is
//! available as an alternative.
//!
//! [`rk4_step`] is the fixed-step classical Runge–Kutta map used on shooting
//! intervals, with the control held constant over the interval.

use std::io::Write;

use crate::error::{Error, Result};

/// Smallest admissible adaptive step (s).
pub const MIN_STEP: f64 = 1e-12;

/// Step-size control law of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    /// `h ← h · clamp(0.9 · err^(−1/5), 0.2, 10)`.
    Elementary,
    /// Proportional–integral control, `h ← h · 0.9 · err^(−alpha) · err_prev^beta`.
    Pi { alpha: f64, beta: f64 },
}

impl StepControl {
    /// Gustafsson-style PI gains as used in Hairer's DOPRI5.
    pub fn standard_pi() -> Self {
        StepControl::Pi {
            alpha: 0.2 - 0.04 * 0.75,
            beta: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvpConfig {
    pub rtol: f64,
    pub atol: f64,
    pub t_span: (f64, f64),
    pub max_step: Option<f64>,
    /// Initial step. `None` selects it from the local derivative scale.
    pub first_step: Option<f64>,
    pub control: StepControl,
}

impl IvpConfig {
    pub fn new(t0: f64, tf: f64) -> Self {
        IvpConfig {
            rtol: 1e-3,
            atol: 1e-6,
            t_span: (t0, tf),
            max_step: None,
            first_step: None,
            control: StepControl::Elementary,
        }
    }

    pub fn tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) {
            return Err(Error::invalid("rtol", format!("must be > 0, got {}", self.rtol)));
        }
        if !(self.atol > 0.0) {
            return Err(Error::invalid("atol", format!("must be > 0, got {}", self.atol)));
        }
        if !(self.t_span.1 > self.t_span.0) {
            return Err(Error::invalid("t_span", "final time must exceed initial time"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::invalid("max_step", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Accepted integration points with the state derivative at each point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `f(t, x)` at every accepted point, used for Hermite interpolation.
    pub slopes: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&ti| ti <= t);
        i.clamp(1, self.times.len() - 1) - 1
    }

    /// Cubic Hermite interpolation of the state at `t` (clamped to the span).
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        assert!(self.len() >= 2, "interpolation needs at least two points");
        let t = t.clamp(self.times[0], *self.times.last().unwrap());
        let i = self.segment(t);
        (0..self.dim())
            .map(|k| self.hermite_component(i, t, |x| x[k]))
            .collect()
    }

    /// Hermite value on segment `i` of a linear functional `g` of the state.
    fn hermite_component(&self, i: usize, t: f64, g: impl Fn(&[f64]) -> f64) -> f64 {
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (g(&self.states[i]), g(&self.states[i + 1]));
        let (d0, d1) = (g(&self.slopes[i]) * h, g(&self.slopes[i + 1]) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// Value of the affine observable `offset + w·x` at `t`.
    pub fn observable(&self, weights: &[f64], offset: f64, t: f64) -> f64 {
        let i = self.segment(t);
        offset + self.hermite_component(i, t, |x| dot(weights, x))
    }

    /// First time at which `|offset + w·x(t)| ≤ threshold`, on the Hermite
    /// interpolant between accepted steps.
    pub fn first_time_below(&self, weights: &[f64], offset: f64, threshold: f64) -> Option<f64> {
        const SAMPLES: usize = 64;
        let g = |i: usize, t: f64| (offset + self.hermite_component(i, t, |x| dot(weights, x))).abs();
        if g(0, self.times[0]) <= threshold {
            return Some(self.times[0]);
        }
        for i in 0..self.len().saturating_sub(1) {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let mut lo = t0;
            for k in 1..=SAMPLES {
                let t = t0 + (t1 - t0) * k as f64 / SAMPLES as f64;
                if g(i, t) <= threshold {
                    let mut hi = t;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if g(i, mid) <= threshold {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return Some(hi);
                }
                lo = t;
            }
        }
        None
    }

    /// Time after which `|offset + w·x(t)|` stays `≤ threshold` until the end
    /// of the trajectory. `None` if the final value exceeds the threshold.
    pub fn settling_time(&self, weights: &[f64], offset: f64, threshold: f64) -> Option<f64> {
        const SAMPLES: usize = 64;
        let g = |i: usize, t: f64| (offset + self.hermite_component(i, t, |x| dot(weights, x))).abs();
        let n = self.len();
        if n < 2 || g(n - 2, self.times[n - 1]) > threshold {
            return None;
        }
        for i in (0..n - 1).rev() {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let mut hi = t1;
            for k in (0..SAMPLES).rev() {
                let t = t0 + (t1 - t0) * k as f64 / SAMPLES as f64;
                if g(i, t) > threshold {
                    let mut lo = t;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if g(i, mid) > threshold {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    return Some(hi);
                }
                hi = t;
            }
        }
        Some(self.times[0])
    }

    /// Writes `t` followed by one column per state.
    pub fn write_csv<W: Write>(&self, out: W, names: &[&str]) -> Result<()> {
        if names.len() != self.dim() {
            return Err(Error::Spec(format!(
                "{} column names for {} states",
                names.len(),
                self.dim()
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t"];
        header.extend_from_slice(names);
        w.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(x.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rms_norm(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    -71.0 / 57600.0,
    0.0,
    71.0 / 16695.0,
    -71.0 / 1920.0,
    17253.0 / 339200.0,
    -22.0 / 525.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Initial step from the derivative scale (Hairer, Nørsett & Wanner, II.4).
fn select_initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], cfg: &IvpConfig) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let interval = cfg.t_span.1 - cfg.t_span.0;
    let scale: Vec<f64> = y0.iter().map(|y| cfg.atol + y.abs() * cfg.rtol).collect();
    let d0 = rms_norm(&y0.iter().zip(&scale).map(|(y, s)| y / s).collect::<Vec<_>>());
    let d1 = rms_norm(&f0.iter().zip(&scale).map(|(y, s)| y / s).collect::<Vec<_>>());
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(interval);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h0, &y1, &mut f1);
    let d2 = rms_norm(
        &f1.iter()
            .zip(f0)
            .zip(&scale)
            .map(|((a, b), s)| (a - b) / s)
            .collect::<Vec<_>>(),
    ) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(interval)
}

/// Adaptive Dormand–Prince 5(4) integration of `x' = f(t, x)` over
/// `cfg.t_span`. Returns every accepted point.
pub fn solve_ivp_rk45<F>(mut f: F, x0: &[f64], cfg: &IvpConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0", "initial state must be finite"));
    }
    let n = x0.len();
    let (t0, tf) = cfg.t_span;
    let max_step = cfg.max_step.unwrap_or(f64::INFINITY);

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut fy = vec![0.0; n];
    f(t, &y, &mut fy);
    if fy.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluationFailure {
            what: "ivp right-hand side",
            node: None,
        });
    }

    let mut h_abs = match cfg.first_step {
        Some(h) => h,
        None => select_initial_step(&mut f, t, &y, &fy, cfg),
    };
    let mut err_prev: f64 = 1e-4;

    let mut traj = Trajectory {
        times: vec![t],
        states: vec![y.clone()],
        slopes: vec![fy.clone()],
    };

    let mut k = vec![vec![0.0; n]; 7];
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut f_new = vec![0.0; n];
    let mut scaled_err = vec![0.0; n];

    while t < tf {
        let min_step = MIN_STEP.max(10.0 * (next_up(t) - t));
        h_abs = h_abs.min(max_step).max(min_step);
        let mut rejected = false;
        loop {
            if h_abs < min_step {
                return Err(Error::StepSizeUnderflow { t, min_step });
            }
            let t_new = (t + h_abs).min(tf);
            let h = t_new - t;

            k[0].copy_from_slice(&fy);
            for s in 1..6 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += A[s][j] * k[j][i];
                    }
                    y_stage[i] = y[i] + h * acc;
                }
                f(t + C[s] * h, &y_stage, &mut k[s]);
            }
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += B[j] * k[j][i];
                }
                y_new[i] = y[i] + h * acc;
            }
            f(t_new, &y_new, &mut f_new);
            k[6].copy_from_slice(&f_new);

            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..7 {
                    acc += E[j] * k[j][i];
                }
                let scale = cfg.atol + y[i].abs().max(y_new[i].abs()) * cfg.rtol;
                scaled_err[i] = acc * h / scale;
            }
            let err = rms_norm(&scaled_err);
            if !err.is_finite() {
                h_abs *= MIN_FACTOR;
                rejected = true;
                continue;
            }

            if err < 1.0 {
                let mut factor = match cfg.control {
                    StepControl::Elementary => {
                        if err == 0.0 {
                            MAX_FACTOR
                        } else {
                            (SAFETY * err.powf(-0.2)).min(MAX_FACTOR)
                        }
                    }
                    StepControl::Pi { alpha, beta } => {
                        let e = err.max(1e-10);
                        (SAFETY * e.powf(-alpha) * err_prev.powf(beta)).clamp(MIN_FACTOR, MAX_FACTOR)
                    }
                };
                if rejected {
                    factor = factor.min(1.0);
                }
                err_prev = err.max(1e-4);
                h_abs = h * factor;
                t = t_new;
                std::mem::swap(&mut y, &mut y_new);
                fy.copy_from_slice(&f_new);
                break;
            }
            let factor = match cfg.control {
                StepControl::Elementary => (SAFETY * err.powf(-0.2)).max(MIN_FACTOR),
                StepControl::Pi { alpha, .. } => (SAFETY * err.powf(-alpha)).max(MIN_FACTOR),
            };
            h_abs = h * factor;
            rejected = true;
        }
        traj.times.push(t);
        traj.states.push(y.clone());
        traj.slopes.push(fy.clone());
    }
    Ok(traj)
}

fn next_up(t: f64) -> f64 {
    if t.is_nan() || t == f64::INFINITY {
        return t;
    }
    if t == 0.0 {
        return f64::from_bits(1);
    }
    let bits = t.to_bits();
    if t > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

/// Classical RK4 over `h` split into `substeps` equal steps, with the control
/// `u` held constant.
pub fn rk4_step<F>(f: F, x: &[f64], u: &[f64], h: f64, substeps: usize) -> Vec<f64>
where
    F: Fn(&[f64], &[f64], &mut [f64]),
{
    assert!(h > 0.0 && substeps >= 1, "rk4_step needs h > 0 and substeps >= 1");
    let n = x.len();
    let dt = h / substeps as f64;
    let mut y = x.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..substeps {
        f(&y, u, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        f(&tmp, u, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        f(&tmp, u, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        f(&tmp, u, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}
