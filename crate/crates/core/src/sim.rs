//! Method-of-steps integrator for nonlinear and linear delay systems.
//!
//! Fixed-step classical 4th-order integration with cubic Hermite dense
//! output per step. Delayed state values are read from the stored dense
//! output (or from the initial function for times at or before zero);
//! delayed inputs are evaluated analytically from the piecewise-constant
//! signal. Input switch times are snapped onto the step grid so the
//! integrator never steps across a discontinuity.

use serde::Serialize;

use crate::linearize::LinearDelayModel;
use crate::model::{eval_rhs, inf_norm, ModelSpec, ParameterPoint};
use crate::signal::InputSignal;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("state delay {delay} smaller than step {h}: grid too coarse")]
    GridTooCoarse { delay: f64, h: f64 },
    #[error("domain error in right-hand side: {0}")]
    Domain(String),
    #[error("input has {got} channels, system expects {want}")]
    InputDim { got: usize, want: usize },
    #[error("{0}")]
    Other(String),
}

/// A delay system the integrator can advance: slot values in, derivative out.
pub trait DdeSystem {
    fn dim(&self) -> usize;
    /// Strictly increasing positive state delays.
    fn state_delays(&self) -> &[f64];
    fn input_delays(&self) -> &[f64];
    /// `z[0]` is the current state, `z[1..]` the delayed states; same for
    /// inputs in `w`.
    fn rhs(&self, z: &[Vec<f64>], w: &[Vec<f64>]) -> Result<Vec<f64>, SimError>;
}

/// Nonlinear model with a fixed parameter point.
pub struct NonlinearSystem<'a> {
    pub spec: &'a ModelSpec,
    pub point: &'a ParameterPoint,
}

impl DdeSystem for NonlinearSystem<'_> {
    fn dim(&self) -> usize {
        self.spec.n()
    }
    fn state_delays(&self) -> &[f64] {
        &self.point.tau
    }
    fn input_delays(&self) -> &[f64] {
        &self.point.nu
    }
    fn rhs(&self, z: &[Vec<f64>], w: &[Vec<f64>]) -> Result<Vec<f64>, SimError> {
        eval_rhs(self.spec, z, w, &self.point.p_s).map_err(|e| SimError::Domain(e.to_string()))
    }
}

/// Linear delayed system `xi' = sum A_i xi(t - tau_i) + sum B_j nu(t - nu_j)`.
pub struct LinearSystem<'a> {
    pub model: &'a LinearDelayModel,
    taus: Vec<f64>,
    nus: Vec<f64>,
}

impl<'a> LinearSystem<'a> {
    pub fn new(model: &'a LinearDelayModel) -> Self {
        LinearSystem {
            taus: model.state_delays(),
            nus: model.input_delays(),
            model,
        }
    }
}

impl DdeSystem for LinearSystem<'_> {
    fn dim(&self) -> usize {
        self.model.n()
    }
    fn state_delays(&self) -> &[f64] {
        &self.taus
    }
    fn input_delays(&self) -> &[f64] {
        &self.nus
    }
    fn rhs(&self, z: &[Vec<f64>], w: &[Vec<f64>]) -> Result<Vec<f64>, SimError> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (slot, t) in self.model.a.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += t.m[(i, j)] * z[slot][j];
                }
                out[i] += acc;
            }
        }
        for (slot, t) in self.model.b.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..t.m.ncols() {
                    acc += t.m[(i, j)] * w[slot][j];
                }
                out[i] += acc;
            }
        }
        Ok(out)
    }
}

/// Sampled DDE solution with dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub h: f64,
    /// States at `t = i*h`, `i = 0..=steps`.
    pub states: Vec<Vec<f64>>,
    /// Right-limit derivative at each node.
    deriv_right: Vec<Vec<f64>>,
    /// Left-limit derivative at each node (differs only at input switches).
    deriv_left: Vec<Vec<f64>>,
    /// History samples on the grid covering `[-tau_m, 0)`, oldest first.
    pub history: Vec<Vec<f64>>,
    /// The (snapped) input that was actually integrated.
    pub input: InputSignal,
    /// Switch times moved by grid snapping, as (requested, used) pairs.
    pub snap_log: Vec<(f64, f64)>,
    /// Set when integration stopped early (state blow-up); holds the
    /// diagnostic.
    pub truncated: Option<String>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        self.steps() as f64 * self.h
    }

    /// Cubic Hermite dense evaluation for `t` in `[0, t_end]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let steps = self.steps();
        if steps == 0 {
            return self.states[0].clone();
        }
        let mut i = (t / self.h).floor() as usize;
        if i >= steps {
            i = steps - 1;
        }
        let theta = (t - i as f64 * self.h) / self.h;
        let h00 = (1.0 + 2.0 * theta) * (1.0 - theta) * (1.0 - theta);
        let h10 = theta * (1.0 - theta) * (1.0 - theta);
        let h01 = theta * theta * (3.0 - 2.0 * theta);
        let h11 = theta * theta * (theta - 1.0);
        let n = self.states[0].len();
        (0..n)
            .map(|j| {
                h00 * self.states[i][j]
                    + h10 * self.h * self.deriv_right[i][j]
                    + h01 * self.states[i + 1][j]
                    + h11 * self.h * self.deriv_left[i + 1][j]
            })
            .collect()
    }
}

fn dense_lookup(
    t: f64,
    h: f64,
    completed: usize,
    states: &[Vec<f64>],
    dr: &[Vec<f64>],
    dl: &[Vec<f64>],
    phi: &dyn Fn(f64) -> Vec<f64>,
) -> Vec<f64> {
    if t <= 0.0 {
        return phi(t);
    }
    let mut i = (t / h).floor() as usize;
    if i >= completed {
        i = completed - 1;
    }
    let theta = (t - i as f64 * h) / h;
    let h00 = (1.0 + 2.0 * theta) * (1.0 - theta) * (1.0 - theta);
    let h10 = theta * (1.0 - theta) * (1.0 - theta);
    let h01 = theta * theta * (3.0 - 2.0 * theta);
    let h11 = theta * theta * (theta - 1.0);
    (0..states[0].len())
        .map(|j| {
            h00 * states[i][j] + h10 * h * dr[i][j] + h01 * states[i + 1][j]
                + h11 * h * dl[i + 1][j]
        })
        .collect()
}

/// Advance `sys` from the initial function `phi` under input `u` over
/// `[0, T]` with fixed step `h`.
pub fn integrate(
    sys: &dyn DdeSystem,
    phi: &dyn Fn(f64) -> Vec<f64>,
    u: &InputSignal,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, SimError> {
    if h <= 0.0 {
        return Err(SimError::BadStep(h));
    }
    if t_end <= 0.0 {
        return Err(SimError::BadHorizon(t_end));
    }
    for &tau in sys.state_delays() {
        if tau < h {
            return Err(SimError::GridTooCoarse { delay: tau, h });
        }
    }
    let n = sys.dim();
    let taus = sys.state_delays().to_vec();
    let nus = sys.input_delays().to_vec();
    let (input, snap_log) = u.snap_to_grid(h);

    let steps = (t_end / h).round().max(1.0) as usize;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut dr: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut dl: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    states.push(phi(0.0));
    let mut truncated = None;

    // slot assembly for a stage at time s with trial current state x
    let eval_stage = |s: f64,
                      x: &[f64],
                      completed: usize,
                      states: &[Vec<f64>],
                      dr: &[Vec<f64>],
                      dl: &[Vec<f64>],
                      u_now: Vec<f64>|
     -> Result<Vec<f64>, SimError> {
        let mut z = Vec::with_capacity(taus.len() + 1);
        z.push(x.to_vec());
        for &tau in &taus {
            z.push(dense_lookup(s - tau, h, completed, states, dr, dl, phi));
        }
        let mut w = Vec::with_capacity(nus.len() + 1);
        w.push(u_now);
        for &nu in &nus {
            w.push(input.eval(s - nu));
        }
        sys.rhs(&z, &w)
    };

    'outer: for i in 0..steps {
        let t = i as f64 * h;
        let x = states[i].clone();

        macro_rules! stage {
            ($s:expr, $x:expr, $u:expr) => {
                match eval_stage($s, $x, i, &states, &dr, &dl, $u) {
                    Ok(k) => k,
                    Err(e) => {
                        truncated = Some(format!("step {i} (t = {t}): {e}"));
                        break 'outer;
                    }
                }
            };
        }

        let k1 = stage!(t, &x, input.eval(t));
        dr.push(k1.clone());
        if dl.len() < dr.len() {
            // left derivative at node i; only node 0 lands here
            dl.push(k1.clone());
        }

        let mid = t + 0.5 * h;
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = stage!(mid, &x2, input.eval(mid));
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = stage!(mid, &x3, input.eval(mid));
        let tn = t + h;
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        // endpoint stage uses the left input limit: the step must not see
        // past a switch at its right boundary
        let k4 = stage!(tn, &x4, input.eval_left(tn));

        let next: Vec<f64> = (0..n)
            .map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
        if !next.iter().all(|v| v.is_finite()) {
            truncated = Some(format!("step {i} (t = {t}): state became non-finite"));
            break;
        }
        dl.push(k4);
        states.push(next);
    }

    // right/left derivative at the final node
    let completed = states.len() - 1;
    if truncated.is_none() {
        let tn = completed as f64 * h;
        match eval_stage(
            tn,
            &states[completed].clone(),
            completed.max(1),
            &states,
            &dr,
            &dl,
            input.eval_left(tn),
        ) {
            Ok(k) => {
                dr.push(k.clone());
                // replace the k4 approximation with the exact endpoint slope
                if let Some(last) = dl.last_mut() {
                    *last = k;
                }
            }
            Err(e) => truncated = Some(format!("endpoint derivative: {e}")),
        }
    }
    while dr.len() < states.len() {
        dr.push(vec![0.0; n]);
    }
    while dl.len() < states.len() {
        dl.push(vec![0.0; n]);
    }

    let tau_m = taus.iter().cloned().fold(0.0, f64::max);
    let hist_steps = (tau_m / h).ceil() as usize;
    let history = (0..hist_steps)
        .map(|i| phi((i as f64 - hist_steps as f64) * h))
        .collect();

    Ok(Trajectory {
        h,
        states,
        deriv_right: dr,
        deriv_left: dl,
        history,
        input,
        snap_log,
        truncated,
    })
}

/// Simulate the nonlinear model (Eq. form `x' = f(x, x_delayed, u, ...)`).
pub fn simulate_nonlinear(
    spec: &ModelSpec,
    point: &ParameterPoint,
    phi: &dyn Fn(f64) -> Vec<f64>,
    u: &InputSignal,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, SimError> {
    if u.dim() != spec.k() {
        return Err(SimError::InputDim {
            got: u.dim(),
            want: spec.k(),
        });
    }
    let sys = NonlinearSystem { spec, point };
    integrate(&sys, phi, u, t_end, h)
}

/// Simulate the linearized system from the zero initial function under the
/// perturbation input `nu`.
pub fn simulate_linear(
    model: &LinearDelayModel,
    nu: &InputSignal,
    t_end: f64,
    h: f64,
) -> Result<Trajectory, SimError> {
    if nu.dim() != model.k() {
        return Err(SimError::InputDim {
            got: nu.dim(),
            want: model.k(),
        });
    }
    let n = model.n();
    let sys = LinearSystem::new(model);
    let zero = move |_t: f64| vec![0.0; n];
    integrate(&sys, &zero, nu, t_end, h)
}

/// Empirical check of the linearization error bounds: the deviation from
/// equilibrium should scale like eps and the gap to the linear response
/// like eps^2.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub eps: Vec<f64>,
    /// max-norm of x - x_e per eps.
    pub m1: Vec<f64>,
    /// max-norm of (x - x_e) - xi per eps.
    pub m2: Vec<f64>,
    /// Fitted log-log slope of m1 (expected near 1).
    pub slope_m1: f64,
    /// Fitted log-log slope of m2 (expected near 2).
    pub slope_m2: f64,
    pub nu_norm_l2: f64,
    pub dropped: Vec<String>,
}

pub const DEFAULT_EPS_LIST: [f64; 4] = [1e-1, 3e-2, 1e-2, 3e-3];

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[allow(clippy::too_many_arguments)]
pub fn scaling_experiment(
    spec: &ModelSpec,
    point: &ParameterPoint,
    model: &LinearDelayModel,
    nu_bar: &InputSignal,
    eps_list: &[f64],
    t_end: f64,
    h: f64,
) -> Result<ScalingReport, SimError> {
    let nu_norm = nu_bar.norm_l2(t_end);
    if nu_norm == 0.0 {
        return Err(SimError::Other("perturbation input has zero L2 norm".into()));
    }
    let x_e = model.equilibrium.x_e.clone();
    let phi = {
        let x_e = x_e.clone();
        move |_t: f64| x_e.clone()
    };

    let mut eps_used = Vec::new();
    let mut m1 = Vec::new();
    let mut m2 = Vec::new();
    let mut dropped = Vec::new();

    for &eps in eps_list {
        let scaled = nu_bar.scale(eps / nu_norm);
        let u_pert = scaled.offset(&point.u_bar, true);
        let nl = simulate_nonlinear(spec, point, &phi, &u_pert, t_end, h)?;
        if let Some(d) = &nl.truncated {
            dropped.push(format!("eps = {eps}: nonlinear run truncated ({d})"));
            continue;
        }
        let lin = simulate_linear(model, &scaled, t_end, h)?;
        if let Some(d) = &lin.truncated {
            dropped.push(format!("eps = {eps}: linear run truncated ({d})"));
            continue;
        }
        let steps = nl.steps().min(lin.steps());
        let mut max1 = 0.0_f64;
        let mut max2 = 0.0_f64;
        for i in 0..=steps {
            let xd: Vec<f64> = nl.states[i].iter().zip(&x_e).map(|(x, e)| x - e).collect();
            max1 = max1.max(inf_norm(&xd));
            let gap: Vec<f64> = xd.iter().zip(&lin.states[i]).map(|(a, b)| a - b).collect();
            max2 = max2.max(inf_norm(&gap));
        }
        eps_used.push(eps);
        m1.push(max1);
        m2.push(max2);
    }

    if eps_used.len() < 3 {
        return Err(SimError::Other(format!(
            "need at least 3 surviving eps values, got {}",
            eps_used.len()
        )));
    }

    let logs_eps: Vec<f64> = eps_used.iter().map(|e| e.ln()).collect();
    let slope_m1 = fit_slope(&logs_eps, &m1.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let slope_m2 = fit_slope(&logs_eps, &m2.iter().map(|v| v.max(1e-300).ln()).collect::<Vec<_>>());

    Ok(ScalingReport {
        eps: eps_used,
        m1,
        m2,
        slope_m1,
        slope_m2,
        nu_norm_l2: nu_norm,
        dropped,
    })
}

/// Output gap between two parameter points under the same input; a
/// falsification probe, never a proof.
#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub l2_gap: f64,
    pub max_gap: f64,
}

pub fn distinguishability_experiment(
    spec: &ModelSpec,
    point_a: &ParameterPoint,
    point_b: &ParameterPoint,
    phi: &dyn Fn(f64) -> Vec<f64>,
    u: &InputSignal,
    t_end: f64,
    h: f64,
) -> Result<SeparationReport, SimError> {
    let ta = simulate_nonlinear(spec, point_a, phi, u, t_end, h)?;
    let tb = simulate_nonlinear(spec, point_b, phi, u, t_end, h)?;
    let steps = ta.steps().min(tb.steps());
    let mut max_gap = 0.0_f64;
    let mut acc = 0.0;
    for i in 0..=steps {
        let d: Vec<f64> = ta.states[i]
            .iter()
            .zip(&tb.states[i])
            .map(|(a, b)| a - b)
            .collect();
        max_gap = max_gap.max(inf_norm(&d));
        let sq: f64 = d.iter().map(|v| v * v).sum();
        // trapezoidal weight
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        acc += w * sq * h;
    }
    Ok(SeparationReport {
        l2_gap: acc.sqrt(),
        max_gap,
    })
}

/// CSV export: header `t,x1..xn,u1..uk`.
pub fn trajectory_to_csv(traj: &Trajectory, state_names: &[String], input_names: &[String]) -> String {
    let mut out = String::from("t");
    for s in state_names {
        out.push(',');
        out.push_str(s);
    }
    for u in input_names {
        out.push(',');
        out.push_str(u);
    }
    out.push('\n');
    for (i, x) in traj.states.iter().enumerate() {
        let t = i as f64 * traj.h;
        out.push_str(&format!("{t}"));
        for v in x {
            out.push_str(&format!(",{v}"));
        }
        for v in traj.input.eval(t) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
