//! Two-machine frequency model: a synchronous generator with a speed governor
//! and reheat turbine, and a synchronous motor, joined by a lossless line.
//!
//! State: `[δ₁, ω₁, δ₂, ω₂, g₁, g₂, p_hp, p_rh, p_lp]` where `g₁, g₂` are the
//! governor lead-lag states and `p_*` the turbine stage powers. Internal EMFs
//! are constant (no voltage control).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::OMEGA_S_60HZ;
use crate::sim::trajectory::Event;
use crate::sim::{integrate, EventKind, OdeOptions, Trajectory};

pub const N_STATES: usize = 9;

/// Speed governor and turbine, IEESGO structure.
///
/// `g₁' = (K₁(1−ω₁) − g₁)/T₁`, lead-lag `(1+sT₂)/(1+sT₃)` giving
/// `P_g = (T₂/T₃)g₁ + (1−T₂/T₃)g₂`, valve `P_v = clamp(P_set + P_g)`, then
/// high-pressure (T₄), reheater (T₅) and low-pressure (T₆) stages mixed as
/// `P_m = (1−K₂)p_hp + K₂(1−K₃)p_rh + K₂K₃p_lp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Governor {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub t6: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoMachineModel {
    pub h1: f64,
    pub h2: f64,
    pub e1: f64,
    pub e2: f64,
    /// Total transfer reactance, pu.
    pub x: f64,
    #[serde(default)]
    pub d1: f64,
    #[serde(default)]
    pub d2: f64,
    #[serde(default = "default_omega_s")]
    pub omega_s: f64,
    /// Power setpoint of both machines, pu.
    #[serde(default = "default_p_set")]
    pub p_set: f64,
    pub governor: Governor,
}

fn default_omega_s() -> f64 {
    OMEGA_S_60HZ
}

fn default_p_set() -> f64 {
    0.75
}

/// Step in the motor's mechanical load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadStep {
    pub magnitude: f64,
    #[serde(default)]
    pub time: f64,
}

impl LoadStep {
    pub fn none() -> Self {
        LoadStep {
            magnitude: 0.0,
            time: 0.0,
        }
    }
}

/// Injection `dp` at the generator bus on `[t_on, t_off)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfecAction {
    pub dp: f64,
    pub t_on: f64,
    pub t_off: f64,
}

impl DfecAction {
    pub const NONE: DfecAction = DfecAction {
        dp: 0.0,
        t_on: 0.0,
        t_off: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.dp == 0.0 && self.t_on == 0.0 && self.t_off == 0.0 {
            return Ok(());
        }
        if !(self.dp >= 0.0 && self.dp.is_finite()) {
            return Err(Error::Input(format!(
                "dp must be non-negative, got {}",
                self.dp
            )));
        }
        if !(0.0 <= self.t_on && self.t_on < self.t_off && self.t_off.is_finite()) {
            return Err(Error::Input(format!(
                "action window needs 0 <= t_on < t_off, got [{}, {}]",
                self.t_on, self.t_off
            )));
        }
        Ok(())
    }

    fn active(&self, t: f64) -> bool {
        self.t_on <= t && t < self.t_off
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub horizon: f64,
    /// Length of the tail averaged for the steady-state frequency, s.
    pub tail: f64,
    pub dt_out: f64,
    pub ode: OdeOptions,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            horizon: 60.0,
            tail: 2.0,
            dt_out: 0.01,
            ode: OdeOptions::default(),
        }
    }
}

impl TwoMachineModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if !(self.x > 0.0) {
            return bad(format!("reactance must be positive, got {}", self.x));
        }
        if !(self.h1 > 0.0 && self.h2 > 0.0) {
            return bad("inertias must be positive".into());
        }
        if !(self.e1 > 0.0 && self.e2 > 0.0) {
            return bad("EMF magnitudes must be positive".into());
        }
        if !(self.omega_s > 0.0) {
            return bad("omega_s must be positive".into());
        }
        let g = &self.governor;
        if !(g.p_min < g.p_max) {
            return bad(format!(
                "governor limits inverted: {} >= {}",
                g.p_min, g.p_max
            ));
        }
        if [g.t1, g.t3, g.t4, g.t5, g.t6].iter().any(|t| !(*t > 0.0)) || g.t2 < 0.0 {
            return bad(
                "governor time constants T1, T3..T6 must be positive and T2 non-negative".into(),
            );
        }
        if !(self.p_set >= g.p_min && self.p_set <= g.p_max) {
            return bad(format!("setpoint {} outside governor limits", self.p_set));
        }
        if (self.p_set * self.x / (self.e1 * self.e2)).abs() >= 1.0 {
            return bad("no equilibrium: setpoint exceeds the line's transfer limit".into());
        }
        Ok(())
    }

    /// Peak transfer `E₁E₂/X`.
    pub fn p_max_transfer(&self) -> f64 {
        self.e1 * self.e2 / self.x
    }

    /// Pre-disturbance equilibrium with `δ₂ = 0`.
    pub fn equilibrium(&self) -> [f64; N_STATES] {
        let d = (self.p_set / self.p_max_transfer()).asin();
        let p = self.p_set;
        [d, 1.0, 0.0, 1.0, 0.0, 0.0, p, p, p]
    }

    /// Speed deviation at which governor and damping balance a load step in
    /// steady state.
    pub fn droop_deviation(&self, step: f64) -> f64 {
        step / (self.governor.k1 + self.d1 + self.d2)
    }

    pub fn state_labels() -> Vec<String> {
        [
            "delta_1", "omega_1", "delta_2", "omega_2", "gov_1", "gov_2", "p_hp", "p_rh", "p_lp",
        ]
        .map(String::from)
        .to_vec()
    }
}

/// State derivative. `t` selects which piecewise inputs are active.
pub fn dfec_dynamics(
    model: &TwoMachineModel,
    x: &[f64],
    t: f64,
    action: &DfecAction,
    step: &LoadStep,
    dx: &mut [f64],
) {
    let g = &model.governor;
    let (d1, w1, d2, w2) = (x[0], x[1], x[2], x[3]);
    let (g1, g2, hp, rh, lp) = (x[4], x[5], x[6], x[7], x[8]);
    let p12 = model.p_max_transfer() * (d1 - d2).sin();
    let inj = if action.active(t) { action.dp } else { 0.0 };
    let load = model.p_set + if t >= step.time { step.magnitude } else { 0.0 };
    let pm1 = (1.0 - g.k2) * hp + g.k2 * (1.0 - g.k3) * rh + g.k2 * g.k3 * lp;
    let r = g.t2 / g.t3;
    let pg = r * g1 + (1.0 - r) * g2;
    let pv = (model.p_set + pg).clamp(g.p_min, g.p_max);
    dx[0] = model.omega_s * (w1 - 1.0);
    dx[1] = (pm1 - (p12 - inj) - model.d1 * (w1 - 1.0)) / (2.0 * model.h1);
    dx[2] = model.omega_s * (w2 - 1.0);
    dx[3] = (p12 - load - model.d2 * (w2 - 1.0)) / (2.0 * model.h2);
    dx[4] = (g.k1 * (1.0 - w1) - g1) / g.t1;
    dx[5] = (g1 - g2) / g.t3;
    dx[6] = (pv - hp) / g.t4;
    dx[7] = (hp - rh) / g.t5;
    dx[8] = (rh - lp) / g.t6;
}

/// Frequency metrics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    /// `1 − min ω_avg`, pu.
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub nadir: f64,
    pub t_nadir: f64,
    /// Mean of `ω_avg` over the tail window.
    #[serde(with = "crate::serde_ext::null_is_nan")]
    pub omega_ss: f64,
    /// `ω_ss − min ω_avg`, or +∞ when unstable.
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub cost: f64,
    pub unstable: bool,
}

#[derive(Debug, Clone)]
pub struct DfecRun {
    pub trajectory: Trajectory,
    pub metrics: FrequencyMetrics,
}

fn average_frequency(traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().map(|x| 0.5 * (x[1] + x[3])).collect()
}

/// Pole slip: the angle separation passed π, so synchronism is lost.
fn lost_synchronism(traj: &Trajectory) -> bool {
    traj.states
        .iter()
        .any(|x| (x[0] - x[2]).abs() > PI || !x.iter().all(|v| v.is_finite()))
}

fn metrics(traj: &Trajectory, opts: &SimOptions) -> FrequencyMetrics {
    let wa = average_frequency(traj);
    let (mut imin, mut wmin) = (0, f64::INFINITY);
    for (i, &w) in wa.iter().enumerate() {
        if w < wmin {
            wmin = w;
            imin = i;
        }
    }
    let t_end = *traj.times.last().unwrap();
    let tail: Vec<f64> = traj
        .times
        .iter()
        .zip(&wa)
        .filter(|(t, _)| **t >= t_end - opts.tail)
        .map(|(_, w)| *w)
        .collect();
    let omega_ss = tail.iter().sum::<f64>() / tail.len() as f64;
    let unstable = lost_synchronism(traj);
    FrequencyMetrics {
        nadir: 1.0 - wmin,
        t_nadir: traj.times[imin],
        omega_ss,
        cost: if unstable {
            f64::INFINITY
        } else {
            omega_ss - wmin
        },
        unstable,
    }
}

/// Runs the model from equilibrium over `[0, horizon]`.
pub fn simulate(
    model: &TwoMachineModel,
    action: &DfecAction,
    step: &LoadStep,
    opts: &SimOptions,
) -> Result<DfecRun> {
    model.validate()?;
    action.validate()?;
    if !(opts.tail > 0.0 && opts.tail < opts.horizon) {
        return Err(Error::Input(format!(
            "tail {} must lie inside the horizon {}",
            opts.tail, opts.horizon
        )));
    }
    let x0 = model.equilibrium();
    let bps = [step.time, action.t_on, action.t_off];
    let rhs =
        |_t: f64, ts: f64, x: &[f64], dx: &mut [f64]| dfec_dynamics(model, x, ts, action, step, dx);
    let mut traj = Trajectory::new(TwoMachineModel::state_labels());
    match integrate(rhs, 0.0, &x0, opts.horizon, opts.dt_out, &bps, &opts.ode) {
        Ok(sol) => {
            traj.times = sol.times;
            traj.states = sol.states;
        }
        Err(Error::Stiffness { t, .. }) => {
            // Divergence: report what is known as an unstable run.
            traj.push(0.0, x0.to_vec());
            traj.events.push(Event {
                t,
                kind: EventKind::Instability,
                stage: None,
            });
            return Ok(DfecRun {
                trajectory: traj,
                metrics: FrequencyMetrics {
                    nadir: f64::INFINITY,
                    t_nadir: t,
                    omega_ss: f64::NAN,
                    cost: f64::INFINITY,
                    unstable: true,
                },
            });
        }
        Err(e) => return Err(e),
    }
    let wa = average_frequency(&traj);
    let hz = model.omega_s / (2.0 * PI);
    traj.add_derived("f_avg_hz", wa.iter().map(|w| w * hz).collect());
    traj.add_derived("omega_avg", wa);
    let mut ev = vec![Event {
        t: step.time,
        kind: EventKind::Disturbance,
        stage: None,
    }];
    if action.dp != 0.0 {
        ev.push(Event {
            t: action.t_on,
            kind: EventKind::SwitchOn,
            stage: Some(0),
        });
        ev.push(Event {
            t: action.t_off,
            kind: EventKind::SwitchOff,
            stage: Some(0),
        });
    }
    ev.sort_by(|a, b| a.t.total_cmp(&b.t));
    traj.events = ev;
    let m = metrics(&traj, opts);
    if m.unstable {
        let t = traj
            .states
            .iter()
            .zip(&traj.times)
            .find(|(x, _)| (x[0] - x[2]).abs() > PI)
            .map(|(_, t)| *t)
            .unwrap_or(opts.horizon);
        traj.events.push(Event {
            t,
            kind: EventKind::Instability,
            stage: None,
        });
        traj.events.sort_by(|a, b| a.t.total_cmp(&b.t));
    }
    Ok(DfecRun {
        trajectory: traj,
        metrics: m,
    })
}

/// `ω_ss − min_t (ω₁+ω₂)/2` for the given action; +∞ when the run loses
/// synchronism.
pub fn nadir_cost(
    model: &TwoMachineModel,
    action: &DfecAction,
    step: &LoadStep,
    opts: &SimOptions,
) -> Result<f64> {
    Ok(simulate(model, action, step, opts)?.metrics.cost)
}
