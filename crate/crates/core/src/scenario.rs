//! Scenario files and the end-to-end runs behind the command line.
//!
//! A DEOC scenario names a disturbance, a horizon and either explicit stages
//! (target modes plus an optional injection override) or a stage count for
//! automatic planning. A DFEC scenario carries the two-machine parameters, the
//! load step, optimization bounds and sweep settings.

use std::path::Path;

use nalgebra::DVector;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::deoc::{
    build_schedule, default_plans, dp_to_mw, DeocSchedule, DpScale, ScheduleOptions, SkippedStage,
    StagePlan,
};
use crate::dfec::{
    Axis, Bounds, DfecAction, LoadStep, OptimizerOptions, SimOptions, TwoMachineModel,
};
use crate::error::{Error, Result};
use crate::grid::{BusId, GridSystem, ReducedModel, SCHEMA_VERSION};
use crate::modal::ModalBasis;
use crate::sim::{
    apply_disturbance, fault_pulse_magnitude, simulate_deoc, Disturbance, Event, Trajectory,
};

/// Five cycles at 60 Hz.
pub const DEFAULT_CLEARING: f64 = 5.0 / 60.0;

fn default_clearing() -> f64 {
    DEFAULT_CLEARING
}

fn default_t_end() -> f64 {
    10.0
}

fn default_dt_out() -> f64 {
    1e-3
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Input(format!("{what} {}: {e}", path.display())))
}

fn check_version(v: u32, what: &str) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Input(format!(
            "{what}: unsupported schema_version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Disturbance as written in a scenario; powers use the system's units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    InitialState {
        #[serde(default)]
        t0: f64,
        x0: Vec<f64>,
    },
    /// Fault emulated as an injection pulse. Without a magnitude, the pulse
    /// gives the nearest machine an accelerating power equal to its
    /// mechanical power.
    PowerPulse {
        bus: BusId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        magnitude: Option<f64>,
        #[serde(default)]
        start: f64,
        #[serde(default = "default_clearing")]
        duration: f64,
    },
}

impl DisturbanceSpec {
    pub fn resolve(&self, sys: &GridSystem, model: &ReducedModel) -> Result<Disturbance> {
        Ok(match self {
            DisturbanceSpec::InitialState { t0, x0 } => Disturbance::InitialState {
                t0: *t0,
                x0: x0.clone(),
            },
            DisturbanceSpec::PowerPulse {
                bus,
                magnitude,
                start,
                duration,
            } => Disturbance::PowerPulse {
                bus: *bus,
                magnitude: match magnitude {
                    Some(p) => sys.to_pu(*p),
                    None => fault_pulse_magnitude(model, *bus)?,
                },
                start: *start,
                duration: *duration,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Targeted pair indices (ascending frequency).
    pub modes: Vec<usize>,
    /// Injection per CC in the system's units; designed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<DpScale>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeocScenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub disturbance: DisturbanceSpec,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt_out")]
    pub dt_out: f64,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    /// Stages to plan by excitation when `stages` is empty (default: every pair).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_count: Option<usize>,
    #[serde(default)]
    pub scale: DpScale,
    #[serde(default)]
    pub schedule: ScheduleOptions,
}

impl DeocScenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let s: DeocScenario = read_json(path.as_ref(), "DEOC scenario")?;
        check_version(s.schema_version, "DEOC scenario")?;
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: DeocScenario =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("DEOC scenario: {e}")))?;
        check_version(s.schema_version, "DEOC scenario")?;
        Ok(s)
    }

    /// Checks the scenario against a system without running it.
    pub fn check_against(
        &self,
        sys: &GridSystem,
        model: &ReducedModel,
        basis: &ModalBasis,
    ) -> Result<()> {
        if !(self.t_end > 0.0 && self.dt_out > 0.0) {
            return Err(Error::Input("t_end and dt_out must be positive".into()));
        }
        for s in &self.stages {
            if let Some(&m) = s.modes.iter().find(|&&m| m >= basis.n_pairs()) {
                return Err(Error::Input(format!(
                    "stage targets mode {m} but the system has {} pairs",
                    basis.n_pairs()
                )));
            }
        }
        let dist = self.disturbance.resolve(sys, model)?;
        let x0 = apply_disturbance(model, basis, &dist)?;
        self.plans(sys, model, basis, &x0).map(|_| ())
    }

    fn plans(
        &self,
        sys: &GridSystem,
        model: &ReducedModel,
        basis: &ModalBasis,
        x0: &DVector<f64>,
    ) -> Result<Vec<StagePlan>> {
        if self.stages.is_empty() {
            let n = self.stage_count.unwrap_or(basis.n_pairs());
            return Ok(default_plans(basis, &model.x_e, x0, n, self.scale));
        }
        self.stages
            .iter()
            .map(|s| {
                let dp_override = match &s.dp {
                    Some(v) => {
                        if v.len() != model.n_ccs() {
                            return Err(Error::Input(format!(
                                "stage dp has {} entries for {} CCs",
                                v.len(),
                                model.n_ccs()
                            )));
                        }
                        Some(DVector::from_iterator(
                            v.len(),
                            v.iter().map(|p| sys.to_pu(*p)),
                        ))
                    }
                    None => None,
                };
                Ok(StagePlan {
                    modes: s.modes.clone(),
                    dp_override,
                    scale: s.scale.unwrap_or(self.scale),
                })
            })
            .collect()
    }
}

/// Headline numbers of a DEOC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeocSummary {
    pub t_clear: f64,
    /// Peak `E_k` of the uncontrolled run after clearing.
    pub post_fault_peak_ek: f64,
    /// Peak `E_k` of the controlled run after the last switch-off.
    pub final_peak_ek: f64,
    pub ek_ratio: f64,
    pub span: Option<(f64, f64)>,
    pub mode_omega: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DeocOutcome {
    pub disturbance: Disturbance,
    pub schedule: DeocSchedule,
    pub uncontrolled: Trajectory,
    pub controlled: Trajectory,
    pub summary: DeocSummary,
}

fn peak_after(traj: &Trajectory, t: f64) -> f64 {
    traj.times
        .iter()
        .zip(&traj.diagnostics)
        .filter(|(s, _)| **s >= t)
        .map(|(_, d)| d.e_k)
        .fold(0.0, f64::max)
}

/// Disturbance, schedule design and both simulations.
pub fn run_deoc(
    sys: &GridSystem,
    model: &ReducedModel,
    basis: &ModalBasis,
    sc: &DeocScenario,
) -> Result<DeocOutcome> {
    sc.check_against(sys, model, basis)?;
    let dist = sc.disturbance.resolve(sys, model)?;
    let x0 = apply_disturbance(model, basis, &dist)?;
    let t_clear = dist.clear_time();
    let plans = sc.plans(sys, model, basis, &x0)?;
    let schedule = build_schedule(basis, model, t_clear, &x0, &plans, &sc.schedule)?;
    if let Some((_, end)) = schedule.span() {
        if end > sc.t_end {
            return Err(Error::Schedule(format!(
                "schedule ends at {end} s after t_end {}",
                sc.t_end
            )));
        }
    }
    let uncontrolled = simulate_deoc(model, basis, &dist, &[], sc.t_end, sc.dt_out)?;
    let controlled = simulate_deoc(model, basis, &dist, &schedule.stages, sc.t_end, sc.dt_out)?;
    let post = peak_after(&uncontrolled, t_clear);
    let last = schedule.span().map_or(t_clear, |s| s.1);
    let fin = peak_after(&controlled, last);
    let summary = DeocSummary {
        t_clear,
        post_fault_peak_ek: post,
        final_peak_ek: fin,
        ek_ratio: if post > 0.0 { fin / post } else { 0.0 },
        span: schedule.span(),
        mode_omega: basis.modes.iter().map(|m| m.omega).collect(),
    };
    Ok(DeocOutcome {
        disturbance: dist,
        schedule,
        uncontrolled,
        controlled,
        summary,
    })
}

/// One scheduled stage as exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub target_modes: Vec<usize>,
    pub dp_pu: Vec<f64>,
    pub dp_mw: Vec<f64>,
    pub t_on: f64,
    pub t_off: f64,
    pub ek_on: Option<f64>,
    pub ek_off: Option<f64>,
    pub level_on: Option<f64>,
    pub level_off: Option<f64>,
}

/// Schedule, headline numbers and event log of a DEOC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeocReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub cc_buses: Vec<BusId>,
    pub disturbance: Disturbance,
    pub summary: DeocSummary,
    pub stages: Vec<StageReport>,
    pub skipped: Vec<SkippedStage>,
    pub events: Vec<Event>,
}

impl DeocOutcome {
    pub fn report(&self, sys: &GridSystem, model: &ReducedModel, sc: &DeocScenario) -> DeocReport {
        let stages = self
            .schedule
            .stages
            .iter()
            .map(|s| {
                let d = s.diagnostics.as_ref();
                StageReport {
                    target_modes: s.target_modes.clone(),
                    dp_pu: s.dp.clone(),
                    dp_mw: dp_to_mw(model, &s.dp),
                    t_on: s.t_on,
                    t_off: s.t_off,
                    ek_on: d.map(|d| d.ek_on),
                    ek_off: d.map(|d| d.ek_off),
                    level_on: d.map(|d| d.level_on),
                    level_off: d.map(|d| d.level_off),
                }
            })
            .collect();
        DeocReport {
            system: sys.name.clone(),
            scenario: sc.name.clone(),
            cc_buses: model.cc_buses.clone(),
            disturbance: self.disturbance.clone(),
            summary: self.summary.clone(),
            stages,
            skipped: self.schedule.skipped.clone(),
            events: self.controlled.events.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Injection held fixed over the grid; the initial guess's when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<f64>,
    pub t_on: Axis,
    pub t_off: Axis,
}

/// How the bundled governor gain was obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationNote {
    pub target_nadir: f64,
    pub k1_bracket: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DfecScenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: TwoMachineModel,
    pub disturbance: LoadStep,
    #[serde(default)]
    pub sim: SimOptions,
    pub bounds: Bounds,
    pub initial_guess: DfecAction,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Action used by `simulate` when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<DfecAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationNote>,
}

impl DfecScenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let s: DfecScenario = read_json(path.as_ref(), "DFEC scenario")?;
        s.check()?;
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: DfecScenario =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("DFEC scenario: {e}")))?;
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        check_version(self.schema_version, "DFEC scenario")?;
        self.model.validate()?;
        self.bounds.validate(self.sim.horizon)?;
        self.initial_guess.validate()
    }
}
