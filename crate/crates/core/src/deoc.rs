//! Discrete oscillation control: switching function, oscillation energy,
//! injection design toward a modal subspace, switch-time search and
//! multi-stage schedules.
//!
//! A stage shifts the equilibrium from `x_e` to `x_c` at `t_on` and back at
//! `t_off`. The switch-on instant is a root of
//! `h(x) = 2(x_e−x_c)ᵀD(x_e−x_c) − (x−x_c)ᵀ(D+AᵀEA)(x−x_c)`: at such an
//! instant the orbit about `x_c` has the amplitude of an orbit through `x_e`.
//! Switch-off happens at the first minimum of the oscillation energy.
//!
//! With [`SwitchScope::Targeted`] both rules are evaluated on the projection
//! of the state onto the stage's targeted modal pairs (about `x_e`). For a
//! single-mode system, or when every pair is targeted, this is the same as
//! [`SwitchScope::Full`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{equilibrium_shifted, InjectionVector, ReducedModel, StateVector};
use crate::modal::{quad, ModalBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SwitchScope {
    #[default]
    Targeted,
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchOptions {
    /// Sampling step for root bracketing and energy-minimum search, s.
    pub sample_step: f64,
    /// Root accepted once `|h| < root_rel_tol · 2(x_e−x_c)ᵀD(x_e−x_c)`.
    pub root_rel_tol: f64,
    /// Relative distance to `x_e` a verified root must achieve at switch-off.
    pub approach_tol: f64,
    pub verify: bool,
    pub scope: SwitchScope,
}

impl Default for SwitchOptions {
    fn default() -> Self {
        SwitchOptions {
            sample_step: 1e-3,
            root_rel_tol: 1e-10,
            approach_tol: 1e-6,
            verify: true,
            scope: SwitchScope::Targeted,
        }
    }
}

/// `h(x) = 2(x_e−x_c)ᵀD(x_e−x_c) − (x−x_c)ᵀ(D+AᵀEA)(x−x_c)`.
pub fn switching_function(
    basis: &ModalBasis,
    x_e: &StateVector,
    x_c: &StateVector,
    x: &StateVector,
) -> f64 {
    2.0 * quad(&basis.d, &(x_e - x_c)) - quad(&basis.d_ate_a, &(x - x_c))
}

/// `E_k = ω_s (ω−1)ᵀ H (ω−1)`.
pub fn oscillation_energy(model: &ReducedModel, x: &StateVector) -> f64 {
    let m = model.n_machines();
    (0..m)
        .map(|i| {
            let dw = x[m + i] - 1.0;
            model.h[i] * dw * dw
        })
        .sum::<f64>()
        * model.omega_s
}

/// Kinetic plus potential energy of the oscillation about `center`:
/// `E_k + ½ ΔδᵀB_aΔδ`. Constant along free orbits of the linear model.
pub fn total_oscillation_energy(
    model: &ReducedModel,
    center: &StateVector,
    x: &StateVector,
) -> f64 {
    let m = model.n_machines();
    let dd = x.rows(0, m) - center.rows(0, m);
    oscillation_energy(model, x) + 0.5 * (dd.transpose() * &model.ba * &dd)[0]
}

/// Conjugate-pair indices sorted by descending `|z|²` of `x − x_e`.
pub fn rank_pairs_by_excitation(
    basis: &ModalBasis,
    x_e: &StateVector,
    x: &StateVector,
) -> Vec<usize> {
    let ex = basis.pair_excitation(x_e, x);
    let mut idx: Vec<usize> = (0..ex.len()).collect();
    idx.sort_by(|&a, &b| ex[b].total_cmp(&ex[a]).then(a.cmp(&b)));
    idx
}

/// How the magnitude of a designed injection is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpScale {
    /// Euclidean norm of the targeted angle shift, rad.
    Absolute(f64),
    /// Modal amplitude of the shift as a multiple of the current targeted excitation.
    Relative(f64),
}

impl Default for DpScale {
    fn default() -> Self {
        DpScale::Relative(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct DpDesign {
    pub dp: InjectionVector,
    /// Norm of the angle shift actually requested, rad.
    pub scale: f64,
    /// `‖B_a⁻¹B_c ΔP − s v‖` of the least-squares solve.
    pub reach_residual: f64,
    /// Set when the targeted direction is not reachable through the CCs.
    pub reachability_warning: Option<String>,
}

fn check_pairs(basis: &ModalBasis, pairs: &[usize]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Input("no target modes given".into()));
    }
    if let Some(&bad) = pairs.iter().find(|&&k| k >= basis.n_pairs()) {
        return Err(Error::Input(format!(
            "target mode {bad} out of range (model has {} pairs)",
            basis.n_pairs()
        )));
    }
    Ok(())
}

/// Least-squares injection whose equilibrium shift lies along the angle part
/// of the targeted modal component of `x − x_e`.
pub fn design_dp(
    basis: &ModalBasis,
    model: &ReducedModel,
    x: &StateVector,
    target_pairs: &[usize],
    scale: DpScale,
) -> Result<DpDesign> {
    check_pairs(basis, target_pairs)?;
    let nc = model.n_ccs();
    if nc == 0 {
        return Err(Error::Model("model has no controllable components".into()));
    }
    let m = model.n_machines();
    let proj = basis.project(&model.x_e, x, target_pairs);
    let v: DVector<f64> = proj.rows(0, m) - model.x_e.rows(0, m);
    let vnorm = v.norm();
    let zero = || DpDesign {
        dp: DVector::zeros(nc),
        scale: 0.0,
        reach_residual: 0.0,
        reachability_warning: None,
    };
    if vnorm <= 1e-14 * model.delta_e.norm().max(1.0) {
        return Ok(zero());
    }
    let dir = v / vnorm;

    let g = model.cc_sensitivity();
    let svd = g.clone().svd(true, true);
    let unit = svd
        .solve(&dir, 1e-12 * svd.singular_values.max())
        .map_err(|e| Error::Model(format!("least-squares solve failed: {e}")))?;

    let s = match scale {
        DpScale::Absolute(s) => s,
        DpScale::Relative(ratio) => {
            // Modal amplitude of the unit shift versus the current excitation.
            let mut shift = StateVector::zeros(2 * m);
            shift.rows_mut(0, m).copy_from(&(-(&g * &unit)));
            let shift_x = &model.x_e + shift;
            let amp = |y: &StateVector| -> f64 {
                let e = basis.pair_excitation(&model.x_e, y);
                target_pairs.iter().map(|&k| e[k]).sum::<f64>().sqrt()
            };
            let a_unit = amp(&shift_x);
            if a_unit <= 0.0 {
                return Ok(zero());
            }
            ratio * amp(x) / a_unit
        }
    };
    let dp = unit * s;
    let reach_residual = (&g * &dp - &dir * s).norm();
    let reachability_warning = (reach_residual > 1e-6 * s.abs().max(1e-300)).then(|| {
        format!("targeted subspace not reachable through the CCs (residual {reach_residual:e} rad)")
    });
    Ok(DpDesign {
        dp,
        scale: s,
        reach_residual,
        reachability_warning,
    })
}

/// Sequential bracketing of sign changes of a scalar function of time.
struct RootScan<F: FnMut(f64) -> f64> {
    f: F,
    t: f64,
    h: f64,
    t_max: f64,
    step: f64,
    tol: f64,
    k: u64,
    t0: f64,
    min_abs: f64,
}

impl<F: FnMut(f64) -> f64> RootScan<F> {
    fn new(mut f: F, t0: f64, t_max: f64, step: f64, tol: f64) -> Self {
        let h = f(t0);
        RootScan {
            f,
            t: t0,
            h,
            t_max,
            step,
            tol,
            k: 0,
            t0,
            min_abs: h.abs(),
        }
    }

    /// Next root as `(t, |h(t)|)`.
    fn next_root(&mut self) -> Option<(f64, f64)> {
        if self.k == 0 && self.h == 0.0 {
            self.k = 1;
            let t = self.t;
            self.advance();
            return Some((t, 0.0));
        }
        while self.t < self.t_max {
            let (t_prev, h_prev) = (self.t, self.h);
            self.advance();
            let (t, h) = (self.t, self.h);
            if h == 0.0 {
                return Some((t, 0.0));
            }
            if h_prev != 0.0 && (h_prev < 0.0) != (h < 0.0) {
                return Some(self.bisect(t_prev, h_prev, t));
            }
        }
        None
    }

    fn advance(&mut self) {
        self.k += 1;
        // Stamps are t0 + k·step so the sample grid does not drift.
        self.t = (self.t0 + self.k as f64 * self.step).min(self.t_max);
        self.h = (self.f)(self.t);
        self.min_abs = self.min_abs.min(self.h.abs());
    }

    fn bisect(&mut self, mut lo: f64, h_lo: f64, mut hi: f64) -> (f64, f64) {
        let lo_neg = h_lo < 0.0;
        let mut best = (hi, self.h.abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let hm = (self.f)(mid);
            if hm.abs() < best.1 {
                best = (mid, hm.abs());
            }
            if hm.abs() < self.tol || hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if (hm < 0.0) == lo_neg {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.min_abs = self.min_abs.min(best.1);
        best
    }
}

/// First local minimum of `f` strictly after `t0` within `(t0, t_max]`,
/// bracketed on a fixed grid and refined by golden-section search.
/// Returns `(t, f(t), reached_t_max)`.
pub fn first_local_minimum(
    f: impl Fn(f64) -> f64,
    t0: f64,
    t_max: f64,
    step: f64,
) -> (f64, f64, bool) {
    let at = |k: u64| (t0 + k as f64 * step).min(t_max);
    let mut prev = (t0, f(t0));
    let mut cur = (at(1), f(at(1)));
    let mut k = 1;
    while cur.0 < t_max {
        k += 1;
        let next = (at(k), f(at(k)));
        if cur.1 < prev.1 && cur.1 <= next.1 {
            let (t, v) = golden_section(&f, prev.0, next.0);
            return if v <= cur.1 {
                (t, v, false)
            } else {
                (cur.0, cur.1, false)
            };
        }
        prev = cur;
        cur = next;
    }
    (t_max, f(t_max), true)
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 * b.abs().max(1.0) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Projection used by the switching rules for the given scope.
struct Scoped<'a> {
    basis: &'a ModalBasis,
    x_e: &'a StateVector,
    pairs: Option<Vec<usize>>,
}

impl Scoped<'_> {
    fn apply(&self, x: &StateVector) -> StateVector {
        match &self.pairs {
            Some(p) => self.basis.project(self.x_e, x, p),
            None => x.clone(),
        }
    }

    fn slowest_period(&self) -> f64 {
        let w = match &self.pairs {
            Some(p) => p
                .iter()
                .map(|&k| self.basis.modes[k].omega)
                .fold(f64::INFINITY, f64::min),
            None => self
                .basis
                .modes
                .iter()
                .map(|m| m.omega)
                .fold(f64::INFINITY, f64::min),
        };
        2.0 * std::f64::consts::PI / w
    }
}

fn scoped<'a>(
    basis: &'a ModalBasis,
    x_e: &'a StateVector,
    pairs: &[usize],
    scope: SwitchScope,
) -> Scoped<'a> {
    Scoped {
        basis,
        x_e,
        pairs: match scope {
            SwitchScope::Targeted if !pairs.is_empty() && pairs.len() < basis.n_pairs() => {
                Some(pairs.to_vec())
            }
            _ => None,
        },
    }
}

/// [`switching_function`] evaluated in the given scope. An empty `pairs`
/// means every pair.
pub fn scoped_switching_function(
    basis: &ModalBasis,
    x_e: &StateVector,
    x_c: &StateVector,
    x: &StateVector,
    pairs: &[usize],
    scope: SwitchScope,
) -> f64 {
    let sc = scoped(basis, x_e, pairs, scope);
    switching_function(basis, x_e, &sc.apply(x_c), &sc.apply(x))
}

/// [`oscillation_energy`] of the state projected onto the scope's pairs; the
/// quantity minimized by the switch-off rule.
pub fn scoped_oscillation_energy(
    basis: &ModalBasis,
    model: &ReducedModel,
    x: &StateVector,
    pairs: &[usize],
    scope: SwitchScope,
) -> f64 {
    oscillation_energy(model, &scoped(basis, &model.x_e, pairs, scope).apply(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchOn {
    pub t_on: f64,
    /// `|h|` at the accepted root.
    pub h_residual: f64,
    /// Relative distance to `x_e` reached at the subsequent switch-off, when verified.
    pub approach: Option<f64>,
    pub rejected_roots: usize,
}

/// Earliest root of the switching function on `trajectory` within
/// `[t_arm, t_max]` whose post-switch orbit reaches `x_e`.
///
/// `trajectory(t)` gives the (uncontrolled) state at absolute time `t`.
#[allow(clippy::too_many_arguments)]
pub fn find_switch_on(
    basis: &ModalBasis,
    model: &ReducedModel,
    x_c: &StateVector,
    trajectory: &dyn Fn(f64) -> StateVector,
    t_arm: f64,
    t_max: f64,
    target_pairs: &[usize],
    opts: &SwitchOptions,
) -> Result<SwitchOn> {
    if !(t_arm < t_max) {
        return Err(Error::Input(format!(
            "switch-on window [{t_arm}, {t_max}] is empty"
        )));
    }
    let x_e = &model.x_e;
    let sc = scoped(basis, x_e, target_pairs, opts.scope);
    let xc_s = sc.apply(x_c);
    let h_scale = 2.0 * quad(&basis.d, &(x_e - &xc_s));
    let tol = opts.root_rel_tol * h_scale.max(f64::MIN_POSITIVE);

    let h_of_t = |t: f64| switching_function(basis, x_e, &xc_s, &sc.apply(&trajectory(t)));
    let mut scan = RootScan::new(h_of_t, t_arm, t_max, opts.sample_step, tol);
    let shift = (x_e - &xc_s).norm();
    let mut rejected = 0;
    while let Some((t, res)) = scan.next_root() {
        if !opts.verify {
            return Ok(SwitchOn {
                t_on: t,
                h_residual: res,
                approach: None,
                rejected_roots: 0,
            });
        }
        let orbit = basis.orbit(&xc_s, &sc.apply(&trajectory(t)));
        let horizon = (t + sc.slowest_period()).min(t_max.max(t + opts.sample_step));
        let energy = |s: f64| oscillation_energy(model, &orbit.at(s - t));
        let (t_min, _, _) = first_local_minimum(energy, t, horizon, opts.sample_step);
        let dist = (orbit.at(t_min - t) - x_e).norm() / shift;
        if dist <= opts.approach_tol {
            return Ok(SwitchOn {
                t_on: t,
                h_residual: res,
                approach: Some(dist),
                rejected_roots: rejected,
            });
        }
        rejected += 1;
    }
    Err(Error::NoSwitchOpportunity {
        t_arm,
        t_max,
        min_abs_h: scan.min_abs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchOff {
    pub t_off: f64,
    /// Energy (in the switching scope) at `t_off`.
    pub energy: f64,
    /// No minimum was found before the window closed; `t_off = t_max`.
    pub max_window: bool,
}

/// First local minimum of the oscillation energy after `t_on` along the
/// controlled `trajectory`.
#[allow(clippy::too_many_arguments)]
pub fn find_switch_off(
    basis: &ModalBasis,
    model: &ReducedModel,
    trajectory: &dyn Fn(f64) -> StateVector,
    t_on: f64,
    t_max: f64,
    target_pairs: &[usize],
    opts: &SwitchOptions,
) -> SwitchOff {
    let sc = scoped(basis, &model.x_e, target_pairs, opts.scope);
    let energy = |t: f64| oscillation_energy(model, &sc.apply(&trajectory(t)));
    let (t_off, e, hit) = first_local_minimum(energy, t_on, t_max, opts.sample_step);
    SwitchOff {
        t_off,
        energy: e,
        max_window: hit,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub h_residual: f64,
    pub approach: Option<f64>,
    pub rejected_roots: usize,
    /// Instantaneous `E_k` at switch-on and switch-off.
    pub ek_on: f64,
    pub ek_off: f64,
    /// `E_k` of the targeted pairs at switch-on and switch-off.
    pub target_ek_on: f64,
    pub target_ek_off: f64,
    /// Total oscillation energy about `x_e` before and after the stage.
    pub level_on: f64,
    pub level_off: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reachability_warning: Option<String>,
    #[serde(default)]
    pub max_window: bool,
}

/// One discrete action: `dp` applied on `[t_on, t_off)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStage {
    pub target_modes: Vec<usize>,
    /// CC power change, pu on system base.
    pub dp: Vec<f64>,
    pub t_on: f64,
    pub t_off: f64,
    pub diagnostics: Option<StageDiagnostics>,
}

impl ControlStage {
    pub fn new(dp: Vec<f64>, t_on: f64, t_off: f64) -> Self {
        ControlStage {
            target_modes: vec![],
            dp,
            t_on,
            t_off,
            diagnostics: None,
        }
    }

    pub fn dp_vector(&self) -> InjectionVector {
        DVector::from_vec(self.dp.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStage {
    pub target_modes: Vec<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeocSchedule {
    pub stages: Vec<ControlStage>,
    pub skipped: Vec<SkippedStage>,
    pub final_time: f64,
    pub final_state: Vec<f64>,
}

impl DeocSchedule {
    /// Checks ordering and non-overlap of the stages.
    pub fn validate(stages: &[ControlStage]) -> Result<()> {
        for (k, s) in stages.iter().enumerate() {
            if !(s.t_on < s.t_off) {
                return Err(Error::Schedule(format!(
                    "stage {k}: t_on {} is not before t_off {}",
                    s.t_on, s.t_off
                )));
            }
            if let Some(next) = stages.get(k + 1) {
                if s.t_off > next.t_on {
                    return Err(Error::Schedule(format!(
                        "stage {k} ends at {} after stage {} starts at {}",
                        s.t_off,
                        k + 1,
                        next.t_on
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.stages.first()?.t_on, self.stages.last()?.t_off))
    }
}

/// What a stage should target and how its injection is obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    pub modes: Vec<usize>,
    pub dp_override: Option<InjectionVector>,
    pub scale: DpScale,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleOptions {
    pub switch: SwitchOptions,
    /// Delay between the start state and arming of the first stage, s.
    pub arm_delay: f64,
    /// Longest search window per stage for either switching instant, s.
    pub window: f64,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions {
            switch: SwitchOptions::default(),
            arm_delay: 0.0,
            window: 5.0,
        }
    }
}

/// Default plan: one stage per pair, ordered by descending excitation of `x0`.
pub fn default_plans(
    basis: &ModalBasis,
    x_e: &StateVector,
    x0: &StateVector,
    count: usize,
    scale: DpScale,
) -> Vec<StagePlan> {
    rank_pairs_by_excitation(basis, x_e, x0)
        .into_iter()
        .take(count)
        .map(|k| StagePlan {
            modes: vec![k],
            dp_override: None,
            scale,
        })
        .collect()
}

/// Builds a schedule stage by stage starting from `x_start` at `t_start`,
/// with the system orbiting `x_e`.
pub fn build_schedule(
    basis: &ModalBasis,
    model: &ReducedModel,
    t_start: f64,
    x_start: &StateVector,
    plans: &[StagePlan],
    opts: &ScheduleOptions,
) -> Result<DeocSchedule> {
    let x_e = &model.x_e;
    let mut t_cur = t_start;
    let mut x_cur = x_start.clone();
    let mut t_arm = t_start + opts.arm_delay;
    let mut stages = Vec::new();
    let mut skipped = Vec::new();

    for plan in plans {
        check_pairs(basis, &plan.modes)?;
        let (dp, reach) = match &plan.dp_override {
            Some(dp) => {
                if dp.len() != model.n_ccs() {
                    return Err(Error::dim("stage dp override", model.n_ccs(), dp.len()));
                }
                (dp.clone(), None)
            }
            None => {
                let x_arm = basis.orbit(x_e, &x_cur).at(t_arm - t_cur);
                let d = design_dp(basis, model, &x_arm, &plan.modes, plan.scale)?;
                (d.dp, d.reachability_warning)
            }
        };
        let x_c = equilibrium_shifted(model, &dp)?;
        let free = basis.orbit(x_e, &x_cur);
        let tc = t_cur;
        let uncontrolled = move |t: f64| free.at(t - tc);
        let t_max = t_arm + opts.window;
        // Roots whose stage would raise the total oscillation energy (possible
        // when dp also excites non-targeted pairs) are passed over.
        let mut t_from = t_arm;
        let mut extra_rejected = 0;
        let found = loop {
            let on = match find_switch_on(basis, model, &x_c, &uncontrolled, t_from, t_max, &plan.modes, &opts.switch) {
                Ok(on) => on,
                Err(Error::NoSwitchOpportunity { .. }) if extra_rejected > 0 => {
                    break Err(format!(
                        "no switch-on in [{t_arm:.4}, {t_max:.4}] s lowers the oscillation energy ({extra_rejected} roots rejected)"
                    ))
                }
                Err(e @ Error::NoSwitchOpportunity { .. }) => break Err(e.to_string()),
                Err(e) => return Err(e),
            };
            let x_on = uncontrolled(on.t_on);
            let ctl_orbit = basis.orbit(&x_c, &x_on);
            let t_on = on.t_on;
            let controlled = move |t: f64| ctl_orbit.at(t - t_on);
            let off = find_switch_off(
                basis,
                model,
                &controlled,
                t_on,
                t_on + opts.window,
                &plan.modes,
                &opts.switch,
            );
            let x_off = controlled(off.t_off);
            let level_on = total_oscillation_energy(model, x_e, &x_on);
            let level_off = total_oscillation_energy(model, x_e, &x_off);
            if level_off < level_on {
                break Ok((on, off, x_on, x_off, level_on, level_off));
            }
            extra_rejected += 1;
            t_from = t_on + opts.switch.sample_step;
        };
        let (on, off, x_on, x_off, level_on, level_off) = match found {
            Ok(v) => v,
            Err(reason) => {
                skipped.push(SkippedStage {
                    target_modes: plan.modes.clone(),
                    reason,
                });
                continue;
            }
        };

        stages.push(ControlStage {
            target_modes: plan.modes.clone(),
            dp: dp.iter().copied().collect(),
            t_on: on.t_on,
            t_off: off.t_off,
            diagnostics: Some(StageDiagnostics {
                h_residual: on.h_residual,
                approach: on.approach,
                rejected_roots: on.rejected_roots + extra_rejected,
                ek_on: oscillation_energy(model, &x_on),
                ek_off: oscillation_energy(model, &x_off),
                target_ek_on: scoped_oscillation_energy(
                    basis,
                    model,
                    &x_on,
                    &plan.modes,
                    opts.switch.scope,
                ),
                target_ek_off: scoped_oscillation_energy(
                    basis,
                    model,
                    &x_off,
                    &plan.modes,
                    opts.switch.scope,
                ),
                level_on,
                level_off,
                reachability_warning: reach,
                max_window: off.max_window,
            }),
        });
        t_cur = off.t_off;
        x_cur = x_off;
        t_arm = t_cur;
    }

    Ok(DeocSchedule {
        stages,
        skipped,
        final_time: t_cur,
        final_state: x_cur.iter().copied().collect(),
    })
}

/// Schedule stages re-evaluated with explicit switch-on times: each stage
/// keeps its `dp`, switches on at the given time and off at the next energy
/// minimum.
pub fn replay_with_switch_on(
    basis: &ModalBasis,
    model: &ReducedModel,
    t_start: f64,
    x_start: &StateVector,
    stages: &[ControlStage],
    t_on: &[f64],
    opts: &ScheduleOptions,
) -> Result<Vec<ControlStage>> {
    if t_on.len() != stages.len() {
        return Err(Error::dim(
            "replay switch-on times",
            stages.len(),
            t_on.len(),
        ));
    }
    let x_e = &model.x_e;
    let (mut t_cur, mut x_cur) = (t_start, x_start.clone());
    let mut out = Vec::with_capacity(stages.len());
    for (s, &ton) in stages.iter().zip(t_on) {
        if ton < t_cur {
            return Err(Error::Schedule(format!(
                "switch-on {ton} precedes the end of the previous stage {t_cur}"
            )));
        }
        let x_on = basis.orbit(x_e, &x_cur).at(ton - t_cur);
        let x_c = equilibrium_shifted(model, &s.dp_vector())?;
        let orbit = basis.orbit(&x_c, &x_on);
        let controlled = |t: f64| orbit.at(t - ton);
        let off = find_switch_off(
            basis,
            model,
            &controlled,
            ton,
            ton + opts.window,
            &s.target_modes,
            &opts.switch,
        );
        let x_off = controlled(off.t_off);
        out.push(ControlStage {
            target_modes: s.target_modes.clone(),
            dp: s.dp.clone(),
            t_on: ton,
            t_off: off.t_off,
            diagnostics: Some(StageDiagnostics {
                h_residual: scoped_switching_function(
                    basis,
                    x_e,
                    &x_c,
                    &x_on,
                    &s.target_modes,
                    opts.switch.scope,
                )
                .abs(),
                approach: None,
                rejected_roots: 0,
                ek_on: oscillation_energy(model, &x_on),
                ek_off: oscillation_energy(model, &x_off),
                target_ek_on: scoped_oscillation_energy(
                    basis,
                    model,
                    &x_on,
                    &s.target_modes,
                    opts.switch.scope,
                ),
                target_ek_off: scoped_oscillation_energy(
                    basis,
                    model,
                    &x_off,
                    &s.target_modes,
                    opts.switch.scope,
                ),
                level_on: total_oscillation_energy(model, x_e, &x_on),
                level_off: total_oscillation_energy(model, x_e, &x_off),
                reachability_warning: None,
                max_window: off.max_window,
            }),
        });
        t_cur = off.t_off;
        x_cur = x_off;
    }
    Ok(out)
}

/// Injection converted from per-unit to MW.
pub fn dp_to_mw(model: &ReducedModel, dp: &[f64]) -> Vec<f64> {
    dp.iter().map(|p| p * model.base_mva).collect()
}
