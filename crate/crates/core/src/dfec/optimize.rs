//! Search for the injection `(dp, T_on, T_off)` minimizing the nadir cost,
//! contour sweeps over the switching window, and droop calibration.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{nadir_cost, simulate, DfecAction, LoadStep, SimOptions, TwoMachineModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub dp_max: f64,
    #[serde(default)]
    pub t_on_min: f64,
    pub t_on_max: f64,
    #[serde(default)]
    pub t_off_min: f64,
    pub t_off_max: f64,
}

impl Bounds {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        let ok = self.dp_max >= 0.0
            && 0.0 <= self.t_on_min
            && self.t_on_min <= self.t_on_max
            && self.t_off_min <= self.t_off_max
            && self.t_on_min < self.t_off_max
            && self.t_off_max <= horizon;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "inconsistent bounds {self:?} for horizon {horizon}"
            )))
        }
    }

    fn to_action(&self, u: &[f64; 3]) -> DfecAction {
        let c = |v: f64| v.clamp(0.0, 1.0);
        DfecAction {
            dp: c(u[0]) * self.dp_max,
            t_on: self.t_on_min + c(u[1]) * (self.t_on_max - self.t_on_min),
            t_off: self.t_off_min + c(u[2]) * (self.t_off_max - self.t_off_min),
        }
    }

    fn to_unit(&self, a: &DfecAction) -> [f64; 3] {
        let s = |v: f64, lo: f64, hi: f64| {
            if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        [
            s(a.dp, 0.0, self.dp_max),
            s(a.t_on, self.t_on_min, self.t_on_max),
            s(a.t_off, self.t_off_min, self.t_off_max),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Points per axis of the coarse start grid.
    pub grid: usize,
    /// Simplex searches started from the best grid points (plus the initial guess).
    pub starts: usize,
    /// Simplex diameter in scaled coordinates at which a search stops.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_step: f64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            grid: 5,
            starts: 4,
            tol: 1e-3,
            max_iter: 400,
            initial_step: 0.1,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub start: usize,
    pub iteration: usize,
    pub action: DfecAction,
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfecResult {
    pub action: DfecAction,
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub cost: f64,
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub uncontrolled_cost: f64,
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub uncontrolled_nadir: f64,
    #[serde(with = "crate::serde_ext::null_is_inf")]
    pub controlled_nadir: f64,
    pub evaluations: usize,
    pub history: Vec<Iterate>,
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Input(format!("thread pool: {e}")))
}

/// Orders candidates by cost, then by the smaller injection.
fn better(a: (f64, &DfecAction), b: (f64, &DfecAction)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.dp.total_cmp(&b.1.dp)).is_lt()
}

struct Objective<'a> {
    model: &'a TwoMachineModel,
    step: &'a LoadStep,
    sim: &'a SimOptions,
    bounds: &'a Bounds,
    penalty_base: f64,
}

impl Objective<'_> {
    /// Cost in scaled coordinates. An empty window is penalized in
    /// proportion to how far it is inverted, so the simplex is pushed back.
    fn eval(&self, u: &[f64; 3]) -> (f64, DfecAction) {
        let a = self.bounds.to_action(u);
        if a.t_on >= a.t_off {
            return (self.penalty_base + (a.t_on - a.t_off) + 1e-3, a);
        }
        let outside: f64 = u.iter().map(|v| (v - v.clamp(0.0, 1.0)).abs()).sum();
        let c = nadir_cost(self.model, &a, self.step, self.sim).unwrap_or(f64::INFINITY);
        (c + outside * self.penalty_base, a)
    }
}

/// Nelder–Mead from `u0`. Returns the best point, its cost and the log.
fn nelder_mead(
    obj: &Objective,
    u0: [f64; 3],
    start: usize,
    opts: &OptimizerOptions,
) -> (f64, DfecAction, Vec<Iterate>, usize) {
    let mut evals = 0;
    let mut f = |u: &[f64; 3]| {
        evals += 1;
        obj.eval(u)
    };
    let mut simplex: Vec<([f64; 3], f64, DfecAction)> = Vec::with_capacity(4);
    let (c0, a0) = f(&u0);
    simplex.push((u0, c0, a0));
    for i in 0..3 {
        let mut u = u0;
        // Step inward from a bound so the vertex stays feasible.
        u[i] += if u0[i] + opts.initial_step <= 1.0 {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        let (c, a) = f(&u);
        simplex.push((u, c, a));
    }
    let mut log = Vec::new();
    let sort = |s: &mut Vec<([f64; 3], f64, DfecAction)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.dp.total_cmp(&b.2.dp)))
    };
    for it in 0..opts.max_iter {
        sort(&mut simplex);
        log.push(Iterate {
            start,
            iteration: it,
            action: simplex[0].2,
            cost: simplex[0].1,
        });
        let diam = simplex
            .iter()
            .skip(1)
            .map(|v| {
                (0..3)
                    .map(|k| (v.0[k] - simplex[0].0[k]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diam < opts.tol {
            break;
        }
        let mut cen = [0.0; 3];
        for v in &simplex[..3] {
            for k in 0..3 {
                cen[k] += v.0[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let along =
            |t: f64| -> [f64; 3] { std::array::from_fn(|k| cen[k] + t * (worst.0[k] - cen[k])) };
        let ur = along(-1.0);
        let (cr, ar) = f(&ur);
        if cr < simplex[0].1 {
            let ue = along(-2.0);
            let (ce, ae) = f(&ue);
            simplex[3] = if ce < cr { (ue, ce, ae) } else { (ur, cr, ar) };
        } else if cr < simplex[2].1 {
            simplex[3] = (ur, cr, ar);
        } else {
            let uc = if cr < worst.1 {
                along(-0.5)
            } else {
                along(0.5)
            };
            let (cc, ac) = f(&uc);
            if cc < worst.1.min(cr) {
                simplex[3] = (uc, cc, ac);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let u: [f64; 3] = std::array::from_fn(|k| best[k] + 0.5 * (v.0[k] - best[k]));
                    let (c, a) = f(&u);
                    *v = (u, c, a);
                }
            }
        }
    }
    sort(&mut simplex);
    let (_, c, a) = simplex[0];
    (c, a, log, evals)
}

/// Evaluates the cost on an `n×n×n` grid over the bounds, in parallel with an
/// ordered merge. Entries are `(action, cost)`, invalid windows excluded.
pub fn grid_costs(
    model: &TwoMachineModel,
    step: &LoadStep,
    bounds: &Bounds,
    n: usize,
    sim: &SimOptions,
    workers: usize,
) -> Result<Vec<(DfecAction, f64)>> {
    if n < 2 {
        return Err(Error::Input(
            "grid needs at least two points per axis".into(),
        ));
    }
    let lin = |i: usize| i as f64 / (n - 1) as f64;
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let a = bounds.to_action(&[lin(i), lin(j), lin(k)]);
                if a.t_on < a.t_off {
                    pts.push(a);
                }
            }
        }
    }
    let costs: Vec<Result<f64>> = pool(workers)?.install(|| {
        pts.par_iter()
            .map(|a| nadir_cost(model, a, step, sim))
            .collect()
    });
    pts.into_iter()
        .zip(costs)
        .map(|(a, c)| c.map(|c| (a, c)))
        .collect()
}

/// Best entry of a grid evaluation.
pub fn grid_best(entries: &[(DfecAction, f64)]) -> Option<(DfecAction, f64)> {
    let mut best: Option<(DfecAction, f64)> = None;
    for (a, c) in entries {
        if best
            .as_ref()
            .map_or(true, |(ba, bc)| better((*c, a), (*bc, ba)))
        {
            best = Some((*a, *c));
        }
    }
    best
}

/// Multi-start derivative-free search over the bounded action space.
pub fn optimize_action(
    model: &TwoMachineModel,
    step: &LoadStep,
    bounds: &Bounds,
    initial: &DfecAction,
    sim: &SimOptions,
    opts: &OptimizerOptions,
) -> Result<DfecResult> {
    model.validate()?;
    bounds.validate(sim.horizon)?;
    let base = simulate(model, &DfecAction::NONE, step, sim)?;
    let obj = Objective {
        model,
        step,
        sim,
        bounds,
        penalty_base: base.metrics.cost.max(1e-6) * 10.0 + 1.0,
    };

    let grid = grid_costs(model, step, bounds, opts.grid, sim, opts.workers)?;
    let mut ranked: Vec<&(DfecAction, f64)> = grid.iter().filter(|(_, c)| c.is_finite()).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.dp.total_cmp(&b.0.dp)));
    let mut starts: Vec<[f64; 3]> = vec![bounds.to_unit(initial)];
    starts.extend(
        ranked
            .iter()
            .take(opts.starts)
            .map(|(a, _)| bounds.to_unit(a)),
    );

    let runs: Vec<(f64, DfecAction, Vec<Iterate>, usize)> = pool(opts.workers)?.install(|| {
        starts
            .par_iter()
            .enumerate()
            .map(|(i, u)| nelder_mead(&obj, *u, i, opts))
            .collect()
    });

    let mut evaluations = grid.len();
    let mut history = Vec::new();
    let mut best: Option<(f64, DfecAction)> = None;
    for (c, a, log, n) in runs {
        evaluations += n;
        history.extend(log);
        if c.is_finite()
            && a.t_on < a.t_off
            && best
                .as_ref()
                .map_or(true, |(bc, ba)| better((c, &a), (*bc, ba)))
        {
            best = Some((c, a));
        }
    }
    // Grid points compete too; dp = 0 keeps the uncontrolled cost reachable.
    if let Some((ga, gc)) = grid_best(&grid) {
        if best
            .as_ref()
            .map_or(true, |(bc, ba)| better((gc, &ga), (*bc, ba)))
        {
            best = Some((gc, ga));
        }
    }
    let (mut cost, mut action) = best.ok_or_else(|| {
        Error::Optimization(format!(
            "every start diverged after {evaluations} evaluations"
        ))
    })?;
    if cost > base.metrics.cost {
        cost = base.metrics.cost;
        action = DfecAction { dp: 0.0, ..action };
    }
    let controlled = simulate(model, &action, step, sim)?;
    Ok(DfecResult {
        action,
        cost,
        uncontrolled_cost: base.metrics.cost,
        uncontrolled_nadir: base.metrics.nadir,
        controlled_nadir: controlled.metrics.nadir,
        evaluations,
        history,
    })
}

/// Grid axis `[lo, hi]` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self.n {
            0 => vec![],
            1 => vec![self.lo],
            n => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Cost ×1000 over a `(T_on, T_off)` grid; cells with `T_on ≥ T_off` hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub dp: f64,
    pub t_on: Vec<f64>,
    pub t_off: Vec<f64>,
    /// Row per `t_on`, column per `t_off`.
    pub values: Vec<Vec<f64>>,
}

impl Contour {
    /// Smallest finite cell as `(t_on, t_off, value)`.
    pub fn argmin(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, row) in self.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v.is_finite() && best.map_or(true, |b| v < b.2) {
                    best = Some((self.t_on[i], self.t_off[j], v));
                }
            }
        }
        best
    }

    /// CSV with the `T_off` values in the header row and `T_on` in the first column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut head = vec!["t_on\\t_off".to_string()];
        head.extend(self.t_off.iter().map(f64::to_string));
        wr.write_record(&head)?;
        for (t, row) in self.t_on.iter().zip(&self.values) {
            let mut r = vec![t.to_string()];
            r.extend(row.iter().map(f64::to_string));
            wr.write_record(&r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub fn contour_sweep(
    model: &TwoMachineModel,
    step: &LoadStep,
    dp: f64,
    t_on: Axis,
    t_off: Axis,
    sim: &SimOptions,
    workers: usize,
) -> Result<Contour> {
    model.validate()?;
    let ons = t_on.values();
    let offs = t_off.values();
    let cells: Vec<(usize, usize)> = (0..ons.len())
        .flat_map(|i| (0..offs.len()).map(move |j| (i, j)))
        .collect();
    let vals: Vec<Result<f64>> = pool(workers)?.install(|| {
        cells
            .par_iter()
            .map(|&(i, j)| {
                let a = DfecAction {
                    dp,
                    t_on: ons[i],
                    t_off: offs[j],
                };
                if !(a.t_on < a.t_off) || a.t_on < 0.0 {
                    return Ok(f64::NAN);
                }
                nadir_cost(model, &a, step, sim).map(|c| 1000.0 * c)
            })
            .collect()
    });
    let mut values = vec![vec![f64::NAN; offs.len()]; ons.len()];
    for ((i, j), v) in cells.into_iter().zip(vals) {
        values[i][j] = v?;
    }
    Ok(Contour {
        dp,
        t_on: ons,
        t_off: offs,
        values,
    })
}

/// Governor gain `K₁` giving the target uncontrolled nadir, by bisection on
/// `[k_lo, k_hi]` (the nadir shrinks as the gain grows).
pub fn calibrate_droop(
    model: &TwoMachineModel,
    step: &LoadStep,
    target_nadir: f64,
    k_lo: f64,
    k_hi: f64,
    sim: &SimOptions,
) -> Result<TwoMachineModel> {
    let nadir = |k: f64| -> Result<f64> {
        let mut m = model.clone();
        m.governor.k1 = k;
        Ok(simulate(&m, &DfecAction::NONE, step, sim)?.metrics.nadir)
    };
    let (mut lo, mut hi) = (k_lo, k_hi);
    let (n_lo, n_hi) = (nadir(lo)?, nadir(hi)?);
    if !((n_lo - target_nadir) * (n_hi - target_nadir) <= 0.0) {
        return Err(Error::Optimization(format!(
            "target nadir {target_nadir} not bracketed: {n_lo} at K1={lo}, {n_hi} at K1={hi}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (nadir(mid)? > target_nadir) == (n_lo > target_nadir) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-6 * mid {
            break;
        }
    }
    let mut m = model.clone();
    m.governor.k1 = 0.5 * (lo + hi);
    Ok(m)
}
