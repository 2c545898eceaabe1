//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! Steps are chosen independently of the output grid and samples are taken
//! from the continuous extension, so refining `dt_out` leaves the values at
//! shared stamps unchanged. Integration restarts at every breakpoint; the
//! right-hand side receives the start time of the current segment so that
//! piecewise-constant inputs can be evaluated without looking across a jump.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated from the derivative when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_init: Option<f64>,
    /// Largest step; unlimited when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: None,
            max_steps: 10_000_000,
        }
    }
}

/// Samples of an integrated solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Output stamps: `t0`, every `k·dt_out` inside `(t0, t_end]`, and `t_end`.
pub fn output_grid(t0: f64, t_end: f64, dt_out: f64) -> Vec<f64> {
    let mut out = vec![t0];
    let mut k = (t0 / dt_out).floor() as i64 + 1;
    loop {
        let t = k as f64 * dt_out;
        if t > t_end {
            break;
        }
        if t > *out.last().unwrap() {
            out.push(t);
        }
        k += 1;
    }
    if *out.last().unwrap() < t_end {
        out.push(t_end);
    }
    out
}

fn check_span(t0: f64, t_end: f64, dt_out: f64) -> Result<()> {
    if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
        return Err(Error::Input(format!("invalid time span [{t0}, {t_end}]")));
    }
    if !(dt_out > 0.0 && dt_out.is_finite()) {
        return Err(Error::Input(format!(
            "dt_out must be positive, got {dt_out}"
        )));
    }
    Ok(())
}

/// Integrates `ẋ = f(t, t_seg, x)` from `t0` to `t_end`, restarting at each
/// breakpoint strictly inside the span, and samples on [`output_grid`].
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    dt_out: f64,
    breakpoints: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    check_span(t0, t_end, dt_out)?;
    let n = x0.len();
    let grid = output_grid(t0, t_end, dt_out);
    let mut bps: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > t0 && b < t_end)
        .collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    bps.push(t_end);

    let mut sol = OdeSolution {
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        steps: 0,
        rejected: 0,
    };
    sol.times.push(t0);
    sol.states.push(x0.to_vec());
    let mut next_out = 1;

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y = x0.to_vec();
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = t0;
    let mut h_try: Option<f64> = None;

    for &seg_end in &bps {
        let ts = t;
        f(t, ts, &y, &mut k[0]);
        let span = seg_end - t;
        let mut proposal = match (opts.h_init, h_try) {
            (_, Some(hp)) => hp,
            (Some(h0), None) => h0,
            (None, None) => initial_step(&mut f, t, ts, &y, &k[0], opts),
        }
        .min(opts.h_max.unwrap_or(f64::INFINITY));

        while t < seg_end {
            let mut h = proposal;
            let mut last = false;
            if t + h >= seg_end || seg_end - (t + h) < 1e-12 * span {
                h = seg_end - t;
                last = true;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Stiffness { t, h });
            }
            if sol.steps + sol.rejected >= opts.max_steps {
                return Err(Error::Stiffness { t, h });
            }

            let (k0, rest) = k.split_first_mut().unwrap();
            let (k1, rest) = rest.split_first_mut().unwrap();
            let (k2, rest) = rest.split_first_mut().unwrap();
            let (k3, rest) = rest.split_first_mut().unwrap();
            let (k4, rest) = rest.split_first_mut().unwrap();
            let (k5, rest) = rest.split_first_mut().unwrap();
            let k6 = &mut rest[0];

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k0[i];
            }
            f(t + C2 * h, ts, &ytmp, k1);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k0[i] + A32 * k1[i]);
            }
            f(t + C3 * h, ts, &ytmp, k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k0[i] + A42 * k1[i] + A43 * k2[i]);
            }
            f(t + C4 * h, ts, &ytmp, k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k0[i] + A52 * k1[i] + A53 * k2[i] + A54 * k3[i]);
            }
            f(t + C5 * h, ts, &ytmp, k4);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k0[i] + A62 * k1[i] + A63 * k2[i] + A64 * k3[i] + A65 * k4[i]);
            }
            let t_new = if last { seg_end } else { t + h };
            f(t_new, ts, &ytmp, k5);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k0[i] + A73 * k2[i] + A74 * k3[i] + A75 * k4[i] + A76 * k5[i]);
            }
            f(t_new, ts, &ynew, k6);
            for i in 0..n {
                err[i] = h
                    * (E1 * k0[i] + E3 * k2[i] + E4 * k3[i] + E5 * k4[i] + E6 * k5[i] + E7 * k6[i]);
            }
            let mut acc = 0.0;
            for i in 0..n {
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                let r = err[i] / sc;
                acc += r * r;
            }
            let enorm = if n == 0 { 0.0 } else { (acc / n as f64).sqrt() };
            if !enorm.is_finite() {
                sol.rejected += 1;
                proposal = h * 0.2;
                continue;
            }
            let fac = if enorm == 0.0 {
                5.0
            } else {
                (0.9 * enorm.powf(-0.2)).clamp(0.2, 5.0)
            };

            if enorm <= 1.0 {
                sol.steps += 1;
                // Dense output on [t, t_new].
                while next_out < grid.len() && grid[next_out] <= t_new {
                    let tout = grid[next_out];
                    let theta = (tout - t) / h;
                    let theta1 = 1.0 - theta;
                    let mut yo = vec![0.0; n];
                    for i in 0..n {
                        let ydiff = ynew[i] - y[i];
                        let bspl = h * k0[i] - ydiff;
                        let r4 = ydiff - h * k6[i] - bspl;
                        let r5 = h
                            * (D1 * k0[i]
                                + D3 * k2[i]
                                + D4 * k3[i]
                                + D5 * k4[i]
                                + D6 * k5[i]
                                + D7 * k6[i]);
                        yo[i] =
                            y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
                    }
                    if tout == t_new {
                        yo.copy_from_slice(&ynew);
                    }
                    sol.times.push(tout);
                    sol.states.push(yo);
                    next_out += 1;
                }
                y.copy_from_slice(&ynew);
                t = t_new;
                k0.copy_from_slice(k6);
                // A step truncated at a breakpoint should not shrink the next one.
                proposal = if last { proposal.max(h * fac) } else { h * fac }
                    .min(opts.h_max.unwrap_or(f64::INFINITY));
            } else {
                sol.rejected += 1;
                proposal = h * fac.min(1.0);
            }
        }
        h_try = Some(proposal);
    }
    Ok(sol)
}

fn initial_step<F>(f: &mut F, t: f64, ts: f64, y: &[f64], f0: &[f64], opts: &OdeOptions) -> f64
where
    F: FnMut(f64, f64, &[f64], &mut [f64]),
{
    let n = y.len();
    if n == 0 {
        return 1e-3;
    }
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let rms = |v: &dyn Fn(usize) -> f64| {
        ((0..n).map(|i| (v(i) / sc[i]).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(&|i| y[i]);
    let d1 = rms(&|i| f0[i]);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = (0..n).map(|i| y[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    f(t + h0, ts, &y1, &mut f1);
    let d2 = rms(&|i| f1[i] - f0[i]) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_absolute_and_nested() {
        let g = output_grid(0.03, 1.0, 0.1);
        assert_eq!(g[0], 0.03);
        assert_eq!(g[1], 0.1);
        assert_eq!(*g.last().unwrap(), 1.0);
        let fine = output_grid(0.03, 1.0, 0.05);
        for t in &g {
            assert!(fine.contains(t), "{t}");
        }
    }

    #[test]
    fn zero_field_is_constant() {
        let s = integrate(
            |_, _, _, d: &mut [f64]| d.fill(0.0),
            0.0,
            &[1.5, -2.0],
            3.0,
            0.5,
            &[],
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(s.states.iter().all(|x| x == &vec![1.5, -2.0]));
        assert_eq!(s.times.len(), 7);
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let w = 7.0;
        let s = integrate(
            |_, _, x: &[f64], d: &mut [f64]| {
                d[0] = x[1];
                d[1] = -w * w * x[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            0.01,
            &[],
            &OdeOptions::default(),
        )
        .unwrap();
        let worst = s
            .times
            .iter()
            .zip(&s.states)
            .map(|(t, x)| (x[0] - (w * t).cos()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn restart_at_breakpoint_handles_jump() {
        // ẋ = 1 on [0, 1), 0 afterwards.
        let s = integrate(
            |_, ts, _, d: &mut [f64]| d[0] = if ts < 1.0 { 1.0 } else { 0.0 },
            0.0,
            &[0.0],
            2.0,
            0.25,
            &[1.0],
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, x) in s.times.iter().zip(&s.states) {
            assert!((x[0] - t.min(1.0)).abs() < 1e-12, "{t} {}", x[0]);
        }
    }

    #[test]
    fn output_refinement_keeps_shared_samples() {
        let rhs = |t: f64, _: f64, x: &[f64], d: &mut [f64]| d[0] = -x[0] + t.sin();
        let a = integrate(rhs, 0.0, &[1.0], 5.0, 0.1, &[], &OdeOptions::default()).unwrap();
        let b = integrate(rhs, 0.0, &[1.0], 5.0, 0.05, &[], &OdeOptions::default()).unwrap();
        for (t, x) in a.times.iter().zip(&a.states) {
            let j = b.times.iter().position(|s| s == t).unwrap();
            assert_eq!(&b.states[j], x);
        }
    }

    #[test]
    fn finite_time_blow_up_is_reported() {
        let r = integrate(
            |_, _, x: &[f64], d: &mut [f64]| d[0] = x[0] * x[0],
            0.0,
            &[1.0],
            2.0,
            0.1,
            &[],
            &OdeOptions::default(),
        );
        assert!(matches!(r, Err(Error::Stiffness { .. })));
    }

    #[test]
    fn bad_span_is_input_error() {
        let r = integrate(
            |_, _, _, _: &mut [f64]| {},
            1.0,
            &[0.0],
            1.0,
            0.1,
            &[],
            &OdeOptions::default(),
        );
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
