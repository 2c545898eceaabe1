//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 on a numeric failure,
//! 2 on bad input.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dfec::{contour_sweep, optimize_action, simulate, DfecAction, FrequencyMetrics};
use crate::error::{Error, Result};
use crate::grid::{build_reduced_model, GridSystem, ReducedModel};
use crate::modal::{analyze, ModalBasis, ModePair};
use crate::scenario::{run_deoc, DeocScenario, DfecScenario};

#[derive(Debug, Parser)]
#[command(
    name = "gridswitch",
    version,
    about = "Discrete power-injection control for grid oscillations and frequency excursions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigen-analysis of the linear swing model.
    Modes {
        #[arg(long)]
        system: PathBuf,
        /// Directory for modes.json; the report goes to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oscillation control: schedule design plus controlled and uncontrolled runs.
    Deoc {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt_out: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Frequency excursion control on the two-machine model.
    Dfec {
        #[command(subcommand)]
        action: DfecCommand,
    },
    /// Schema and consistency check of input files.
    Validate {
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DfecCommon {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 uses the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output sampling step, s.
    #[arg(long)]
    pub dt_out: Option<f64>,
    /// Simulation horizon, s.
    #[arg(long)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum DfecCommand {
    /// Optimal (dp, T_on, T_off); writes result.json.
    Optimize {
        #[command(flatten)]
        common: DfecCommon,
    },
    /// Cost ×1000 over a (T_on, T_off) grid; writes contour.csv.
    Sweep {
        #[command(flatten)]
        common: DfecCommon,
        /// Injection held fixed; defaults to the scenario's sweep or initial guess.
        #[arg(long)]
        dp: Option<f64>,
        #[arg(long)]
        n_on: Option<usize>,
        #[arg(long)]
        n_off: Option<usize>,
    },
    /// One run; writes trajectory.csv and metrics.json.
    Simulate {
        #[command(flatten)]
        common: DfecCommon,
        #[arg(long)]
        dp: Option<f64>,
        #[arg(long)]
        t_on: Option<f64>,
        #[arg(long)]
        t_off: Option<f64>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Modes { system, out } => cmd_modes(system, out.as_deref()),
        Command::Deoc {
            system,
            scenario,
            out,
            dt_out,
            t_end,
        } => cmd_deoc(system, scenario, out, *dt_out, *t_end),
        Command::Dfec { action } => match action {
            DfecCommand::Optimize { common } => cmd_dfec_optimize(common),
            DfecCommand::Sweep {
                common,
                dp,
                n_on,
                n_off,
            } => cmd_dfec_sweep(common, *dp, *n_on, *n_off),
            DfecCommand::Simulate {
                common,
                dp,
                t_on,
                t_off,
            } => cmd_dfec_simulate(common, *dp, *t_on, *t_off),
        },
        Command::Validate { system, scenario } => {
            cmd_validate(system.as_deref(), scenario.as_deref())
        }
    }
}

fn load_system(path: &Path) -> Result<(GridSystem, ReducedModel, ModalBasis)> {
    let sys = GridSystem::from_path(path)?;
    let model = build_reduced_model(&sys)?;
    let basis = analyze(&model)?;
    Ok((sys, model, basis))
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(Error::Input(format!("--{name} must be positive, got {x}")))
        }
        _ => Ok(v),
    }
}

#[derive(Debug, Serialize)]
struct ModesReport<'a> {
    system: Option<&'a str>,
    machines: Vec<String>,
    modes: &'a [ModePair],
}

fn cmd_modes(system: &Path, out: Option<&Path>) -> Result<()> {
    let (sys, model, basis) = load_system(system)?;
    let report = ModesReport {
        system: sys.name.as_deref(),
        machines: model
            .machines
            .iter()
            .map(|m| m.name.clone().unwrap_or_else(|| format!("bus {}", m.bus)))
            .collect(),
        modes: &basis.modes,
    };
    match out {
        Some(dir) => {
            out_dir(dir)?;
            write_json(&dir.join("modes.json"), &report)?;
            for m in &basis.modes {
                println!("mode {}: ±j{:.4} rad/s ({:.4} Hz)", m.index, m.omega, m.hz);
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn cmd_deoc(
    system: &Path,
    scenario: &Path,
    out: &Path,
    dt_out: Option<f64>,
    t_end: Option<f64>,
) -> Result<()> {
    let (sys, model, basis) = load_system(system)?;
    let mut sc = DeocScenario::from_path(scenario)?;
    if let Some(v) = positive("dt-out", dt_out)? {
        sc.dt_out = v;
    }
    if let Some(v) = positive("t-end", t_end)? {
        sc.t_end = v;
    }
    let outcome = run_deoc(&sys, &model, &basis, &sc)?;
    out_dir(out)?;
    outcome
        .uncontrolled
        .save_csv(out.join("uncontrolled.csv"))?;
    outcome.controlled.save_csv(out.join("controlled.csv"))?;
    write_json(&out.join("deoc.json"), &outcome.report(&sys, &model, &sc))?;
    for (k, s) in outcome.schedule.stages.iter().enumerate() {
        println!(
            "stage {k} modes {:?}: t_on {:.4} s, t_off {:.4} s",
            s.target_modes, s.t_on, s.t_off
        );
    }
    for s in &outcome.schedule.skipped {
        println!("skipped modes {:?}: {}", s.target_modes, s.reason);
    }
    println!(
        "post-fault peak E_k {:.6e}, final peak E_k {:.6e} (ratio {:.4e})",
        outcome.summary.post_fault_peak_ek, outcome.summary.final_peak_ek, outcome.summary.ek_ratio
    );
    Ok(())
}

fn load_dfec(common: &DfecCommon) -> Result<DfecScenario> {
    let mut sc = DfecScenario::from_path(&common.scenario)?;
    if let Some(v) = positive("dt-out", common.dt_out)? {
        sc.sim.dt_out = v;
    }
    if let Some(v) = positive("t-end", common.t_end)? {
        sc.sim.horizon = v;
        sc.bounds.validate(v)?;
    }
    if let Some(w) = common.workers {
        sc.optimizer.workers = w;
    }
    Ok(sc)
}

fn cmd_dfec_optimize(common: &DfecCommon) -> Result<()> {
    let sc = load_dfec(common)?;
    let r = optimize_action(
        &sc.model,
        &sc.disturbance,
        &sc.bounds,
        &sc.initial_guess,
        &sc.sim,
        &sc.optimizer,
    )?;
    out_dir(&common.out)?;
    write_json(&common.out.join("result.json"), &r)?;
    println!(
        "dp* {:.5} pu, T_on* {:.4} s, T_off* {:.4} s; cost {:.6e} (uncontrolled {:.6e})",
        r.action.dp, r.action.t_on, r.action.t_off, r.cost, r.uncontrolled_cost
    );
    Ok(())
}

fn cmd_dfec_sweep(
    common: &DfecCommon,
    dp: Option<f64>,
    n_on: Option<usize>,
    n_off: Option<usize>,
) -> Result<()> {
    let sc = load_dfec(common)?;
    let sweep = sc
        .sweep
        .clone()
        .ok_or_else(|| Error::Input("scenario has no sweep section".into()))?;
    let dp = dp.or(sweep.dp).unwrap_or(sc.initial_guess.dp);
    if !(dp >= 0.0 && dp.is_finite()) {
        return Err(Error::Input(format!("dp must be non-negative, got {dp}")));
    }
    let mut t_on = sweep.t_on;
    let mut t_off = sweep.t_off;
    if let Some(n) = n_on {
        t_on.n = n;
    }
    if let Some(n) = n_off {
        t_off.n = n;
    }
    let c = contour_sweep(
        &sc.model,
        &sc.disturbance,
        dp,
        t_on,
        t_off,
        &sc.sim,
        sc.optimizer.workers,
    )?;
    out_dir(&common.out)?;
    c.write_csv(std::io::BufWriter::new(std::fs::File::create(
        common.out.join("contour.csv"),
    )?))?;
    if let Some((on, off, v)) = c.argmin() {
        println!("dp {dp:.5} pu: best T_on {on:.4} s, T_off {off:.4} s, cost×1000 {v:.6}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimReport<'a> {
    action: DfecAction,
    metrics: &'a FrequencyMetrics,
}

fn cmd_dfec_simulate(
    common: &DfecCommon,
    dp: Option<f64>,
    t_on: Option<f64>,
    t_off: Option<f64>,
) -> Result<()> {
    let sc = load_dfec(common)?;
    let base = sc.action.unwrap_or(DfecAction::NONE);
    let action = DfecAction {
        dp: dp.unwrap_or(base.dp),
        t_on: t_on.unwrap_or(base.t_on),
        t_off: t_off.unwrap_or(base.t_off),
    };
    action.validate()?;
    let run = simulate(&sc.model, &action, &sc.disturbance, &sc.sim)?;
    out_dir(&common.out)?;
    run.trajectory.save_csv(common.out.join("trajectory.csv"))?;
    write_json(
        &common.out.join("metrics.json"),
        &SimReport {
            action,
            metrics: &run.metrics,
        },
    )?;
    println!(
        "nadir {:.4}% at {:.3} s, cost {:.6e}{}",
        100.0 * run.metrics.nadir,
        run.metrics.t_nadir,
        run.metrics.cost,
        if run.metrics.unstable {
            " (unstable)"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_validate(system: Option<&Path>, scenario: Option<&Path>) -> Result<()> {
    if system.is_none() && scenario.is_none() {
        return Err(Error::Input(
            "nothing to validate: pass --system and/or --scenario".into(),
        ));
    }
    let loaded = match system {
        Some(p) => {
            let l = load_system(p)?;
            println!(
                "{}: ok ({} machines, {} CCs, {} mode pairs)",
                p.display(),
                l.1.n_machines(),
                l.1.n_ccs(),
                l.2.n_pairs()
            );
            Some(l)
        }
        None => None,
    };
    if let Some(p) = scenario {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
        if value.get("model").is_some() {
            DfecScenario::from_json_str(&text)?;
            println!("{}: ok (DFEC scenario)", p.display());
        } else {
            let sc = DeocScenario::from_json_str(&text)?;
            if let Some((sys, model, basis)) = &loaded {
                sc.check_against(sys, model, basis)?;
            }
            println!("{}: ok (DEOC scenario)", p.display());
        }
    }
    Ok(())
}
