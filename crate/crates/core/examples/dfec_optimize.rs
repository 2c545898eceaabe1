//! Optimal injection (dp, T_on, T_off) limiting the frequency excursion of
//! the two-machine model after a 0.25 pu load step, with the cost of a few
//! nearby actions for comparison.
//!
//!     cargo run --release --example dfec_optimize

use gridswitch::dfec::{nadir_cost, optimize_action, DfecAction};
use gridswitch::scenario::DfecScenario;

fn main() -> gridswitch::Result<()> {
    let sc = DfecScenario::from_path(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/dfec_two_machine.json"
    ))?;
    let r = optimize_action(
        &sc.model,
        &sc.disturbance,
        &sc.bounds,
        &sc.initial_guess,
        &sc.sim,
        &sc.optimizer,
    )?;
    let a = r.action;
    println!(
        "dp* = {:.4} pu, T_on* = {:.3} s, T_off* = {:.3} s ({} evaluations)",
        a.dp, a.t_on, a.t_off, r.evaluations
    );
    println!(
        "nadir {:.3}% -> {:.3}%, cost {:.4e} -> {:.4e} ({:.1}% lower)",
        100.0 * r.uncontrolled_nadir,
        100.0 * r.controlled_nadir,
        r.uncontrolled_cost,
        r.cost,
        100.0 * (1.0 - r.cost / r.uncontrolled_cost)
    );
    let variants = [
        ("switch on at 0", DfecAction { t_on: 0.0, ..a }),
        (
            "T_off + 20 s",
            DfecAction {
                t_off: a.t_off + 20.0,
                ..a
            },
        ),
        (
            "half dp",
            DfecAction {
                dp: 0.5 * a.dp,
                ..a
            },
        ),
    ];
    for (name, v) in variants {
        println!(
            "  {name:15} cost {:.4e}",
            nadir_cost(&sc.model, &v, &sc.disturbance, &sc.sim)?
        );
    }
    Ok(())
}
