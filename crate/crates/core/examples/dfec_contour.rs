//! Cost over the (T_on, T_off) plane at three injection levels, showing how
//! the best window narrows as dp grows. Writes one CSV per level when an
//! output directory is given.
//!
//!     cargo run --release --example dfec_contour [-- out_dir]

use gridswitch::dfec::{contour_sweep, optimize_action};
use gridswitch::scenario::DfecScenario;

fn main() -> gridswitch::Result<()> {
    let sc = DfecScenario::from_path(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/dfec_two_machine.json"
    ))?;
    let sweep = sc.sweep.clone().expect("scenario has a sweep section");
    let out_dir = std::env::args().nth(1);
    let best = optimize_action(
        &sc.model,
        &sc.disturbance,
        &sc.bounds,
        &sc.initial_guess,
        &sc.sim,
        &sc.optimizer,
    )?;
    for f in [0.5, 1.0, 1.5] {
        let dp = f * best.action.dp;
        let c = contour_sweep(
            &sc.model,
            &sc.disturbance,
            dp,
            sweep.t_on,
            sweep.t_off,
            &sc.sim,
            sc.optimizer.workers,
        )?;
        let (on, off, v) = c.argmin().expect("grid has valid cells");
        println!(
            "dp {dp:.4} pu: best window [{on:.2}, {off:.2}] s, length {:.2} s, cost x1000 {v:.4}",
            off - on
        );
        if let Some(dir) = &out_dir {
            std::fs::create_dir_all(dir)?;
            c.write_csv(std::fs::File::create(format!("{dir}/contour_{f}.csv"))?)?;
        }
    }
    Ok(())
}
