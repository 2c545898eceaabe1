//! Governor gain calibration for the two-machine frequency model: bisects
//! K1 until the uncontrolled nadir for the bundled 0.25 pu load step hits
//! the target recorded in the scenario. With `--write` the scenario file is
//! updated in place.
//!
//!     cargo run --release --example dfec_calibrate [-- --write]

use gridswitch::dfec::{calibrate_droop, simulate, DfecAction};
use gridswitch::scenario::DfecScenario;

fn main() -> gridswitch::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/dfec_two_machine.json");
    let mut sc = DfecScenario::from_path(path)?;
    let cal = sc
        .calibration
        .clone()
        .expect("scenario records its calibration target");
    let (lo, hi) = cal.k1_bracket;
    let model = calibrate_droop(
        &sc.model,
        &sc.disturbance,
        cal.target_nadir,
        lo,
        hi,
        &sc.sim,
    )?;
    let k1 = (model.governor.k1 * 1e4).round() / 1e4;
    sc.model.governor.k1 = k1;
    let m = simulate(&sc.model, &DfecAction::NONE, &sc.disturbance, &sc.sim)?.metrics;
    println!("K1 = {k1} (bracket [{lo}, {hi}])");
    println!(
        "uncontrolled nadir {:.4}% at {:.2} s, steady-state deviation {:.4}%, cost {:.5e}",
        100.0 * m.nadir,
        m.t_nadir,
        100.0 * (1.0 - m.omega_ss),
        m.cost
    );
    if std::env::args().any(|a| a == "--write") {
        let mut text = serde_json::to_string_pretty(&sc)?;
        text.push('\n');
        std::fs::write(path, text)?;
        println!("wrote {path}");
    }
    Ok(())
}
