//! IEEE 39-bus New England system, fault at bus 16, five stages each aimed
//! at the most excited remaining mode.
//!
//!     cargo run --release --example ieee39_deoc

use gridswitch::grid::{build_reduced_model, GridSystem};
use gridswitch::modal::analyze;
use gridswitch::scenario::{run_deoc, DeocScenario};

fn main() -> gridswitch::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let sys = GridSystem::from_path(format!("{data}/ieee39.json"))?;
    let model = build_reduced_model(&sys)?;
    let basis = analyze(&model)?;
    let sc = DeocScenario::from_path(format!("{data}/ieee39_bus16.json"))?;
    let out = run_deoc(&sys, &model, &basis, &sc)?;
    for s in &out.schedule.stages {
        let d = s.diagnostics.as_ref().unwrap();
        println!(
            "mode {:?} (±j{:.3}): [{:.4}, {:.4}] s, level {:.3e} -> {:.3e}",
            s.target_modes,
            basis.modes[s.target_modes[0]].omega,
            s.t_on,
            s.t_off,
            d.level_on,
            d.level_off
        );
    }
    let (a, b) = out.summary.span.unwrap_or((f64::NAN, f64::NAN));
    println!(
        "span [{a:.3}, {b:.3}] s, final/post-fault peak E_k = {:.3e}",
        out.summary.ek_ratio
    );
    Ok(())
}
