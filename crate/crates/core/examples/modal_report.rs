//! Eigen-analysis of the bundled systems: oscillation frequencies and
//! per-machine participation of every conjugate pair.
//!
//!     cargo run --example modal_report [-- path/to/system.json ...]

use gridswitch::grid::{build_reduced_model, GridSystem};
use gridswitch::modal::analyze;

fn main() -> gridswitch::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let mut paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        paths = ["smib", "wscc9", "ieee39"]
            .iter()
            .map(|n| format!("{data}/{n}.json"))
            .collect();
    }
    for p in paths {
        let sys = GridSystem::from_path(&p)?;
        let model = build_reduced_model(&sys)?;
        let basis = analyze(&model)?;
        println!(
            "{} ({} machines, {} CCs)",
            sys.name.as_deref().unwrap_or(&p),
            model.n_machines(),
            model.n_ccs()
        );
        for m in &basis.modes {
            let top: Vec<String> = m
                .participation
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.3)
                .map(|(i, v)| format!("bus {} {:.2}", model.machines[i].bus, v))
                .collect();
            println!(
                "  mode {:2}: ±j{:8.4} rad/s  {:6.4} Hz  [{}]",
                m.index,
                m.omega,
                m.hz,
                top.join(", ")
            );
        }
    }
    Ok(())
}
