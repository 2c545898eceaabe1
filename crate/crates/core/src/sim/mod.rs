//! Time-domain simulation: closed-form piecewise propagation of the linear
//! model, adaptive integration for nonlinear models, disturbances and
//! trajectory recording.

pub mod linear;
pub mod ode;
pub mod trajectory;

pub use linear::{
    apply_disturbance, fault_pulse_magnitude, max_state_difference, simulate_deoc,
    simulate_deoc_numeric, state_labels, Disturbance,
};
pub use ode::{integrate, output_grid, OdeOptions, OdeSolution};
pub use trajectory::{Event, EventKind, SampleDiagnostics, Trajectory};
