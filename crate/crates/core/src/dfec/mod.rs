//! Discrete frequency excursion control on a nonlinear two-machine model.

pub mod model;
pub mod optimize;

pub use model::{
    dfec_dynamics, nadir_cost, simulate, DfecAction, DfecRun, FrequencyMetrics, Governor, LoadStep,
    SimOptions, TwoMachineModel,
};
pub use optimize::{
    calibrate_droop, contour_sweep, grid_best, grid_costs, optimize_action, Axis, Bounds, Contour,
    DfecResult, Iterate, OptimizerOptions,
};
