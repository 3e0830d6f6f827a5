//! Model-free control toolkit and vehicle path-tracking simulator.
//!
//! The toolkit replaces the unknown plant by short-lived ultra-local models
//! `y^(nu) = F + alpha*u`, estimates the lumped term `F` continuously from
//! input/output measurements over a sliding window, and closes each loop
//! with an intelligent P/PI/PD/PID law that cancels the estimate. On top of
//! the core machinery sit a 3-DoF bicycle vehicle plant, a two-loop
//! longitudinal/lateral path-tracking architecture, a track generator and
//! loader, and a lockstep co-simulation link that splits plant and
//! controller into separate processes without changing a single bit of the
//! results.
//!
//! Modules:
//! - [`controller`]: ultra-local model types and the four intelligent
//!   control laws.
//! - [`estimator`]: sliding-window algebraic estimation of `F` for first-
//!   and second-order models.
//! - [`plant`]: the substitute vehicle (single-track model, actuator
//!   limits, RK4).
//! - [`track`]: reference paths, the segment generator, CSV load/dump.
//! - [`tracking`]: the two control loops and tracking metrics.
//! - [`sim`]: the closed-loop runner, traces, disturbance injection.
//! - [`scenario`]: run configuration files and their digest.
//! - [`cosim`]: the lockstep wire protocol, plant server and controller
//!   client.

// Negated float comparisons like `!(v > 0.0)` are used deliberately in
// validation code: unlike `v <= 0.0` they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod cosim;
pub mod estimator;
pub mod plant;
pub mod scenario;
pub mod sim;
pub mod track;
pub mod tracking;

pub use controller::{
    ip_control, ipd_control, ipi_control, ipid_control, step_loop, ControlError, GainSet,
    LoopState, UltraLocalConfig,
};
pub use estimator::{
    estimate_f_order1, estimate_f_order2, EstimatorConfig, EstimatorError, QuadratureRule,
    SampleWindow,
};
pub use plant::{
    apply_limits, derivatives, rk4_step, ActuationInput, PlantError, VehicleParams, VehicleState,
};
pub use scenario::{LoopConfig, Scenario, ScenarioError, TrackSource};
pub use sim::{run_closed_loop, RunOptions, SimError, Trace, TraceRow};
pub use track::{load_track_csv, RefPath, TrackError, TrackSpec};
pub use tracking::{control_step, LoopPair, TrackingMetrics};
