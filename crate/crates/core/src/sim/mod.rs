//! Target and agent dynamics, scenarios and the closed-loop RK4 runner.

mod dynamics;
mod integrator;
mod run;
mod scenario;
mod state;

pub use dynamics::{
    agent_accel, ngon_initial_conditions, ngon_positions, pair_interaction, target_accel,
    target_accel_jacobian, Kinematics, DEFAULT_INTERACTION_FLOOR,
};
pub use integrator::Rk4;
pub use run::{
    run_scenario, Diagnostics, Model, RunResult, RunSeries, RunSummary, Simulator, TRANSIENT_WINDOW,
};
pub use scenario::{ArchPair, InitialConditions, NetworkConfig, Scenario, STATE_DIM};
pub use state::{SimState, StateLayout};
