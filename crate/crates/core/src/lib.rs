//! Online offloading of analytics tasks from edge devices to cloudlets.
//!
//! Devices quantize each object's predicted accuracy gain into intervals and
//! decide per interval whether to offload. OnAlgo prices device energy and
//! cloudlet compute with dual variables that it updates from running averages
//! of the observed processes, so no distributional knowledge is needed.

pub mod gain_model;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod policies;
pub mod processes;
pub mod scenario;

pub use metrics::{SlotRecord, Trajectory};
pub use oracle::{solve_p1, OracleSolution, StaticProblem};
pub use policies::{run_policy, DualState, Policy, RunError};
pub use scenario::{load_scenario, PolicyKind, Scenario};
