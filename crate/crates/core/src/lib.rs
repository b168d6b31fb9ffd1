//! Discretized shortest paths between two operating points of an AC
//! optimal-power-flow feasible region.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::type_complexity)]

pub mod btd;
pub mod case;
pub mod constraints;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod homotopy;
pub mod ipm;
pub mod metrics;
pub mod path;
pub mod powerflow;
pub mod scenario;

pub use error::{Error, Result};

pub use case::{parse_case_json, parse_case_matpower, NetworkCase, QuadraticModel};
pub use constraints::{ConstraintOptions, ConstraintSet, ControlLayout};
pub use homotopy::{HomotopyParams, HomotopyStatus};
pub use ipm::{IpmParams, IterationRecord};
pub use path::PathDiscretization;
pub use scenario::{run_solve, Scenario, SolveReport};
