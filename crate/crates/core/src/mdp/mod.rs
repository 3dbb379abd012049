//! The average-cost semi-MDP behind optimal sampling under MAF scheduling.
//!
//! A stage runs from one delivery to the next. The state is the sorted age
//! vector right after a delivery, the action is the waiting time before the
//! next packet, and the disturbance is that packet's service time. Costs
//! are penalty areas minus `β` times the stage length; the optimal ratio
//! `β*` is the root of the optimal average cost, found by bisection.

mod cost;
mod rvi;
mod space;

pub use cost::{
    expected_area, expected_penalty_after, stage_cost, threshold_statistic, threshold_test, zero_wait_condition,
    zero_wait_sufficient, zero_wait_ta_ap_linear, ZeroWaitCondition,
};
pub use rvi::{
    solve, InnerResult, RviOptions, RviSolution, RviSolver, SolutionRecord, StateRecord, SOLUTION_FORMAT_VERSION,
};
pub use space::{StateSpace, DEFAULT_STATE_CAP};
