//! Analysis and simulation workbench for CHOKe queues.
//!
//! The crate has four layers:
//!
//! * [`analytic`] — closed-form steady-state, spatial and transient models of
//!   a CHOKe+RED queue shared by an unresponsive UDP flow and many TCP flows.
//! * [`simcore`] — the packet-level queue itself (CHOKe matching, RED,
//!   tombstoned FIFO) and a deterministic event loop.
//! * [`traffic`] — schedulable constant-rate UDP and window-based AIMD TCP
//!   sources.
//! * [`harness`] — scenario execution with replications, plus routines that
//!   hold the analytic models against simulated traces.

pub mod analytic;
pub mod harness;
pub mod simcore;
pub mod traffic;

pub use analytic::{
    build_profile, derive_coefficients, solve_steady_state, AnalyticError, DerivedCoefficients,
    SpatialProfile, SteadyInput, SteadyStatePoint,
};
pub use harness::{
    rate_conservation_residual, run_once, run_replications, spatial_comparison,
    transient_comparison, AggregatedTrace, ComparisonReport, HarnessError, Scenario,
    SpatialReport, Trace,
};
pub use simcore::{ChokeQueue, DropOrder, Packet, RedParams};
pub use traffic::{TcpFlowState, UdpSchedule, UdpSegment};
