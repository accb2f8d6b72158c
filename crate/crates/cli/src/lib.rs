//! Scenario parsing, dispatch and report emission for the simulator CLI.

pub mod report;
pub mod runner;
pub mod scenario;
