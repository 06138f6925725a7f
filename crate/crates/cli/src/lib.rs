//! Scenario text format, reports, and run pipelines for the `mei` binary.
//!
//! The binary is a thin shell: everything it does lives here so tests can
//! drive parsing ([`scenario_text`]), report building ([`report`]), and the
//! command pipelines ([`run`]) in-process.

pub mod num;
pub mod report;
pub mod run;
pub mod scenario_text;
