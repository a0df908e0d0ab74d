//! Library half of the command-line pipeline: experiment orchestration,
//! scaling measurements, and the structured report format.

pub mod bench;
pub mod experiment;
pub mod report;
