//! Library surface of the experiment runner: configuration model,
//! drivers, and report assembly. The `fpp-lab` binary is a thin CLI
//! over [`experiments::run_experiment`] and [`report::write_report`].

pub mod config;
pub mod experiments;
pub mod report;
