//! Cross-fitted efficient estimators for comprehensive cohort studies.
//!
//! A comprehensive cohort study enrolls consenting patients into a randomized
//! trial (`R=1`) and refusers into a parallel observational study (`R=0`).
//! This crate estimates arm means over the whole cohort (`μₜ`) and over the
//! trial population (`νₜ`) under several identifying assumption sets, with
//! influence-function standard errors.

pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod estimators;
pub mod nuisance;
pub mod report;
pub mod simlab;
