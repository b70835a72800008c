//! Worst-case response-time (WCRT) analysis for dependent task graphs running
//! on distributed processing elements under fixed-priority scheduling.
//!
//! The toolkit contains:
//!
//! - [`model`]: the system model (processing elements, task graphs, tasks) and
//!   its JSON ingestion/validation.
//! - [`hpa`]: the hybrid analysis combining per-task scheduling time bounds
//!   (release/start/finish windows) with inter-graph interference accounting.
//! - [`opt`]: the two tightening optimizations (exclusion sets and duplicate
//!   preemption elimination).
//! - [`yw`]: the holistic baseline method used for comparison; known to be
//!   non-conservative on some systems.
//! - [`oracle`]: a discrete-event scheduler used as empirical ground truth,
//!   with Monte-Carlo sampling and bounded scenario enumeration.
//! - [`expgen`]: random system generation and comparison statistics.
//! - [`cli`]: the command-line front end.
//!
//! All times are unsigned integer ticks; a larger priority number means higher
//! priority.

pub mod cli;
pub mod expgen;
pub mod hpa;
pub mod model;
pub mod num;
pub mod opt;
pub mod oracle;
pub mod yw;
