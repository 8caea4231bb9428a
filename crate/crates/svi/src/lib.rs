//! File formats, benchmark harness and command line front end for
//! [`svi_core`].
//!
//! * [`ingest`] reads and writes PRISM's explicit-state files.
//! * [`bench`] times queries, runs benchmark manifests and compares SVI
//!   against interval iteration.
//! * [`cli`] is the `svi` binary.

pub mod bench;
pub mod cli;
pub mod ingest;

pub use bench::{bench_run, compare_report, timed_check, BenchOptions, BenchRecord};
pub use ingest::{load_model, ModelBundle, ModelKind, ModelPaths};
