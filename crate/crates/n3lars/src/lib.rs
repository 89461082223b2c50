//! Nonlinear, non-redundant feature selection via non-negative least-angle
//! regression over normalized HSIC similarities.
//!
//! The pipeline: load or generate a dataset ([`data`]), turn each feature and
//! the output into a centered, Frobenius-normalized kernel representation
//! ([`kernels`]), score feature/output and feature/feature dependence with
//! NHSIC ([`nhsic`]), and trace the non-negative LARS regularization path over
//! those scores ([`solver`]). Scoring fans out over a sharded worker pool
//! ([`parallel`]); [`screening`] adds the maximum-relevance baseline and the
//! screen-then-select pipeline, [`metrics`] the redundancy rate of a selected
//! set.
//!
//! Two scoring modes are supported: `exact` keeps full n-by-n Gram matrices,
//! `nystrom` replaces them with low-rank factors built on a fixed basis grid,
//! which is the mode that scales in the number of samples.

pub mod config;
pub mod data;
pub mod error;
pub mod kernels;
mod linalg;
pub mod metrics;
pub mod nhsic;
pub mod parallel;
pub mod screening;
pub mod solver;

pub use config::{Config, KernelConfig, Measure, Mode, ParallelConfig, SolverConfig};
pub use data::{Dataset, Format, Output, Task};
pub use error::{Error, Result};
pub use solver::{select, EventKind, PathEvent, SelectionPath};
