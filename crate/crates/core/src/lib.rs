//! Subpopulation discovery and replication analytics for cohort data.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataset`]: typed cohort tables, normalization, constraints, matching
//! * [`density`]: mixed-type distances and DBSCAN with automatic parameters
//! * [`search`]: constraint-guided forward selection of subspaces
//! * [`geometry`]: cluster distances, overlap matrices and the 2-D layout
//! * [`statistics`]: outcome tests and the per-cluster view summaries
//! * [`replication`]: hyper-rectangle candidates, ROC points and validation
//! * [`synthetic`]: seeded cohorts with planted structure

pub mod dataset;
pub mod density;
pub mod error;
pub mod geometry;
pub mod replication;
pub mod search;
pub mod statistics;
pub mod synthetic;

pub use error::{Error, Result};
