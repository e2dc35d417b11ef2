//! File formats, the dataset pipeline and the `domtree` command line on
//! top of [`domtree_core`].

pub use domtree_core as core;

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod epoch_log;
pub mod exec;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod snapshot;
