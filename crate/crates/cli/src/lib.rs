//! File formats, configuration and the `dentvox` command line on top of
//! `dentvox-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod container;
pub mod dto;
pub mod error;
pub mod pipeline;
pub mod toy;
