//! Dataset generation, BOP file formats, evaluation, CLI and the preview
//! service built on [`surgpose_core`].
//!
//! Everything that touches the file system, threads or the network lives
//! here; the algorithms are in the core crate.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub use surgpose_core as core;

pub mod bop;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod mesh_io;
pub mod numfmt;
pub mod pipeline;
pub mod png_io;
pub mod preview;
pub mod service;
pub mod validate;

pub use error::{Error, Result};
